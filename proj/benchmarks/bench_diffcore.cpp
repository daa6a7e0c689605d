#include <benchmark/benchmark.h>

#include "alma/diff/layers.hpp"
#include "alma/diff/optim.hpp"

using namespace alma;
using namespace alma::diff;

namespace {

Matrix random_matrix(Rng& rng, Index r, Index c) {
  Matrix m(r, c);
  for (Index i = 0; i < m.size(); ++i) m(i) = rng.uniform(-1, 1);
  return m;
}

void BM_dense_forward(benchmark::State& state) {
  const Index d = state.range(0);
  ParameterGraph pg;
  Dense layer("l", d, d);
  Rng rng(1);
  layer.register_into(pg, rng);
  const Matrix x = random_matrix(rng, 64, d);
  for (auto _ : state) {
    Tape t(pg, false);
    benchmark::DoNotOptimize(t.value(layer.forward(t, t.leaf(x))));
  }
}
BENCHMARK(BM_dense_forward)->Arg(32)->Arg(128);

void BM_attention_forward_backward(benchmark::State& state) {
  const Index d = state.range(0);
  ParameterGraph pg;
  MultiHeadAttention attn("a", d, 4);
  Rng rng(2);
  attn.register_into(pg, rng);
  // 64 instances of 8 entities each, mirroring a training batch slice
  const Matrix kv = random_matrix(rng, 64 * 8, d);
  AttnBatch batch;
  for (int i = 0; i < 64; ++i) batch.add(i * 8, i * 8, AttentionMask(8, 8, true));
  for (auto _ : state) {
    pg.zero_grads();
    Tape t(pg, true);
    Var x = t.leaf(kv);
    Var out = attn.forward(t, x, x, batch);
    t.backward(t.mean_all(t.square(out)), pg);
  }
}
BENCHMARK(BM_attention_forward_backward)->Arg(32)->Arg(128);

void BM_rmsprop_step(benchmark::State& state) {
  ParameterGraph pg;
  Rng rng(3);
  for (int i = 0; i < 8; ++i) {
    Dense layer("l" + std::to_string(i), 128, 128);
    layer.register_into(pg, rng);
  }
  for (const auto& name : pg.names()) pg.grad(name).mat().setConstant(0.01);
  for (auto _ : state) {
    clip_global_norm(pg, 10);
    rmsprop_step(pg, 0.0005, 0.99, 1e-5);
    for (const auto& name : pg.names()) pg.grad(name).mat().setConstant(0.01);
  }
}
BENCHMARK(BM_rmsprop_step);

}  // namespace
