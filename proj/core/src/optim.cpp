#include "alma/diff/optim.hpp"

#include <cmath>

namespace alma::diff {

Scalar global_grad_norm(const ParameterGraph& pg) {
  Scalar sq = 0;
  for (const auto& name : pg.names()) sq += pg.grad(name).mat().squaredNorm();
  return std::sqrt(sq);
}

Scalar clip_global_norm(ParameterGraph& pg, Scalar max_norm) {
  const Scalar norm = global_grad_norm(pg);
  if (norm <= max_norm || norm == 0) return Scalar(1);
  const Scalar factor = max_norm / norm;
  for (const auto& name : pg.names()) pg.grad(name).mat() *= factor;
  return factor;
}

void rmsprop_step(ParameterGraph& pg, Scalar lr, Scalar alpha, Scalar eps) {
  for (const auto& name : pg.names()) {
    auto& slot = pg.slot(name);
    auto& v = slot.rms_v.mat();
    auto& g = slot.grad.mat();
    v = alpha * v + (1 - alpha) * g.cwiseProduct(g);
    const Matrix denom = v.cwiseSqrt() + Matrix::Constant(v.rows(), v.cols(), eps);
    slot.value.mat() -= lr * g.cwiseQuotient(denom);
    g.setZero();
  }
}

}  // namespace alma::diff
