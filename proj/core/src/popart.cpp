#include "alma/diff/popart.hpp"

#include <cmath>

namespace alma::diff {

Scalar PopArtState::mean() const {
  if (steps == 0) return 0;
  const Scalar debias = 1 - std::pow(1 - decay, static_cast<Scalar>(steps));
  return mean_raw / debias;
}

Scalar PopArtState::second_moment() const {
  if (steps == 0) return 1;
  const Scalar debias = 1 - std::pow(1 - decay, static_cast<Scalar>(steps));
  return second_moment_raw / debias;
}

Scalar PopArtState::sigma() const {
  const Scalar m = mean();
  const Scalar var = second_moment() - m * m;
  return std::sqrt(std::max(var, std_floor * std_floor));
}

std::vector<Scalar> popart_update_and_normalize(PopArtState& pa, const std::vector<Scalar>& targets,
                                                ParameterGraph& pg, const PopArtHead& head) {
  if (targets.empty()) throw UsageError("popart_update_and_normalize: empty target batch");

  const Scalar old_mean = pa.mean();
  const Scalar old_sigma = pa.sigma();

  Scalar batch_mean = 0, batch_m2 = 0;
  for (Scalar t : targets) {
    batch_mean += t;
    batch_m2 += t * t;
  }
  batch_mean /= static_cast<Scalar>(targets.size());
  batch_m2 /= static_cast<Scalar>(targets.size());

  pa.mean_raw = (1 - pa.decay) * pa.mean_raw + pa.decay * batch_mean;
  pa.second_moment_raw = (1 - pa.decay) * pa.second_moment_raw + pa.decay * batch_m2;
  pa.steps += 1;

  const Scalar new_mean = pa.mean();
  const Scalar new_sigma = pa.sigma();

  // Rescale the head so denormalized predictions are exactly preserved:
  // sigma' w = sigma w_old  and  sigma' b' + mu' = sigma b + mu.
  const Scalar ratio = old_sigma / new_sigma;
  for (const auto& name : head.scaled) pg.value(name).mat() *= ratio;
  auto& b = pg.value(head.shifted).mat();
  b = (old_sigma * b + Matrix::Constant(b.rows(), b.cols(), old_mean - new_mean)) / new_sigma;

  std::vector<Scalar> normalized(targets.size());
  for (std::size_t i = 0; i < targets.size(); ++i)
    normalized[i] = (targets[i] - new_mean) / new_sigma;
  return normalized;
}

}  // namespace alma::diff
