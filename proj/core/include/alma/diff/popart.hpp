#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "alma/diff/params.hpp"

namespace alma::diff {

// Adaptive return normalization: running mean/second-moment of training
// targets (debiased exponential moving averages) plus the head rescaling that
// preserves denormalized predictions exactly across a statistics update.
struct PopArtState {
  Scalar mean_raw = 0;           // EMA accumulator of targets
  Scalar second_moment_raw = 0;  // EMA accumulator of squared targets
  std::int64_t steps = 0;        // update count (for debiasing)
  Scalar decay = 0.01;
  Scalar std_floor = 1e-4;

  Scalar mean() const;
  Scalar second_moment() const;
  Scalar sigma() const;  // sqrt(max(m2 - mean^2, floor^2))
};

// The affine output head whose parameters are rescaled when statistics move:
// every tensor in `scaled` is multiplied by sigma_old/sigma_new, and `shifted`
// (the final bias) becomes (sigma_old * b + mean_old - mean_new) / sigma_new.
// For a plain dense head: scaled = {W}, shifted = b. For a hypernetwork head
// the generator's final affine parameters go in `scaled` (positive rescaling
// commutes with the |.| weight transform) and the bias generator's final bias
// in `shifted`.
struct PopArtHead {
  std::vector<std::string> scaled;
  std::string shifted;
};

// Updates the running statistics from a batch of (denormalized) training
// targets, rescales the head so denormalized predictions are preserved, and
// returns the targets standardized with the new statistics.
std::vector<Scalar> popart_update_and_normalize(PopArtState& pa, const std::vector<Scalar>& targets,
                                                ParameterGraph& pg, const PopArtHead& head);

}  // namespace alma::diff
