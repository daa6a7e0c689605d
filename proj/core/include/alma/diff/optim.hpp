#pragma once

#include "alma/diff/params.hpp"

namespace alma::diff {

// Global L2-norm gradient clipping: if ||g||_2 > max_norm every gradient is
// scaled by max_norm/||g||_2. Returns the applied factor (1.0 when no clip).
Scalar clip_global_norm(ParameterGraph& pg, Scalar max_norm);

// Plain RMSProp: v <- alpha v + (1-alpha) g^2; p <- p - lr g / (sqrt(v) + eps).
// Gradients are cleared afterwards.
void rmsprop_step(ParameterGraph& pg, Scalar lr, Scalar alpha, Scalar eps);

Scalar global_grad_norm(const ParameterGraph& pg);

}  // namespace alma::diff
