#include "alma/diff/tensor.hpp"

// Tensor is header-only; this translation unit anchors the target.
namespace alma::diff {}
