#pragma once

#include <cstdint>

namespace alma::train {

// Linear annealing over environment steps, clamped at the end value.
struct Schedule {
  double start = 1.0;
  double end = 0.05;
  std::int64_t horizon = 1;  // env steps to anneal over

  double value(std::int64_t steps) const {
    if (horizon <= 0 || steps >= horizon) return end;
    if (steps <= 0) return start;
    return start + (end - start) * (static_cast<double>(steps) / static_cast<double>(horizon));
  }
};

}  // namespace alma::train
