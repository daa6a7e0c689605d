#pragma once

#include <functional>
#include <map>
#include <string>

#include "alma/diff/tape.hpp"

namespace testutil {

using alma::diff::Matrix;
using alma::diff::ParameterGraph;
using alma::diff::Tape;
using alma::diff::Var;

struct GradCheckResult {
  double max_rel_err = 0;
  std::string worst_param;
  int checked = 0;
};

// Central finite differences (64-bit) against the tape's reverse-mode
// gradients. `build` must be a pure function of the parameter values (it runs
// on both grad and no-grad tapes). Relative error uses max(|a|,|fd|,1e-6) as
// the denominator.
inline GradCheckResult check_gradients(ParameterGraph& pg,
                                       const std::function<Var(Tape&)>& build,
                                       double h = 1e-5) {
  pg.zero_grads();
  {
    Tape t(pg, /*grad=*/true);
    Var loss = build(t);
    t.backward(loss, pg);
  }
  std::map<std::string, Matrix> analytic;
  for (const auto& name : pg.names()) analytic[name] = pg.grad(name).mat();
  pg.zero_grads();

  auto eval = [&]() {
    Tape t(pg, /*grad=*/false);
    return t.value(build(t))(0, 0);
  };

  GradCheckResult res;
  for (const auto& name : pg.names()) {
    Matrix& p = pg.value(name).mat();
    const Matrix& a = analytic[name];
    for (alma::diff::Index c = 0; c < p.cols(); ++c) {
      for (alma::diff::Index r = 0; r < p.rows(); ++r) {
        const double orig = p(r, c);
        p(r, c) = orig + h;
        const double fp = eval();
        p(r, c) = orig - h;
        const double fm = eval();
        p(r, c) = orig;
        const double fd = (fp - fm) / (2 * h);
        const double denom = std::max({std::abs(a(r, c)), std::abs(fd), 1e-6});
        const double rel = std::abs(a(r, c) - fd) / denom;
        res.checked += 1;
        if (rel > res.max_rel_err) {
          res.max_rel_err = rel;
          res.worst_param = name + "(" + std::to_string(r) + "," + std::to_string(c) + ")";
        }
      }
    }
  }
  return res;
}

}  // namespace testutil
