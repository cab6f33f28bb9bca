#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "arc/ops.hpp"
#include "arc/tensor.hpp"

namespace arctest {

// |a-b| scaled by max(|a|, |b|) with a small floor so that near-zero
// gradients are compared absolutely instead of amplifying FD noise.
inline double grad_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-3});
}

struct FdReport {
  double max_err = 0.0;
  std::string where;
};

// Central-finite-difference oracle. `f` evaluates the scalar objective from
// the current values of `leaves`; it is called with no tape active for the
// difference quotients and under a fresh tape for the analytic gradients.
inline FdReport finite_diff_check(std::vector<arc::Tensor> leaves,
                                  const std::function<arc::Tensor()>& f,
                                  double step = 1e-5) {
  std::vector<std::vector<double>> analytic;
  {
    for (auto& l : leaves) {
      l.set_requires_grad(true);
      l.clear_grad();
    }
    arc::Tape tape;
    arc::Tensor loss = f();
    tape.backward(loss);
    for (auto& l : leaves) {
      analytic.push_back(l.has_grad() ? l.grad() : std::vector<double>(l.numel(), 0.0));
    }
  }
  FdReport rep;
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    auto& vals = leaves[li].values_mut();
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const double keep = vals[i];
      vals[i] = keep + step;
      const double f1 = f().value();
      vals[i] = keep - step;
      const double f2 = f().value();
      vals[i] = keep;
      const double fd = (f1 - f2) / (2.0 * step);
      const double err = grad_err(analytic[li][i], fd);
      if (err > rep.max_err) {
        rep.max_err = err;
        rep.where = "leaf " + std::to_string(li) + " index " + std::to_string(i) +
                    " tape=" + std::to_string(analytic[li][i]) + " fd=" + std::to_string(fd);
      }
    }
  }
  return rep;
}

}  // namespace arctest
