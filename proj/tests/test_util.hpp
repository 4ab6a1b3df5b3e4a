#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "gaide/tensor.hpp"

namespace gaide_test {

inline double rel_err(double a, double b) {
  const double denom = std::max({std::fabs(a), std::fabs(b), 1e-2});
  return std::fabs(a - b) / denom;
}

// Central finite differences of a freshly recomputed scalar loss with respect
// to one parameter tensor. The loss function must not record onto a tape.
inline std::vector<double> fd_grad(gaide::Tensor param,
                                   const std::function<double()>& loss_fn,
                                   double h = 1e-6) {
  std::vector<double> g(param.numel());
  for (std::size_t i = 0; i < param.numel(); ++i) {
    const double orig = param.data()[i];
    param.data()[i] = orig + h;
    const double fp = loss_fn();
    param.data()[i] = orig - h;
    const double fm = loss_fn();
    param.data()[i] = orig;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

// max elementwise relative error between analytic and finite-difference grads
inline double max_grad_rel_err(const std::vector<double>& analytic,
                               const std::vector<double>& fd) {
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i)
    worst = std::max(worst, rel_err(analytic[i], fd[i]));
  return worst;
}

}  // namespace gaide_test
