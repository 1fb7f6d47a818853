#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "mcwes/rng.hpp"
#include "mcwes/tensor.hpp"

// Shared helpers for the test suite: finite-difference gradient probing and
// random tensor construction. Reference (straight-line) reimplementations of
// model pieces live next to the tests that use them.
namespace testutil {

inline double rel_err(double a, double b, double floor_val = 1e-4) {
  const double denom = std::max({floor_val, std::fabs(a), std::fabs(b)});
  return std::fabs(a - b) / denom;
}

// Central-difference derivative of a scalar-valued rebuild function with
// respect to one leaf entry. eval() must rebuild the whole graph from the
// leaves so the perturbed value propagates.
inline double fd_derivative(const std::function<double()>& eval, double* slot,
                            double h = 1e-5) {
  const double saved = *slot;
  *slot = saved + h;
  const double fp = eval();
  *slot = saved - h;
  const double fm = eval();
  *slot = saved;
  return (fp - fm) / (2.0 * h);
}

// Checks every entry of every leaf against central differences and returns the
// worst relative error. Leaves must have requires_grad set; build() must
// produce a scalar. Analytic grads are snapshotted before probing because each
// rebuild-and-backward inside eval() would clobber them.
inline double max_fd_rel_err(const std::function<mcwes::Tensor()>& build,
                             std::vector<mcwes::Tensor> leaves,
                             double h = 1e-5) {
  mcwes::Tensor out = build();
  out.backward();
  std::vector<std::vector<double>> agrads;
  for (auto& l : leaves) {
    l.node()->ensure_grad();
    agrads.push_back(l.grad());
  }
  auto eval = [&build]() { return build().value(); };
  double worst = 0.0;
  for (size_t li = 0; li < leaves.size(); ++li) {
    auto& l = leaves[li];
    for (int64_t i = 0; i < l.numel(); ++i) {
      const double fd = fd_derivative(eval, &l.data()[static_cast<size_t>(i)], h);
      worst = std::max(worst, rel_err(agrads[li][static_cast<size_t>(i)], fd));
    }
  }
  return worst;
}

inline mcwes::Tensor rand_tensor(std::vector<int> shape, mcwes::Rng& rng,
                                 double lo = -1.0, double hi = 1.0,
                                 bool requires_grad = true) {
  mcwes::Tensor t = mcwes::Tensor::zeros(std::move(shape), requires_grad);
  for (double& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

}  // namespace testutil
