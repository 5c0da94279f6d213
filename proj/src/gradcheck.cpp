// SPDX-License-Identifier: Apache-2.0
#include "clsbench/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "clsbench/errors.hpp"
#include "clsbench/rng.hpp"

namespace clsbench::nn {

double grad_check(const std::function<Tensor<double>()>& f, Tensor<double>& x, double eps,
                  std::size_t max_coords, std::uint64_t seed) {
  require(eps > 0, "grad_check: eps must be positive");
  require(x.requires_grad(), "grad_check: x must be a parameter");
  x.zero_grad();
  Tensor<double> y = f();
  if (!std::isfinite(y.item())) throw NumericError("grad_check: f is not finite at x");
  y.backward();
  std::vector<double> analytic(x.size(), 0.0);
  if (x.has_grad()) std::copy(x.grad().begin(), x.grad().end(), analytic.begin());

  std::vector<std::size_t> coords(x.size());
  std::iota(coords.begin(), coords.end(), 0);
  if (max_coords > 0 && max_coords < coords.size()) {
    Rng rng(seed);
    for (std::size_t i = 0; i < max_coords; ++i) {
      std::swap(coords[i], coords[i + rng.below(coords.size() - i)]);
    }
    coords.resize(max_coords);
  }

  auto values = x.mutable_values();
  double worst = 0.0;
  for (std::size_t c : coords) {
    const double orig = values[c];
    values[c] = orig + eps;
    const double fp = f().item();
    values[c] = orig - eps;
    const double fm = f().item();
    values[c] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm)) throw NumericError("grad_check: f is not finite near x");
    const double fd = (fp - fm) / (2 * eps);
    const double denom = std::max({std::abs(analytic[c]), std::abs(fd), 1e-8});
    worst = std::max(worst, std::abs(analytic[c] - fd) / denom);
  }
  x.zero_grad();
  return worst;
}

}  // namespace clsbench::nn
