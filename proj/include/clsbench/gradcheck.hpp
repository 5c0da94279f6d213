// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>

#include "clsbench/tensor.hpp"

namespace clsbench::nn {

/// Compares the analytic gradient of f at x against central differences.
/// Returns max |analytic - fd| / max(|analytic|, |fd|, 1e-8) over the checked
/// coordinates. When max_coords > 0 only that many coordinates (chosen with
/// seed) are perturbed. f is re-evaluated from scratch for every probe, so it
/// must build a fresh graph from x each call.
double grad_check(const std::function<Tensor<double>()>& f, Tensor<double>& x, double eps,
                  std::size_t max_coords = 0, std::uint64_t seed = 0);

}  // namespace clsbench::nn
