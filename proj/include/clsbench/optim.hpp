// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "clsbench/tensor.hpp"

namespace clsbench::nn {

struct AdamWState {
  std::uint64_t step = 0;
  std::vector<double> m;
  std::vector<double> v;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double weight_decay = 0.01;
  double lr_peak = 3e-4;
  double eps = 1e-8;

  static AdamWState for_params(std::size_t n, double beta1, double beta2, double weight_decay, double lr_peak);
};

/// One bias-corrected AdamW update with decoupled weight decay
/// (param -= lr * wd * param, then the Adam step). Increments state.step.
template <typename T>
void adamw_step(std::span<T> params, std::span<const T> grads, AdamWState& state, double lr);

/// Same update over a list of parameter tensors that share one state; state
/// moments are laid out in list order. Tensors without gradients get a zero
/// gradient (their weight decay still applies).
template <typename T>
void adamw_step(std::span<Tensor<T>* const> params, AdamWState& state, double lr);

/// Global L2 norm clip; returns the pre-clip norm. max_norm <= 0 disables.
template <typename T>
double clip_grad_norm(std::span<Tensor<T>* const> params, double max_norm);

enum class DecayKind { cosine, linear };

struct ScheduleSpec {
  DecayKind kind = DecayKind::cosine;
  double warmup_fraction = 0.01;
  std::uint64_t total_steps = 1;
  double lr_peak = 3e-4;

  std::uint64_t warmup_steps() const;
};

/// Linear warmup from 0 to lr_peak, then cosine or linear decay reaching
/// exactly 0 at total_steps.
double lr_at_step(const ScheduleSpec& sched, std::uint64_t step);

}  // namespace clsbench::nn
