// SPDX-License-Identifier: Apache-2.0
#include "clsbench/optim.hpp"

#include <cmath>
#include <numbers>

#include "clsbench/errors.hpp"

namespace clsbench::nn {

AdamWState AdamWState::for_params(std::size_t n, double beta1, double beta2, double weight_decay,
                                  double lr_peak) {
  require(beta1 > 0 && beta1 < 1 && beta2 > 0 && beta2 < 1, "adamw: betas must lie in (0,1)");
  require(weight_decay >= 0, "adamw: negative weight decay");
  require(lr_peak > 0, "adamw: lr_peak must be positive");
  AdamWState s;
  s.m.assign(n, 0.0);
  s.v.assign(n, 0.0);
  s.beta1 = beta1;
  s.beta2 = beta2;
  s.weight_decay = weight_decay;
  s.lr_peak = lr_peak;
  return s;
}

namespace {

template <typename T>
void update_range(std::span<T> params, std::span<const T> grads, AdamWState& s, std::size_t offset,
                  double lr, double bc1, double bc2) {
  const double decay = 1.0 - lr * s.weight_decay;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads.empty() ? 0.0 : static_cast<double>(grads[i]);
    double& m = s.m[offset + i];
    double& v = s.v[offset + i];
    m = s.beta1 * m + (1.0 - s.beta1) * g;
    v = s.beta2 * v + (1.0 - s.beta2) * g * g;
    const double mhat = m / bc1;
    const double vhat = v / bc2;
    double p = static_cast<double>(params[i]) * decay;
    p -= lr * mhat / (std::sqrt(vhat) + s.eps);
    params[i] = static_cast<T>(p);
  }
}

}  // namespace

template <typename T>
void adamw_step(std::span<T> params, std::span<const T> grads, AdamWState& state, double lr) {
  require(params.size() == grads.size(), "adamw: params/grads length mismatch");
  require(state.m.size() == params.size() && state.v.size() == params.size(), "adamw: state length mismatch");
  require(lr >= 0, "adamw: negative learning rate");
  ++state.step;
  const double t = static_cast<double>(state.step);
  update_range(params, grads, state, 0, lr, 1.0 - std::pow(state.beta1, t), 1.0 - std::pow(state.beta2, t));
}

template <typename T>
void adamw_step(std::span<Tensor<T>* const> params, AdamWState& state, double lr) {
  std::size_t total = 0;
  for (auto* p : params) total += p->size();
  require(state.m.size() == total && state.v.size() == total, "adamw: state length mismatch");
  require(lr >= 0, "adamw: negative learning rate");
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(state.beta1, t);
  const double bc2 = 1.0 - std::pow(state.beta2, t);
  std::size_t offset = 0;
  for (auto* p : params) {
    std::span<const T> g = p->has_grad() ? p->grad() : std::span<const T>();
    update_range(p->mutable_values(), g, state, offset, lr, bc1, bc2);
    offset += p->size();
  }
}

template <typename T>
double clip_grad_norm(std::span<Tensor<T>* const> params, double max_norm) {
  double sq = 0;
  for (auto* p : params) {
    if (!p->has_grad()) continue;
    for (T g : p->grad()) sq += static_cast<double>(g) * g;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    const T scale = static_cast<T>(max_norm / (norm + 1e-12));
    for (auto* p : params) {
      if (!p->has_grad()) continue;
      for (T& g : p->mutable_grad()) g *= scale;
    }
  }
  return norm;
}

std::uint64_t ScheduleSpec::warmup_steps() const {
  return static_cast<std::uint64_t>(std::llround(warmup_fraction * static_cast<double>(total_steps)));
}

double lr_at_step(const ScheduleSpec& sched, std::uint64_t step) {
  require(sched.total_steps > 0, "schedule: total_steps must be positive");
  require(sched.warmup_fraction >= 0 && sched.warmup_fraction < 1, "schedule: warmup fraction outside [0,1)");
  require(step <= sched.total_steps, "schedule: step beyond total_steps");
  const std::uint64_t warm = sched.warmup_steps();
  require(warm < sched.total_steps, "schedule: warmup covers every step");
  if (step < warm) return sched.lr_peak * static_cast<double>(step) / static_cast<double>(warm);
  const double progress =
      static_cast<double>(step - warm) / static_cast<double>(sched.total_steps - warm);
  if (step == sched.total_steps) return 0.0;
  if (sched.kind == DecayKind::cosine) {
    return sched.lr_peak * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
  }
  return sched.lr_peak * (1.0 - progress);
}

template void adamw_step<float>(std::span<float>, std::span<const float>, AdamWState&, double);
template void adamw_step<double>(std::span<double>, std::span<const double>, AdamWState&, double);
template void adamw_step<float>(std::span<Tensor<float>* const>, AdamWState&, double);
template void adamw_step<double>(std::span<Tensor<double>* const>, AdamWState&, double);
template double clip_grad_norm<float>(std::span<Tensor<float>* const>, double);
template double clip_grad_norm<double>(std::span<Tensor<double>* const>, double);

}  // namespace clsbench::nn
