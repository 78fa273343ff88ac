#pragma once

#include "vlm/errors.hpp"
#include "vlm/numerics/matrix.hpp"

#include <cmath>
#include <cstdint>
#include <string>

namespace vlm {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-8;
  // Global L2 bound applied to the concatenation of all gradients; <= 0 disables.
  double clip_norm = 2.0;
};

template <typename Scalar>
struct AdamState {
  TensorMap<Scalar> first_moment;
  TensorMap<Scalar> second_moment;
  std::int64_t step = 0;
};

struct ScheduleConfig {
  double base_lr = 5e-5;
  std::int64_t warmup_steps = 1000;
  std::int64_t total_steps = 10000;
  double end_lr = 0.0;
  double power = 1.0;
};

// Linear warm-up to base_lr, then polynomial decay to end_lr at total_steps.
inline double lr_at(std::int64_t step, const ScheduleConfig& cfg) {
  if (step < 0) throw ContractViolation("lr_at: negative step");
  if (cfg.warmup_steps < 1 || cfg.total_steps <= cfg.warmup_steps) {
    throw ConfigError("schedule needs warmup_steps >= 1 and total_steps > warmup_steps");
  }
  if (step < cfg.warmup_steps) return cfg.base_lr * static_cast<double>(step) / static_cast<double>(cfg.warmup_steps);
  if (step >= cfg.total_steps) return cfg.end_lr;
  const double remaining = 1.0 - static_cast<double>(step - cfg.warmup_steps) /
                                     static_cast<double>(cfg.total_steps - cfg.warmup_steps);
  return cfg.end_lr + (cfg.base_lr - cfg.end_lr) * std::pow(remaining, cfg.power);
}

template <typename Scalar>
double global_norm(const GradientMap<Scalar>& grads) {
  double total = 0.0;
  for (const auto& [name, g] : grads) total += static_cast<double>(g.squaredNorm());
  return std::sqrt(total);
}

// One bias-corrected Adam update. Gradients are first scaled so their global
// L2 norm does not exceed cfg.clip_norm. Parameters without a gradient entry
// are left untouched.
template <typename Scalar>
void adam_step(TensorMap<Scalar>& params, const GradientMap<Scalar>& grads, AdamState<Scalar>& state, double lr,
               const AdamConfig& cfg) {
  if (!(lr > 0.0)) throw ContractViolation("adam_step: lr must be positive");
  for (const auto& [name, g] : grads) {
    auto it = params.find(name);
    if (it == params.end()) throw ShapeError("adam_step: gradient for unknown parameter " + name);
    if (it->second.rows() != g.rows() || it->second.cols() != g.cols()) {
      throw ShapeError("adam_step: gradient shape mismatch for " + name);
    }
    if (!g.allFinite()) throw NumericError("adam_step: non-finite gradient for " + name);
  }

  double clip = 1.0;
  const double norm = global_norm(grads);
  if (cfg.clip_norm > 0.0 && norm > cfg.clip_norm) clip = cfg.clip_norm / norm;

  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  const auto b1 = static_cast<Scalar>(cfg.beta1);
  const auto b2 = static_cast<Scalar>(cfg.beta2);

  for (const auto& [name, g_raw] : grads) {
    Mat<Scalar>& p = params.find(name)->second;
    auto [m_it, m_new] = state.first_moment.try_emplace(name, Mat<Scalar>::Zero(p.rows(), p.cols()));
    auto [v_it, v_new] = state.second_moment.try_emplace(name, Mat<Scalar>::Zero(p.rows(), p.cols()));
    Mat<Scalar>& m = m_it->second;
    Mat<Scalar>& v = v_it->second;
    if (m.rows() != p.rows() || m.cols() != p.cols()) throw ShapeError("adam_step: moment shape mismatch for " + name);
    const Mat<Scalar> g = g_raw * static_cast<Scalar>(clip);
    m = b1 * m + (Scalar(1) - b1) * g;
    v = b2 * v + (Scalar(1) - b2) * g.cwiseProduct(g);
    const auto m_hat = m.array() / static_cast<Scalar>(bc1);
    const auto v_hat = v.array() / static_cast<Scalar>(bc2);
    p.array() -= static_cast<Scalar>(lr) * m_hat / (v_hat.sqrt() + static_cast<Scalar>(cfg.eps));
  }
}

}  // namespace vlm
