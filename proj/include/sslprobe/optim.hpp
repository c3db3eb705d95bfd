#pragma once

#include <cctype>
#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "sslprobe/error.hpp"

namespace sslprobe {

enum class OptimizerKind { sgd_momentum, adamw, lars };

inline const char* to_string(OptimizerKind k) {
  switch (k) {
    case OptimizerKind::sgd_momentum: return "sgd";
    case OptimizerKind::adamw: return "adamw";
    case OptimizerKind::lars: return "lars";
  }
  return "?";
}

inline OptimizerKind parse_optimizer(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (s == "sgd" || s == "sgd_momentum") return OptimizerKind::sgd_momentum;
  if (s == "adamw") return OptimizerKind::adamw;
  if (s == "lars") return OptimizerKind::lars;
  fail(ErrorKind::config, "unknown optimizer '" + s + "' (expected sgd|adamw|lars)");
}

struct OptimizerSpec {
  OptimizerKind kind = OptimizerKind::sgd_momentum;
  double momentum = 0.9;  // sgd_momentum and lars
  double beta1 = 0.9;     // adamw
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 0.0;

  void validate() const {
    if (!(momentum >= 0 && momentum < 1)) fail(ErrorKind::config, "momentum must lie in [0, 1)");
    if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) fail(ErrorKind::config, "betas must lie in [0, 1)");
    if (!(adam_eps > 0)) fail(ErrorKind::config, "adam epsilon must be positive");
    if (!(weight_decay >= 0)) fail(ErrorKind::config, "weight decay must be >= 0");
  }
};

// One parameter tensor. LARS computes its trust ratio per group; groups with
// `decay == false` (biases) are exempt from weight decay.
struct ParamGroup {
  std::span<double> params;
  std::span<const double> grads;
  bool decay = true;
};

struct OptimizerState {
  std::size_t steps = 0;
  std::vector<std::vector<double>> first;   // momentum buffer / Adam m
  std::vector<std::vector<double>> second;  // Adam v
};

namespace detail {
inline double l2_norm(std::span<const double> v) {
  double s = 0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}
}  // namespace detail

// sgd_momentum: v <- m v + g (+ wd p); p <- p - lr v
// adamw:        p <- p - lr wd p; then bias-corrected Adam update
// lars:         eta = |p| / (|g| + wd |p| + 1e-9), eta = 1 if |p| == 0 or |g| == 0;
//               u <- m u + eta (g + wd p); p <- p - lr u   (m = 0 gives p - lr eta (g + wd p))
inline void optimizer_step(const OptimizerSpec& spec, OptimizerState& state, std::span<const ParamGroup> groups,
                           double lr) {
  if (!(lr >= 0) || !std::isfinite(lr)) fail(ErrorKind::config, "learning rate must be finite and >= 0");
  for (const auto& g : groups) {
    if (g.params.size() != g.grads.size()) fail(ErrorKind::shape, "parameter/gradient length mismatch");
    for (double x : g.grads)
      if (!std::isfinite(x)) fail(ErrorKind::numeric, "non-finite gradient");
  }
  if (state.first.size() != groups.size()) {
    state.first.assign(groups.size(), {});
    state.second.assign(groups.size(), {});
  }
  ++state.steps;

  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    const auto& group = groups[gi];
    auto p = group.params;
    auto g = group.grads;
    const double wd = group.decay ? spec.weight_decay : 0.0;
    auto& buf = state.first[gi];
    if (buf.size() != p.size()) buf.assign(p.size(), 0.0);

    switch (spec.kind) {
      case OptimizerKind::sgd_momentum: {
        for (std::size_t i = 0; i < p.size(); ++i) {
          buf[i] = spec.momentum * buf[i] + (g[i] + wd * p[i]);
          p[i] -= lr * buf[i];
        }
        break;
      }
      case OptimizerKind::adamw: {
        auto& sq = state.second[gi];
        if (sq.size() != p.size()) sq.assign(p.size(), 0.0);
        const double t = double(state.steps);
        const double c1 = 1 - std::pow(spec.beta1, t);
        const double c2 = 1 - std::pow(spec.beta2, t);
        for (std::size_t i = 0; i < p.size(); ++i) {
          p[i] -= lr * wd * p[i];
          buf[i] = spec.beta1 * buf[i] + (1 - spec.beta1) * g[i];
          sq[i] = spec.beta2 * sq[i] + (1 - spec.beta2) * g[i] * g[i];
          const double m_hat = buf[i] / c1;
          const double v_hat = sq[i] / c2;
          p[i] -= lr * m_hat / (std::sqrt(v_hat) + spec.adam_eps);
        }
        break;
      }
      case OptimizerKind::lars: {
        const double p_norm = detail::l2_norm(p);
        const double g_norm = detail::l2_norm(g);
        const double trust = (p_norm == 0 || g_norm == 0) ? 1.0 : p_norm / (g_norm + wd * p_norm + 1e-9);
        for (std::size_t i = 0; i < p.size(); ++i) {
          buf[i] = spec.momentum * buf[i] + trust * (g[i] + wd * p[i]);
          p[i] -= lr * buf[i];
        }
        break;
      }
    }
  }
}

// Linear warmup from `warmup_start_lr` to `base_lr`, then cosine decay to `min_lr`.
struct LrSchedule {
  double base_lr = 0.1;
  double min_lr = 0.0;
  double warmup_start_lr = 0.0;
  std::size_t warmup_steps = 0;
};

inline double lr_at(const LrSchedule& s, std::size_t step, std::size_t total_steps) {
  if (step > total_steps) fail(ErrorKind::config, "step exceeds total_steps");
  if (step < s.warmup_steps) {
    return s.warmup_start_lr + (s.base_lr - s.warmup_start_lr) * double(step) / double(s.warmup_steps);
  }
  if (step == s.warmup_steps || total_steps <= s.warmup_steps) return s.base_lr;
  const double t = double(step - s.warmup_steps) / double(total_steps - s.warmup_steps);
  return s.min_lr + 0.5 * (s.base_lr - s.min_lr) * (1 + std::cos(std::numbers::pi * t));
}

}  // namespace sslprobe
