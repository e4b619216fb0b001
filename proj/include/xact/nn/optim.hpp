#pragma once

#include <cmath>
#include <map>
#include <numbers>
#include <string>

#include "xact/nn/graph.hpp"

namespace xact::nn {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.98;
  double weight_decay = 0.01;
  double eps = 1e-8;
  double grad_clip = 0.0;  // global-norm clip; 0 disables

  friend bool operator==(const AdamWConfig&, const AdamWConfig&) = default;
};

template <class T>
struct Moments {
  Matrix<T> first;
  Matrix<T> second;
};

template <class T>
struct OptimState {
  AdamWConfig config;
  long step = 0;
  std::map<std::string, Moments<T>> moments;
};

class NonFiniteGrad : public Error {
 public:
  explicit NonFiniteGrad(const std::string& param)
      : Error(ErrorKind::numeric, "NonFiniteGrad: parameter '" + param + "' has a non-finite gradient"),
        param_(param) {}
  const std::string& parameter() const noexcept { return param_; }

 private:
  std::string param_;
};

/// One AdamW update with decoupled decay: p <- p (1 - lr wd), then the
/// bias-corrected Adam step. Parameters that are frozen or received no
/// gradient this step are left untouched. Nothing is modified if any
/// gradient is non-finite.
template <class T>
void adamw_step(ParameterStore<T>& params, OptimState<T>& state, double lr) {
  const auto& c = state.config;
  double sq = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    if (p.frozen || p.grad.size() == 0) continue;
    if (!p.grad.allFinite()) throw NonFiniteGrad(p.name);
    if (c.grad_clip > 0.0) sq += static_cast<double>(p.grad.squaredNorm());
  }
  T clip = T(1);
  if (c.grad_clip > 0.0) {
    const double norm = std::sqrt(sq);
    if (norm > c.grad_clip) clip = static_cast<T>(c.grad_clip / norm);
  }

  ++state.step;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  const T b1 = static_cast<T>(c.beta1), b2 = static_cast<T>(c.beta2);
  const T step_size = static_cast<T>(lr / bc1);
  const T inv_sqrt_bc2 = static_cast<T>(1.0 / std::sqrt(bc2));
  const T eps = static_cast<T>(c.eps);
  const T decay = static_cast<T>(1.0 - lr * c.weight_decay);

  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    if (p.frozen || p.grad.size() == 0) continue;
    auto& mom = state.moments[p.name];
    if (mom.first.size() != p.value.size()) {
      mom.first = Matrix<T>::Zero(p.value.rows(), p.value.cols());
      mom.second = Matrix<T>::Zero(p.value.rows(), p.value.cols());
    }
    if (p.decay && c.weight_decay != 0.0) p.value *= decay;
    const T* g = p.grad.data();
    T* m = mom.first.data();
    T* v = mom.second.data();
    T* w = p.value.data();
    for (Eigen::Index j = 0; j < p.value.size(); ++j) {
      const T gj = g[j] * clip;
      m[j] = b1 * m[j] + (T(1) - b1) * gj;
      v[j] = b2 * v[j] + (T(1) - b2) * gj * gj;
      w[j] -= step_size * m[j] / (std::sqrt(v[j]) * inv_sqrt_bc2 + eps);
    }
  }
}

/// Linear warmup from lr_init to lr_peak over warmup_frac of the run, then
/// cosine decay to lr_final at total_steps.
struct LrSchedule {
  double lr_init = 1e-6;
  double lr_peak = 5e-4;
  double lr_final = 1e-7;
  double warmup_frac = 0.1;
  long total_steps = 1;

  void validate() const {
    if (!(lr_init < lr_peak) || !(lr_final < lr_peak) || !(lr_init >= 0.0) || !(lr_final >= 0.0))
      throw usage_error("lr schedule: need 0 <= lr_init, lr_final < lr_peak");
    if (!(warmup_frac > 0.0 && warmup_frac < 1.0)) throw usage_error("lr schedule: warmup_frac must lie in (0, 1)");
    if (total_steps < 1) throw usage_error("lr schedule: total_steps must be positive");
  }
  friend bool operator==(const LrSchedule&, const LrSchedule&) = default;
};

inline double lr_at(long step, const LrSchedule& s) {
  s.validate();
  if (step < 0 || step > s.total_steps)
    throw usage_error("lr_at: step " + std::to_string(step) + " outside [0, " + std::to_string(s.total_steps) + "]");
  const double warmup = s.warmup_frac * static_cast<double>(s.total_steps);
  const double t = static_cast<double>(step);
  if (t <= warmup) return s.lr_init + (s.lr_peak - s.lr_init) * (t / warmup);
  const double progress = (t - warmup) / (static_cast<double>(s.total_steps) - warmup);
  return s.lr_final + (s.lr_peak - s.lr_final) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

}  // namespace xact::nn
