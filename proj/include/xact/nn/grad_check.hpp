#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <string>

#include "xact/nn/graph.hpp"

namespace xact::nn {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_parameter;
  std::size_t checked = 0;
  std::size_t refined = 0;  // coordinates whose step was shrunk to avoid a kink
};

struct GradCheckOptions {
  double eps = 1e-6;
  std::size_t coords_per_param = 8;  // sampled coordinates per tensor; all if the tensor is smaller
  double denominator_floor = 1e-4;   // |a - n| / max(|a|, |n|, floor * max(1, |loss|))
  std::uint64_t seed = 0;
  int max_refinements = 4;  // a step crossing a ReLU kink is divided by 10 up to this many times
};

/// Compares reverse-mode gradients with central differences
/// (f(x + eps) - f(x - eps)) / (2 eps) on randomly sampled coordinates of every
/// trainable parameter. `build_loss` must add a deterministic scalar loss to the
/// graph it is given (evaluation mode, no dropout). When either evaluation sees a
/// different ReLU sign pattern than the unperturbed one, eps shrinks tenfold.
template <class T>
GradCheckResult grad_check(const std::function<Var(Graph<T>&)>& build_loss, ParameterStore<T>& params,
                           const GradCheckOptions& opt = {}) {
  auto evaluate = [&](std::uint64_t& signature) {
    Graph<T> g(false);
    g.track_kinks(true);
    const T v = g.scalar(build_loss(g));
    if (!std::isfinite(static_cast<double>(v))) throw numeric_error("grad_check: non-finite loss");
    signature = g.kink_signature();
    return static_cast<double>(v);
  };

  params.zero_grad();
  double floor = opt.denominator_floor;
  {
    Graph<T> g(false);
    Var loss = build_loss(g);
    const double value = static_cast<double>(g.scalar(loss));
    if (!std::isfinite(value)) throw numeric_error("grad_check: non-finite loss");
    floor *= std::max(1.0, std::abs(value));
    g.backward(loss);
  }

  std::uint64_t base = 0;
  evaluate(base);
  Rng rng(opt.seed);
  GradCheckResult result;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& p = params[pi];
    if (p.frozen) continue;
    const Matrix<T> analytic = p.grad.size() ? p.grad : Matrix<T>::Zero(p.value.rows(), p.value.cols());
    std::vector<Eigen::Index> coords(static_cast<std::size_t>(p.value.size()));
    std::iota(coords.begin(), coords.end(), Eigen::Index{0});
    if (coords.size() > opt.coords_per_param) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(opt.coords_per_param);
    }
    for (Eigen::Index c : coords) {
      T& x = p.value.data()[c];
      const T saved = x;
      std::uint64_t su = 0, sd = 0;
      double eps = opt.eps, numeric = 0.0;
      for (int attempt = 0;; ++attempt) {
        x = static_cast<T>(saved + eps);
        const double up = evaluate(su);
        x = static_cast<T>(saved - eps);
        const double down = evaluate(sd);
        x = saved;
        numeric = (up - down) / (2.0 * eps);
        if ((su == base && sd == base) || attempt == opt.max_refinements) break;
        if (attempt == 0) ++result.refined;
        eps /= 10.0;
      }
      const double a = static_cast<double>(analytic.data()[c]);
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
      ++result.checked;
      if (rel > result.max_rel_error) {
        result.max_rel_error = rel;
        result.worst_parameter = p.name;
      }
    }
  }
  params.zero_grad();
  return result;
}

}  // namespace xact::nn
