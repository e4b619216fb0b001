#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "xact/error.hpp"
#include "xact/train/rng.hpp"

namespace xact::eval {

inline double regression_mae(std::span<const double> preds, std::span<const double> targets, double unit_scale = 1.0) {
  if (preds.size() != targets.size()) throw usage_error("regression_mae: length mismatch");
  if (preds.empty()) throw data_error("regression_mae: empty input");
  double s = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) s += std::abs(preds[i] - targets[i]);
  return s / static_cast<double>(preds.size()) * unit_scale;
}

struct ClassAccuracy {
  double overall = 0.0;
  std::vector<std::optional<double>> per_class;  // nullopt for classes without support
  std::vector<std::size_t> support;

  /// Mean over classes that have support.
  double class_mean() const {
    double s = 0.0;
    int n = 0;
    for (const auto& a : per_class)
      if (a) {
        s += *a;
        ++n;
      }
    return n ? s / n : 0.0;
  }
};

inline ClassAccuracy classification_accuracy(std::span<const int> preds, std::span<const int> targets, int class_count) {
  if (preds.size() != targets.size()) throw usage_error("classification_accuracy: length mismatch");
  if (preds.empty()) throw data_error("classification_accuracy: empty input");
  if (class_count < 1) throw usage_error("classification_accuracy: class_count must be positive");
  ClassAccuracy out;
  out.support.assign(static_cast<std::size_t>(class_count), 0);
  std::vector<std::size_t> correct(static_cast<std::size_t>(class_count), 0);
  std::size_t total_correct = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const int t = targets[i], p = preds[i];
    if (t < 0 || t >= class_count || p < 0 || p >= class_count)
      throw data_error("classification_accuracy: label out of range [0, " + std::to_string(class_count) + ")");
    ++out.support[static_cast<std::size_t>(t)];
    if (p == t) {
      ++correct[static_cast<std::size_t>(t)];
      ++total_correct;
    }
  }
  out.overall = static_cast<double>(total_correct) / static_cast<double>(preds.size());
  for (int c = 0; c < class_count; ++c) {
    const auto n = out.support[static_cast<std::size_t>(c)];
    out.per_class.push_back(n ? std::optional<double>(static_cast<double>(correct[static_cast<std::size_t>(c)]) / n)
                              : std::nullopt);
  }
  return out;
}

struct PcaResult {
  Eigen::MatrixXd coords;            // M x k
  Eigen::MatrixXd components;        // d x k, unit columns
  Eigen::VectorXd mean;              // d
  std::vector<double> explained_variance;
  std::vector<double> explained_ratio;
};

/// Top-k principal directions of the mean-centred rows. Each component is
/// signed so that its largest-magnitude loading is positive.
inline PcaResult pca_project(const Eigen::MatrixXd& x, int k = 2) {
  const auto m = x.rows(), d = x.cols();
  if (k < 1) throw usage_error("pca_project: k must be positive");
  if (m < k || d < k) throw data_error("pca_project: need at least k rows and k columns");
  PcaResult r;
  r.mean = x.colwise().mean().transpose();
  Eigen::MatrixXd c = x.rowwise() - r.mean.transpose();
  Eigen::BDCSVD<Eigen::MatrixXd> svd(c, Eigen::ComputeThinV);
  const auto& s = svd.singularValues();
  const double tol = std::max<double>(static_cast<double>(std::max(m, d)) * 1e-12 * (s.size() ? s(0) : 0.0), 1e-300);
  if (s.size() < k || s(k - 1) <= tol)
    throw data_error("pca_project: data rank is below k = " + std::to_string(k));
  r.components = svd.matrixV().leftCols(k);
  for (int j = 0; j < k; ++j) {
    Eigen::Index arg = 0;
    r.components.col(j).cwiseAbs().maxCoeff(&arg);
    if (r.components(arg, j) < 0) r.components.col(j) *= -1.0;
  }
  r.coords = c * r.components;
  const double denom = m > 1 ? static_cast<double>(m - 1) : 1.0;
  const double total = s.squaredNorm() / denom;
  for (int j = 0; j < k; ++j) {
    const double v = s(j) * s(j) / denom;
    r.explained_variance.push_back(v);
    r.explained_ratio.push_back(total > 0 ? v / total : 0.0);
  }
  return r;
}

struct SilhouetteResult {
  double mean = 0.0;
  std::map<int, double> per_class;
  std::size_t points = 0;  // after subsampling
};

inline constexpr std::size_t kSilhouetteMaxPoints = 10000;

/// Euclidean silhouette; singleton-class points score 0. Inputs larger than
/// `max_points` are subsampled without replacement using `seed`.
inline SilhouetteResult silhouette(const Eigen::MatrixXd& points, std::span<const int> labels,
                                   std::size_t max_points = kSilhouetteMaxPoints, std::uint64_t seed = 0) {
  if (static_cast<std::size_t>(points.rows()) != labels.size()) throw usage_error("silhouette: label count mismatch");
  std::vector<std::size_t> idx(labels.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (idx.size() > max_points) {
    Rng rng(derive_seed(seed, "silhouette"));
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(max_points);
    std::sort(idx.begin(), idx.end());
  }
  std::map<int, int> class_slot;
  for (auto i : idx) class_slot.emplace(labels[i], 0);
  if (class_slot.size() < 2) throw data_error("silhouette: need at least two classes");
  int slot = 0;
  for (auto& [_, s] : class_slot) s = slot++;

  const auto n = idx.size();
  const int nc = static_cast<int>(class_slot.size());
  std::vector<int> lab(n);
  std::vector<std::size_t> count(static_cast<std::size_t>(nc), 0);
  for (std::size_t i = 0; i < n; ++i) {
    lab[i] = class_slot[labels[idx[i]]];
    ++count[static_cast<std::size_t>(lab[i])];
  }
  Eigen::MatrixXd p(static_cast<Eigen::Index>(n), points.cols());
  for (std::size_t i = 0; i < n; ++i) p.row(static_cast<Eigen::Index>(i)) = points.row(static_cast<Eigen::Index>(idx[i]));

  std::vector<double> s(n, 0.0), sums(static_cast<std::size_t>(nc));
  for (std::size_t i = 0; i < n; ++i) {
    const auto li = static_cast<std::size_t>(lab[i]);
    if (count[li] == 1) continue;
    std::fill(sums.begin(), sums.end(), 0.0);
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) sums[static_cast<std::size_t>(lab[j])] +=
          (p.row(static_cast<Eigen::Index>(i)) - p.row(static_cast<Eigen::Index>(j))).norm();
    const double a = sums[li] / static_cast<double>(count[li] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (int c = 0; c < nc; ++c)
      if (c != lab[i]) b = std::min(b, sums[static_cast<std::size_t>(c)] / static_cast<double>(count[static_cast<std::size_t>(c)]));
    const double mx = std::max(a, b);
    s[i] = mx > 0 ? (b - a) / mx : 0.0;
  }

  SilhouetteResult r;
  r.points = n;
  r.mean = std::accumulate(s.begin(), s.end(), 0.0) / static_cast<double>(n);
  for (const auto& [label, sl] : class_slot) {
    double t = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      if (lab[i] == sl) t += s[i];
    r.per_class[label] = t / static_cast<double>(count[static_cast<std::size_t>(sl)]);
  }
  return r;
}

struct PowerLawFit {
  double a = 0.0;
  double b = 0.0;
  double residual = 0.0;  // RMS of ln L - ln(a D^b)

  double operator()(double d) const { return a * std::pow(d, b); }
};

/// Ordinary least squares of ln L on ln D: L = a D^b.
inline PowerLawFit fit_power_law(std::span<const std::pair<double, double>> points) {
  if (points.size() < 2) throw data_error("fit_power_law: need at least two points");
  double sx = 0, sy = 0;
  for (auto [d, l] : points) {
    if (!(d > 0) || !(l > 0)) throw data_error("fit_power_law: D and L must be positive");
    sx += std::log(d);
    sy += std::log(l);
  }
  const double n = static_cast<double>(points.size());
  const double mx = sx / n, my = sy / n;
  double sxx = 0, sxy = 0;
  for (auto [d, l] : points) {
    const double dx = std::log(d) - mx;
    sxx += dx * dx;
    sxy += dx * (std::log(l) - my);
  }
  if (sxx == 0) throw data_error("fit_power_law: all D values are equal");
  PowerLawFit f;
  f.b = sxy / sxx;
  const double intercept = my - f.b * mx;
  f.a = std::exp(intercept);
  double ss = 0;
  for (auto [d, l] : points) {
    const double e = std::log(l) - (intercept + f.b * std::log(d));
    ss += e * e;
  }
  f.residual = std::sqrt(ss / n);
  return f;
}

}  // namespace xact::eval
