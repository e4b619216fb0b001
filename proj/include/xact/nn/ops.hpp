#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "xact/nn/graph.hpp"

namespace xact::nn {

namespace detail {
template <class T>
void require_same_shape(const Matrix<T>& a, const Matrix<T>& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw usage_error(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                      std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                      std::to_string(b.cols()));
}
}  // namespace detail

template <class T>
Var add(Graph<T>& g, Var a, Var b) {
  detail::require_same_shape(g.value(a), g.value(b), "add");
  return g.make(g.value(a) + g.value(b), g.needs_grad(a) || g.needs_grad(b), [&g, a, b](Var y) {
    if (g.needs_grad(a)) g.grad(a) += g.grad(y);
    if (g.needs_grad(b)) g.grad(b) += g.grad(y);
  });
}

template <class T>
Var scale(Graph<T>& g, Var a, T factor) {
  return g.make(g.value(a) * factor, g.needs_grad(a),
                [&g, a, factor](Var y) { g.grad(a) += g.grad(y) * factor; });
}

/// x W + b with W stored (in x out); b is a 1 x out row or absent.
template <class T>
Var linear(Graph<T>& g, Var x, Var w, Var b = Var{}) {
  const auto& X = g.value(x);
  const auto& W = g.value(w);
  if (X.cols() != W.rows())
    throw usage_error("linear: input width " + std::to_string(X.cols()) + " vs weight rows " +
                      std::to_string(W.rows()));
  Matrix<T> out(X.rows(), W.cols());
  out.noalias() = X * W;
  if (b.valid()) out.rowwise() += g.value(b).row(0);
  const bool ng = g.needs_grad(x) || g.needs_grad(w) || (b.valid() && g.needs_grad(b));
  return g.make(std::move(out), ng, [&g, x, w, b](Var y) {
    const auto& gy = g.grad(y);
    if (g.needs_grad(x)) g.grad(x).noalias() += gy * g.value(w).transpose();
    if (g.needs_grad(w)) g.grad(w).noalias() += g.value(x).transpose() * gy;
    if (b.valid() && g.needs_grad(b)) g.grad(b).row(0) += gy.colwise().sum();
  });
}

template <class T>
Var relu(Graph<T>& g, Var x) {
  Matrix<T> out = g.value(x).cwiseMax(T(0));
  if (g.tracking_kinks()) {
    const auto& X = g.value(x);
    std::uint64_t bits = 0;
    for (Eigen::Index i = 0; i < X.size(); ++i) {
      bits = (bits << 1) | (X.data()[i] > T(0));
      if (i % 64 == 63 || i + 1 == X.size()) {
        g.mix_kink_bits(bits);
        bits = 0;
      }
    }
  }
  return g.make(std::move(out), g.needs_grad(x), [&g, x](Var y) {
    const auto& X = g.value(x);
    const auto& gy = g.grad(y);
    auto& gx = g.grad(x);
    for (Eigen::Index i = 0; i < X.size(); ++i)
      if (X.data()[i] > T(0)) gx.data()[i] += gy.data()[i];
  });
}

inline constexpr double kLayerNormEps = 1e-5;

/// Row-wise normalisation to zero mean, unit variance, then gamma * xhat + beta.
template <class T>
Var layer_norm(Graph<T>& g, Var x, Var gamma, Var beta) {
  const auto& X = g.value(x);
  const auto n = X.rows(), d = X.cols();
  Matrix<T> xhat(n, d);
  std::vector<T> inv_std(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    const T mean = X.row(i).mean();
    const T var = (X.row(i).array() - mean).square().mean();
    const T is = T(1) / std::sqrt(var + T(kLayerNormEps));
    inv_std[static_cast<std::size_t>(i)] = is;
    xhat.row(i) = (X.row(i).array() - mean) * is;
  }
  Matrix<T> out = xhat;
  out.array().rowwise() *= g.value(gamma).row(0).array();
  out.rowwise() += g.value(beta).row(0);
  const bool ng = g.needs_grad(x) || g.needs_grad(gamma) || g.needs_grad(beta);
  return g.make(std::move(out), ng,
                [&g, x, gamma, beta, xhat = std::move(xhat), inv_std = std::move(inv_std)](Var y) {
                  const auto& gy = g.grad(y);
                  if (g.needs_grad(gamma))
                    g.grad(gamma).row(0) += (gy.array() * xhat.array()).colwise().sum().matrix();
                  if (g.needs_grad(beta)) g.grad(beta).row(0) += gy.colwise().sum();
                  if (!g.needs_grad(x)) return;
                  const auto& G = g.value(gamma);
                  auto& gx = g.grad(x);
                  const auto d = static_cast<T>(xhat.cols());
                  for (Eigen::Index i = 0; i < xhat.rows(); ++i) {
                    auto dxhat = (gy.row(i).array() * G.row(0).array()).eval();
                    const T m1 = dxhat.sum() / d;
                    const T m2 = (dxhat * xhat.row(i).array()).sum() / d;
                    gx.row(i).array() +=
                        inv_std[static_cast<std::size_t>(i)] * (dxhat - m1 - xhat.row(i).array() * m2);
                  }
                });
}

/// Inverted dropout; identity outside training or for p == 0.
template <class T>
Var dropout(Graph<T>& g, Var x, double p) {
  if (!g.training() || p <= 0.0) return x;
  const auto& X = g.value(x);
  Matrix<T> keep(X.rows(), X.cols());
  std::bernoulli_distribution coin(1.0 - p);
  const T s = T(1) / T(1.0 - p);
  auto& rng = g.dropout_rng();
  for (Eigen::Index i = 0; i < keep.size(); ++i) keep.data()[i] = coin(rng) ? s : T(0);
  Matrix<T> out = X.cwiseProduct(keep);
  return g.make(std::move(out), g.needs_grad(x), [&g, x, keep = std::move(keep)](Var y) {
    g.grad(x) += g.grad(y).cwiseProduct(keep);
  });
}

/// Rows of `table` at `indices` (embedding lookup).
template <class T>
Var gather_rows(Graph<T>& g, Var table, std::vector<int> indices) {
  const auto& W = g.value(table);
  Matrix<T> out(static_cast<Eigen::Index>(indices.size()), W.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] < 0 || indices[i] >= W.rows()) throw usage_error("gather_rows: index out of range");
    out.row(static_cast<Eigen::Index>(i)) = W.row(indices[i]);
  }
  return g.make(std::move(out), g.needs_grad(table), [&g, table, indices = std::move(indices)](Var y) {
    const auto& gy = g.grad(y);
    auto& gt = g.grad(table);
    for (std::size_t i = 0; i < indices.size(); ++i) gt.row(indices[i]) += gy.row(static_cast<Eigen::Index>(i));
  });
}

template <class T>
Var select_rows(Graph<T>& g, Var x, std::vector<int> rows) {
  return gather_rows(g, x, std::move(rows));
}

/// Inserts `row` (1 x d) ahead of every sequence of `x`.
template <class T>
Var prepend_row(Graph<T>& g, Var x, const Segments& seg, Var row) {
  const auto& X = g.value(x);
  const auto& R = g.value(row);
  if (R.rows() != 1 || R.cols() != X.cols()) throw usage_error("prepend_row: width mismatch");
  if (seg.total() != X.rows()) throw usage_error("prepend_row: segments do not cover input");
  Matrix<T> out(X.rows() + seg.count(), X.cols());
  for (int b = 0; b < seg.count(); ++b) {
    const int dst = seg.begin(b) + b;
    out.row(dst) = R.row(0);
    out.middleRows(dst + 1, seg.length(b)) = X.middleRows(seg.begin(b), seg.length(b));
  }
  return g.make(std::move(out), g.needs_grad(x) || g.needs_grad(row), [&g, x, row, seg](Var y) {
    const auto& gy = g.grad(y);
    for (int b = 0; b < seg.count(); ++b) {
      const int dst = seg.begin(b) + b;
      if (g.needs_grad(row)) g.grad(row).row(0) += gy.row(dst);
      if (g.needs_grad(x)) g.grad(x).middleRows(seg.begin(b), seg.length(b)) += gy.middleRows(dst + 1, seg.length(b));
    }
  });
}

/// Adds pos (L x d) to each consecutive block of L rows.
template <class T>
Var add_positional(Graph<T>& g, Var x, Var pos) {
  const auto& X = g.value(x);
  const auto& P = g.value(pos);
  if (P.cols() != X.cols() || X.rows() % P.rows() != 0) throw usage_error("add_positional: shape mismatch");
  const auto L = P.rows();
  Matrix<T> out = X;
  for (Eigen::Index s = 0; s < X.rows(); s += L) out.middleRows(s, L) += P;
  return g.make(std::move(out), g.needs_grad(x) || g.needs_grad(pos), [&g, x, pos, L](Var y) {
    const auto& gy = g.grad(y);
    if (g.needs_grad(x)) g.grad(x) += gy;
    if (g.needs_grad(pos))
      for (Eigen::Index s = 0; s < gy.rows(); s += L) g.grad(pos) += gy.middleRows(s, L);
  });
}

/// Rows flagged in `mask` are replaced by `row` (1 x d).
template <class T>
Var replace_rows(Graph<T>& g, Var x, std::vector<std::uint8_t> mask, Var row) {
  const auto& X = g.value(x);
  if (static_cast<Eigen::Index>(mask.size()) != X.rows()) throw usage_error("replace_rows: mask length");
  if (g.value(row).cols() != X.cols()) throw usage_error("replace_rows: width mismatch");
  Matrix<T> out = X;
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) out.row(static_cast<Eigen::Index>(i)) = g.value(row).row(0);
  return g.make(std::move(out), g.needs_grad(x) || g.needs_grad(row), [&g, x, row, mask = std::move(mask)](Var y) {
    const auto& gy = g.grad(y);
    for (std::size_t i = 0; i < mask.size(); ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      if (mask[i]) {
        if (g.needs_grad(row)) g.grad(row).row(0) += gy.row(r);
      } else if (g.needs_grad(x)) {
        g.grad(x).row(r) += gy.row(r);
      }
    }
  });
}

/// Sum of squared differences against a constant target; returns 1 x 1.
template <class T>
Var sum_squared_error(Graph<T>& g, Var pred, Matrix<T> target) {
  detail::require_same_shape(g.value(pred), target, "sum_squared_error");
  Matrix<T> diff = g.value(pred) - target;
  Matrix<T> out(1, 1);
  out(0, 0) = diff.squaredNorm();
  return g.make(std::move(out), g.needs_grad(pred), [&g, pred, diff = std::move(diff)](Var y) {
    g.grad(pred) += diff * (T(2) * g.grad(y)(0, 0));
  });
}

/// Sum over rows of -log softmax(logits)[label]; returns 1 x 1.
template <class T>
Var cross_entropy_sum(Graph<T>& g, Var logits, std::vector<int> labels) {
  const auto& Z = g.value(logits);
  if (static_cast<Eigen::Index>(labels.size()) != Z.rows()) throw usage_error("cross_entropy_sum: label count");
  Matrix<T> probs(Z.rows(), Z.cols());
  T total = 0;
  for (Eigen::Index i = 0; i < Z.rows(); ++i) {
    const int label = labels[static_cast<std::size_t>(i)];
    if (label < 0 || label >= Z.cols()) throw data_error("cross_entropy_sum: label out of range");
    const T m = Z.row(i).maxCoeff();
    probs.row(i) = (Z.row(i).array() - m).exp();
    const T s = probs.row(i).sum();
    probs.row(i) /= s;
    total += std::log(s) + m - Z(i, label);
  }
  Matrix<T> out(1, 1);
  out(0, 0) = total;
  return g.make(std::move(out), g.needs_grad(logits),
                [&g, logits, probs = std::move(probs), labels = std::move(labels)](Var y) {
                  const T s = g.grad(y)(0, 0);
                  auto& gz = g.grad(logits);
                  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
                    gz.row(i) += probs.row(i) * s;
                    gz(i, labels[static_cast<std::size_t>(i)]) -= s;
                  }
                });
}

}  // namespace xact::nn
