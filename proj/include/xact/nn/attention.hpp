#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "xact/nn/graph.hpp"

namespace xact::nn {

/// Scaled dot-product attention over packed sequences.
///
/// q is (sum Lq x d), k and v are (sum Lk x d); query segment b attends only to
/// key segment b. Heads split d into contiguous slices of d / heads. Dropout, if
/// active, is applied to the attention weights.
template <class T>
Var attention(Graph<T>& g, Var q, Var k, Var v, const Segments& qs, const Segments& ks, int heads,
              double dropout_p = 0.0) {
  const auto& Q = g.value(q);
  const auto& K = g.value(k);
  const auto& V = g.value(v);
  const auto d = Q.cols();
  if (K.cols() != d || V.cols() != d || K.rows() != V.rows()) throw usage_error("attention: shape mismatch");
  if (heads <= 0 || d % heads != 0) throw usage_error("attention: width not divisible by heads");
  if (qs.count() != ks.count() || qs.total() != Q.rows() || ks.total() != K.rows())
    throw usage_error("attention: segment mismatch");
  const int dh = static_cast<int>(d / heads);
  const T inv_sqrt = T(1) / std::sqrt(T(dh));
  const bool drop = g.training() && dropout_p > 0.0;
  const T keep_scale = drop ? T(1) / T(1.0 - dropout_p) : T(1);

  // probs/keep hold, per (segment, head), an Lq x Lk block laid out consecutively.
  std::vector<T> probs;
  std::vector<T> keep;
  std::size_t total = 0;
  for (int b = 0; b < qs.count(); ++b) {
    if (ks.length(b) == 0) throw data_error("attention: empty key sequence");
    total += static_cast<std::size_t>(qs.length(b)) * static_cast<std::size_t>(ks.length(b)) * static_cast<std::size_t>(heads);
  }
  probs.resize(total);
  if (drop) keep.resize(total);

  Matrix<T> out = Matrix<T>::Zero(Q.rows(), d);
  std::bernoulli_distribution coin(1.0 - dropout_p);
  std::vector<Matrix<T>>* captured = nullptr;
  if (g.capture_attention) captured = &g.attention_probs.emplace_back();

  std::size_t at = 0;
  for (int b = 0; b < qs.count(); ++b) {
    const int q0 = qs.begin(b), lq = qs.length(b), k0 = ks.begin(b), lk = ks.length(b);
    for (int h = 0; h < heads; ++h) {
      const int c0 = h * dh;
      T* P = probs.data() + at;
      for (int i = 0; i < lq; ++i) {
        const T* qi = Q.data() + (q0 + i) * d + c0;
        T* row = P + static_cast<std::size_t>(i) * lk;
        T m = -std::numeric_limits<T>::infinity();
        for (int j = 0; j < lk; ++j) {
          const T* kj = K.data() + (k0 + j) * d + c0;
          T s = 0;
          for (int c = 0; c < dh; ++c) s += qi[c] * kj[c];
          row[j] = s * inv_sqrt;
          m = std::max(m, row[j]);
        }
        T z = 0;
        for (int j = 0; j < lk; ++j) {
          row[j] = std::exp(row[j] - m);
          z += row[j];
        }
        for (int j = 0; j < lk; ++j) row[j] /= z;
        T* oi = out.data() + (q0 + i) * d + c0;
        for (int j = 0; j < lk; ++j) {
          T w = row[j];
          if (drop) {
            const T kp = coin(g.dropout_rng()) ? keep_scale : T(0);
            keep[at + static_cast<std::size_t>(i) * lk + j] = kp;
            w *= kp;
          }
          if (w == T(0)) continue;
          const T* vj = V.data() + (k0 + j) * d + c0;
          for (int c = 0; c < dh; ++c) oi[c] += w * vj[c];
        }
      }
      if (captured) {
        Matrix<T> m(lq, lk);
        std::copy(P, P + static_cast<std::size_t>(lq) * lk, m.data());
        captured->push_back(std::move(m));
      }
      at += static_cast<std::size_t>(lq) * lk;
    }
  }

  const bool ng = g.needs_grad(q) || g.needs_grad(k) || g.needs_grad(v);
  return g.make(std::move(out), ng,
                [&g, q, k, v, qs, ks, heads, dh, inv_sqrt, drop, probs = std::move(probs),
                 keep = std::move(keep)](Var y) {
                  const auto& Q = g.value(q);
                  const auto& K = g.value(k);
                  const auto& V = g.value(v);
                  const auto& gy = g.grad(y);
                  const auto d = Q.cols();
                  const bool gq = g.needs_grad(q), gk = g.needs_grad(k), gv = g.needs_grad(v);
                  Matrix<T>* dQ = gq ? &g.grad(q) : nullptr;
                  Matrix<T>* dK = gk ? &g.grad(k) : nullptr;
                  Matrix<T>* dV = gv ? &g.grad(v) : nullptr;
                  std::vector<T> dp;
                  std::size_t at = 0;
                  for (int b = 0; b < qs.count(); ++b) {
                    const int q0 = qs.begin(b), lq = qs.length(b), k0 = ks.begin(b), lk = ks.length(b);
                    dp.resize(static_cast<std::size_t>(lk));
                    for (int h = 0; h < heads; ++h) {
                      const int c0 = h * dh;
                      const T* P = probs.data() + at;
                      const T* Kp = drop ? keep.data() + at : nullptr;
                      for (int i = 0; i < lq; ++i) {
                        const T* gyi = gy.data() + (q0 + i) * d + c0;
                        const T* row = P + static_cast<std::size_t>(i) * lk;
                        // d(weights) then softmax backward.
                        T dot = 0;
                        for (int j = 0; j < lk; ++j) {
                          const T* vj = V.data() + (k0 + j) * d + c0;
                          T s = 0;
                          for (int c = 0; c < dh; ++c) s += gyi[c] * vj[c];
                          const T kp = Kp ? Kp[static_cast<std::size_t>(i) * lk + j] : T(1);
                          dp[static_cast<std::size_t>(j)] = s * kp;
                          dot += dp[static_cast<std::size_t>(j)] * row[j];
                          if (dV) {
                            const T w = row[j] * kp;
                            T* dvj = dV->data() + (k0 + j) * d + c0;
                            for (int c = 0; c < dh; ++c) dvj[c] += w * gyi[c];
                          }
                        }
                        if (!dQ && !dK) continue;
                        const T* qi = Q.data() + (q0 + i) * d + c0;
                        T* dqi = dQ ? dQ->data() + (q0 + i) * d + c0 : nullptr;
                        for (int j = 0; j < lk; ++j) {
                          const T ds = row[j] * (dp[static_cast<std::size_t>(j)] - dot) * inv_sqrt;
                          if (ds == T(0)) continue;
                          const T* kj = K.data() + (k0 + j) * d + c0;
                          if (dqi)
                            for (int c = 0; c < dh; ++c) dqi[c] += ds * kj[c];
                          if (dK) {
                            T* dkj = dK->data() + (k0 + j) * d + c0;
                            for (int c = 0; c < dh; ++c) dkj[c] += ds * qi[c];
                          }
                        }
                      }
                      at += static_cast<std::size_t>(lq) * lk;
                    }
                  }
                });
}

}  // namespace xact::nn
