#pragma once

#include <cmath>
#include <vector>

#include "xact/nn/graph.hpp"

namespace xact {

/// Symmetric InfoNCE between paired CLS rows.
///
/// S[i][j] is the cosine similarity of composition row i and XRD row j; logits
/// are S / tau with tau = exp(log_tau). The loss averages the row-wise
/// (composition -> XRD) and column-wise (XRD -> composition) cross-entropies
/// against the diagonal, and halves their sum.
template <class T>
nn::Var contrastive_loss(nn::Graph<T>& g, nn::Var comp_cls, nn::Var xrd_cls, nn::Var log_tau) {
  using M = nn::Matrix<T>;
  const auto& C = g.value(comp_cls);
  const auto& X = g.value(xrd_cls);
  if (C.rows() != X.rows() || C.cols() != X.cols() || C.rows() == 0)
    throw usage_error("contrastive_loss: composition and XRD batches must have equal non-zero shape");
  const auto B = C.rows();
  const T inv_tau = std::exp(-g.scalar(log_tau));

  std::vector<T> cn(static_cast<std::size_t>(B)), xn(static_cast<std::size_t>(B));
  M Ch(B, C.cols()), Xh(B, X.cols());
  for (Eigen::Index i = 0; i < B; ++i) {
    cn[static_cast<std::size_t>(i)] = C.row(i).norm();
    xn[static_cast<std::size_t>(i)] = X.row(i).norm();
    if (!(cn[static_cast<std::size_t>(i)] > T(0)) || !(xn[static_cast<std::size_t>(i)] > T(0)))
      throw numeric_error("contrastive_loss: zero-norm CLS embedding, cosine similarity undefined");
    Ch.row(i) = C.row(i) / cn[static_cast<std::size_t>(i)];
    Xh.row(i) = X.row(i) / xn[static_cast<std::size_t>(i)];
  }
  M S = Ch * Xh.transpose();
  M logits = S * inv_tau;

  // Row softmax (c2x) and column softmax (x2c).
  M Pr(B, B), Pc(B, B);
  T loss = 0;
  for (Eigen::Index i = 0; i < B; ++i) {
    const T m = logits.row(i).maxCoeff();
    Pr.row(i) = (logits.row(i).array() - m).exp();
    const T z = Pr.row(i).sum();
    Pr.row(i) /= z;
    loss += std::log(z) + m - logits(i, i);
  }
  for (Eigen::Index j = 0; j < B; ++j) {
    const T m = logits.col(j).maxCoeff();
    Pc.col(j) = (logits.col(j).array() - m).exp();
    const T z = Pc.col(j).sum();
    Pc.col(j) /= z;
    loss += std::log(z) + m - logits(j, j);
  }
  M out(1, 1);
  out(0, 0) = loss / (T(2) * T(B));

  const bool ng = g.needs_grad(comp_cls) || g.needs_grad(xrd_cls) || g.needs_grad(log_tau);
  return g.make(std::move(out), ng,
                [&g, comp_cls, xrd_cls, log_tau, Ch = std::move(Ch), Xh = std::move(Xh), S = std::move(S),
                 Pr = std::move(Pr), Pc = std::move(Pc), cn = std::move(cn), xn = std::move(xn), inv_tau](nn::Var y) {
                  const auto B = S.rows();
                  const T up = g.grad(y)(0, 0) / (T(2) * T(B));
                  M dlogits = Pr + Pc;
                  dlogits.diagonal().array() -= T(2);
                  dlogits *= up;
                  if (g.needs_grad(log_tau)) g.grad(log_tau)(0, 0) -= (dlogits.array() * S.array()).sum() * inv_tau;
                  const M dS = dlogits * inv_tau;
                  if (g.needs_grad(comp_cls)) {
                    M dCh = dS * Xh;
                    auto& gc = g.grad(comp_cls);
                    for (Eigen::Index i = 0; i < B; ++i) {
                      const T proj = dCh.row(i).dot(Ch.row(i));
                      gc.row(i) += (dCh.row(i) - Ch.row(i) * proj) / cn[static_cast<std::size_t>(i)];
                    }
                  }
                  if (g.needs_grad(xrd_cls)) {
                    M dXh = dS.transpose() * Ch;
                    auto& gx = g.grad(xrd_cls);
                    for (Eigen::Index i = 0; i < B; ++i) {
                      const T proj = dXh.row(i).dot(Xh.row(i));
                      gx.row(i) += (dXh.row(i) - Xh.row(i) * proj) / xn[static_cast<std::size_t>(i)];
                    }
                  }
                });
}

}  // namespace xact
