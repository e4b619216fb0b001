#pragma once

#include <random>
#include <span>
#include <vector>

#include "xact/data/types.hpp"
#include "xact/model/model.hpp"
#include "xact/nn/ops.hpp"

namespace xact {

inline constexpr double kMaskRate = 0.05;

/// Which of a trace's 17 tokens are hidden. Never all-zero.
class MaskSpec {
 public:
  explicit MaskSpec(std::vector<std::uint8_t> bits) : bits_(std::move(bits)) {
    if (bits_.size() != static_cast<std::size_t>(XrdGrid::token_count))
      throw usage_error("MaskSpec: expected 17 bits");
    if (count() == 0) throw usage_error("MaskSpec: at least one token must be masked");
  }

  /// Independent Bernoulli(rate) draws, redrawn until at least one bit is set.
  static MaskSpec sample(Rng& rng, double rate = kMaskRate) {
    if (!(rate > 0.0 && rate <= 1.0)) throw usage_error("MaskSpec: rate must lie in (0, 1]");
    std::bernoulli_distribution coin(rate);
    std::vector<std::uint8_t> bits(XrdGrid::token_count);
    for (;;) {
      int n = 0;
      for (auto& b : bits) n += (b = coin(rng) ? 1 : 0);
      if (n > 0) return MaskSpec(std::move(bits));
    }
  }

  const std::vector<std::uint8_t>& bits() const { return bits_; }
  int count() const {
    int n = 0;
    for (auto b : bits_) n += b;
    return n;
  }

 private:
  std::vector<std::uint8_t> bits_;
};

/// Concatenated row mask for a batch of MaskSpecs: (B*17) entries.
inline std::vector<std::uint8_t> batch_mask(std::span<const MaskSpec> masks) {
  std::vector<std::uint8_t> rows;
  rows.reserve(masks.size() * XrdGrid::token_count);
  for (const auto& m : masks) rows.insert(rows.end(), m.bits().begin(), m.bits().end());
  return rows;
}

/// sum_r w_r * ||recon_r - target_r||^2 over rows with non-zero weight.
template <class T>
nn::Var weighted_row_sse(nn::Graph<T>& g, nn::Var recon, nn::Matrix<T> target, std::vector<T> weights) {
  const auto& R = g.value(recon);
  if (R.rows() != target.rows() || R.cols() != target.cols() || static_cast<Eigen::Index>(weights.size()) != R.rows())
    throw usage_error("weighted_row_sse: shape mismatch");
  T total = 0;
  for (Eigen::Index r = 0; r < R.rows(); ++r)
    if (weights[static_cast<std::size_t>(r)] != T(0))
      total += weights[static_cast<std::size_t>(r)] * (R.row(r) - target.row(r)).squaredNorm();
  nn::Matrix<T> out(1, 1);
  out(0, 0) = total;
  return g.make(std::move(out), g.needs_grad(recon),
                [&g, recon, target = std::move(target), weights = std::move(weights)](nn::Var y) {
                  const T up = g.grad(y)(0, 0);
                  const auto& R = g.value(recon);
                  auto& gr = g.grad(recon);
                  for (Eigen::Index r = 0; r < R.rows(); ++r) {
                    const T w = weights[static_cast<std::size_t>(r)];
                    if (w != T(0)) gr.row(r) += (R.row(r) - target.row(r)) * (T(2) * w * up);
                  }
                });
}

/// Per-row weights 1 / (B * m_b * width) for the masked rows of each 17-row block, zero elsewhere.
/// Summing weighted squared errors with them gives the batch mean of
/// sum_i m_i MSE_i / sum_i m_i.
template <class T>
std::vector<T> mxm_row_weights(const std::vector<std::uint8_t>& mask, int width) {
  constexpr int L = XrdGrid::token_count;
  if (mask.empty() || mask.size() % L != 0) throw usage_error("mxm: mask length must be a multiple of 17");
  const auto batch = mask.size() / L;
  std::vector<T> w(mask.size(), T(0));
  for (std::size_t b = 0; b < batch; ++b) {
    int m = 0;
    for (int i = 0; i < L; ++i) m += mask[b * L + static_cast<std::size_t>(i)];
    if (m == 0) throw usage_error("mxm: sample with an empty mask");
    for (int i = 0; i < L; ++i)
      if (mask[b * L + static_cast<std::size_t>(i)]) w[b * L + static_cast<std::size_t>(i)] = T(1) / (T(batch) * T(m) * T(width));
  }
  return w;
}

template <class T>
struct MxmOutput {
  nn::Var loss;
  nn::Var reconstruction;  // ReLU(Linear(f_i)): all B*17 tokens, or only masked ones
  std::vector<int> reconstructed_rows;  // token rows (into B*17) that `reconstruction` covers
};

/// Masked XRD modelling: hides the flagged tokens, fuses, and regresses the
/// hidden tokens' [0, 1]-scaled intensities from the fused token outputs.
/// With `reconstruct_all == false` only masked rows pass through the head,
/// which yields the same loss and gradients.
template <class T>
MxmOutput<T> mxm_loss(nn::Graph<T>& g, const Model<T>& model, std::span<const MaterialRecord* const> batch,
                      std::span<const MaskSpec> masks, bool reconstruct_all = true, Encoded<T>* encoded = nullptr) {
  if (masks.size() != batch.size()) throw usage_error("mxm_loss: one MaskSpec per record required");
  auto rows = batch_mask(masks);
  Encoded<T> enc = model.encode(g, batch, &rows);
  std::vector<const XrdVector*> traces;
  for (const auto* r : batch) traces.push_back(&r->dense());
  nn::Matrix<T> truth = xrd_token_matrix<T>(traces);

  MxmOutput<T> out;
  nn::Var tokens = enc.fused->tokens;
  if (reconstruct_all) {
    out.reconstructed_rows.resize(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) out.reconstructed_rows[i] = static_cast<int>(i);
  } else {
    for (std::size_t i = 0; i < rows.size(); ++i)
      if (rows[i]) out.reconstructed_rows.push_back(static_cast<int>(i));
    tokens = nn::select_rows(g, tokens, out.reconstructed_rows);
  }
  out.reconstruction = nn::relu(g, model.mxm_head()(g, tokens));

  auto weights = mxm_row_weights<T>(rows, XrdGrid::token_width);
  if (reconstruct_all) {
    out.loss = weighted_row_sse(g, out.reconstruction, std::move(truth), std::move(weights));
  } else {
    const auto n = static_cast<Eigen::Index>(out.reconstructed_rows.size());
    nn::Matrix<T> target(n, XrdGrid::token_width);
    std::vector<T> w(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
      const int r = out.reconstructed_rows[static_cast<std::size_t>(i)];
      target.row(i) = truth.row(r);
      w[static_cast<std::size_t>(i)] = weights[static_cast<std::size_t>(r)];
    }
    out.loss = weighted_row_sse(g, out.reconstruction, std::move(target), std::move(w));
  }
  if (encoded) *encoded = std::move(enc);
  return out;
}

}  // namespace xact
