#pragma once

#include <span>
#include <vector>

#include "xact/data/types.hpp"
#include "xact/model/config.hpp"
#include "xact/nn/layers.hpp"

namespace xact {

template <class T>
struct XrdEmbedding {
  nn::Var sequence;  // B*18 x dim; row 0 of each block is x_cls
  nn::Segments segments;
  nn::Var cls;  // B x dim
};

/// Packs dense traces as (B*17) x 250 token rows scaled from [0, 100] to [0, 1].
template <class T>
nn::Matrix<T> xrd_token_matrix(std::span<const XrdVector* const> traces) {
  nn::Matrix<T> m(static_cast<Eigen::Index>(traces.size()) * XrdGrid::token_count, XrdGrid::token_width);
  T* out = m.data();
  for (const auto* v : traces) {
    if (v->values.size() != static_cast<std::size_t>(XrdGrid::points))
      throw data_error("xrd encoder: expected 4250-value traces");
    for (float x : v->values) *out++ = static_cast<T>(x) / T(100);
  }
  return m;
}

template <class T>
class XrdEncoder {
 public:
  static constexpr int kSequenceLength = XrdGrid::token_count + 1;

  XrdEncoder() = default;
  XrdEncoder(nn::ParameterStore<T>& store, const nn::StackConfig& cfg, MaskMode mask_mode, Rng& rng)
      : config_(cfg), mask_mode_(mask_mode) {
    input_proj_ = nn::Linear<T>::create(store, "xrd.input_proj", XrdGrid::token_width, cfg.dim, rng);
    cls_ = &store.add("xrd.cls", nn::normal_init<T>(1, cfg.dim, 0.02, rng), false);
    positional_ = &store.add("xrd.positional", nn::normal_init<T>(kSequenceLength, cfg.dim, 0.02, rng), false);
    const int mask_width = mask_mode == MaskMode::embedding ? cfg.dim : XrdGrid::token_width;
    mask_token_ = &store.add("xrd.mask_token", nn::normal_init<T>(1, mask_width, 0.02, rng), false);
    encoder_ = nn::EncoderStack<T>::create(store, "xrd.encoder", cfg, rng);
  }

  const nn::StackConfig& config() const { return config_; }
  nn::Parameter<T>& positional() const { return *positional_; }

  /// tokens: (B*17) x 250 in [0, 1]. `mask`, if given, flags token rows to replace with [MASK].
  XrdEmbedding<T> encode(nn::Graph<T>& g, nn::Var tokens, const std::vector<std::uint8_t>* mask, double dropout) const {
    const auto rows = g.value(tokens).rows();
    if (g.value(tokens).cols() != XrdGrid::token_width || rows % XrdGrid::token_count != 0 || rows == 0)
      throw data_error("xrd encoder: expected (B*17) x 250 tokens");
    const int batch = static_cast<int>(rows / XrdGrid::token_count);
    if (mask && mask_mode_ == MaskMode::input) tokens = nn::replace_rows(g, tokens, *mask, g.param(*mask_token_));
    nn::Var x = input_proj_(g, tokens);
    if (mask && mask_mode_ == MaskMode::embedding) x = nn::replace_rows(g, x, *mask, g.param(*mask_token_));
    const auto seg = nn::Segments::uniform(batch, XrdGrid::token_count);
    x = nn::prepend_row(g, x, seg, g.param(*cls_));
    x = nn::add_positional(g, x, g.param(*positional_));
    XrdEmbedding<T> out;
    out.segments = seg.with_prefix();
    out.sequence = encoder_(g, x, out.segments, dropout);
    out.cls = nn::select_rows(g, out.sequence, out.segments.first_rows());
    return out;
  }

 private:
  nn::StackConfig config_;
  MaskMode mask_mode_ = MaskMode::embedding;
  nn::Linear<T> input_proj_;
  nn::Parameter<T>* cls_ = nullptr;
  nn::Parameter<T>* positional_ = nullptr;
  nn::Parameter<T>* mask_token_ = nullptr;
  nn::EncoderStack<T> encoder_;
};

}  // namespace xact
