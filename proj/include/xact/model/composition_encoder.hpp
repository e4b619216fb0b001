#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "xact/data/types.hpp"
#include "xact/nn/layers.hpp"

namespace xact {

/// Sinusoidal encoding of a stoichiometric fraction: dim/2 (sin, cos) pairs at
/// frequencies spaced geometrically from 1 to 1e4.
template <class T>
void fraction_encoding(double fraction, int dim, T* out) {
  const int pairs = dim / 2;
  for (int k = 0; k < pairs; ++k) {
    const double freq = pairs > 1 ? std::pow(1e4, static_cast<double>(k) / (pairs - 1)) : 1.0;
    out[2 * k] = static_cast<T>(std::sin(freq * fraction));
    out[2 * k + 1] = static_cast<T>(std::cos(freq * fraction));
  }
}

/// Element-derived matrix: one row per element slot, padded to 16.
template <class T>
struct EdmTokens {
  nn::Matrix<T> tokens;            // 16 x dim, padded rows zero
  std::vector<std::uint8_t> mask;  // 1 = real element
};

template <class T>
struct CompositionEmbedding {
  nn::Var sequence;   // packed (sum (n_b + 1)) x dim, CLS first in each segment
  nn::Segments segments;
  nn::Var cls;        // B x dim
};

template <class T>
class CompositionEncoder {
 public:
  CompositionEncoder() = default;
  CompositionEncoder(nn::ParameterStore<T>& store, const nn::StackConfig& cfg, Rng& rng) : config_(cfg) {
    if (cfg.dim % 2 != 0) throw mismatch_error("composition encoder dim must be even");
    element_table_ = &store.add("comp.element_embedding", nn::normal_init<T>(kMaxAtomicNumber, cfg.dim, 0.02, rng), false);
    fraction_proj_ = nn::Linear<T>::create(store, "comp.fraction_proj", cfg.dim, cfg.dim, rng);
    cls_ = &store.add("comp.cls", nn::normal_init<T>(1, cfg.dim, 0.02, rng), false);
    encoder_ = nn::EncoderStack<T>::create(store, "comp.encoder", cfg, rng);
  }

  const nn::StackConfig& config() const { return config_; }

  /// Element tokens ElementEmbed[z] + Proj(FracEncode(fraction)) in input order.
  nn::Var element_tokens(nn::Graph<T>& g, std::span<const Composition* const> comps, nn::Segments& seg) const {
    std::vector<int> ids;
    std::vector<int> lengths;
    std::size_t total = 0;
    for (const auto* c : comps) total += c->entries.size();
    nn::Matrix<T> frac(static_cast<Eigen::Index>(total), config_.dim);
    Eigen::Index row = 0;
    for (const auto* c : comps) {
      if (c->entries.empty()) throw data_error("composition with no elements");
      if (c->entries.size() > static_cast<std::size_t>(kMaxElements)) throw data_error("composition exceeds 16 elements");
      for (const auto& e : c->entries) {
        if (e.z < 1 || e.z > kMaxAtomicNumber)
          throw data_error("atomic number " + std::to_string(e.z) + " outside [1, 103]");
        ids.push_back(e.z - 1);
        fraction_encoding<T>(e.fraction, config_.dim, frac.row(row).data());
        ++row;
      }
      lengths.push_back(static_cast<int>(c->entries.size()));
    }
    seg = nn::Segments::from_lengths(lengths);
    nn::Var table = g.param(*element_table_);
    return nn::add(g, nn::gather_rows(g, table, std::move(ids)), fraction_proj_(g, g.constant(std::move(frac))));
  }

  /// Padded single-composition view of the element tokens.
  EdmTokens<T> embed_edm(const Composition& comp) const {
    nn::Graph<T> g(false);
    const Composition* one = &comp;
    nn::Segments seg;
    nn::Var tok = element_tokens(g, std::span<const Composition* const>(&one, 1), seg);
    EdmTokens<T> out;
    out.tokens = nn::Matrix<T>::Zero(kMaxElements, config_.dim);
    out.mask.assign(kMaxElements, 0);
    const auto n = g.value(tok).rows();
    out.tokens.topRows(n) = g.value(tok);
    for (Eigen::Index i = 0; i < n; ++i) out.mask[static_cast<std::size_t>(i)] = 1;
    return out;
  }

  /// Prepends CLS and runs the encoder over packed element tokens.
  CompositionEmbedding<T> encode_tokens(nn::Graph<T>& g, nn::Var tokens, const nn::Segments& seg, double dropout) const {
    for (int b = 0; b < seg.count(); ++b)
      if (seg.length(b) == 0) throw data_error("composition has no unmasked tokens");
    CompositionEmbedding<T> out;
    out.segments = seg.with_prefix();
    nn::Var with_cls = nn::prepend_row(g, tokens, seg, g.param(*cls_));
    out.sequence = encoder_(g, with_cls, out.segments, dropout);
    out.cls = nn::select_rows(g, out.sequence, out.segments.first_rows());
    return out;
  }

  /// Encodes padded EDM tokens; masked rows are dropped before attention.
  CompositionEmbedding<T> encode_edm(nn::Graph<T>& g, const EdmTokens<T>& edm, double dropout = 0.0) const {
    std::vector<int> rows;
    for (std::size_t i = 0; i < edm.mask.size(); ++i)
      if (edm.mask[i]) rows.push_back(static_cast<int>(i));
    if (rows.empty()) throw data_error("encode_composition: all tokens are padding");
    nn::Var packed = nn::select_rows(g, g.constant(edm.tokens), rows);
    return encode_tokens(g, packed, nn::Segments::from_lengths({static_cast<int>(rows.size())}), dropout);
  }

  CompositionEmbedding<T> encode(nn::Graph<T>& g, std::span<const Composition* const> comps, double dropout) const {
    nn::Segments seg;
    nn::Var tok = element_tokens(g, comps, seg);
    return encode_tokens(g, tok, seg, dropout);
  }

 private:
  nn::StackConfig config_;
  nn::Parameter<T>* element_table_ = nullptr;
  nn::Linear<T> fraction_proj_;
  nn::Parameter<T>* cls_ = nullptr;
  nn::EncoderStack<T> encoder_;
};

}  // namespace xact
