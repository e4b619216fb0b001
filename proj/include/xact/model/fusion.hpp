#pragma once

#include <vector>

#include "xact/model/composition_encoder.hpp"
#include "xact/model/xrd_encoder.hpp"
#include "xact/nn/layers.hpp"

namespace xact {

template <class T>
struct FusedEmbedding {
  nn::Var sequence;  // B*18 x dim, f_cls at row 0 of each block
  nn::Segments segments;
  nn::Var cls;     // B x dim
  nn::Var tokens;  // B*17 x dim, f_1..f_17
};

/// Cross-attention decoder: XRD embeddings are the queries, the composition
/// sequence (CLS included) is the key/value memory.
template <class T>
class FusionModule {
 public:
  FusionModule() = default;
  FusionModule(nn::ParameterStore<T>& store, const nn::StackConfig& cfg, int xrd_dim, int comp_dim, Rng& rng)
      : config_(cfg) {
    query_proj_ = nn::Linear<T>::create(store, "fuse.query_proj", xrd_dim, cfg.dim, rng);
    memory_proj_ = nn::Linear<T>::create(store, "fuse.memory_proj", comp_dim, cfg.dim, rng);
    decoder_ = nn::DecoderStack<T>::create(store, "fuse.decoder", cfg, rng);
  }

  const nn::StackConfig& config() const { return config_; }

  FusedEmbedding<T> fuse(nn::Graph<T>& g, const CompositionEmbedding<T>& comp, const XrdEmbedding<T>& xrd,
                         double dropout) const {
    if (comp.segments.count() != xrd.segments.count()) throw usage_error("fuse: batch size mismatch");
    for (int b = 0; b < comp.segments.count(); ++b)
      if (comp.segments.length(b) == 0) throw data_error("fuse: composition memory is empty");
    nn::Var q = query_proj_(g, xrd.sequence);
    nn::Var m = memory_proj_(g, comp.sequence);
    FusedEmbedding<T> out;
    out.segments = xrd.segments;
    out.sequence = decoder_(g, q, xrd.segments, m, comp.segments, dropout);
    out.cls = nn::select_rows(g, out.sequence, out.segments.first_rows());
    std::vector<int> token_rows;
    for (int b = 0; b < out.segments.count(); ++b)
      for (int i = out.segments.begin(b) + 1; i < out.segments.end(b); ++i) token_rows.push_back(i);
    out.tokens = nn::select_rows(g, out.sequence, std::move(token_rows));
    return out;
  }

 private:
  nn::StackConfig config_;
  nn::Linear<T> query_proj_;
  nn::Linear<T> memory_proj_;
  nn::DecoderStack<T> decoder_;
};

}  // namespace xact
