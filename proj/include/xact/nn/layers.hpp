#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "xact/nn/attention.hpp"
#include "xact/nn/ops.hpp"

namespace xact::nn {

/// Shape of a transformer stack.
struct StackConfig {
  int layers = 1;
  int dim = 32;
  int heads = 2;
  int ffn_dim = 64;

  friend bool operator==(const StackConfig&, const StackConfig&) = default;
};

template <class T>
Matrix<T> uniform_init(Eigen::Index rows, Eigen::Index cols, double bound, Rng& rng) {
  std::uniform_real_distribution<double> u(-bound, bound);
  Matrix<T> m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(u(rng));
  return m;
}

template <class T>
Matrix<T> normal_init(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng) {
  std::normal_distribution<double> n(0.0, stddev);
  Matrix<T> m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(n(rng));
  return m;
}

template <class T>
struct Linear {
  Parameter<T>* weight = nullptr;  // in x out
  Parameter<T>* bias = nullptr;    // 1 x out

  static Linear create(ParameterStore<T>& store, const std::string& name, int in, int out, Rng& rng) {
    Linear l;
    l.weight = &store.add(name + ".weight", uniform_init<T>(in, out, 1.0 / std::sqrt(double(in)), rng));
    l.bias = &store.add(name + ".bias", Matrix<T>::Zero(1, out), false);
    return l;
  }
  Var operator()(Graph<T>& g, Var x) const { return linear(g, x, g.param(*weight), g.param(*bias)); }
  int in() const { return static_cast<int>(weight->value.rows()); }
  int out() const { return static_cast<int>(weight->value.cols()); }
};

template <class T>
struct LayerNorm {
  Parameter<T>* gamma = nullptr;
  Parameter<T>* beta = nullptr;

  static LayerNorm create(ParameterStore<T>& store, const std::string& name, int dim) {
    LayerNorm l;
    l.gamma = &store.add(name + ".gamma", Matrix<T>::Ones(1, dim), false);
    l.beta = &store.add(name + ".beta", Matrix<T>::Zero(1, dim), false);
    return l;
  }
  Var operator()(Graph<T>& g, Var x) const { return layer_norm(g, x, g.param(*gamma), g.param(*beta)); }
};

template <class T>
struct MultiHeadAttention {
  Linear<T> query, key, value, output;
  int heads = 1;

  static MultiHeadAttention create(ParameterStore<T>& store, const std::string& name, int dim, int heads,
                                   Rng& rng) {
    if (heads <= 0 || dim % heads != 0)
      throw mismatch_error(name + ": dim " + std::to_string(dim) + " not divisible by " +
                           std::to_string(heads) + " heads");
    MultiHeadAttention m;
    m.query = Linear<T>::create(store, name + ".query", dim, dim, rng);
    m.key = Linear<T>::create(store, name + ".key", dim, dim, rng);
    m.value = Linear<T>::create(store, name + ".value", dim, dim, rng);
    m.output = Linear<T>::create(store, name + ".output", dim, dim, rng);
    m.heads = heads;
    return m;
  }

  Var operator()(Graph<T>& g, Var xq, const Segments& qs, Var xkv, const Segments& ks, double dropout_p) const {
    Var q = query(g, xq);
    Var k = key(g, xkv);
    Var v = value(g, xkv);
    return output(g, attention(g, q, k, v, qs, ks, heads, dropout_p));
  }
};

/// Linear -> ReLU -> dropout -> Linear.
template <class T>
struct FeedForward {
  Linear<T> up, down;

  static FeedForward create(ParameterStore<T>& store, const std::string& name, int dim, int hidden, Rng& rng) {
    return {Linear<T>::create(store, name + ".up", dim, hidden, rng),
            Linear<T>::create(store, name + ".down", hidden, dim, rng)};
  }
  Var operator()(Graph<T>& g, Var x, double dropout_p) const {
    return down(g, dropout(g, relu(g, up(g, x)), dropout_p));
  }
};

/// Pre-norm self-attention layer: x + SA(LN(x)), then h + FFN(LN(h)).
template <class T>
struct EncoderLayer {
  LayerNorm<T> norm1, norm2;
  MultiHeadAttention<T> self_attn;
  FeedForward<T> ffn;

  static EncoderLayer create(ParameterStore<T>& store, const std::string& name, const StackConfig& c, Rng& rng) {
    EncoderLayer l;
    l.norm1 = LayerNorm<T>::create(store, name + ".norm1", c.dim);
    l.self_attn = MultiHeadAttention<T>::create(store, name + ".self_attn", c.dim, c.heads, rng);
    l.norm2 = LayerNorm<T>::create(store, name + ".norm2", c.dim);
    l.ffn = FeedForward<T>::create(store, name + ".ffn", c.dim, c.ffn_dim, rng);
    return l;
  }

  Var operator()(Graph<T>& g, Var x, const Segments& seg, double dropout_p) const {
    Var n1 = norm1(g, x);
    Var h = add(g, x, self_attn(g, n1, seg, n1, seg, dropout_p));
    return add(g, h, ffn(g, norm2(g, h), dropout_p));
  }
};

template <class T>
struct EncoderStack {
  std::vector<EncoderLayer<T>> layers;
  LayerNorm<T> final_norm;
  StackConfig config;

  static EncoderStack create(ParameterStore<T>& store, const std::string& name, const StackConfig& c, Rng& rng) {
    if (c.layers < 1 || c.dim < 1 || c.ffn_dim < 1) throw mismatch_error(name + ": invalid stack shape");
    EncoderStack s;
    s.config = c;
    for (int i = 0; i < c.layers; ++i)
      s.layers.push_back(EncoderLayer<T>::create(store, name + ".layer" + std::to_string(i), c, rng));
    s.final_norm = LayerNorm<T>::create(store, name + ".final_norm", c.dim);
    return s;
  }

  /// Output has the input's shape.
  Var operator()(Graph<T>& g, Var x, const Segments& seg, double dropout_p) const {
    if (g.value(x).cols() != config.dim) throw usage_error("encoder: input width does not match dim");
    if (seg.total() != g.value(x).rows()) throw usage_error("encoder: segments do not cover input");
    for (const auto& layer : layers) x = layer(g, x, seg, dropout_p);
    return final_norm(g, x);
  }
};

/// Pre-norm decoder layer: self-attention over queries, cross-attention into memory, FFN.
template <class T>
struct DecoderLayer {
  LayerNorm<T> norm1, norm2, norm3;
  MultiHeadAttention<T> self_attn, cross_attn;
  FeedForward<T> ffn;

  static DecoderLayer create(ParameterStore<T>& store, const std::string& name, const StackConfig& c, Rng& rng) {
    DecoderLayer l;
    l.norm1 = LayerNorm<T>::create(store, name + ".norm1", c.dim);
    l.self_attn = MultiHeadAttention<T>::create(store, name + ".self_attn", c.dim, c.heads, rng);
    l.norm2 = LayerNorm<T>::create(store, name + ".norm2", c.dim);
    l.cross_attn = MultiHeadAttention<T>::create(store, name + ".cross_attn", c.dim, c.heads, rng);
    l.norm3 = LayerNorm<T>::create(store, name + ".norm3", c.dim);
    l.ffn = FeedForward<T>::create(store, name + ".ffn", c.dim, c.ffn_dim, rng);
    return l;
  }

  Var operator()(Graph<T>& g, Var x, const Segments& qs, Var memory, const Segments& ms, double dropout_p) const {
    Var n1 = norm1(g, x);
    Var h = add(g, x, self_attn(g, n1, qs, n1, qs, dropout_p));
    h = add(g, h, cross_attn(g, norm2(g, h), qs, memory, ms, dropout_p));
    return add(g, h, ffn(g, norm3(g, h), dropout_p));
  }
};

template <class T>
struct DecoderStack {
  std::vector<DecoderLayer<T>> layers;
  LayerNorm<T> final_norm;
  StackConfig config;

  static DecoderStack create(ParameterStore<T>& store, const std::string& name, const StackConfig& c, Rng& rng) {
    if (c.layers < 1 || c.dim < 1 || c.ffn_dim < 1) throw mismatch_error(name + ": invalid stack shape");
    DecoderStack s;
    s.config = c;
    for (int i = 0; i < c.layers; ++i)
      s.layers.push_back(DecoderLayer<T>::create(store, name + ".layer" + std::to_string(i), c, rng));
    s.final_norm = LayerNorm<T>::create(store, name + ".final_norm", c.dim);
    return s;
  }

  /// Output length equals the query length.
  Var operator()(Graph<T>& g, Var queries, const Segments& qs, Var memory, const Segments& ms,
                 double dropout_p) const {
    if (g.value(queries).cols() != config.dim || g.value(memory).cols() != config.dim)
      throw usage_error("decoder: query/memory width does not match dim");
    for (const auto& layer : layers) queries = layer(g, queries, qs, memory, ms, dropout_p);
    return final_norm(g, queries);
  }
};

}  // namespace xact::nn
