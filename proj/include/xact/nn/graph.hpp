#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "xact/error.hpp"
#include "xact/train/rng.hpp"

namespace xact::nn {

template <class T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class T>
struct Parameter {
  std::string name;
  Matrix<T> value;
  Matrix<T> grad;  // empty until a backward pass reaches this parameter
  bool frozen = false;
  bool decay = true;  // decoupled weight decay applies

  Matrix<T>& ensure_grad() {
    if (grad.rows() != value.rows() || grad.cols() != value.cols())
      grad = Matrix<T>::Zero(value.rows(), value.cols());
    return grad;
  }
  void zero_grad() {
    grad.resize(0, 0);
  }
};

/// Owns parameters with stable addresses, in registration order.
template <class T>
class ParameterStore {
 public:
  ParameterStore() = default;
  ParameterStore(const ParameterStore&) = delete;
  ParameterStore& operator=(const ParameterStore&) = delete;

  Parameter<T>& add(const std::string& name, Matrix<T> init, bool decay = true) {
    if (index_.count(name)) throw mismatch_error("duplicate parameter '" + name + "'");
    auto p = std::make_unique<Parameter<T>>();
    p->name = name;
    p->value = std::move(init);
    p->decay = decay;
    index_[name] = p.get();
    params_.push_back(std::move(p));
    return *params_.back();
  }

  Parameter<T>* find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : it->second;
  }
  Parameter<T>& at(const std::string& name) const {
    if (auto* p = find(name)) return *p;
    throw mismatch_error("no parameter named '" + name + "'");
  }

  std::size_t size() const { return params_.size(); }
  Parameter<T>& operator[](std::size_t i) { return *params_[i]; }
  const Parameter<T>& operator[](std::size_t i) const { return *params_[i]; }

  std::size_t scalar_count(const std::string& prefix = "") const {
    std::size_t n = 0;
    for (const auto& p : params_)
      if (p->name.rfind(prefix, 0) == 0) n += static_cast<std::size_t>(p->value.size());
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) p->zero_grad();
  }

  /// Freezes every parameter whose name starts with `prefix`; returns how many matched.
  std::size_t set_frozen(const std::string& prefix, bool frozen) {
    std::size_t n = 0;
    for (auto& p : params_)
      if (p->name.rfind(prefix, 0) == 0) {
        p->frozen = frozen;
        ++n;
      }
    return n;
  }

  template <class F>
  void for_each(F&& f) {
    for (auto& p : params_) f(*p);
  }
  template <class F>
  void for_each(F&& f) const {
    for (const auto& p : params_) f(static_cast<const Parameter<T>&>(*p));
  }

 private:
  std::vector<std::unique_ptr<Parameter<T>>> params_;
  std::map<std::string, Parameter<T>*> index_;
};

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

/// Reverse-mode tape over 2-D row-major matrices. Nodes are appended in
/// evaluation order, so reverse creation order is a valid backward order.
template <class T>
class Graph {
 public:
  explicit Graph(bool training = false, Rng* dropout_rng = nullptr)
      : training_(training), rng_(dropout_rng) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool training() const { return training_; }

  /// With gradients disabled every parameter enters as a constant (inference).
  void set_grad_enabled(bool on) { grad_enabled_ = on; }
  Rng& dropout_rng() {
    if (!rng_) throw usage_error("graph in training mode needs a dropout rng");
    return *rng_;
  }

  /// Piecewise-linear ops fold the sign pattern of their inputs into a hash
  /// while tracking is on, so callers can tell when a perturbation crossed a kink.
  void track_kinks(bool on) { track_kinks_ = on; }
  bool tracking_kinks() const { return track_kinks_; }
  void mix_kink_bits(std::uint64_t bits) {
    std::uint64_t z = kink_signature_ ^ (bits + 0x9e3779b97f4a7c15ULL + (kink_signature_ << 6) + (kink_signature_ >> 2));
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    kink_signature_ = z ^ (z >> 31);
  }
  std::uint64_t kink_signature() const { return kink_signature_; }

  Var constant(Matrix<T> value) { return push(std::move(value), false, nullptr); }

  /// Frozen parameters enter as constants and never receive gradient.
  Var param(Parameter<T>& p) {
    Node n;
    n.external = &p.value;
    n.needs_grad = !p.frozen && grad_enabled_;
    n.param = n.needs_grad ? &p : nullptr;
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  /// `backward(self)` reads grad(self) and accumulates into its inputs.
  Var make(Matrix<T> value, bool needs_grad, std::function<void(Var)> backward) {
    return push(std::move(value), needs_grad, needs_grad ? std::move(backward) : nullptr);
  }

  const Matrix<T>& value(Var v) const {
    const Node& n = nodes_.at(static_cast<std::size_t>(v.id));
    return n.external ? *n.external : n.value;
  }
  T scalar(Var v) const { return value(v)(0, 0); }
  bool needs_grad(Var v) const { return nodes_.at(static_cast<std::size_t>(v.id)).needs_grad; }

  /// Gradient accumulator of v, zero-initialised on first access.
  Matrix<T>& grad(Var v) {
    Node& n = nodes_.at(static_cast<std::size_t>(v.id));
    if (n.param) return n.param->ensure_grad();
    if (!n.has_grad) {
      const auto& val = n.external ? *n.external : n.value;
      n.grad = Matrix<T>::Zero(val.rows(), val.cols());
      n.has_grad = true;
    }
    return n.grad;
  }
  bool has_grad(Var v) const {
    const Node& n = nodes_.at(static_cast<std::size_t>(v.id));
    return n.param ? n.param->grad.size() > 0 : n.has_grad;
  }

  /// Seeds d(loss)/d(loss) = 1 and propagates to every parameter that needs it.
  void backward(Var loss) {
    if (value(loss).size() != 1) throw usage_error("backward: loss must be a scalar");
    grad(loss)(0, 0) += T(1);
    for (int i = loss.id; i >= 0; --i) {
      Node& n = nodes_[static_cast<std::size_t>(i)];
      if (n.backward && n.has_grad) n.backward(Var{i});
    }
  }

  std::size_t size() const { return nodes_.size(); }

  // Attention probability capture for inspection.
  bool capture_attention = false;
  std::vector<std::vector<Matrix<T>>> attention_probs;  // per call: one Lq x Lk matrix per (segment, head)

 private:
  struct Node {
    Matrix<T> value;
    Matrix<T> grad;
    const Matrix<T>* external = nullptr;
    Parameter<T>* param = nullptr;
    bool needs_grad = false;
    bool has_grad = false;
    std::function<void(Var)> backward;
  };

  Var push(Matrix<T> value, bool needs_grad, std::function<void(Var)> backward) {
    Node n;
    n.value = std::move(value);
    n.needs_grad = needs_grad;
    n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  bool training_;
  bool grad_enabled_ = true;
  bool track_kinks_ = false;
  std::uint64_t kink_signature_ = 0;
  Rng* rng_;
  std::deque<Node> nodes_;
};

/// Row ranges of packed variable-length sequences: sequence b is rows [offsets[b], offsets[b+1]).
struct Segments {
  std::vector<int> offsets{0};

  static Segments uniform(int count, int length) {
    Segments s;
    for (int b = 0; b < count; ++b) s.offsets.push_back(s.offsets.back() + length);
    return s;
  }
  static Segments from_lengths(const std::vector<int>& lengths) {
    Segments s;
    for (int l : lengths) s.offsets.push_back(s.offsets.back() + l);
    return s;
  }
  int count() const { return static_cast<int>(offsets.size()) - 1; }
  int begin(int b) const { return offsets[static_cast<std::size_t>(b)]; }
  int end(int b) const { return offsets[static_cast<std::size_t>(b) + 1]; }
  int length(int b) const { return end(b) - begin(b); }
  int total() const { return offsets.back(); }

  /// Same sequences with one extra leading row each.
  Segments with_prefix() const {
    Segments s;
    for (int b = 0; b < count(); ++b) s.offsets.push_back(s.offsets.back() + length(b) + 1);
    return s;
  }
  std::vector<int> first_rows() const {
    std::vector<int> r;
    for (int b = 0; b < count(); ++b) r.push_back(begin(b));
    return r;
  }
};

}  // namespace xact::nn
