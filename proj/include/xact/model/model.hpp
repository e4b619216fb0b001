#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <map>
#include <memory>
#include <span>
#include <vector>

#include "xact/data/types.hpp"
#include "xact/model/composition_encoder.hpp"
#include "xact/model/config.hpp"
#include "xact/model/fusion.hpp"
#include "xact/model/xrd_encoder.hpp"

namespace xact {

/// Train-split mean/std used to standardise a regression target.
struct Standardizer {
  double mean = 0.0;
  double std = 1.0;

  double forward(double y) const { return (y - mean) / std; }
  double inverse(double z) const { return z * std + mean; }
  friend bool operator==(const Standardizer&, const Standardizer&) = default;
};

inline constexpr double kInitialTemperature = 0.07;
inline constexpr double kMinTemperature = 0.01;
inline constexpr double kMaxTemperature = 1.0;

/// Everything the forward pass produced for one batch.
template <class T>
struct Encoded {
  std::optional<CompositionEmbedding<T>> composition;
  std::optional<XrdEmbedding<T>> xrd;
  std::optional<FusedEmbedding<T>> fused;
  nn::Var representation;  // the vector prediction heads read
  int batch = 0;
};

/// Composition encoder, XRD encoder, cross-attention fusion and prediction heads.
/// Unimodal configurations keep only the relevant encoder and read its CLS.
inline constexpr double kMxmHeadInitScale = 0.02;
inline constexpr double kMxmHeadInitBias = 0.02;

template <class T>
class Model {
 public:
  Model(const ModelConfig& config, Rng& init) : config_(config) {
    if (config.uses_composition()) comp_.emplace(params_, config.composition, init);
    if (config.uses_xrd()) xrd_.emplace(params_, config.xrd, config.mask_mode, init);
    if (config.modality == Modality::bimodal) {
      fusion_.emplace(params_, config.fusion, config.xrd.dim, config.composition.dim, init);
      mxm_head_ = nn::Linear<T>::create(params_, "mxm.head", config.fusion.dim, XrdGrid::token_width, init);
      // Targets are sparse in [0, 1]; a full-scale init drives every ReLU unit negative within one epoch.
      mxm_head_.weight->value *= static_cast<T>(kMxmHeadInitScale);
      mxm_head_.bias->value.setConstant(static_cast<T>(kMxmHeadInitBias));
      nn::Matrix<T> lt(1, 1);
      lt(0, 0) = static_cast<T>(std::log(kInitialTemperature));
      log_tau_ = &params_.add("contrastive.log_tau", std::move(lt), false);
    }
    for (Task t : kAllTasks)
      heads_[t] = nn::Linear<T>::create(params_, "head." + std::string(task_name(t)), config.representation_dim(),
                                        class_count(t), init);
  }

  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  const ModelConfig& config() const { return config_; }
  nn::ParameterStore<T>& params() { return params_; }
  const nn::ParameterStore<T>& params() const { return params_; }

  const CompositionEncoder<T>& composition_encoder() const { return *comp_; }
  const XrdEncoder<T>& xrd_encoder() const { return *xrd_; }
  const FusionModule<T>& fusion() const { return *fusion_; }
  bool has_fusion() const { return fusion_.has_value(); }

  nn::Parameter<T>& log_tau() const {
    if (!log_tau_) throw mismatch_error("contrastive temperature requires a bimodal model");
    return *log_tau_;
  }
  void clamp_temperature() {
    if (log_tau_)
      log_tau_->value(0, 0) = std::clamp(log_tau_->value(0, 0), static_cast<T>(std::log(kMinTemperature)),
                                         static_cast<T>(std::log(kMaxTemperature)));
  }

  const nn::Linear<T>& mxm_head() const {
    if (!fusion_) throw mismatch_error("MXM requires a bimodal model");
    return mxm_head_;
  }

  /// Forward pass through the encoders (and fusion when bimodal).
  /// `xrd_mask` flags (B*17) token rows to hide for masked modelling.
  Encoded<T> encode(nn::Graph<T>& g, std::span<const MaterialRecord* const> batch,
                    const std::vector<std::uint8_t>* xrd_mask = nullptr) const {
    if (batch.empty()) throw usage_error("encode: empty batch");
    const double p = g.training() ? config_.dropout : 0.0;
    Encoded<T> out;
    out.batch = static_cast<int>(batch.size());
    if (comp_) {
      std::vector<const Composition*> comps;
      for (const auto* r : batch) comps.push_back(&r->composition);
      out.composition = comp_->encode(g, comps, p);
    }
    if (xrd_) {
      std::vector<const XrdVector*> traces;
      for (const auto* r : batch) traces.push_back(&r->dense());
      out.xrd = xrd_->encode(g, g.constant(xrd_token_matrix<T>(traces)), xrd_mask, p);
    }
    if (fusion_) {
      out.fused = fusion_->fuse(g, *out.composition, *out.xrd, p);
      out.representation = out.fused->cls;
    } else if (comp_) {
      out.representation = out.composition->cls;
    } else {
      out.representation = out.xrd->cls;
    }
    return out;
  }

  /// Task head applied to representation rows: B x 1 (regression) or B x classes.
  nn::Var head(nn::Graph<T>& g, Task task, nn::Var rows) const { return heads_.at(task)(g, rows); }
  const nn::Linear<T>& head_layer(Task task) const { return heads_.at(task); }

  /// Adds (or returns) a fresh linear head "probe.<task>" for transfer probing.
  const nn::Linear<T>& add_probe_head(Task task, Rng& rng) {
    auto it = probes_.find(task);
    if (it != probes_.end()) return it->second;
    auto head = nn::Linear<T>::create(params_, "probe." + std::string(task_name(task)), config_.representation_dim(),
                                      class_count(task), rng);
    return probes_.emplace(task, head).first->second;
  }
  const nn::Linear<T>* probe_head(Task task) const {
    auto it = probes_.find(task);
    return it == probes_.end() ? nullptr : &it->second;
  }

  std::map<Task, Standardizer>& standardizers() { return standardizers_; }
  const std::map<Task, Standardizer>& standardizers() const { return standardizers_; }
  Standardizer standardizer(Task t) const {
    auto it = standardizers_.find(t);
    return it == standardizers_.end() ? Standardizer{} : it->second;
  }

 private:
  ModelConfig config_;
  nn::ParameterStore<T> params_;
  std::optional<CompositionEncoder<T>> comp_;
  std::optional<XrdEncoder<T>> xrd_;
  std::optional<FusionModule<T>> fusion_;
  nn::Linear<T> mxm_head_;
  nn::Parameter<T>* log_tau_ = nullptr;
  std::map<Task, nn::Linear<T>> heads_;
  std::map<Task, nn::Linear<T>> probes_;
  std::map<Task, Standardizer> standardizers_;
};

}  // namespace xact
