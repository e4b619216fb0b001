#pragma once

#include <string>

#include <json.hpp>

#include "xact/nn/layers.hpp"

namespace xact {

enum class Modality { bimodal, composition, xrd };
// Where the MXM [MASK] substitution happens: after the 250 -> d input
// projection (learned d-dim embedding) or on the raw 250-dim token.
enum class MaskMode { embedding, input };

struct ModelConfig {
  Modality modality = Modality::bimodal;
  nn::StackConfig composition{3, 512, 8, 2048};
  nn::StackConfig xrd{3, 512, 4, 1024};
  nn::StackConfig fusion{12, 768, 12, 2048};
  double dropout = 0.1;
  MaskMode mask_mode = MaskMode::embedding;

  static ModelConfig full() { return ModelConfig{}; }

  /// Desk-scale shape used by tests and the acceptance suite.
  static ModelConfig tiny(Modality m = Modality::bimodal) {
    ModelConfig c;
    c.modality = m;
    c.composition = {1, 32, 2, 64};
    c.xrd = {2, 32, 2, 64};
    c.fusion = {1, 32, 2, 64};
    c.dropout = 0.0;
    return c;
  }

  bool uses_composition() const { return modality != Modality::xrd; }
  bool uses_xrd() const { return modality != Modality::composition; }

  int representation_dim() const {
    switch (modality) {
      case Modality::bimodal: return fusion.dim;
      case Modality::composition: return composition.dim;
      case Modality::xrd: return xrd.dim;
    }
    return 0;
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

inline std::string modality_name(Modality m) {
  switch (m) {
    case Modality::bimodal: return "bimodal";
    case Modality::composition: return "composition";
    case Modality::xrd: return "xrd";
  }
  return "?";
}

inline Modality parse_modality(const std::string& s) {
  if (s == "bimodal") return Modality::bimodal;
  if (s == "composition") return Modality::composition;
  if (s == "xrd") return Modality::xrd;
  throw usage_error("unknown modality '" + s + "'");
}

namespace detail {
inline void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> keys, const std::string& where) {
  if (!j.is_object()) throw usage_error(where + ": expected an object");
  for (const auto& [k, _] : j.items()) {
    bool known = false;
    for (const char* key : keys) known = known || k == key;
    if (!known) throw usage_error(where + ": unknown key '" + k + "'");
  }
}
inline const nlohmann::json& require(const nlohmann::json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw usage_error(where + ": missing required key '" + key + "'");
  return j.at(key);
}
}  // namespace detail

inline nlohmann::json stack_to_json(const nn::StackConfig& s) {
  return {{"layers", s.layers}, {"dim", s.dim}, {"heads", s.heads}, {"ffn_dim", s.ffn_dim}};
}

inline nn::StackConfig stack_from_json(const nlohmann::json& j, const std::string& where) {
  detail::reject_unknown(j, {"layers", "dim", "heads", "ffn_dim"}, where);
  nn::StackConfig s;
  try {
    s.layers = detail::require(j, "layers", where).get<int>();
    s.dim = detail::require(j, "dim", where).get<int>();
    s.heads = detail::require(j, "heads", where).get<int>();
    s.ffn_dim = detail::require(j, "ffn_dim", where).get<int>();
  } catch (const nlohmann::json::type_error& e) {
    throw usage_error(where + ": " + e.what());
  }
  if (s.layers < 1 || s.dim < 1 || s.heads < 1 || s.ffn_dim < 1 || s.dim % s.heads != 0)
    throw usage_error(where + ": layers/dim/heads/ffn_dim must be positive and dim divisible by heads");
  return s;
}

inline nlohmann::json model_config_to_json(const ModelConfig& c) {
  return {{"modality", modality_name(c.modality)},
          {"composition", stack_to_json(c.composition)},
          {"xrd", stack_to_json(c.xrd)},
          {"fusion", stack_to_json(c.fusion)},
          {"dropout", c.dropout},
          {"mask_mode", c.mask_mode == MaskMode::embedding ? "embedding" : "input"}};
}

/// Strict: every dimension must be spelled out; unknown keys are errors.
inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  const std::string where = "model";
  detail::reject_unknown(j, {"modality", "composition", "xrd", "fusion", "dropout", "mask_mode"}, where);
  ModelConfig c;
  try {
    c.modality = parse_modality(detail::require(j, "modality", where).get<std::string>());
    c.composition = stack_from_json(detail::require(j, "composition", where), "model.composition");
    c.xrd = stack_from_json(detail::require(j, "xrd", where), "model.xrd");
    c.fusion = stack_from_json(detail::require(j, "fusion", where), "model.fusion");
    c.dropout = detail::require(j, "dropout", where).get<double>();
    const auto mode = j.value("mask_mode", std::string("embedding"));
    if (mode == "embedding")
      c.mask_mode = MaskMode::embedding;
    else if (mode == "input")
      c.mask_mode = MaskMode::input;
    else
      throw usage_error("model.mask_mode must be 'embedding' or 'input'");
  } catch (const nlohmann::json::type_error& e) {
    throw usage_error(where + ": " + e.what());
  }
  if (!(c.dropout >= 0.0 && c.dropout < 1.0)) throw usage_error("model.dropout must lie in [0, 1)");
  return c;
}

}  // namespace xact
