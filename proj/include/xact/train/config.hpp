#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "xact/model/config.hpp"
#include "xact/nn/optim.hpp"
#include "xact/objectives/supervised.hpp"

namespace xact {

enum class PretrainObjective { none, contrastive, mxm, both };

inline std::string objective_name(PretrainObjective o) {
  switch (o) {
    case PretrainObjective::none: return "none";
    case PretrainObjective::contrastive: return "contrastive";
    case PretrainObjective::mxm: return "mxm";
    case PretrainObjective::both: return "both";
  }
  return "?";
}

inline PretrainObjective parse_objective(const std::string& s) {
  for (auto o : {PretrainObjective::none, PretrainObjective::contrastive, PretrainObjective::mxm, PretrainObjective::both})
    if (objective_name(o) == s) return o;
  throw usage_error("unknown pretrain objective '" + s + "' (expected none, contrastive, mxm or both)");
}

/// Parameter-name prefix for a freezable module name.
inline std::string module_prefix(const std::string& module) {
  if (module == "composition") return "comp.";
  if (module == "xrd") return "xrd.";
  if (module == "fusion") return "fuse.";
  if (module == "heads") return "head.";
  if (module == "mxm") return "mxm.";
  if (module == "contrastive") return "contrastive.";
  throw usage_error("unknown module '" + module + "' (expected composition, xrd, fusion, heads, mxm or contrastive)");
}

struct TrainConfig {
  int batch_size = 256;
  int epochs = 30;
  nn::LrSchedule schedule;  // total_steps is derived from the dataset at run time
  std::uint64_t seed = 0;
  std::vector<Task> tasks;
  PretrainObjective objective = PretrainObjective::none;
  std::vector<std::string> freeze;
  nn::AdamWConfig optim;
  double mask_rate = 0.05;
  PretrainWeights weights;
  std::vector<double> checkpoint_fractions{0.05, 0.15, 0.25};
  bool eval_at_start = true;
  long max_steps = 0;  // stop after this many steps without changing the schedule; 0 runs to the end
  int eval_batch = 512;
  bool reconstruct_masked_only = true;

  /// Weights implied by the objective (a disabled term gets weight zero).
  PretrainWeights effective_weights() const {
    PretrainWeights w = weights;
    if (objective == PretrainObjective::contrastive) w.mxm = 0.0;
    if (objective == PretrainObjective::mxm) w.contrastive = 0.0;
    return w;
  }

  void validate() const {
    if (batch_size < 1) throw usage_error("train.batch_size must be positive");
    if (epochs < 1) throw usage_error("train.epochs must be positive");
    if (!(mask_rate > 0.0 && mask_rate <= 1.0)) throw usage_error("train.mask_rate must lie in (0, 1]");
    if (eval_batch < 1) throw usage_error("train.eval_batch must be positive");
    if (max_steps < 0) throw usage_error("train.max_steps must be non-negative");
    for (double f : checkpoint_fractions)
      if (!(f > 0.0 && f <= 1.0)) throw usage_error("train.checkpoint_fractions must lie in (0, 1]");
    for (const auto& m : freeze) module_prefix(m);
    nn::LrSchedule s = schedule;
    s.total_steps = 1;
    s.validate();
    if (objective != PretrainObjective::none) effective_weights().validate();
  }
};

inline nlohmann::json train_config_to_json(const TrainConfig& c) {
  nlohmann::json tasks = nlohmann::json::array();
  for (Task t : c.tasks) tasks.push_back(std::string(task_name(t)));
  return {{"batch_size", c.batch_size},
          {"epochs", c.epochs},
          {"schedule",
           {{"lr_init", c.schedule.lr_init},
            {"lr_peak", c.schedule.lr_peak},
            {"lr_final", c.schedule.lr_final},
            {"warmup_frac", c.schedule.warmup_frac}}},
          {"seed", c.seed},
          {"tasks", tasks},
          {"pretrain_objective", objective_name(c.objective)},
          {"freeze", c.freeze},
          {"optimizer",
           {{"beta1", c.optim.beta1},
            {"beta2", c.optim.beta2},
            {"weight_decay", c.optim.weight_decay},
            {"eps", c.optim.eps},
            {"grad_clip", c.optim.grad_clip}}},
          {"mask_rate", c.mask_rate},
          {"loss_weights", {{"contrastive", c.weights.contrastive}, {"mxm", c.weights.mxm}}},
          {"checkpoint_fractions", c.checkpoint_fractions},
          {"eval_at_start", c.eval_at_start},
          {"max_steps", c.max_steps},
          {"eval_batch", c.eval_batch},
          {"reconstruct_masked_only", c.reconstruct_masked_only}};
}

/// Missing keys keep their defaults; unknown keys are errors.
inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  using detail::reject_unknown;
  reject_unknown(j,
                 {"batch_size", "epochs", "schedule", "seed", "tasks", "pretrain_objective", "freeze", "optimizer",
                  "mask_rate", "loss_weights", "checkpoint_fractions", "eval_at_start", "max_steps", "eval_batch",
                  "reconstruct_masked_only"},
                 "train");
  TrainConfig c;
  try {
    c.batch_size = j.value("batch_size", c.batch_size);
    c.epochs = j.value("epochs", c.epochs);
    if (j.contains("schedule")) {
      const auto& s = j["schedule"];
      reject_unknown(s, {"lr_init", "lr_peak", "lr_final", "warmup_frac"}, "train.schedule");
      c.schedule.lr_init = s.value("lr_init", c.schedule.lr_init);
      c.schedule.lr_peak = s.value("lr_peak", c.schedule.lr_peak);
      c.schedule.lr_final = s.value("lr_final", c.schedule.lr_final);
      c.schedule.warmup_frac = s.value("warmup_frac", c.schedule.warmup_frac);
    }
    c.seed = j.value("seed", c.seed);
    if (j.contains("tasks"))
      for (const auto& t : j["tasks"]) c.tasks.push_back(parse_task(t.get<std::string>()));
    c.objective = parse_objective(j.value("pretrain_objective", std::string("none")));
    if (j.contains("freeze")) c.freeze = j["freeze"].get<std::vector<std::string>>();
    if (j.contains("optimizer")) {
      const auto& o = j["optimizer"];
      reject_unknown(o, {"beta1", "beta2", "weight_decay", "eps", "grad_clip"}, "train.optimizer");
      c.optim.beta1 = o.value("beta1", c.optim.beta1);
      c.optim.beta2 = o.value("beta2", c.optim.beta2);
      c.optim.weight_decay = o.value("weight_decay", c.optim.weight_decay);
      c.optim.eps = o.value("eps", c.optim.eps);
      c.optim.grad_clip = o.value("grad_clip", c.optim.grad_clip);
    }
    c.mask_rate = j.value("mask_rate", c.mask_rate);
    if (j.contains("loss_weights")) {
      const auto& w = j["loss_weights"];
      reject_unknown(w, {"contrastive", "mxm"}, "train.loss_weights");
      c.weights.contrastive = w.value("contrastive", c.weights.contrastive);
      c.weights.mxm = w.value("mxm", c.weights.mxm);
    }
    if (j.contains("checkpoint_fractions")) c.checkpoint_fractions = j["checkpoint_fractions"].get<std::vector<double>>();
    c.eval_at_start = j.value("eval_at_start", c.eval_at_start);
    c.max_steps = j.value("max_steps", c.max_steps);
    c.eval_batch = j.value("eval_batch", c.eval_batch);
    c.reconstruct_masked_only = j.value("reconstruct_masked_only", c.reconstruct_masked_only);
  } catch (const nlohmann::json::exception& e) {
    throw usage_error(std::string("train: ") + e.what());
  }
  c.validate();
  return c;
}

/// Where a run reads its records: a record file plus an optional split manifest.
struct DataPaths {
  std::string records;
  std::string split;  // empty: every record is used for training and evaluation
};

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  DataPaths data;
};

inline nlohmann::json run_config_to_json(const RunConfig& r) {
  return {{"model", model_config_to_json(r.model)},
          {"train", train_config_to_json(r.train)},
          {"data", {{"records", r.data.records}, {"split", r.data.split}}}};
}

/// Relative data paths are resolved against `base_dir`.
inline RunConfig run_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {}) {
  detail::reject_unknown(j, {"model", "train", "data"}, "config");
  RunConfig r;
  r.model = model_config_from_json(detail::require(j, "model", "config"));
  r.train = train_config_from_json(j.value("train", nlohmann::json::object()));
  const auto& d = detail::require(j, "data", "config");
  detail::reject_unknown(d, {"records", "split"}, "data");
  auto resolve = [&](const std::string& p) {
    if (p.empty()) return p;
    std::filesystem::path path(p);
    return (path.is_relative() && !base_dir.empty() ? base_dir / path : path).lexically_normal().string();
  };
  try {
    r.data.records = resolve(detail::require(d, "records", "data").get<std::string>());
    r.data.split = resolve(d.value("split", std::string()));
  } catch (const nlohmann::json::exception& e) {
    throw usage_error(std::string("data: ") + e.what());
  }
  return r;
}

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw usage_error("cannot open '" + path + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw usage_error("'" + path + "' is not valid JSON: " + e.what());
  }
}

inline RunConfig read_run_config(const std::string& path) {
  return run_config_from_json(read_json_file(path), std::filesystem::path(path).parent_path());
}

/// Stable hash of everything that shapes a training run.
inline std::string config_hash(const ModelConfig& m, const TrainConfig& t, const std::string& mode) {
  const nlohmann::json j{{"model", model_config_to_json(m)}, {"train", train_config_to_json(t)}, {"mode", mode}};
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(j.dump())));
  return buf;
}

}  // namespace xact
