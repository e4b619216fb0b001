#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "xact/eval/predict.hpp"
#include "xact/objectives/contrastive.hpp"
#include "xact/objectives/mxm.hpp"
#include "xact/objectives/supervised.hpp"
#include "xact/train/checkpoint.hpp"
#include "xact/train/config.hpp"
#include "xact/train/history.hpp"
#include "xact/train/sampler.hpp"

namespace xact {

enum class TrainMode { pretrain, supervised };

inline std::string mode_name(TrainMode m) { return m == TrainMode::pretrain ? "pretrain" : "supervised"; }

/// Per-step losses; terms that were not computed are NaN.
struct LossRow {
  long step = 0;
  int epoch = 0;
  double lr = 0.0;
  double contrastive = std::numeric_limits<double>::quiet_NaN();
  double mxm = std::numeric_limits<double>::quiet_NaN();
  double supervised = std::numeric_limits<double>::quiet_NaN();
  double total = 0.0;
};

inline std::string loss_csv(const std::vector<LossRow>& rows) {
  auto cell = [](double v) { return std::isnan(v) ? std::string() : format_double(v); };
  std::string out = "step,epoch,lr,contrastive,mxm,supervised,total\n";
  for (const auto& r : rows)
    out += std::to_string(r.step) + "," + std::to_string(r.epoch) + "," + format_double(r.lr) + "," + cell(r.contrastive) +
           "," + cell(r.mxm) + "," + cell(r.supervised) + "," + format_double(r.total) + "\n";
  return out;
}

inline Standardizer fit_standardizer(std::span<const MaterialRecord> records, Task task) {
  double s = 0.0, ss = 0.0;
  std::size_t n = 0;
  for (const auto& r : records)
    if (has_label(r.targets, task)) {
      const double y = regression_label(r.targets, task);
      s += y;
      ss += y * y;
      ++n;
    }
  if (n == 0) throw data_error("no record is labeled for " + std::string(task_name(task)));
  const double mean = s / static_cast<double>(n);
  const double var = std::max(0.0, ss / static_cast<double>(n) - mean * mean);
  const double sd = std::sqrt(var);
  return {mean, sd > 1e-12 ? sd : 1.0};
}

namespace detail {

inline nlohmann::json standardizers_json(const std::map<Task, Standardizer>& m) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [t, s] : m) j[std::string(task_name(t))] = {{"mean", s.mean}, {"std", s.std}};
  return j;
}

inline std::map<Task, Standardizer> standardizers_from_json(const nlohmann::json& j) {
  std::map<Task, Standardizer> m;
  for (const auto& [k, v] : j.items()) m[parse_task(k)] = {v.at("mean").get<double>(), v.at("std").get<double>()};
  return m;
}

inline nlohmann::json history_json(const History& h) {
  nlohmann::json a = nlohmann::json::array();
  for (const auto& r : h) a.push_back({r.step, r.epoch, r.task, r.metric, r.value});
  return a;
}

inline History history_from_json(const nlohmann::json& a) {
  History h;
  for (const auto& r : a)
    h.push_back({r[0].get<long>(), r[1].get<int>(), r[2].get<std::string>(), r[3].get<std::string>(), r[4].get<double>()});
  return h;
}

}  // namespace detail

/// Parameter tensors plus the metadata needed to rebuild the model.
inline CheckpointFile model_checkpoint(const Model<float>& model) {
  CheckpointFile ck;
  ck.meta["format"] = "xact-checkpoint";
  ck.meta["model"] = model_config_to_json(model.config());
  ck.meta["standardizers"] = detail::standardizers_json(model.standardizers());
  nlohmann::json probes = nlohmann::json::array();
  for (Task t : kAllTasks)
    if (model.probe_head(t)) probes.push_back(std::string(task_name(t)));
  ck.meta["probe_heads"] = probes;
  model.params().for_each([&](const nn::Parameter<float>& p) { ck.tensors.emplace_back("param/" + p.name, p.value); });
  return ck;
}

/// Copies every "param/<name>" tensor into the model. With `require_all`
/// each model parameter must be present; shapes must always agree.
inline void load_parameters(Model<float>& model, const CheckpointFile& ck, bool require_all) {
  model.params().for_each([&](nn::Parameter<float>& p) {
    const auto* m = ck.find("param/" + p.name);
    if (!m) {
      if (require_all) throw mismatch_error("checkpoint has no tensor for parameter '" + p.name + "'");
      return;
    }
    if (m->rows() != p.value.rows() || m->cols() != p.value.cols())
      throw mismatch_error("checkpoint tensor '" + p.name + "' has shape " + std::to_string(m->rows()) + "x" +
                           std::to_string(m->cols()) + ", model expects " + std::to_string(p.value.rows()) + "x" +
                           std::to_string(p.value.cols()));
    p.value = *m;
  });
}

inline ModelConfig checkpoint_model_config(const CheckpointFile& ck) {
  if (!ck.meta.contains("model")) throw data_error("checkpoint metadata lacks a model configuration");
  return model_config_from_json(ck.meta["model"]);
}

/// Rebuilds a model (including probe heads and standardisers) from a checkpoint.
inline std::unique_ptr<Model<float>> load_model(const CheckpointFile& ck) {
  Rng rng(0);
  auto model = std::make_unique<Model<float>>(checkpoint_model_config(ck), rng);
  for (const auto& t : ck.meta.value("probe_heads", nlohmann::json::array()))
    model->add_probe_head(parse_task(t.get<std::string>()), rng);
  load_parameters(*model, ck, true);
  model->standardizers() = detail::standardizers_from_json(ck.meta.value("standardizers", nlohmann::json::object()));
  return model;
}

/// One training run: a model, its optimizer, RNG streams and logs. Steps are
/// addressable, so a run restored from a checkpoint continues exactly.
class Trainer {
 public:
  using T = float;
  using SnapshotFn = std::function<void(const Trainer&, double fraction)>;

  Trainer(const ModelConfig& model_config, const TrainConfig& config, TrainMode mode,
          std::span<const MaterialRecord> train, std::span<const MaterialRecord> test = {})
      : config_(config), mode_(mode), train_(train), test_(test), streams_(config.seed) {
    config_.validate();
    if (train_.empty()) throw data_error("training set is empty");
    if (mode_ == TrainMode::pretrain) {
      if (config_.objective == PretrainObjective::none) throw usage_error("pretraining needs an objective other than none");
      if (model_config.modality != Modality::bimodal) throw mismatch_error("pretraining objectives need a bimodal model");
      for (const auto& r : train_)
        if (!r.has_dense()) throw data_error("record " + std::to_string(r.id) + " has no dense XRD; run prepare first");
    } else {
      if (config_.tasks.empty()) throw usage_error("supervised training needs at least one task");
      labeled_ = labeled_index(train_, config_.tasks);
      for (Task t : config_.tasks)
        if (labeled_[t].empty()) throw data_error("no training record is labeled for " + std::string(task_name(t)));
    }
    model_ = std::make_unique<Model<T>>(model_config, streams_.init);
    for (const auto& m : config_.freeze)
      if (model_->params().set_frozen(module_prefix(m), true) == 0)
        throw mismatch_error("cannot freeze '" + m + "': the model has no such module");
    if (mode_ == TrainMode::supervised)
      for (Task t : config_.tasks)
        if (!is_classification(t)) model_->standardizers()[t] = fit_standardizer(train_, t);

    steps_per_epoch_ = static_cast<long>((train_.size() + static_cast<std::size_t>(config_.batch_size) - 1) /
                                         static_cast<std::size_t>(config_.batch_size));
    schedule_ = config_.schedule;
    schedule_.total_steps = steps_per_epoch_ * config_.epochs;
    optim_.config = config_.optim;
    for (double f : config_.checkpoint_fractions)
      snapshot_steps_.emplace(std::max(1L, std::lround(f * static_cast<double>(schedule_.total_steps))), f);
    if (mode_ == TrainMode::supervised && !test_.empty()) {
      if (config_.eval_at_start) eval_steps_.insert(0);
      for (long e = 1; e <= config_.epochs; ++e) eval_steps_.insert(e * steps_per_epoch_);
      for (const auto& [s, _] : snapshot_steps_) eval_steps_.insert(s);
    }
    hash_ = config_hash(model_config, config_, mode_name(mode_));
  }

  Model<T>& model() { return *model_; }
  const Model<T>& model() const { return *model_; }
  const TrainConfig& config() const { return config_; }
  TrainMode mode() const { return mode_; }
  long step() const { return step_; }
  long steps_per_epoch() const { return steps_per_epoch_; }
  long total_steps() const { return schedule_.total_steps; }
  const nn::LrSchedule& schedule() const { return schedule_; }
  const History& history() const { return history_; }
  const std::vector<LossRow>& losses() const { return losses_; }
  const std::string& hash() const { return hash_; }
  const RngStreams& streams() const { return streams_; }

  long step_limit() const { return config_.max_steps > 0 ? std::min(config_.max_steps, total_steps()) : total_steps(); }
  bool done() const { return step_ >= step_limit(); }

  void on_snapshot(SnapshotFn f) { snapshot_ = std::move(f); }
  void set_data_paths(const DataPaths& d) { data_ = d; }

  /// Loads backbone weights (any parameter present in the checkpoint) before training starts.
  void initialize_from(const CheckpointFile& ck) {
    if (step_ != 0) throw usage_error("initialize_from must be called before the first step");
    if (checkpoint_model_config(ck) != model_->config())
      throw mismatch_error("initialising checkpoint was trained with a different model architecture");
    load_parameters(*model_, ck, false);
  }

  void run() {
    while (!done()) advance();
  }

  /// One optimisation step (plus any evaluation or snapshot scheduled right after it).
  void advance() {
    if (done()) throw usage_error("training run is already complete");
    if (step_ == 0 && history_.empty() && eval_steps_.count(0)) evaluate_now();

    LossRow row;
    row.step = step_;
    row.epoch = static_cast<int>(step_ / steps_per_epoch_);
    row.lr = nn::lr_at(step_, schedule_);
    nn::Graph<T> g(true, &streams_.dropout);
    nn::Var total = mode_ == TrainMode::pretrain ? pretrain_loss(g, row) : supervised_step_loss(g, row);
    row.total = static_cast<double>(g.scalar(total));
    if (!std::isfinite(row.total)) throw numeric_error("non-finite loss at step " + std::to_string(step_));
    g.backward(total);
    nn::adamw_step(model_->params(), optim_, row.lr);
    model_->clamp_temperature();
    model_->params().zero_grad();
    losses_.push_back(row);
    ++step_;

    if (eval_steps_.count(step_)) evaluate_now();
    if (auto it = snapshot_steps_.find(step_); it != snapshot_steps_.end() && snapshot_) snapshot_(*this, it->second);
  }

  /// Test-split metrics for every configured task, appended to the history.
  void evaluate_now() {
    const auto metrics = eval::evaluate(*model_, test_, config_.tasks, config_.eval_batch);
    for (const auto& m : metrics)
      history_.push_back({step_, static_cast<int>(step_ / steps_per_epoch_), std::string(task_name(m.task)), m.metric, m.value});
  }

  CheckpointFile checkpoint() const {
    CheckpointFile ck = model_checkpoint(*model_);
    ck.meta["mode"] = mode_name(mode_);
    ck.meta["train"] = train_config_to_json(config_);
    ck.meta["config_hash"] = hash_;
    ck.meta["step"] = step_;
    ck.meta["total_steps"] = total_steps();
    ck.meta["steps_per_epoch"] = steps_per_epoch_;
    ck.meta["optimizer_step"] = optim_.step;
    nlohmann::json rng = nlohmann::json::object();
    const_cast<RngStreams&>(streams_).for_each([&](const char* label, Rng& r) { rng[label] = rng_state(r); });
    ck.meta["rng"] = rng;
    ck.meta["history"] = detail::history_json(history_);
    if (!data_.records.empty()) ck.meta["data"] = {{"records", data_.records}, {"split", data_.split}};
    for (const auto& [name, m] : optim_.moments) {
      ck.tensors.emplace_back("adam.m/" + name, m.first);
      ck.tensors.emplace_back("adam.v/" + name, m.second);
    }
    return ck;
  }

  /// Continues a run from one of its own checkpoints.
  void resume(const CheckpointFile& ck) {
    if (ck.meta.value("config_hash", std::string()) != hash_ || ck.meta.value("mode", std::string()) != mode_name(mode_))
      throw mismatch_error("checkpoint belongs to a run with a different configuration (hash " +
                           ck.meta.value("config_hash", std::string("?")) + ", expected " + hash_ + ")");
    load_parameters(*model_, ck, true);
    model_->standardizers() = detail::standardizers_from_json(ck.meta.at("standardizers"));
    optim_.step = ck.meta.at("optimizer_step").get<long>();
    optim_.moments.clear();
    for (const auto& [name, m] : ck.tensors) {
      if (name.rfind("adam.m/", 0) == 0) optim_.moments[name.substr(7)].first = m;
      if (name.rfind("adam.v/", 0) == 0) optim_.moments[name.substr(7)].second = m;
    }
    const auto& rng = ck.meta.at("rng");
    streams_.for_each([&](const char* label, Rng& r) { set_rng_state(r, rng.at(label).get<std::string>()); });
    step_ = ck.meta.at("step").get<long>();
    history_ = detail::history_from_json(ck.meta.at("history"));
    losses_.clear();
  }

 private:
  std::vector<const MaterialRecord*> pretrain_batch(long step) {
    const long epoch = step / steps_per_epoch_;
    if (epoch != perm_epoch_) {
      perm_.resize(train_.size());
      std::iota(perm_.begin(), perm_.end(), std::size_t{0});
      Rng rng(derive_seed(derive_seed(config_.seed, "shuffle"), static_cast<std::uint64_t>(epoch)));
      std::shuffle(perm_.begin(), perm_.end(), rng);
      perm_epoch_ = epoch;
    }
    const auto b = static_cast<std::size_t>(step % steps_per_epoch_) * static_cast<std::size_t>(config_.batch_size);
    const auto e = std::min(perm_.size(), b + static_cast<std::size_t>(config_.batch_size));
    std::vector<const MaterialRecord*> out;
    for (auto i = b; i < e; ++i) out.push_back(&train_[perm_[i]]);
    return out;
  }

  nn::Var pretrain_loss(nn::Graph<T>& g, LossRow& row) {
    const auto batch = pretrain_batch(step_);
    const PretrainWeights w = config_.effective_weights();
    Encoded<T> enc;
    nn::Var l_mxm, l_cont;
    if (w.mxm > 0.0) {
      std::vector<MaskSpec> masks;
      for (std::size_t i = 0; i < batch.size(); ++i) masks.push_back(MaskSpec::sample(streams_.masking, config_.mask_rate));
      l_mxm = mxm_loss(g, *model_, batch, masks, !config_.reconstruct_masked_only, &enc).loss;
      row.mxm = static_cast<double>(g.scalar(l_mxm));
    } else {
      enc = model_->encode(g, batch);
    }
    if (w.contrastive > 0.0) {
      l_cont = contrastive_loss(g, enc.composition->cls, enc.xrd->cls, g.param(model_->log_tau()));
      row.contrastive = static_cast<double>(g.scalar(l_cont));
    }
    return combined_pretrain_loss(g, l_cont, l_mxm, w);
  }

  nn::Var supervised_step_loss(nn::Graph<T>& g, LossRow& row) {
    const auto rows = sample_tasks(config_.batch_size, config_.tasks, labeled_, streams_.task_sampling);
    std::vector<const MaterialRecord*> batch;
    std::vector<Task> tasks;
    for (const auto& r : rows) {
      batch.push_back(&train_[r.record]);
      tasks.push_back(r.task);
    }
    const auto enc = model_->encode(g, batch);
    nn::Var loss = supervised_loss<T>(g, *model_, enc.representation, batch, tasks);
    row.supervised = static_cast<double>(g.scalar(loss));
    return loss;
  }

  TrainConfig config_;
  TrainMode mode_;
  std::span<const MaterialRecord> train_;
  std::span<const MaterialRecord> test_;
  RngStreams streams_;
  std::unique_ptr<Model<T>> model_;
  std::map<Task, std::vector<std::size_t>> labeled_;
  nn::LrSchedule schedule_;
  nn::OptimState<T> optim_;
  long steps_per_epoch_ = 1;
  long step_ = 0;
  std::set<long> eval_steps_;
  std::map<long, double> snapshot_steps_;
  SnapshotFn snapshot_;
  History history_;
  std::vector<LossRow> losses_;
  std::string hash_;
  DataPaths data_;
  long perm_epoch_ = -1;
  std::vector<std::size_t> perm_;
};

struct ProbeConfig {
  int epochs = 20;
  int batch_size = 256;
  nn::LrSchedule schedule{1e-4, 1e-2, 1e-5, 0.1, 1};
  nn::AdamWConfig optim;
  std::uint64_t seed = 0;
};

struct ProbeResult {
  Task task;
  std::string metric;
  double baseline_metric = 0.0;  // untrained head
  double metric_value = 0.0;
  double baseline_loss = 0.0;  // test loss, untrained head
  double loss = 0.0;
  long steps = 0;
};

/// Test-set loss of a head in evaluation mode (standardised MSE or cross-entropy).
inline double head_loss(const Model<float>& model, Task task, const Eigen::MatrixXd& features,
                        std::span<const MaterialRecord* const> records, HeadSet heads) {
  nn::Graph<float> g(false);
  g.set_grad_enabled(false);
  std::vector<Task> tasks(records.size(), task);
  return static_cast<double>(
      g.scalar(supervised_loss<float>(g, model, g.constant(features.cast<float>()), records, tasks, heads)));
}

/// Trains a fresh linear head for `task` on the frozen backbone. Every
/// existing parameter is frozen for the duration and left bit-for-bit unchanged.
inline ProbeResult linear_probe(Model<float>& model, Task task, std::span<const MaterialRecord> train,
                                std::span<const MaterialRecord> test, const ProbeConfig& cfg) {
  auto labeled = [&](std::span<const MaterialRecord> recs, const char* what) {
    std::vector<MaterialRecord> out;
    for (const auto& r : recs)
      if (has_label(r.targets, task)) out.push_back(r);
    if (out.empty()) throw data_error(std::string("no ") + what + " record is labeled for " + std::string(task_name(task)));
    return out;
  };
  const auto tr = labeled(train, "training");
  const auto te = labeled(test, "test");
  if (cfg.epochs < 1 || cfg.batch_size < 1) throw usage_error("probe: epochs and batch size must be positive");

  if (!is_classification(task) && !model.standardizers().count(task)) model.standardizers()[task] = fit_standardizer(tr, task);
  const Eigen::MatrixXd f_train = eval::representations(model, tr);
  const Eigen::MatrixXd f_test = eval::representations(model, te);

  std::vector<bool> was_frozen;
  model.params().for_each([&](nn::Parameter<float>& p) {
    was_frozen.push_back(p.frozen);
    p.frozen = true;
  });
  Rng init(derive_seed(cfg.seed, "init"));
  model.add_probe_head(task, init);
  const std::string head_prefix = "probe." + std::string(task_name(task));
  model.params().set_frozen(head_prefix, false);

  std::vector<const MaterialRecord*> te_ptrs;
  for (const auto& r : te) te_ptrs.push_back(&r);
  ProbeResult res;
  res.task = task;
  res.baseline_loss = head_loss(model, task, f_test, te_ptrs, HeadSet::probe);
  {
    const auto m = eval::score_task(model, task, std::span<const MaterialRecord>(te), f_test, HeadSet::probe);
    res.metric = m.metric;
    res.baseline_metric = m.value;
  }

  const long spe = static_cast<long>((tr.size() + static_cast<std::size_t>(cfg.batch_size) - 1) / static_cast<std::size_t>(cfg.batch_size));
  nn::LrSchedule sched = cfg.schedule;
  sched.total_steps = spe * cfg.epochs;
  nn::OptimState<float> optim;
  optim.config = cfg.optim;
  std::vector<std::size_t> perm(tr.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng shuffle(derive_seed(cfg.seed, "shuffle"));
  long step = 0;
  for (int e = 0; e < cfg.epochs; ++e) {
    std::shuffle(perm.begin(), perm.end(), shuffle);
    for (long b = 0; b < spe; ++b, ++step) {
      const auto lo = static_cast<std::size_t>(b) * static_cast<std::size_t>(cfg.batch_size);
      const auto hi = std::min(perm.size(), lo + static_cast<std::size_t>(cfg.batch_size));
      Eigen::MatrixXd rows(static_cast<Eigen::Index>(hi - lo), f_train.cols());
      std::vector<const MaterialRecord*> recs;
      for (auto i = lo; i < hi; ++i) {
        rows.row(static_cast<Eigen::Index>(i - lo)) = f_train.row(static_cast<Eigen::Index>(perm[i]));
        recs.push_back(&tr[perm[i]]);
      }
      std::vector<Task> tasks(recs.size(), task);
      nn::Graph<float> g(true);
      nn::Var loss = supervised_loss<float>(g, model, g.constant(rows.cast<float>()), recs, tasks, HeadSet::probe);
      if (!std::isfinite(g.scalar(loss))) throw numeric_error("probe: non-finite loss");
      g.backward(loss);
      nn::adamw_step(model.params(), optim, nn::lr_at(step, sched));
      model.params().zero_grad();
    }
  }
  res.steps = step;
  res.loss = head_loss(model, task, f_test, te_ptrs, HeadSet::probe);
  res.metric_value = eval::score_task(model, task, std::span<const MaterialRecord>(te), f_test, HeadSet::probe).value;

  std::size_t i = 0;
  model.params().for_each([&](nn::Parameter<float>& p) {
    p.frozen = i < was_frozen.size() ? static_cast<bool>(was_frozen[i]) : false;
    ++i;
  });
  return res;
}

}  // namespace xact
