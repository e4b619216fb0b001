#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "xact/xact.hpp"

using namespace xact;
using nlohmann::json;

namespace {

bool deterministic() {
  const char* v = std::getenv("XACT_DETERMINISTIC");
  return v && std::string(v) == "1";
}

void write_text(const std::string& path, const std::string& text) { io::write_file(path, text); }

void emit(const json& j, const std::string& path) {
  const std::string text = j.dump(2) + "\n";
  if (path.empty())
    std::cout << text;
  else
    write_text(path, text);
}

std::vector<Task> parse_task_list(const std::string& csv) {
  std::vector<Task> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(parse_task(item));
  if (out.empty()) throw usage_error("--tasks: empty task list");
  return out;
}

struct Splits {
  std::vector<MaterialRecord> train;
  std::vector<MaterialRecord> test;
};

Splits load_splits(const DataPaths& d) {
  auto records = read_records(d.records);
  if (d.split.empty()) return {records, records};
  auto [train, test] = apply_split(std::move(records), split_from_json(read_json_file(d.split)));
  return {std::move(train), std::move(test)};
}

DataPaths checkpoint_data(const CheckpointFile& ck, const std::string& records, const std::string& split) {
  DataPaths d;
  if (ck.meta.contains("data")) {
    d.records = ck.meta["data"].value("records", std::string());
    d.split = ck.meta["data"].value("split", std::string());
  }
  if (!records.empty()) d.records = records;
  if (!split.empty()) d.split = split;
  if (d.records.empty()) throw usage_error("the checkpoint names no dataset; pass --data");
  return d;
}

const std::vector<MaterialRecord>& pick_split(const Splits& s, const std::string& which) {
  if (which == "train") return s.train;
  if (which == "test") return s.test;
  throw usage_error("--split must be 'train' or 'test'");
}

std::string snapshot_path(const std::string& out, double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof buf, ".%gpct.ckpt", fraction * 100.0);
  return out + buf;
}

json summary_json(const Trainer& t) {
  json j{{"mode", mode_name(t.mode())},
         {"config_hash", t.hash()},
         {"steps", t.step()},
         {"total_steps", t.total_steps()},
         {"steps_per_epoch", t.steps_per_epoch()},
         {"parameters", t.model().params().scalar_count()}};
  if (!t.losses().empty()) j["final_loss"] = t.losses().back().total;
  json last = json::object();
  for (const auto& r : t.history()) last[r.task] = {{"metric", r.metric}, {"value", r.value}, {"step", r.step}};
  j["final_metrics"] = last;
  return j;
}

// Trainer bookkeeping shared by pretrain and train.
void run_training(Trainer& t, const std::string& out, const std::string& resume) {
  if (!resume.empty()) t.resume(read_checkpoint(resume));
  t.on_snapshot([&](const Trainer& tr, double f) { write_checkpoint(snapshot_path(out, f), tr.checkpoint()); });
  t.run();
  write_checkpoint(out, t.checkpoint());
}

Eigen::MatrixXd read_embedding_csv(const std::string& path, std::vector<std::string>& ids, std::vector<int>& labels) {
  std::istringstream in(io::read_file(path));
  std::string line;
  if (!std::getline(in, line) || line.rfind("id,label", 0) != 0)
    throw data_error("'" + path + "': expected an embedding CSV with header 'id,label,...'");
  std::vector<std::vector<double>> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ls(line);
    std::string cell;
    std::vector<std::string> f;
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    if (f.size() < 3) throw data_error("'" + path + "' line " + std::to_string(lineno) + ": too few columns");
    ids.push_back(f[0]);
    std::vector<double> v;
    try {
      labels.push_back(f[1].empty() ? -1 : std::stoi(f[1]));
      for (std::size_t i = 2; i < f.size(); ++i) v.push_back(std::stod(f[i]));
    } catch (const std::exception&) {
      throw data_error("'" + path + "' line " + std::to_string(lineno) + ": malformed number");
    }
    if (!rows.empty() && v.size() != rows.front().size())
      throw data_error("'" + path + "' line " + std::to_string(lineno) + ": ragged row");
    rows.push_back(std::move(v));
  }
  if (rows.empty()) throw data_error("'" + path + "': no rows");
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return m;
}

// Silhouette over labelled rows only.
std::optional<eval::SilhouetteResult> labelled_silhouette(const Eigen::MatrixXd& points, const std::vector<int>& labels,
                                                          std::uint64_t seed) {
  std::vector<Eigen::Index> keep;
  std::vector<int> lab;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] >= 0) {
      keep.push_back(static_cast<Eigen::Index>(i));
      lab.push_back(labels[i]);
    }
  if (keep.empty()) return std::nullopt;
  Eigen::MatrixXd p(static_cast<Eigen::Index>(keep.size()), points.cols());
  for (std::size_t i = 0; i < keep.size(); ++i) p.row(static_cast<Eigen::Index>(i)) = points.row(keep[i]);
  return eval::silhouette(p, lab, eval::kSilhouetteMaxPoints, seed);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"xact: multimodal composition + XRD property prediction"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "xact 1.0");

  // synth
  std::string out, in, spec_path, config_path, init_path, resume_path, ckpt_path, tasks_csv, metrics_path, loss_path;
  std::string data_override, split_override, report_path, split_name = "test", target, baseline_path, candidate_path;
  std::string mae_task = "ef", acc_task = "crystal_system";
  std::uint64_t seed = 0;
  std::size_t count = 0;
  double sigma = kDefaultSigma, frac = 0.9;
  unsigned workers = std::max(1u, std::thread::hardware_concurrency());
  std::string objective;
  int probe_epochs = 20;
  bool full_dim = false;
  std::optional<double> mae_thr, acc_thr;

  auto* synth = app.add_subcommand("synth", "Write a deterministic synthetic stick-pattern dataset");
  synth->add_option("--out", out, "Output shard (.xshard) or JSONL (.jsonl)")->required();
  synth->add_option("--count", count, "Number of records")->required()->check(CLI::PositiveNumber);
  synth->add_option("--seed", seed, "Master seed")->required();
  synth->add_option("--spec", spec_path, "Synthesis spec JSON (defaults if omitted)")->check(CLI::ExistingFile);

  auto* prepare = app.add_subcommand("prepare", "Smear stick patterns onto the 4250-point grid");
  prepare->add_option("--in", in, "Input records")->required()->check(CLI::ExistingFile);
  prepare->add_option("--out", out, "Output records")->required();
  prepare->add_option("--sigma", sigma, "Gaussian width in degrees")->capture_default_str();
  prepare->add_option("--workers", workers, "Worker threads (output order is independent of this)")->check(CLI::PositiveNumber);

  auto* split = app.add_subcommand("split", "Write a train/test split manifest");
  split->add_option("--in", in, "Input records")->required()->check(CLI::ExistingFile);
  split->add_option("--frac", frac, "Training fraction")->capture_default_str();
  split->add_option("--seed", seed, "Shuffle seed")->required();
  split->add_option("--out", out, "Manifest JSON")->required();

  auto* pretrain = app.add_subcommand("pretrain", "Self-supervised pretraining (contrastive, MXM or both)");
  pretrain->add_option("--config", config_path, "Run configuration JSON")->required()->check(CLI::ExistingFile);
  pretrain->add_option("--objective", objective, "contrastive | mxm | both")->required()->check(CLI::IsMember({"contrastive", "mxm", "both"}));
  pretrain->add_option("--out", out, "Checkpoint path")->required();
  pretrain->add_option("--loss-csv", loss_path, "Per-step loss CSV (default: <out>.loss.csv)");
  pretrain->add_option("--resume", resume_path, "Continue from a checkpoint of the same run")->check(CLI::ExistingFile);

  auto* train = app.add_subcommand("train", "Supervised single- or multi-task training");
  train->add_option("--config", config_path, "Run configuration JSON")->required()->check(CLI::ExistingFile);
  train->add_option("--init", init_path, "Initialise from a (pretraining) checkpoint")->check(CLI::ExistingFile);
  train->add_option("--tasks", tasks_csv, "Comma-separated tasks, overriding the config");
  train->add_option("--out", out, "Checkpoint path")->required();
  train->add_option("--metrics", metrics_path, "Metric history CSV (default: <out>.metrics.csv)");
  train->add_option("--resume", resume_path, "Continue from a checkpoint of the same run")->check(CLI::ExistingFile);

  auto* probe = app.add_subcommand("probe", "Linear probe of a new target on the frozen backbone");
  probe->add_option("--ckpt", ckpt_path, "Backbone checkpoint")->required()->check(CLI::ExistingFile);
  probe->add_option("--target", target, "Target to probe")->required();
  probe->add_option("--seed", seed, "Head initialisation and shuffle seed")->required();
  probe->add_option("--epochs", probe_epochs, "Probe epochs")->capture_default_str()->check(CLI::PositiveNumber);
  probe->add_option("--out", report_path, "Metrics JSON (default: stdout)");
  probe->add_option("--save", out, "Write the checkpoint with the probe head added");
  probe->add_option("--data", data_override, "Records (default: from the checkpoint)")->check(CLI::ExistingFile);
  probe->add_option("--split-file", split_override, "Split manifest (default: from the checkpoint)")->check(CLI::ExistingFile);

  auto* evalc = app.add_subcommand("eval", "Metrics report for a checkpoint");
  evalc->add_option("--ckpt", ckpt_path, "Checkpoint")->required()->check(CLI::ExistingFile);
  evalc->add_option("--split", split_name, "train | test")->capture_default_str();
  evalc->add_option("--tasks", tasks_csv, "Tasks to score (default: the run's tasks and probe heads)");
  evalc->add_option("--out", report_path, "Report JSON (default: stdout)");
  evalc->add_option("--seed", seed, "Silhouette subsampling seed")->capture_default_str();
  evalc->add_flag("--full-dim", full_dim, "Silhouette on the full embedding instead of its 2D PCA");
  evalc->add_option("--data", data_override, "Records (default: from the checkpoint)")->check(CLI::ExistingFile);
  evalc->add_option("--split-file", split_override, "Split manifest (default: from the checkpoint)")->check(CLI::ExistingFile);

  auto* embed = app.add_subcommand("embed", "Export representation rows as CSV");
  embed->add_option("--ckpt", ckpt_path, "Checkpoint")->required()->check(CLI::ExistingFile);
  embed->add_option("--out", out, "Embedding CSV")->required();
  embed->add_option("--split", split_name, "train | test")->capture_default_str();
  embed->add_option("--data", data_override, "Records (default: from the checkpoint)")->check(CLI::ExistingFile);
  embed->add_option("--split-file", split_override, "Split manifest (default: from the checkpoint)")->check(CLI::ExistingFile);

  auto* pca = app.add_subcommand("pca", "2D PCA projection and silhouette scores of an embedding CSV");
  pca->add_option("--in", in, "Embedding CSV")->required()->check(CLI::ExistingFile);
  pca->add_option("--out", out, "Projection CSV (id,pc1,pc2,label)")->required();
  pca->add_option("--report", report_path, "Silhouette / variance JSON (default: stdout)");
  pca->add_option("--seed", seed, "Silhouette subsampling seed")->capture_default_str();
  pca->add_flag("--full-dim", full_dim, "Silhouette on the full embedding instead of the projection");

  auto* fit = app.add_subcommand("fit-scaling", "Power-law fit L = a D^b to a CSV of (D, L)");
  fit->add_option("--in", in, "CSV with header D,L")->required()->check(CLI::ExistingFile);
  fit->add_option("--out", report_path, "Fit JSON (default: stdout)");

  auto* speed = app.add_subcommand("speedup", "Convergence speedup of a candidate run over a baseline");
  speed->add_option("--baseline", baseline_path, "Baseline metrics CSV")->required()->check(CLI::ExistingFile);
  speed->add_option("--candidate", candidate_path, "Candidate metrics CSV")->required()->check(CLI::ExistingFile);
  speed->add_option("--mae", mae_thr, "MAE threshold (target units)");
  speed->add_option("--acc", acc_thr, "Accuracy threshold (fraction)");
  speed->add_option("--mae-task", mae_task, "Task for the MAE threshold")->capture_default_str();
  speed->add_option("--acc-task", acc_task, "Task for the accuracy threshold")->capture_default_str();

  auto fail = [](const std::string& kind, const std::string& message, int code) {
    std::cerr << json{{"error", kind}, {"message", message}}.dump() << "\n";
    return code;
  };

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what(), 2);
  }

  try {
    if (*synth) {
      SynthSpec spec;
      if (!spec_path.empty()) spec = synth_spec_from_json(read_json_file(spec_path));
      write_records(synth_dataset(count, seed, spec), out);
    } else if (*prepare) {
      if (deterministic()) workers = 1;
      write_records(prepare_records(read_records(in), sigma, workers), out);
    } else if (*split) {
      std::vector<std::uint64_t> ids;
      for (const auto& r : read_records(in)) ids.push_back(r.id);
      write_text(out, split_to_json(split_dataset(ids, frac, seed)).dump() + "\n");
    } else if (*pretrain) {
      RunConfig rc = read_run_config(config_path);
      rc.train.objective = parse_objective(objective);
      Splits data = load_splits(rc.data);
      Trainer t(rc.model, rc.train, TrainMode::pretrain, data.train);
      t.set_data_paths(rc.data);
      run_training(t, out, resume_path);
      write_text(loss_path.empty() ? out + ".loss.csv" : loss_path, loss_csv(t.losses()));
      emit(summary_json(t), out + ".summary.json");
    } else if (*train) {
      RunConfig rc = read_run_config(config_path);
      if (!tasks_csv.empty()) rc.train.tasks = parse_task_list(tasks_csv);
      Splits data = load_splits(rc.data);
      Trainer t(rc.model, rc.train, TrainMode::supervised, data.train, data.test);
      t.set_data_paths(rc.data);
      if (!init_path.empty()) t.initialize_from(read_checkpoint(init_path));
      run_training(t, out, resume_path);
      write_text(metrics_path.empty() ? out + ".metrics.csv" : metrics_path, history_csv(t.history()));
      emit(summary_json(t), out + ".summary.json");
    } else if (*probe) {
      CheckpointFile ck = read_checkpoint(ckpt_path);
      auto model = load_model(ck);
      Splits data = load_splits(checkpoint_data(ck, data_override, split_override));
      ProbeConfig pc;
      pc.epochs = probe_epochs;
      pc.seed = seed;
      const Task task = parse_task(target);
      const auto r = linear_probe(*model, task, data.train, data.test, pc);
      json j{{"target", target},
             {"metric", r.metric},
             {"value", r.metric_value},
             {"untrained_head_value", r.baseline_metric},
             {"test_loss", r.loss},
             {"untrained_head_test_loss", r.baseline_loss},
             {"steps", r.steps},
             {"checkpoint_config_hash", ck.meta.value("config_hash", std::string())}};
      if (!out.empty()) {
        CheckpointFile saved = model_checkpoint(*model);
        for (const auto& key : {"mode", "train", "config_hash", "data"})
          if (ck.meta.contains(key)) saved.meta[key] = ck.meta[key];
        write_checkpoint(out, saved);
      }
      emit(j, report_path);
    } else if (*evalc) {
      CheckpointFile ck = read_checkpoint(ckpt_path);
      auto model = load_model(ck);
      Splits data = load_splits(checkpoint_data(ck, data_override, split_override));
      const auto& recs = pick_split(data, split_name);
      std::vector<Task> tasks;
      if (!tasks_csv.empty()) {
        tasks = parse_task_list(tasks_csv);
      } else if (ck.meta.contains("train")) {
        for (const auto& t : ck.meta["train"].value("tasks", json::array())) tasks.push_back(parse_task(t.get<std::string>()));
      }
      const Eigen::MatrixXd feats = eval::representations(*model, std::span<const MaterialRecord>(recs));
      json report{{"split", split_name}, {"records", recs.size()}, {"config_hash", ck.meta.value("config_hash", std::string())}};
      json tj = json::object();
      for (Task t : tasks) tj[std::string(task_name(t))] = eval::task_metric_json(eval::score_task(*model, t, recs, feats));
      for (Task t : kAllTasks)
        if (model->probe_head(t))
          tj["probe." + std::string(task_name(t))] =
              eval::task_metric_json(eval::score_task(*model, t, recs, feats, HeadSet::probe));
      report["tasks"] = tj;
      std::vector<int> labels;
      for (const auto& r : recs)
        labels.push_back(r.targets.crystal_system ? static_cast<int>(*r.targets.crystal_system) : -1);
      const Eigen::MatrixXd space = full_dim ? feats : eval::pca_project(feats, 2).coords;
      if (auto s = labelled_silhouette(space, labels, seed)) {
        report["silhouette"] = eval::silhouette_json(*s, Task::crystal_system);
        report["silhouette"]["space"] = full_dim ? "full" : "pca2";
      }
      emit(report, report_path);
    } else if (*embed) {
      CheckpointFile ck = read_checkpoint(ckpt_path);
      auto model = load_model(ck);
      Splits data = load_splits(checkpoint_data(ck, data_override, split_override));
      const auto& recs = pick_split(data, split_name);
      const Eigen::MatrixXd feats = eval::representations(*model, std::span<const MaterialRecord>(recs));
      std::string csv = "id,label";
      for (Eigen::Index j = 0; j < feats.cols(); ++j) csv += ",f" + std::to_string(j);
      csv += "\n";
      for (std::size_t i = 0; i < recs.size(); ++i) {
        csv += std::to_string(recs[i].id) + ",";
        if (recs[i].targets.crystal_system) csv += std::to_string(static_cast<int>(*recs[i].targets.crystal_system));
        for (Eigen::Index j = 0; j < feats.cols(); ++j) csv += "," + format_double(feats(static_cast<Eigen::Index>(i), j));
        csv += "\n";
      }
      write_text(out, csv);
    } else if (*pca) {
      std::vector<std::string> ids;
      std::vector<int> labels;
      const Eigen::MatrixXd x = read_embedding_csv(in, ids, labels);
      const auto p = eval::pca_project(x, 2);
      std::string csv = "id,pc1,pc2,label\n";
      for (std::size_t i = 0; i < ids.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        csv += ids[i] + "," + format_double(p.coords(r, 0)) + "," + format_double(p.coords(r, 1)) + "," +
               (labels[i] >= 0 ? std::to_string(labels[i]) : std::string()) + "\n";
      }
      write_text(out, csv);
      json report{{"explained_variance", p.explained_variance}, {"explained_variance_ratio", p.explained_ratio}};
      if (auto s = labelled_silhouette(full_dim ? x : p.coords, labels, seed)) {
        report["silhouette"] = eval::silhouette_json(*s, Task::crystal_system);
        report["silhouette"]["space"] = full_dim ? "full" : "pca2";
      }
      emit(report, report_path);
    } else if (*fit) {
      std::istringstream csv(io::read_file(in));
      std::string line;
      if (!std::getline(csv, line) || line != "D,L") throw data_error("'" + in + "': expected header 'D,L'");
      std::vector<std::pair<double, double>> pts;
      while (std::getline(csv, line)) {
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) throw data_error("'" + in + "': malformed row '" + line + "'");
        try {
          pts.emplace_back(std::stod(line.substr(0, comma)), std::stod(line.substr(comma + 1)));
        } catch (const std::exception&) {
          throw data_error("'" + in + "': malformed row '" + line + "'");
        }
      }
      const auto f = eval::fit_power_law(pts);
      emit(json{{"a", f.a}, {"b", f.b}, {"residual", f.residual}, {"points", pts.size()}}, report_path);
    } else if (*speed) {
      std::vector<Threshold> th;
      if (mae_thr) th.push_back({mae_task, "mae", *mae_thr});
      if (acc_thr) th.push_back({acc_task, "accuracy", *acc_thr});
      if (th.empty()) throw usage_error("speedup: give --mae and/or --acc");
      const History base = parse_history_csv(io::read_file(baseline_path));
      const History cand = parse_history_csv(io::read_file(candidate_path));
      json j{{"ratio", measure_speedup(base, cand, th)}};
      json steps = json::object();
      for (const auto& t : th) {
        auto b = first_crossing(base, t), c = first_crossing(cand, t);
        steps[t.task + "." + t.metric] = {{"threshold", t.value},
                                          {"baseline_step", b ? json(*b) : json(nullptr)},
                                          {"candidate_step", c ? json(*c) : json(nullptr)}};
      }
      j["crossings"] = steps;
      emit(j, "");
    }
  } catch (const Error& e) {
    return fail(kind_name(e.kind()), e.what(), exit_code(e.kind()));
  } catch (const std::bad_alloc&) {
    return fail("data", "out of memory", 3);
  } catch (const std::exception& e) {
    return fail("data", e.what(), 3);
  }
  return 0;
}
