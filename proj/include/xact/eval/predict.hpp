#pragma once

#include <map>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "xact/eval/metrics.hpp"
#include "xact/model/model.hpp"
#include "xact/objectives/supervised.hpp"

namespace xact::eval {

/// Representation rows (f_cls, or the unimodal CLS) in evaluation mode.
template <class T>
Eigen::MatrixXd representations(const Model<T>& model, std::span<const MaterialRecord> records, int batch = 512) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(records.size()), model.config().representation_dim());
  for (std::size_t start = 0; start < records.size(); start += static_cast<std::size_t>(batch)) {
    const auto end = std::min(records.size(), start + static_cast<std::size_t>(batch));
    std::vector<const MaterialRecord*> ptrs;
    for (auto i = start; i < end; ++i) ptrs.push_back(&records[i]);
    nn::Graph<T> g(false);
    g.set_grad_enabled(false);
    const auto& v = g.value(model.encode(g, ptrs).representation);
    out.middleRows(static_cast<Eigen::Index>(start), v.rows()) = v.template cast<double>();
  }
  return out;
}

/// Head outputs for each row of `features`: de-standardised values for
/// regression, argmax class for classification.
template <class T>
std::vector<double> head_predictions(const Model<T>& model, Task task, const Eigen::MatrixXd& features,
                                     HeadSet heads = HeadSet::main) {
  const nn::Linear<T>* head = heads == HeadSet::main ? &model.head_layer(task) : model.probe_head(task);
  if (!head) throw usage_error("no probe head for " + std::string(task_name(task)));
  nn::Graph<T> g(false);
  g.set_grad_enabled(false);
  const auto& out = g.value((*head)(g, g.constant(features.cast<T>())));
  std::vector<double> preds(static_cast<std::size_t>(out.rows()));
  const Standardizer st = model.standardizer(task);
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    if (is_classification(task)) {
      Eigen::Index arg = 0;
      out.row(i).maxCoeff(&arg);
      preds[static_cast<std::size_t>(i)] = static_cast<double>(arg);
    } else {
      preds[static_cast<std::size_t>(i)] = st.inverse(static_cast<double>(out(i, 0)));
    }
  }
  return preds;
}

struct TaskMetric {
  Task task;
  std::string metric;  // "mae" or "accuracy"
  double value = 0.0;
  std::size_t count = 0;
  std::optional<ClassAccuracy> classes;
};

/// Scores records labeled for `task` given their feature rows.
template <class T>
TaskMetric score_task(const Model<T>& model, Task task, std::span<const MaterialRecord> records,
                      const Eigen::MatrixXd& features, HeadSet heads = HeadSet::main) {
  std::vector<Eigen::Index> rows;
  for (std::size_t i = 0; i < records.size(); ++i)
    if (has_label(records[i].targets, task)) rows.push_back(static_cast<Eigen::Index>(i));
  if (rows.empty()) throw data_error("no evaluation record is labeled for " + std::string(task_name(task)));
  Eigen::MatrixXd f(static_cast<Eigen::Index>(rows.size()), features.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) f.row(static_cast<Eigen::Index>(k)) = features.row(rows[k]);
  const auto preds = head_predictions(model, task, f, heads);
  TaskMetric m;
  m.task = task;
  m.count = rows.size();
  if (is_classification(task)) {
    std::vector<int> p, t;
    for (std::size_t k = 0; k < rows.size(); ++k) {
      p.push_back(static_cast<int>(preds[k]));
      t.push_back(class_label(records[static_cast<std::size_t>(rows[k])].targets, task));
    }
    m.metric = "accuracy";
    m.classes = classification_accuracy(p, t, class_count(task));
    m.value = m.classes->overall;
  } else {
    std::vector<double> t;
    for (auto r : rows) t.push_back(regression_label(records[static_cast<std::size_t>(r)].targets, task));
    m.metric = "mae";
    m.value = regression_mae(preds, t);
  }
  return m;
}

template <class T>
std::vector<TaskMetric> evaluate(const Model<T>& model, std::span<const MaterialRecord> records,
                                 std::span<const Task> tasks, int batch = 512) {
  const Eigen::MatrixXd features = representations(model, records, batch);
  std::vector<TaskMetric> out;
  for (Task t : tasks) out.push_back(score_task(model, t, records, features));
  return out;
}

inline nlohmann::json task_metric_json(const TaskMetric& m) {
  nlohmann::json j{{"metric", m.metric}, {"value", m.value}, {"count", m.count}};
  if (m.metric == "mae") {
    j["unit"] = "eV";
    if (m.task == Task::ef) j["mae_meV_per_atom"] = m.value * 1000.0;
  }
  if (m.classes) {
    nlohmann::json per = nlohmann::json::array();
    for (std::size_t c = 0; c < m.classes->per_class.size(); ++c) {
      if (!m.classes->per_class[c]) continue;
      nlohmann::json row{{"class", c}, {"accuracy", *m.classes->per_class[c]}, {"support", m.classes->support[c]}};
      if (m.task == Task::crystal_system) row["name"] = kCrystalSystemNames[c];
      if (m.task == Task::space_group) row["class"] = c + 1;
      per.push_back(row);
    }
    j["per_class"] = per;
    j["class_mean_accuracy"] = m.classes->class_mean();
  }
  return j;
}

inline nlohmann::json silhouette_json(const SilhouetteResult& s, Task task) {
  nlohmann::json per = nlohmann::json::object();
  for (const auto& [label, v] : s.per_class) {
    std::string key = std::to_string(task == Task::space_group ? label + 1 : label);
    if (task == Task::crystal_system) key = kCrystalSystemNames[static_cast<std::size_t>(label)];
    per[key] = v;
  }
  return {{"mean", s.mean}, {"per_class", per}, {"points", s.points}};
}

}  // namespace xact::eval
