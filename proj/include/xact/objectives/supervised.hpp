#pragma once

#include <map>
#include <span>
#include <vector>

#include "xact/model/model.hpp"
#include "xact/nn/ops.hpp"

namespace xact {

enum class HeadSet { main, probe };

/// Mean over batch rows of each row's task loss: squared error in
/// standardised units for regression, cross-entropy for classification.
/// `repr` holds one representation row per record; `tasks[i]` is row i's task.
template <class T>
nn::Var supervised_loss(nn::Graph<T>& g, const Model<T>& model, nn::Var repr,
                        std::span<const MaterialRecord* const> records, std::span<const Task> tasks,
                        HeadSet heads = HeadSet::main) {
  if (records.size() != tasks.size() || records.empty())
    throw usage_error("supervised_loss: one task per record required");
  if (static_cast<std::size_t>(g.value(repr).rows()) != records.size())
    throw usage_error("supervised_loss: representation rows do not match the batch");
  std::map<Task, std::vector<int>> by_task;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    if (!has_label(records[i]->targets, tasks[i]))
      throw data_error("record " + std::to_string(records[i]->id) + " has no " + std::string(task_name(tasks[i])) + " label");
    by_task[tasks[i]].push_back(static_cast<int>(i));
  }
  const T inv_b = T(1) / static_cast<T>(records.size());
  nn::Var total;
  for (auto& [task, rows] : by_task) {
    const nn::Linear<T>* head = &model.head_layer(task);
    if (heads == HeadSet::probe) {
      head = model.probe_head(task);
      if (!head) throw usage_error("no probe head for " + std::string(task_name(task)));
    }
    nn::Var out = (*head)(g, nn::select_rows(g, repr, rows));
    nn::Var part;
    if (is_classification(task)) {
      std::vector<int> labels;
      for (int r : rows) labels.push_back(class_label(records[static_cast<std::size_t>(r)]->targets, task));
      part = nn::cross_entropy_sum(g, out, std::move(labels));
    } else {
      const Standardizer st = model.standardizer(task);
      nn::Matrix<T> target(static_cast<Eigen::Index>(rows.size()), 1);
      for (std::size_t k = 0; k < rows.size(); ++k)
        target(static_cast<Eigen::Index>(k), 0) =
            static_cast<T>(st.forward(regression_label(records[static_cast<std::size_t>(rows[k])]->targets, task)));
      part = nn::sum_squared_error(g, out, std::move(target));
    }
    total = total.valid() ? nn::add(g, total, part) : part;
  }
  return nn::scale(g, total, inv_b);
}

struct PretrainWeights {
  double contrastive = 1.0;
  double mxm = 1.0;

  void validate() const {
    if (!(contrastive >= 0.0) || !(mxm >= 0.0)) throw usage_error("pretrain weights must be non-negative");
    if (contrastive == 0.0 && mxm == 0.0) throw usage_error("pretrain weights cannot both be zero");
  }
};

/// w_c * L_cont + w_m * L_mxm; a term with zero weight may be left invalid.
template <class T>
nn::Var combined_pretrain_loss(nn::Graph<T>& g, nn::Var l_cont, nn::Var l_mxm, const PretrainWeights& w) {
  w.validate();
  nn::Var out;
  if (w.contrastive > 0.0) {
    if (!l_cont.valid()) throw usage_error("combined_pretrain_loss: contrastive term missing");
    out = nn::scale(g, l_cont, static_cast<T>(w.contrastive));
  }
  if (w.mxm > 0.0) {
    if (!l_mxm.valid()) throw usage_error("combined_pretrain_loss: MXM term missing");
    nn::Var m = nn::scale(g, l_mxm, static_cast<T>(w.mxm));
    out = out.valid() ? nn::add(g, out, m) : m;
  }
  return out;
}

}  // namespace xact
