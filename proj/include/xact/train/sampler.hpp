#pragma once

#include <map>
#include <random>
#include <span>
#include <vector>

#include "xact/data/types.hpp"
#include "xact/error.hpp"
#include "xact/train/rng.hpp"

namespace xact {

struct SampledRow {
  Task task;
  std::size_t record;  // index into the training records
};

/// Indices of records carrying a label for each task.
inline std::map<Task, std::vector<std::size_t>> labeled_index(std::span<const MaterialRecord> records,
                                                              std::span<const Task> tasks) {
  std::map<Task, std::vector<std::size_t>> out;
  for (Task t : tasks) {
    auto& v = out[t];
    for (std::size_t i = 0; i < records.size(); ++i)
      if (has_label(records[i].targets, t)) v.push_back(i);
  }
  return out;
}

/// Uniform task per row, then a uniformly drawn record labeled for that task.
inline std::vector<SampledRow> sample_tasks(int batch_size, std::span<const Task> tasks,
                                            const std::map<Task, std::vector<std::size_t>>& labeled, Rng& rng) {
  if (tasks.empty()) throw usage_error("sample_tasks: no tasks");
  if (batch_size < 1) throw usage_error("sample_tasks: batch size must be positive");
  for (Task t : tasks) {
    auto it = labeled.find(t);
    if (it == labeled.end() || it->second.empty())
      throw data_error("sample_tasks: no training record is labeled for " + std::string(task_name(t)));
  }
  std::uniform_int_distribution<std::size_t> pick_task(0, tasks.size() - 1);
  std::vector<SampledRow> rows;
  rows.reserve(static_cast<std::size_t>(batch_size));
  for (int i = 0; i < batch_size; ++i) {
    const Task t = tasks[pick_task(rng)];
    const auto& pool = labeled.at(t);
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    rows.push_back({t, pool[pick(rng)]});
  }
  return rows;
}

}  // namespace xact
