#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "xact/error.hpp"

namespace xact {

inline constexpr int kMaxElements = 16;
inline constexpr int kMaxAtomicNumber = 103;

/// Diffraction grid: half-open [5, 90) degrees 2-theta at 0.02 degree spacing.
struct XrdGrid {
  static constexpr double start = 5.0;
  static constexpr double spacing = 0.02;
  static constexpr int points = 4250;
  static constexpr double stop = 90.0;
  static constexpr int token_count = 17;
  static constexpr int token_width = 250;

  static constexpr double angle(int index) { return start + spacing * index; }
};
static_assert(XrdGrid::token_count * XrdGrid::token_width == XrdGrid::points);

struct ElementFraction {
  std::uint8_t z = 0;
  float fraction = 0.0f;

  friend bool operator==(const ElementFraction&, const ElementFraction&) = default;
};

/// Stoichiometry as (atomic number, fraction) pairs in input order.
struct Composition {
  std::vector<ElementFraction> entries;

  double fraction_sum() const {
    double s = 0.0;
    for (const auto& e : entries) s += e.fraction;
    return s;
  }
  friend bool operator==(const Composition&, const Composition&) = default;
};

struct Peak {
  float two_theta = 0.0f;
  float intensity = 0.0f;

  friend bool operator==(const Peak&, const Peak&) = default;
};

struct StickPattern {
  std::vector<Peak> peaks;

  friend bool operator==(const StickPattern&, const StickPattern&) = default;
};

/// Dense smeared trace on XrdGrid, intensities in [0, 100].
struct XrdVector {
  std::vector<float> values;

  friend bool operator==(const XrdVector&, const XrdVector&) = default;
};

enum class CrystalSystem : std::uint8_t {
  triclinic = 0,
  monoclinic,
  orthorhombic,
  tetragonal,
  trigonal,
  hexagonal,
  cubic,
};
inline constexpr int kCrystalSystemCount = 7;
inline constexpr int kSpaceGroupCount = 230;

inline constexpr std::array<std::string_view, kCrystalSystemCount> kCrystalSystemNames = {
    "triclinic", "monoclinic", "orthorhombic", "tetragonal", "trigonal", "hexagonal", "cubic"};

struct TargetSet {
  std::optional<float> ef;        // eV/atom
  std::optional<float> band_gap;  // eV
  std::optional<CrystalSystem> crystal_system;
  std::optional<std::uint16_t> space_group;  // 1..230

  bool empty() const { return !ef && !band_gap && !crystal_system && !space_group; }
  friend bool operator==(const TargetSet&, const TargetSet&) = default;
};

struct MaterialRecord {
  std::uint64_t id = 0;
  Composition composition;
  std::variant<StickPattern, XrdVector> xrd;
  TargetSet targets;

  bool has_dense() const { return std::holds_alternative<XrdVector>(xrd); }
  const XrdVector& dense() const {
    if (auto* v = std::get_if<XrdVector>(&xrd)) return *v;
    throw data_error("record " + std::to_string(id) + " carries a stick pattern, dense XRD required");
  }
  const StickPattern& sticks() const { return std::get<StickPattern>(xrd); }

  friend bool operator==(const MaterialRecord&, const MaterialRecord&) = default;
};

// Prediction targets. Order matches the shard presence bitmask.
enum class Task : std::uint8_t { ef = 0, band_gap, crystal_system, space_group };
inline constexpr std::array<Task, 4> kAllTasks = {Task::ef, Task::band_gap, Task::crystal_system,
                                                  Task::space_group};

inline std::string_view task_name(Task t) {
  switch (t) {
    case Task::ef: return "ef";
    case Task::band_gap: return "band_gap";
    case Task::crystal_system: return "crystal_system";
    case Task::space_group: return "space_group";
  }
  return "?";
}

inline Task parse_task(std::string_view name) {
  for (Task t : kAllTasks)
    if (task_name(t) == name) return t;
  throw usage_error("unknown task '" + std::string(name) + "'");
}

inline bool is_classification(Task t) { return t == Task::crystal_system || t == Task::space_group; }

inline int class_count(Task t) {
  switch (t) {
    case Task::crystal_system: return kCrystalSystemCount;
    case Task::space_group: return kSpaceGroupCount;
    default: return 1;
  }
}

inline bool has_label(const TargetSet& t, Task task) {
  switch (task) {
    case Task::ef: return t.ef.has_value();
    case Task::band_gap: return t.band_gap.has_value();
    case Task::crystal_system: return t.crystal_system.has_value();
    case Task::space_group: return t.space_group.has_value();
  }
  return false;
}

/// Regression value in original units.
inline double regression_label(const TargetSet& t, Task task) {
  if (task == Task::ef && t.ef) return *t.ef;
  if (task == Task::band_gap && t.band_gap) return *t.band_gap;
  throw data_error("missing regression label '" + std::string(task_name(task)) + "'");
}

/// Zero-based class index.
inline int class_label(const TargetSet& t, Task task) {
  if (task == Task::crystal_system && t.crystal_system) return static_cast<int>(*t.crystal_system);
  if (task == Task::space_group && t.space_group) return static_cast<int>(*t.space_group) - 1;
  throw data_error("missing class label '" + std::string(task_name(task)) + "'");
}

}  // namespace xact
