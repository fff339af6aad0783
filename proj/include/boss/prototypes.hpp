#pragma once

#include <algorithm>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "boss/dataset.hpp"
#include "boss/error.hpp"

namespace boss::data {

enum class Provenance { manual, replaced, self_train_augmented };

inline std::string to_string(Provenance p) {
  switch (p) {
    case Provenance::manual: return "manual";
    case Provenance::replaced: return "replaced";
    case Provenance::self_train_augmented: return "self-train-augmented";
  }
  return "?";
}

inline Provenance provenance_from_string(const std::string& s) {
  for (auto p : {Provenance::manual, Provenance::replaced, Provenance::self_train_augmented})
    if (to_string(p) == s) return p;
  throw FormatError("unknown provenance '" + s + "'");
}

/// Labelled examples per class: k >= 1 dataset indices for every class.
/// Versions are immutable; refining produces a child with `parent` set.
struct PrototypeSet {
  int id = 0;
  std::string dataset_id;
  std::vector<std::vector<std::size_t>> per_class;
  Provenance provenance = Provenance::manual;
  std::optional<int> parent;
  std::vector<std::string> warnings;

  std::size_t classes() const noexcept { return per_class.size(); }
  std::size_t per_class_count() const { return per_class.empty() ? 0 : per_class.front().size(); }
  std::size_t total() const {
    std::size_t n = 0;
    for (const auto& c : per_class) n += c.size();
    return n;
  }

  /// (index, class) pairs in class-major order.
  std::vector<std::pair<std::size_t, int>> labeled() const {
    std::vector<std::pair<std::size_t, int>> out;
    for (std::size_t c = 0; c < per_class.size(); ++c)
      for (auto i : per_class[c]) out.emplace_back(i, static_cast<int>(c));
    return out;
  }

  bool contains(std::size_t index) const {
    for (const auto& c : per_class)
      if (std::find(c.begin(), c.end(), index) != c.end()) return true;
    return false;
  }

  nlohmann::json to_json() const {
    nlohmann::json j{{"id", id},
                     {"dataset_id", dataset_id},
                     {"per_class", per_class},
                     {"provenance", to_string(provenance)},
                     {"warnings", warnings}};
    j["parent"] = parent ? nlohmann::json(*parent) : nlohmann::json(nullptr);
    return j;
  }

  static PrototypeSet from_json(const nlohmann::json& j) {
    PrototypeSet s;
    s.id = j.at("id").get<int>();
    s.dataset_id = j.at("dataset_id").get<std::string>();
    s.per_class = j.at("per_class").get<std::vector<std::vector<std::size_t>>>();
    s.provenance = provenance_from_string(j.at("provenance").get<std::string>());
    if (j.contains("parent") && !j["parent"].is_null()) s.parent = j["parent"].get<int>();
    s.warnings = j.value("warnings", std::vector<std::string>{});
    return s;
  }
};

/// Checks structure against the dataset: every class covered, indices distinct,
/// in range and outside the test split. Hand-picked sets must also have the
/// same multiplicity in every class; self-training sets may fall short.
inline void validate_prototypes(const PrototypeSet& set, const Dataset& dataset) {
  if (set.per_class.size() != dataset.classes())
    throw ValidationError("prototype set covers " + std::to_string(set.per_class.size()) + " classes, dataset has " +
                          std::to_string(dataset.classes()));
  const std::size_t k = set.per_class_count();
  std::set<std::size_t> seen;
  for (std::size_t c = 0; c < set.per_class.size(); ++c) {
    if (set.per_class[c].empty()) throw ValidationError("class " + std::to_string(c) + " has no prototype");
    if (set.provenance != Provenance::self_train_augmented && set.per_class[c].size() != k)
      throw ValidationError("class " + std::to_string(c) + " has " + std::to_string(set.per_class[c].size()) +
                            " prototypes, expected " + std::to_string(k));
    for (auto i : set.per_class[c]) {
      if (i >= dataset.size()) throw ValidationError("prototype index " + std::to_string(i) + " out of range");
      if (dataset.in_test_split(i))
        throw ValidationError("prototype index " + std::to_string(i) + " belongs to the test split");
      if (!seen.insert(i).second) throw ValidationError("prototype index " + std::to_string(i) + " used twice");
    }
  }
}

/// Builds a set from per-class index lists. With `audit`, each prototype's
/// ground truth is compared to its assigned class and mismatches become
/// warnings; the set is still accepted.
inline PrototypeSet select_prototypes(const Dataset& dataset, std::vector<std::vector<std::size_t>> per_class,
                                      bool audit = false, int id = 0) {
  PrototypeSet set{id, dataset.id(), std::move(per_class), Provenance::manual, std::nullopt, {}};
  validate_prototypes(set, dataset);
  if (audit)
    for (std::size_t c = 0; c < set.per_class.size(); ++c)
      for (auto i : set.per_class[c]) {
        const int truth = dataset.true_label(i, LabelAccess::audit);
        if (truth != static_cast<int>(c))
          set.warnings.push_back("prototype " + std::to_string(i) + " assigned class " + std::to_string(c) +
                                 " but audit label is " + std::to_string(truth));
      }
  return set;
}

/// Same, from (index, class) assignments as a human picks them.
inline PrototypeSet select_prototypes(const Dataset& dataset, const std::vector<std::pair<std::size_t, int>>& picks,
                                      bool audit = false, int id = 0) {
  std::vector<std::vector<std::size_t>> per_class(dataset.classes());
  for (const auto& [index, cls] : picks) {
    if (cls < 0 || static_cast<std::size_t>(cls) >= dataset.classes())
      throw ValidationError("class " + std::to_string(cls) + " out of range");
    per_class[cls].push_back(index);
  }
  return select_prototypes(dataset, std::move(per_class), audit, id);
}

/// New version with class `cls`'s prototype(s) swapped for `new_index`
/// (position `slot` when a class has several).
inline PrototypeSet replace_prototype(const PrototypeSet& set, int cls, std::size_t new_index, const Dataset& dataset,
                                      int new_id, std::size_t slot = 0) {
  if (cls < 0 || static_cast<std::size_t>(cls) >= set.classes())
    throw ValidationError("class " + std::to_string(cls) + " out of range");
  auto& current = set.per_class[cls];
  if (slot >= current.size()) throw ValidationError("prototype slot out of range");
  if (current[slot] == new_index) throw ValidationError("replacement index equals the current prototype");
  if (set.contains(new_index))
    throw ValidationError("index " + std::to_string(new_index) + " is already a prototype");
  PrototypeSet next = set;
  next.id = new_id;
  next.per_class[cls][slot] = new_index;
  next.provenance = Provenance::replaced;
  next.parent = set.id;
  next.warnings.clear();
  validate_prototypes(next, dataset);
  return next;
}

/// Versioned, append-only store of prototype sets.
class PrototypeRegistry {
 public:
  int next_id() const {
    std::lock_guard lock(mu_);
    return next_id_;
  }

  const PrototypeSet& add(PrototypeSet set) {
    std::lock_guard lock(mu_);
    if (set.id <= 0) set.id = next_id_;
    if (sets_.count(set.id)) throw ValidationError("prototype set " + std::to_string(set.id) + " already exists");
    next_id_ = std::max(next_id_, set.id + 1);
    return sets_.emplace(set.id, std::move(set)).first->second;
  }

  PrototypeSet get(int id) const {
    std::lock_guard lock(mu_);
    auto it = sets_.find(id);
    if (it == sets_.end()) throw NotFound("prototype set " + std::to_string(id) + " not found");
    return it->second;
  }

  std::vector<PrototypeSet> list() const {
    std::lock_guard lock(mu_);
    std::vector<PrototypeSet> out;
    for (const auto& [id, s] : sets_) out.push_back(s);
    return out;
  }

  PrototypeSet replace(int id, int cls, std::size_t new_index, const Dataset& dataset) {
    std::lock_guard lock(mu_);
    auto it = sets_.find(id);
    if (it == sets_.end()) throw NotFound("prototype set " + std::to_string(id) + " not found");
    PrototypeSet next = replace_prototype(it->second, cls, new_index, dataset, next_id_);
    ++next_id_;
    sets_.emplace(next.id, next);
    return next;
  }

 private:
  mutable std::mutex mu_;
  std::map<int, PrototypeSet> sets_;
  int next_id_ = 1;
};

}  // namespace boss::data
