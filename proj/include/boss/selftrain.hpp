#pragma once

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "boss/config.hpp"
#include "boss/dataset.hpp"
#include "boss/error.hpp"
#include "boss/prototypes.hpp"
#include "boss/pseudo_dump.hpp"
#include "boss/trainer.hpp"

namespace boss::selftrain {

struct Promotion {
  std::size_t index = 0;
  int label = 0;
  double confidence = 0;
};

struct Promotions {
  std::vector<std::vector<Promotion>> per_class;
  std::vector<std::string> warnings;   // one per class that fell short of k

  std::size_t total() const {
    std::size_t n = 0;
    for (const auto& c : per_class) n += c.size();
    return n;
  }
};

/// Walks the sorted dump once and keeps, per class, the first k records with
/// that pseudo-label that are not already prototypes.
inline Promotions select_top_k(const std::vector<trainer::DumpRecord>& dump, std::size_t k,
                               const data::PrototypeSet& prototypes) {
  if (dump.empty()) throw DataError("pseudo-label dump is empty");
  const std::size_t classes = prototypes.classes();
  Promotions p;
  p.per_class.resize(classes);
  for (const auto& r : dump) {
    if (r.label < 0 || static_cast<std::size_t>(r.label) >= classes) throw DataError("dump label outside class range");
    auto& bucket = p.per_class[r.label];
    if (bucket.size() >= k || prototypes.contains(r.index)) continue;
    bucket.push_back({r.index, r.label, r.confidence});
  }
  for (std::size_t c = 0; c < classes; ++c)
    if (p.per_class[c].size() < k)
      p.warnings.push_back("class " + std::to_string(c) + ": only " + std::to_string(p.per_class[c].size()) + " of " +
                           std::to_string(k) + " promotions available");
  return p;
}

/// Prototypes plus promotions as a new self-train set (k+1 per class when no
/// class falls short). Promoted samples carry their pseudo-labels.
inline data::PrototypeSet assemble_labeled_set(const data::PrototypeSet& prototypes, const Promotions& promotions,
                                               int new_id = 0) {
  if (promotions.per_class.size() != prototypes.classes()) throw AssemblyError("promotion/prototype class mismatch");
  data::PrototypeSet out = prototypes;
  out.id = new_id;
  out.parent = prototypes.id;
  out.warnings = promotions.warnings;
  bool added = false;
  for (std::size_t c = 0; c < out.per_class.size(); ++c)
    for (const auto& pr : promotions.per_class[c]) {
      if (out.contains(pr.index))
        throw AssemblyError("promoted index " + std::to_string(pr.index) + " collides with the labeled set");
      out.per_class[c].push_back(pr.index);
      added = true;
    }
  if (added) out.provenance = data::Provenance::self_train_augmented;
  return out;
}

/// Fraction of promotions whose pseudo-label matches ground truth (audit read).
inline double purity_audit(const Promotions& promotions, const data::Dataset& dataset) {
  std::size_t total = 0, right = 0;
  for (const auto& cls : promotions.per_class)
    for (const auto& pr : cls) {
      ++total;
      if (dataset.true_label(pr.index, data::LabelAccess::audit) == pr.label) ++right;
    }
  return total ? double(right) / double(total) : 1.0;
}

struct SelfTrainPlan {
  std::string source_run_id;
  std::size_t k_per_class = 5;
  data::PrototypeSet labeled_set;
  std::optional<double> purity;
  std::vector<std::string> warnings;

  nlohmann::json to_json() const {
    nlohmann::json j{{"source_run_id", source_run_id},
                     {"k_per_class", k_per_class},
                     {"labeled_set", labeled_set.to_json()},
                     {"labeled_count", labeled_set.total()},
                     {"warnings", warnings}};
    j["purity"] = purity ? nlohmann::json(*purity) : nlohmann::json(nullptr);
    return j;
  }
};

/// Builds the plan from a finished run's dump. The purity figure is computed
/// only when `audit_dataset` is given.
inline SelfTrainPlan make_plan(const std::string& source_run_id, const std::vector<trainer::DumpRecord>& dump,
                               std::size_t k, const data::PrototypeSet& prototypes, int new_set_id,
                               const data::Dataset* audit_dataset = nullptr) {
  if (k < 1) throw ValidationError("k per class must be at least 1");
  const auto promos = select_top_k(dump, k, prototypes);
  SelfTrainPlan plan{source_run_id, k, assemble_labeled_set(prototypes, promos, new_set_id), std::nullopt,
                     promos.warnings};
  if (audit_dataset) plan.purity = purity_audit(promos, *audit_dataset);
  return plan;
}

/// Default hyper-parameters for the iteration: the self-training row matching
/// the family of the source preset ("svhn" or, by default, "cifar").
inline trainer::RunConfig iteration_config(const trainer::RunConfig& source, const std::string& family = "cifar") {
  trainer::RunConfig c = trainer::load_preset(family == "svhn" ? "svhn-selftrain" : "cifar-selftrain", source);
  c.prototype_set_id = 0;
  return c;
}

/// Trains the next run on the enlarged labeled set.
inline trainer::TrainResult run_iteration(const SelfTrainPlan& plan, const trainer::RunConfig& config,
                                          const data::Dataset& dataset, const trainer::TrainCallbacks& callbacks = {},
                                          const trainer::RunOutput& output = {}) {
  if (plan.labeled_set.total() == 0) throw SequencingError("self-train plan has no labeled set");
  if (output.enabled()) {
    std::filesystem::create_directories(output.dir);
    io::write_file((output.dir / "selftrain_plan.json").string(), plan.to_json().dump(2));
  }
  return trainer::train(config, dataset, plan.labeled_set, callbacks, output);
}

}  // namespace boss::selftrain
