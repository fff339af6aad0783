#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "json.hpp"

#include "boss/metrics.hpp"

namespace boss::trainer {

enum class Verdict { healthy, instability, local_minimum, undetermined };

inline std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::healthy: return "healthy";
    case Verdict::instability: return "instability";
    case Verdict::local_minimum: return "local-minimum";
    case Verdict::undetermined: return "undetermined";
  }
  return "?";
}

enum class Direction { increase, decrease, refine };

inline std::string to_string(Direction d) {
  switch (d) {
    case Direction::increase: return "increase";
    case Direction::decrease: return "decrease";
    case Direction::refine: return "refine";
  }
  return "?";
}

struct Suggestion {
  std::string parameter;   // "delta", "lambda_u", "weight_decay", "learning_rate", "tau", "prototype:<class>"
  Direction direction;
  std::string note;

  friend bool operator==(const Suggestion& a, const Suggestion& b) {
    return a.parameter == b.parameter && a.direction == b.direction;
  }
};

/// Thresholds in accuracy points (percent). All are heuristics, not fitted.
struct DiagnosisThresholds {
  std::size_t min_evals = 10;
  double collapse_drop = 15.0;       // drop from running max that flags instability
  double plateau_band = 2.0;         // within this of the final running max counts as plateau
  double plateau_fraction = 0.3;     // plateau must exceed this share of evals
  double weak_class_gap = 20.0;      // class below overall by more than this is weak
};

struct Evidence {
  double max_drop = 0;               // points
  std::size_t plateau_length = 0;    // evals
  std::vector<int> weak_classes;
};

struct Diagnosis {
  Verdict verdict = Verdict::undetermined;
  Evidence evidence;
  std::vector<Suggestion> suggestions;

  nlohmann::json to_json() const {
    nlohmann::json s = nlohmann::json::array();
    for (const auto& x : suggestions)
      s.push_back({{"parameter", x.parameter}, {"direction", to_string(x.direction)}, {"note", x.note}});
    return {{"verdict", to_string(verdict)},
            {"evidence",
             {{"max_drop", evidence.max_drop},
              {"plateau_length", evidence.plateau_length},
              {"weak_classes", evidence.weak_classes}}},
            {"suggestions", s}};
  }
};

/// Classifies an accuracy trajectory.
///
/// instability: at some eval the accuracy sits at least `collapse_drop` points
/// under the running max. local-minimum: no collapse, the trailing plateau (evals
/// within `plateau_band` of the final running max) spans more than
/// `plateau_fraction` of all evals, and at least one class trails the overall
/// accuracy by more than `weak_class_gap` at the last eval.
inline Diagnosis diagnose(const std::vector<EvalRecord>& evals, const DiagnosisThresholds& th = {}) {
  Diagnosis d;
  if (evals.size() < th.min_evals) return d;

  double running = -1e300;
  for (const auto& e : evals) {
    running = std::max(running, e.accuracy * 100.0);
    d.evidence.max_drop = std::max(d.evidence.max_drop, running - e.accuracy * 100.0);
  }
  const double final_max = running;
  for (auto it = evals.rbegin(); it != evals.rend() && it->accuracy * 100.0 >= final_max - th.plateau_band - 1e-9; ++it)
    ++d.evidence.plateau_length;
  if (!evals.empty()) {
    const auto& last = evals.back();
    for (std::size_t c = 0; c < last.class_accuracy.size(); ++c)
      if (last.class_accuracy[c] * 100.0 < last.accuracy * 100.0 - th.weak_class_gap)
        d.evidence.weak_classes.push_back(static_cast<int>(c));
  }

  const bool collapsed = d.evidence.max_drop >= th.collapse_drop - 1e-9;
  const bool plateaued = double(d.evidence.plateau_length) > th.plateau_fraction * double(evals.size());
  if (collapsed) {
    d.verdict = Verdict::instability;
    d.suggestions = {
        {"delta", Direction::decrease, "less class balancing (methods 1 and 4)"},
        {"lambda_u", Direction::decrease, "less class balancing (methods 2 and 3)"},
        {"weight_decay", Direction::decrease, ""},
        {"learning_rate", Direction::decrease, ""},
        {"tau", Direction::increase, ""},
    };
  } else if (plateaued && !d.evidence.weak_classes.empty()) {
    d.verdict = Verdict::local_minimum;
    d.suggestions = {
        {"delta", Direction::increase, "more class balancing (methods 1 and 4)"},
        {"lambda_u", Direction::increase, "more class balancing (methods 2 and 3)"},
        {"weight_decay", Direction::increase, ""},
        {"learning_rate", Direction::increase, ""},
        {"tau", Direction::decrease, ""},
    };
    for (int c : d.evidence.weak_classes)
      d.suggestions.push_back({"prototype:" + std::to_string(c), Direction::refine, "choose a more iconic prototype"});
  } else {
    d.verdict = Verdict::healthy;
  }
  return d;
}

/// A run that hit NaN/Inf counts as an instability whatever its eval history.
inline Diagnosis diagnose(const RunMetrics& metrics, const DiagnosisThresholds& th = {}) {
  Diagnosis d = diagnose(metrics.evals, th);
  if (metrics.divergence && d.verdict != Verdict::instability) {
    DiagnosisThresholds forced = th;
    forced.collapse_drop = -1.0;
    forced.min_evals = 0;
    Diagnosis c = diagnose(metrics.evals, forced);
    c.evidence = d.evidence;
    return c;
  }
  return d;
}

}  // namespace boss::trainer
