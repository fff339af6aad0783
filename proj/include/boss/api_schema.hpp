#pragma once

#include <string>
#include <vector>

#include "json.hpp"

namespace boss::service {

/// Response schema of every HTTP route, keyed "METHOD /path". The subset of
/// JSON Schema in use: type, enum, properties, required, items,
/// additionalProperties (false only) and local "$ref".
inline const nlohmann::json& api_schema() {
  static const nlohmann::json schema = nlohmann::json::parse(R"json(
{
  "version": 1,
  "definitions": {
    "Error": {
      "type": "object",
      "required": ["error", "message"],
      "properties": {"error": {"type": "string"}, "message": {"type": "string"}}
    },
    "Dataset": {
      "type": "object",
      "required": ["dataset_id", "kind", "classes", "size", "train_size", "test_size", "channels", "height", "width", "warnings"],
      "properties": {
        "dataset_id": {"type": "string"},
        "kind": {"enum": ["synthetic", "cifar10"]},
        "classes": {"type": "integer"},
        "size": {"type": "integer"},
        "train_size": {"type": "integer"},
        "test_size": {"type": "integer"},
        "channels": {"type": "integer"},
        "height": {"type": "integer"},
        "width": {"type": "integer"},
        "warnings": {"type": "array", "items": {"type": "string"}}
      }
    },
    "Sample": {
      "type": "object",
      "required": ["index", "split", "png"],
      "additionalProperties": false,
      "properties": {
        "index": {"type": "integer"},
        "split": {"enum": ["train", "test"]},
        "png": {"type": "string"},
        "true_label": {"type": "integer"}
      }
    },
    "SampleList": {
      "type": "object",
      "required": ["dataset_id", "total", "offset", "limit", "channels", "height", "width", "samples"],
      "properties": {
        "dataset_id": {"type": "string"},
        "total": {"type": "integer"},
        "offset": {"type": "integer"},
        "limit": {"type": "integer"},
        "channels": {"type": "integer"},
        "height": {"type": "integer"},
        "width": {"type": "integer"},
        "samples": {"type": "array", "items": {"$ref": "#/definitions/Sample"}}
      }
    },
    "PrototypeSet": {
      "type": "object",
      "required": ["id", "dataset_id", "per_class", "provenance", "parent", "warnings"],
      "properties": {
        "id": {"type": "integer"},
        "dataset_id": {"type": "string"},
        "per_class": {"type": "array", "items": {"type": "array", "items": {"type": "integer"}}},
        "provenance": {"enum": ["manual", "replaced", "self-train-augmented"]},
        "parent": {"type": ["integer", "null"]},
        "warnings": {"type": "array", "items": {"type": "string"}}
      }
    },
    "PrototypeSetList": {
      "type": "object",
      "required": ["prototype_sets"],
      "properties": {"prototype_sets": {"type": "array", "items": {"$ref": "#/definitions/PrototypeSet"}}}
    },
    "StepRecord": {
      "type": "object",
      "required": ["type", "step", "L_s", "L_u", "L", "included", "lr"],
      "properties": {
        "type": {"enum": ["step"]},
        "step": {"type": "integer"},
        "L_s": {"type": "number"},
        "L_u": {"type": "number"},
        "L": {"type": "number"},
        "included": {"type": "integer"},
        "lr": {"type": "number"}
      }
    },
    "EvalRecord": {
      "type": "object",
      "required": ["type", "step", "accuracy", "class_accuracy", "running_max", "counts", "confident_counts", "thresholds"],
      "properties": {
        "type": {"enum": ["eval"]},
        "step": {"type": "integer"},
        "accuracy": {"type": "number"},
        "class_accuracy": {"type": "array", "items": {"type": "number"}},
        "running_max": {"type": "number"},
        "counts": {"type": "array", "items": {"type": "number"}},
        "confident_counts": {"type": "array", "items": {"type": "number"}},
        "thresholds": {"type": "array", "items": {"type": "number"}}
      }
    },
    "MetricRecord": {
      "type": "object",
      "required": ["type", "step"],
      "properties": {
        "type": {"enum": ["step", "eval", "divergence"]},
        "step": {"type": "integer"},
        "message": {"type": "string"},
        "L_s": {"type": "number"},
        "L_u": {"type": "number"},
        "L": {"type": "number"},
        "included": {"type": "integer"},
        "lr": {"type": "number"},
        "accuracy": {"type": "number"},
        "class_accuracy": {"type": "array", "items": {"type": "number"}},
        "running_max": {"type": "number"},
        "counts": {"type": "array", "items": {"type": "number"}},
        "confident_counts": {"type": "array", "items": {"type": "number"}},
        "thresholds": {"type": "array", "items": {"type": "number"}}
      }
    },
    "MetricRecords": {
      "type": "object",
      "required": ["run_id", "since", "state", "records"],
      "properties": {
        "run_id": {"type": "string"},
        "since": {"type": "integer"},
        "state": {"$ref": "#/definitions/RunState"},
        "records": {"type": "array", "items": {"$ref": "#/definitions/MetricRecord"}}
      }
    },
    "Diagnosis": {
      "type": "object",
      "required": ["verdict", "evidence", "suggestions"],
      "properties": {
        "verdict": {"enum": ["healthy", "instability", "local-minimum", "undetermined"]},
        "evidence": {
          "type": "object",
          "required": ["max_drop", "plateau_length", "weak_classes"],
          "properties": {
            "max_drop": {"type": "number"},
            "plateau_length": {"type": "integer"},
            "weak_classes": {"type": "array", "items": {"type": "integer"}}
          }
        },
        "suggestions": {
          "type": "array",
          "items": {
            "type": "object",
            "required": ["parameter", "direction", "note"],
            "properties": {
              "parameter": {"type": "string"},
              "direction": {"enum": ["increase", "decrease", "refine"]},
              "note": {"type": "string"}
            }
          }
        }
      }
    },
    "RunState": {"enum": ["pending", "running", "diverged", "completed", "stopped", "failed"]},
    "Lineage": {
      "type": "object",
      "required": ["source_run", "prototype_set_id", "parent_prototype_set"],
      "properties": {
        "source_run": {"type": ["string", "null"]},
        "prototype_set_id": {"type": "integer"},
        "parent_prototype_set": {"type": ["integer", "null"]}
      }
    },
    "RunSummary": {
      "type": "object",
      "required": ["run_id", "state", "config", "steps_completed", "total_steps", "best_accuracy", "latest", "diagnosis", "lineage", "error"],
      "properties": {
        "run_id": {"type": "string"},
        "state": {"$ref": "#/definitions/RunState"},
        "config": {"type": "object"},
        "steps_completed": {"type": "integer"},
        "total_steps": {"type": "integer"},
        "best_accuracy": {"type": ["number", "null"]},
        "latest": {
          "type": "object",
          "required": ["step", "eval"],
          "properties": {
            "step": {"type": ["object", "null"]},
            "eval": {"type": ["object", "null"]}
          }
        },
        "diagnosis": {"$ref": "#/definitions/Diagnosis"},
        "lineage": {"$ref": "#/definitions/Lineage"},
        "error": {"type": ["string", "null"]}
      }
    },
    "RunList": {
      "type": "object",
      "required": ["runs"],
      "properties": {
        "runs": {
          "type": "array",
          "items": {
            "type": "object",
            "required": ["run_id", "state", "lineage"],
            "properties": {
              "run_id": {"type": "string"},
              "state": {"$ref": "#/definitions/RunState"},
              "lineage": {"$ref": "#/definitions/Lineage"}
            }
          }
        }
      }
    },
    "RunAck": {
      "type": "object",
      "required": ["run_id", "state"],
      "properties": {"run_id": {"type": "string"}, "state": {"$ref": "#/definitions/RunState"}}
    },
    "SelfTrainAck": {
      "type": "object",
      "required": ["run_id", "state", "source_run", "prototype_set_id", "labeled_count", "purity", "warnings"],
      "properties": {
        "run_id": {"type": "string"},
        "state": {"$ref": "#/definitions/RunState"},
        "source_run": {"type": "string"},
        "prototype_set_id": {"type": "integer"},
        "labeled_count": {"type": "integer"},
        "purity": {"type": ["number", "null"]},
        "warnings": {"type": "array", "items": {"type": "string"}}
      }
    },
    "ClassAccuracies": {
      "type": "object",
      "required": ["run_id", "step", "latest", "history"],
      "properties": {
        "run_id": {"type": "string"},
        "step": {"type": ["integer", "null"]},
        "latest": {"type": "array", "items": {"type": "number"}},
        "history": {
          "type": "array",
          "items": {
            "type": "object",
            "required": ["step", "accuracy", "class_accuracy"],
            "properties": {
              "step": {"type": "integer"},
              "accuracy": {"type": "number"},
              "class_accuracy": {"type": "array", "items": {"type": "number"}}
            }
          }
        }
      }
    },
    "ClassCounts": {
      "type": "object",
      "required": ["run_id", "step", "counts", "confident_counts", "thresholds"],
      "properties": {
        "run_id": {"type": "string"},
        "step": {"type": ["integer", "null"]},
        "counts": {"type": "array", "items": {"type": "number"}},
        "confident_counts": {"type": "array", "items": {"type": "number"}},
        "thresholds": {"type": "array", "items": {"type": "number"}}
      }
    },
    "PseudoLabels": {
      "type": "object",
      "required": ["run_id", "total", "records"],
      "properties": {
        "run_id": {"type": "string"},
        "total": {"type": "integer"},
        "records": {
          "type": "array",
          "items": {
            "type": "object",
            "required": ["rank", "index", "label", "confidence"],
            "additionalProperties": false,
            "properties": {
              "rank": {"type": "integer"},
              "index": {"type": "integer"},
              "label": {"type": "integer"},
              "confidence": {"type": "number"},
              "true_label": {"type": "integer"}
            }
          }
        }
      }
    },
    "PresetList": {
      "type": "object",
      "required": ["presets"],
      "properties": {"presets": {"type": "array", "items": {"type": "object"}}}
    }
  },
  "routes": {
    "GET /schema": {"type": "object"},
    "GET /presets": {"$ref": "#/definitions/PresetList"},
    "POST /datasets/synthetic": {"$ref": "#/definitions/Dataset"},
    "POST /datasets/cifar10": {"$ref": "#/definitions/Dataset"},
    "GET /datasets/{id}": {"$ref": "#/definitions/Dataset"},
    "GET /datasets/{id}/samples": {"$ref": "#/definitions/SampleList"},
    "GET /prototype-sets": {"$ref": "#/definitions/PrototypeSetList"},
    "POST /prototype-sets": {"$ref": "#/definitions/PrototypeSet"},
    "GET /prototype-sets/{id}": {"$ref": "#/definitions/PrototypeSet"},
    "POST /prototype-sets/{id}/replace": {"$ref": "#/definitions/PrototypeSet"},
    "GET /runs": {"$ref": "#/definitions/RunList"},
    "POST /runs": {"$ref": "#/definitions/RunAck"},
    "GET /runs/{id}": {"$ref": "#/definitions/RunSummary"},
    "GET /runs/{id}/metrics": {"$ref": "#/definitions/MetricRecords"},
    "GET /runs/{id}/class-accuracies": {"$ref": "#/definitions/ClassAccuracies"},
    "GET /runs/{id}/class-counts": {"$ref": "#/definitions/ClassCounts"},
    "GET /runs/{id}/diagnosis": {"$ref": "#/definitions/Diagnosis"},
    "GET /runs/{id}/pseudo-labels": {"$ref": "#/definitions/PseudoLabels"},
    "POST /runs/{id}/self-train": {"$ref": "#/definitions/SelfTrainAck"},
    "POST /runs/{id}/stop": {"$ref": "#/definitions/RunAck"},
    "error": {"$ref": "#/definitions/Error"}
  }
}
)json");
  return schema;
}

namespace detail {

inline bool has_type(const nlohmann::json& v, const std::string& t) {
  if (t == "object") return v.is_object();
  if (t == "array") return v.is_array();
  if (t == "string") return v.is_string();
  if (t == "integer") return v.is_number_integer();
  if (t == "number") return v.is_number();
  if (t == "boolean") return v.is_boolean();
  if (t == "null") return v.is_null();
  return false;
}

inline void validate(const nlohmann::json& root, const nlohmann::json& s, const nlohmann::json& v,
                     const std::string& path, std::vector<std::string>& errors) {
  if (s.contains("$ref")) {
    const auto ref = s["$ref"].get<std::string>();
    const std::string prefix = "#/definitions/";
    if (ref.rfind(prefix, 0) != 0 || !root["definitions"].contains(ref.substr(prefix.size()))) {
      errors.push_back(path + ": unresolved $ref " + ref);
      return;
    }
    validate(root, root["definitions"][ref.substr(prefix.size())], v, path, errors);
    return;
  }
  if (s.contains("type")) {
    bool ok = false;
    if (s["type"].is_array()) {
      for (const auto& t : s["type"]) ok = ok || has_type(v, t.get<std::string>());
    } else {
      ok = has_type(v, s["type"].get<std::string>());
    }
    if (!ok) {
      errors.push_back(path + ": expected " + s["type"].dump() + ", got " + v.type_name());
      return;
    }
  }
  if (s.contains("enum")) {
    bool found = false;
    for (const auto& e : s["enum"]) found = found || e == v;
    if (!found) errors.push_back(path + ": " + v.dump() + " not in " + s["enum"].dump());
  }
  if (v.is_object()) {
    for (const auto& key : s.value("required", nlohmann::json::array()))
      if (!v.contains(key.get<std::string>())) errors.push_back(path + ": missing " + key.get<std::string>());
    const auto props = s.value("properties", nlohmann::json::object());
    for (const auto& [key, value] : v.items()) {
      if (props.contains(key)) validate(root, props[key], value, path + "." + key, errors);
      else if (s.contains("additionalProperties") && s["additionalProperties"] == false)
        errors.push_back(path + ": unexpected property " + key);
    }
  }
  if (v.is_array() && s.contains("items"))
    for (std::size_t i = 0; i < v.size(); ++i)
      validate(root, s["items"], v[i], path + "[" + std::to_string(i) + "]", errors);
}

}  // namespace detail

/// Validates `value` against the schema registered for `route`; returns the
/// violations found (empty when the value conforms).
inline std::vector<std::string> validate_response(const std::string& route, const nlohmann::json& value,
                                                  const nlohmann::json& schema = api_schema()) {
  std::vector<std::string> errors;
  if (!schema["routes"].contains(route)) return {"no schema for route " + route};
  detail::validate(schema, schema["routes"][route], value, "$", errors);
  return errors;
}

/// Validates `value` against one named schema definition.
inline std::vector<std::string> validate_definition(const std::string& name, const nlohmann::json& value,
                                                    const nlohmann::json& schema = api_schema()) {
  std::vector<std::string> errors;
  if (!schema["definitions"].contains(name)) return {"no definition " + name};
  detail::validate(schema, schema["definitions"][name], value, "$", errors);
  return errors;
}

}  // namespace boss::service
