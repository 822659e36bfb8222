#pragma once

// Internal JSON conversions shared by the manifest and config readers.

#include <nlohmann/json.hpp>

#include "cps/errors.hpp"
#include "cps/model.hpp"

namespace cps {

inline nlohmann::json model_to_json(const ModelSpec& spec) {
  return {{"kind", std::string(to_string(spec.kind))},
          {"widths", spec.widths},
          {"input_shape", spec.input_shape},
          {"classes", spec.classes}};
}

inline ModelSpec model_from_json(const nlohmann::json& j, ModelSpec base = {}) {
  try {
    if (j.contains("preset")) {
      Shape in = j.value("input_shape", base.input_shape);
      base = ModelSpec::preset(j.at("preset").get<std::string>(), in, j.value("classes", base.classes));
    }
    if (j.contains("kind")) base.kind = arch_kind_from_string(j.at("kind").get<std::string>());
    if (j.contains("widths")) base.widths = j.at("widths").get<std::vector<std::size_t>>();
    if (j.contains("input_shape")) base.input_shape = j.at("input_shape").get<Shape>();
    if (j.contains("classes")) base.classes = j.at("classes").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model spec: ") + e.what());
  }
  base.validate();
  return base;
}

}  // namespace cps
