// Copyright 2026 The safetune Authors
// SPDX-License-Identifier: Apache-2.0

#include "safetune/reward/detection.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "safetune/core/container.hpp"
#include "safetune/core/error.hpp"

namespace safetune::reward {

DetectionResult::DetectionResult(std::string label, double confidence)
    : class_label(std::move(label)), score(std::isnan(confidence) ? 0.0 : std::clamp(confidence, 0.0, 1.0)) {}

void to_json(nlohmann::json& j, const DetectionResult& d) { j = {{"class", d.class_label}, {"score", d.score}}; }

void from_json(const nlohmann::json& j, DetectionResult& d) {
  d = DetectionResult(j.at("class").get<std::string>(), j.at("score").get<double>());
}

ClassWeightTable ClassWeightTable::from_classes(const std::vector<ClassInfo>& classes) {
  ClassWeightTable t;
  for (const auto& c : classes) t.set(c.label, 1.0, c.unsafe);
  return t;
}

ClassWeightTable ClassWeightTable::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw InvalidArgument("class weight table must be a JSON object");
  ClassWeightTable t;
  for (const auto& [label, entry] : j.items()) {
    if (!entry.is_object()) throw InvalidArgument(fmt::format("class '{}' must map to an object", label));
    for (const auto& [key, _] : entry.items()) {
      if (key != "weight" && key != "unsafe") {
        throw InvalidArgument(fmt::format("class '{}' has unknown key '{}'", label, key));
      }
    }
    t.set(label, entry.value("weight", 1.0), entry.value("unsafe", false));
    t.entries_[label].has_weight = entry.contains("weight");
    t.entries_[label].has_unsafe = entry.contains("unsafe");
  }
  return t;
}

ClassWeightTable ClassWeightTable::load(const std::filesystem::path& path) {
  try {
    return from_json(nlohmann::json::parse(read_file(path)));
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(fmt::format("cannot parse class weight file '{}': {}", path.string(), e.what()));
  }
}

void ClassWeightTable::set(const std::string& label, double weight, bool unsafe) {
  if (!(weight >= 0.0)) throw InvalidArgument(fmt::format("class '{}' has negative weight {}", label, weight));
  entries_[label] = {weight, unsafe};
}

void ClassWeightTable::merge(const ClassWeightTable& overrides) {
  for (const auto& [label, e] : overrides.entries_) {
    auto it = entries_.find(label);
    if (it == entries_.end()) {
      entries_[label] = {e.weight, e.unsafe};
      continue;
    }
    if (e.has_weight) it->second.weight = e.weight;
    if (e.has_unsafe) it->second.unsafe = e.unsafe;
  }
}

double ClassWeightTable::weight(const std::string& label) const {
  auto it = entries_.find(label);
  if (it == entries_.end()) throw InvalidArgument(fmt::format("class '{}' is not in the weight table", label));
  return it->second.weight;
}

bool ClassWeightTable::is_unsafe(const std::string& label) const {
  auto it = entries_.find(label);
  return it != entries_.end() && it->second.unsafe;
}

std::set<std::string> ClassWeightTable::unsafe_classes() const {
  std::set<std::string> out;
  for (const auto& [label, e] : entries_)
    if (e.unsafe) out.insert(label);
  return out;
}

std::vector<std::string> ClassWeightTable::labels() const {
  std::vector<std::string> out;
  for (const auto& [label, _] : entries_) out.push_back(label);
  return out;
}

nlohmann::json ClassWeightTable::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [label, e] : entries_) j[label] = {{"weight", e.weight}, {"unsafe", e.unsafe}};
  return j;
}

void ClassWeightTable::validate() const {
  for (const auto& [label, e] : entries_)
    if (!(e.weight >= 0.0)) throw InvalidArgument(fmt::format("class '{}' has negative weight", label));
  if (unsafe_classes().empty()) throw InvalidArgument("class weight table marks no class as unsafe");
}

}  // namespace safetune::reward
