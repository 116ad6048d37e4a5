#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace contron {

/// A knowledge-base item as seen by the enricher: English label, description
/// and aliases, plus the instance-of / subclass-of targets used as
/// categories.
struct KbEntity {
  std::string entity_id;
  std::string label;
  std::optional<std::string> description;
  std::vector<std::string> aliases;
  std::vector<std::string> category_ids;
  std::vector<std::string> category_labels;

  friend bool operator==(const KbEntity&, const KbEntity&) = default;
};

inline nlohmann::ordered_json to_json(const KbEntity& e) {
  nlohmann::ordered_json j;
  j["entity_id"] = e.entity_id;
  j["label"] = e.label;
  j["description"] = e.description ? nlohmann::ordered_json(*e.description)
                                   : nlohmann::ordered_json(nullptr);
  j["aliases"] = e.aliases;
  j["category_ids"] = e.category_ids;
  j["category_labels"] = e.category_labels;
  return j;
}

/// Throws nlohmann::json exceptions on malformed input; callers translate.
inline KbEntity entity_from_json(const nlohmann::json& j) {
  KbEntity e;
  e.entity_id = j.at("entity_id").get<std::string>();
  e.label = j.value("label", "");
  if (j.contains("description") && j["description"].is_string()) {
    e.description = j["description"].get<std::string>();
  }
  e.aliases = j.value("aliases", std::vector<std::string>{});
  e.category_ids = j.value("category_ids", std::vector<std::string>{});
  e.category_labels = j.value("category_labels", std::vector<std::string>{});
  return e;
}

}  // namespace contron
