#include "csi/reports.hpp"

#include "csi/error.hpp"

namespace csi {

std::string to_string(StanceKind kind) {
  switch (kind) {
    case StanceKind::proposed: return "proposed";
    case StanceKind::supported: return "supported";
    case StanceKind::opposed: return "opposed";
  }
  return "?";
}

StanceKind parse_stance_kind(const std::string& text) {
  if (text == "proposed") return StanceKind::proposed;
  if (text == "supported") return StanceKind::supported;
  if (text == "opposed") return StanceKind::opposed;
  throw Error("unknown stance kind: '" + text + "'");
}

bool is_valid_stance(StanceKind kind, int conviction) {
  if (conviction == 0 || conviction < -3 || conviction > 3) return false;
  return kind == StanceKind::opposed ? conviction < 0 : conviction > 0;
}

Json to_json(const ItemRef& item) {
  Json json{{"id", nullptr}, {"text", item.text}};
  if (item.id) json["id"] = item.id->value();
  return json;
}

ItemRef item_ref_from_json(const Json& json) {
  ItemRef item;
  if (!json.at("id").is_null()) item.id = ItemId{json.at("id").get<std::string>()};
  item.text = json.at("text").get<std::string>();
  return item;
}

Json to_json(const StanceEntry& entry) {
  Json evidence = Json::array();
  for (auto id : entry.evidence) evidence.push_back(id.value());
  return Json{{"item", to_json(entry.item)},
              {"kind", to_string(entry.kind)},
              {"conviction", entry.conviction},
              {"evidence", std::move(evidence)},
              {"first_evidence_at_ms", entry.first_evidence_at_ms}};
}

StanceEntry stance_entry_from_json(const Json& json) {
  StanceEntry entry;
  entry.item = item_ref_from_json(json.at("item"));
  entry.kind = parse_stance_kind(json.at("kind").get<std::string>());
  entry.conviction = json.at("conviction").get<int>();
  for (const auto& id : json.at("evidence")) entry.evidence.emplace_back(id.get<std::uint64_t>());
  entry.first_evidence_at_ms = json.at("first_evidence_at_ms").get<TimeMs>();
  return entry;
}

Json to_json(const ObserverReport& report) {
  Json entries = Json::array();
  for (const auto& e : report.entries) entries.push_back(to_json(e));
  return Json{{"room", room_key(report.room)},
              {"cycle_index", report.cycle_index},
              {"entries", std::move(entries)},
              {"summary_text", report.summary_text},
              {"degraded", report.degraded}};
}

ObserverReport observer_report_from_json(const Json& json) {
  ObserverReport report;
  report.room = parse_room_key(json.at("room").get<std::string>());
  report.cycle_index = json.at("cycle_index").get<std::uint64_t>();
  for (const auto& e : json.at("entries")) report.entries.push_back(stance_entry_from_json(e));
  report.summary_text = json.at("summary_text").get<std::string>();
  report.degraded = json.at("degraded").get<bool>();
  return report;
}

Json to_json(const PreferenceLabel& label) {
  return Json{{"participant", label.participant.value()},
              {"item", to_json(label.item)},
              {"strength", label.strength},
              {"at_ms", label.at_ms}};
}

PreferenceLabel preference_label_from_json(const Json& json) {
  PreferenceLabel label;
  label.participant = ParticipantId{json.at("participant").get<std::string>()};
  label.item = item_ref_from_json(json.at("item"));
  label.strength = json.at("strength").get<int>();
  label.at_ms = json.at("at_ms").get<TimeMs>();
  return label;
}

}  // namespace csi
