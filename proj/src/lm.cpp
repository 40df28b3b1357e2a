#include "csi/lm.hpp"

#include <algorithm>
#include <cstdlib>
#include <map>

#include "csi/log.hpp"
#include "csi/markers.hpp"

namespace csi {

namespace {

StanceKind stance_of(MarkerKind kind) {
  switch (kind) {
    case MarkerKind::propose: return StanceKind::proposed;
    case MarkerKind::oppose: return StanceKind::opposed;
    case MarkerKind::support:
    case MarkerKind::relay: return StanceKind::supported;
  }
  return StanceKind::supported;
}

ItemRef resolve(const SuggestionCatalog& catalog, const std::string& text) {
  ItemRef ref{std::nullopt, text};
  if (const auto* item = catalog.find_alias(text)) ref.id = item->id;
  return ref;
}

// Merges entries sharing (item, kind): strongest conviction, union of evidence.
std::vector<StanceEntry> merge_entries(std::vector<StanceEntry> entries) {
  std::vector<StanceEntry> merged;
  std::map<std::pair<std::string, StanceKind>, std::size_t> index;
  for (auto& entry : entries) {
    const std::string key = entry.item.id ? "#" + entry.item.id->value() : normalize_item(entry.item.text);
    auto [it, inserted] = index.try_emplace({key, entry.kind}, merged.size());
    if (inserted) {
      merged.push_back(std::move(entry));
      continue;
    }
    auto& target = merged[it->second];
    if (std::abs(entry.conviction) > std::abs(target.conviction)) target.conviction = entry.conviction;
    for (auto id : entry.evidence) {
      if (std::find(target.evidence.begin(), target.evidence.end(), id) == target.evidence.end()) {
        target.evidence.push_back(id);
      }
    }
    target.first_evidence_at_ms = std::min(target.first_evidence_at_ms, entry.first_evidence_at_ms);
  }
  return merged;
}

std::string summarize(const std::vector<StanceEntry>& entries) {
  std::string out;
  for (const auto& e : entries) {
    if (!out.empty()) out += "; ";
    out += to_string(e.kind) + " " + e.item.text + " (" + (e.conviction > 0 ? "+" : "") +
           std::to_string(e.conviction) + ")";
  }
  return out;
}

}  // namespace

ObserverReport MockLanguageModel::distill_dialog(const DialogBlock& block,
                                                 const SuggestionCatalog& catalog) {
  ObserverReport report{block.room, block.cycle_index, {}, {}, false};
  std::vector<StanceEntry> raw;
  for (const auto& message : block.messages) {
    for (const auto& marker : parse_markers(message.body)) {
      raw.push_back(StanceEntry{resolve(catalog, marker.item), stance_of(marker.kind),
                                marker.signed_strength(), {message.id}, message.timestamp_ms});
    }
  }
  report.entries = merge_entries(std::move(raw));
  report.summary_text = summarize(report.entries);
  return report;
}

std::vector<PreferenceLabel> MockLanguageModel::label_preferences(const DialogBlock& block,
                                                                  const SuggestionCatalog& catalog,
                                                                  const Roster& roster) {
  std::vector<PreferenceLabel> labels;
  std::map<std::pair<ParticipantId, std::string>, std::size_t> index;
  for (const auto& message : block.messages) {
    if (!message.author.is_human()) continue;
    const auto& who = message.author.participant;
    if (std::find(roster.begin(), roster.end(), who) == roster.end()) continue;
    for (const auto& marker : parse_markers(message.body)) {
      if (marker.kind == MarkerKind::relay) continue;
      PreferenceLabel label{who, resolve(catalog, marker.item), marker.signed_strength(),
                            message.timestamp_ms};
      auto [it, inserted] = index.try_emplace({who, normalize_item(marker.item)}, labels.size());
      if (inserted) {
        labels.push_back(std::move(label));
      } else {
        labels[it->second] = std::move(label);
      }
    }
  }
  return labels;
}

std::optional<std::string> MockLanguageModel::phrase_surrogate(const ObserverReport& report,
                                                               SurrogateMode mode,
                                                               std::string_view source_room_name) {
  return template_surrogate_text(report, mode, source_room_name);
}

std::optional<std::string> template_surrogate_text(const ObserverReport& report, SurrogateMode mode,
                                                   std::string_view source_room_name) {
  if (report.entries.empty()) return std::nullopt;
  std::vector<std::string> clauses;
  for (const auto& entry : report.entries) {
    const std::string relay = render_marker({MarkerKind::relay, std::string(trim(entry.item.text)), 1});
    const bool against = entry.kind == StanceKind::opposed;
    if (mode == SurrogateMode::overt) {
      clauses.push_back(against ? "they have doubts about " + relay : "they favor " + relay);
    } else {
      clauses.push_back(against ? "I have real doubts about " + relay : "I think " + relay + " deserves support");
    }
  }
  std::string joined;
  for (std::size_t i = 0; i < clauses.size(); ++i) {
    if (i > 0) joined += (i + 1 == clauses.size()) ? ", and " : ", ";
    joined += clauses[i];
  }
  if (mode == SurrogateMode::overt) {
    return "I've been observing " + std::string(source_room_name) + ", and " + joined + ".";
  }
  return "From my perspective, " + joined + ".";
}

ObserverReport distill_or_degrade(LanguageModel& backend, const DialogBlock& block,
                                  const SuggestionCatalog& catalog) {
  ObserverReport empty{block.room, block.cycle_index, {}, {}, false};
  if (block.empty()) return empty;

  ObserverReport report;
  try {
    report = backend.distill_dialog(block, catalog);
  } catch (const std::exception& e) {
    log::warn("observer " + room_key(block.room) + " cycle " + std::to_string(block.cycle_index) +
              " degraded: " + e.what());
    empty.degraded = true;
    return empty;
  }
  report.room = block.room;
  report.cycle_index = block.cycle_index;

  std::map<std::uint64_t, TimeMs> times;
  for (const auto& m : block.messages) times.emplace(m.id.value(), m.timestamp_ms);
  const TimeMs block_start = block.messages.front().timestamp_ms;

  std::vector<StanceEntry> kept;
  for (auto& entry : report.entries) {
    if (!is_valid_stance(entry.kind, entry.conviction) || trim(entry.item.text).empty()) {
      log::warn("dropping invalid stance entry for '" + entry.item.text + "'");
      continue;
    }
    if (entry.item.id && catalog.find(*entry.item.id) == nullptr) entry.item.id.reset();
    std::vector<MessageId> evidence;
    TimeMs first = -1;
    for (auto id : entry.evidence) {
      auto it = times.find(id.value());
      if (it == times.end()) continue;
      evidence.push_back(id);
      if (first < 0 || it->second < first) first = it->second;
    }
    entry.evidence = std::move(evidence);
    entry.first_evidence_at_ms = first < 0 ? block_start : first;
    kept.push_back(std::move(entry));
  }
  report.entries = merge_entries(std::move(kept));
  return report;
}

std::vector<PreferenceLabel> labels_or_degrade(LanguageModel& backend, const DialogBlock& block,
                                               const SuggestionCatalog& catalog,
                                               const Roster& roster) {
  if (block.empty()) return {};
  std::vector<PreferenceLabel> labels;
  try {
    labels = backend.label_preferences(block, catalog, roster);
  } catch (const std::exception& e) {
    log::warn("labeling " + room_key(block.room) + " degraded: " + e.what());
    return {};
  }
  std::erase_if(labels, [&](const PreferenceLabel& label) {
    const bool member = std::find(roster.begin(), roster.end(), label.participant) != roster.end();
    const bool in_range = label.strength >= -3 && label.strength <= 3;
    if (!member || !in_range || trim(label.item.text).empty()) {
      log::warn("dropping label for '" + label.participant.value() + "'");
      return true;
    }
    return false;
  });
  for (auto& label : labels) {
    if (label.item.id && catalog.find(*label.item.id) == nullptr) label.item.id.reset();
  }
  return labels;
}

std::optional<std::string> phrase_or_fallback(LanguageModel& backend, const ObserverReport& report,
                                              SurrogateMode mode, std::string_view source_room_name) {
  if (report.entries.empty()) return std::nullopt;
  try {
    auto text = backend.phrase_surrogate(report, mode, source_room_name);
    if (text && !trim(*text).empty()) return text;
  } catch (const std::exception& e) {
    log::warn(std::string("surrogate phrasing fell back to template: ") + e.what());
  }
  return template_surrogate_text(report, mode, source_room_name);
}

}  // namespace csi
