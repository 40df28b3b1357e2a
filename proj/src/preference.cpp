#include "csi/preference.hpp"

#include <cmath>

#include "csi/error.hpp"
#include "csi/log.hpp"

namespace csi {

void RoomTriggerState::note_human_message(TimeMs at_ms) {
  ++messages_since_last_pass;
  if (!oldest_unlabeled_msg_at_ms) oldest_unlabeled_msg_at_ms = at_ms;
}

void RoomTriggerState::reset() {
  messages_since_last_pass = 0;
  oldest_unlabeled_msg_at_ms.reset();
}

bool should_trigger(const RoomTriggerState& state, TimeMs now_ms, const TriggerPolicy& policy) {
  if (state.messages_since_last_pass >= policy.message_trigger) return true;
  return state.oldest_unlabeled_msg_at_ms &&
         now_ms - *state.oldest_unlabeled_msg_at_ms >= policy.time_trigger_ms;
}

std::optional<TimeMs> trigger_deadline(const RoomTriggerState& state, const TriggerPolicy& policy) {
  if (!state.oldest_unlabeled_msg_at_ms) return std::nullopt;
  return *state.oldest_unlabeled_msg_at_ms + policy.time_trigger_ms;
}

std::optional<StoredPreference> PreferenceStore::get(const ParticipantId& who,
                                                     const ItemId& item) const {
  auto it = latest_.find({who, item});
  if (it == latest_.end()) return std::nullopt;
  return it->second;
}

void PreferenceStore::put(const ParticipantId& who, const ItemId& item, int strength,
                          TimeMs at_ms) {
  auto [it, inserted] = latest_.try_emplace({who, item}, StoredPreference{strength, at_ms});
  if (!inserted && at_ms >= it->second.at_ms) it->second = {strength, at_ms};
}

Json to_json(const PreferenceStore& store) {
  Json entries = Json::array();
  for (const auto& [key, pref] : store.entries()) {
    entries.push_back(Json{{"participant", key.first.value()},
                           {"item_id", key.second.value()},
                           {"strength", pref.strength},
                           {"at_ms", pref.at_ms}});
  }
  return entries;
}

ApplyOutcome apply_labels(PreferenceStore& store, std::span<const PreferenceLabel> labels,
                          const std::set<ParticipantId>& human_roster) {
  ApplyOutcome outcome;
  for (const auto& label : labels) {
    if (!human_roster.contains(label.participant)) {
      log::warn("rejecting label from non-roster author '" + label.participant.value() + "'");
      ++outcome.rejected;
      continue;
    }
    if (!label.item.id) throw Error("label item must be resolved before it is stored");
    if (label.strength < -3 || label.strength > 3) {
      log::warn("rejecting out-of-range label strength");
      ++outcome.rejected;
      continue;
    }
    store.put(label.participant, *label.item.id, label.strength, label.at_ms);
    ++outcome.accepted;
  }
  return outcome;
}

const NetPreference* NetPreferenceTable::find(const ItemId& item) const {
  for (const auto& row : rows) {
    if (row.item == item) return &row;
  }
  return nullptr;
}

NetPreferenceTable net_preferences(const PreferenceStore& store, std::size_t roster_size,
                                   const SuggestionCatalog& catalog) {
  if (roster_size == 0) throw Error("net preference needs a non-empty roster");
  std::map<ItemId, std::int64_t> sums;
  for (const auto& [key, pref] : store.entries()) sums[key.second] += pref.strength;

  NetPreferenceTable table;
  table.roster_size = roster_size;
  for (const auto& item : catalog.items()) {
    const auto it = sums.find(item.id);
    const std::int64_t sum = it == sums.end() ? 0 : it->second;
    table.rows.push_back(
        {item.id, sum, static_cast<double>(sum) / static_cast<double>(roster_size)});
  }
  return table;
}

std::string to_string(TieBreak tie_break) {
  switch (tie_break) {
    case TieBreak::none: return "none";
    case TieBreak::first_proposed: return "first_proposed";
    case TieBreak::label: return "label";
  }
  return "?";
}

TieBreak parse_tie_break(const std::string& text) {
  if (text == "none") return TieBreak::none;
  if (text == "first_proposed") return TieBreak::first_proposed;
  if (text == "label") return TieBreak::label;
  throw Error("unknown tie break: " + text);
}

SessionResult select_winner(const NetPreferenceTable& table, const SuggestionCatalog& catalog,
                            TimeMs finalized_at_ms) {
  SessionResult result;
  result.table = table;
  result.finalized_at_ms = finalized_at_ms;
  if (table.rows.empty()) return result;

  // Sums share one denominator, so comparing them is exact.
  std::int64_t best = table.rows.front().sum;
  for (const auto& row : table.rows) best = std::max(best, row.sum);

  std::vector<const CatalogItem*> tied;
  for (const auto& row : table.rows) {
    if (row.sum != best) continue;
    const auto* item = catalog.find(row.item);
    if (item == nullptr) throw Error("net preference row for unknown item " + row.item.value());
    tied.push_back(item);
  }

  const CatalogItem* winner = tied.front();
  if (tied.size() > 1) {
    TimeMs earliest = tied.front()->first_proposed_at_ms;
    for (const auto* item : tied) earliest = std::min(earliest, item->first_proposed_at_ms);
    std::vector<const CatalogItem*> senior;
    for (const auto* item : tied) {
      if (item->first_proposed_at_ms == earliest) senior.push_back(item);
    }
    winner = senior.front();
    result.tie_break = TieBreak::first_proposed;
    if (senior.size() > 1) {
      for (const auto* item : senior) {
        if (item->canonical_label < winner->canonical_label) winner = item;
      }
      result.tie_break = TieBreak::label;
    }
  }
  result.winner = winner->id;
  result.winner_label = winner->canonical_label;
  return result;
}

double round4(double value) { return std::round(value * 10000.0) / 10000.0; }

Json to_json(const SessionResult& result, const SuggestionCatalog& catalog) {
  Json table = Json::array();
  for (const auto& row : result.table.rows) {
    const auto* item = catalog.find(row.item);
    table.push_back(Json{{"item_id", row.item.value()},
                         {"label", item ? item->canonical_label : std::string()},
                         {"sum", row.sum},
                         {"net", round4(row.net)}});
  }
  Json contributions = Json::array();
  for (const auto& c : result.contributions) {
    contributions.push_back(Json{{"participant", c.participant.value()},
                                 {"messages", c.messages},
                                 {"characters", c.characters},
                                 {"messages_per_minute", round4(c.messages_per_minute)},
                                 {"characters_per_minute", round4(c.characters_per_minute)}});
  }
  Json json{{"winner", nullptr},
            {"winner_label", result.winner_label},
            {"tie_break", to_string(result.tie_break)},
            {"roster_size", result.table.roster_size},
            {"finalized_at_ms", result.finalized_at_ms},
            {"table", std::move(table)},
            {"contributions", std::move(contributions)}};
  if (result.winner) json["winner"] = result.winner->value();
  return json;
}

}  // namespace csi
