#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "csi/catalog.hpp"
#include "csi/ids.hpp"
#include "csi/json.hpp"
#include "csi/reports.hpp"

namespace csi {

// Labeling fires after `message_trigger` human messages in a room, or
// `time_trigger_ms` after the oldest unlabeled one, whichever is first.
struct TriggerPolicy {
  std::int64_t message_trigger = 5;
  TimeMs time_trigger_ms = 15000;
};

struct RoomTriggerState {
  std::int64_t messages_since_last_pass = 0;
  std::optional<TimeMs> oldest_unlabeled_msg_at_ms;

  void note_human_message(TimeMs at_ms);
  void reset();

  bool operator==(const RoomTriggerState&) const = default;
};

bool should_trigger(const RoomTriggerState& state, TimeMs now_ms, const TriggerPolicy& policy);

// Earliest time at which the time rule fires, if any message is pending.
std::optional<TimeMs> trigger_deadline(const RoomTriggerState& state, const TriggerPolicy& policy);

struct StoredPreference {
  int strength = 0;
  TimeMs at_ms = 0;
  bool operator==(const StoredPreference&) const = default;
};

// Latest-wins (participant, item) -> strength. An absent key means 0.
class PreferenceStore {
 public:
  using Key = std::pair<ParticipantId, ItemId>;

  const std::map<Key, StoredPreference>& entries() const { return latest_; }
  std::optional<StoredPreference> get(const ParticipantId& who, const ItemId& item) const;
  // Stores the label unless a strictly later one is already held.
  void put(const ParticipantId& who, const ItemId& item, int strength, TimeMs at_ms);

  bool operator==(const PreferenceStore&) const = default;

 private:
  std::map<Key, StoredPreference> latest_;
};

Json to_json(const PreferenceStore& store);

struct ApplyOutcome {
  std::size_t accepted = 0;
  std::size_t rejected = 0;
};

// Labels must carry resolved item ids. Labels for participants outside the
// human roster (agents included) are rejected and logged.
ApplyOutcome apply_labels(PreferenceStore& store, std::span<const PreferenceLabel> labels,
                          const std::set<ParticipantId>& human_roster);

struct NetPreference {
  ItemId item;
  std::int64_t sum = 0;  // sum of stored strengths
  double net = 0.0;      // sum / roster size

  bool operator==(const NetPreference&) const = default;
};

// One row per catalog item, in catalog order.
struct NetPreferenceTable {
  std::size_t roster_size = 0;
  std::vector<NetPreference> rows;

  const NetPreference* find(const ItemId& item) const;
};

// roster_size is the whole session's human roster. Throws on zero.
NetPreferenceTable net_preferences(const PreferenceStore& store, std::size_t roster_size,
                                   const SuggestionCatalog& catalog);

enum class TieBreak { none, first_proposed, label };
std::string to_string(TieBreak tie_break);
TieBreak parse_tie_break(const std::string& text);

struct UserContribution {
  ParticipantId participant;
  std::int64_t messages = 0;
  std::int64_t characters = 0;
  double messages_per_minute = 0.0;
  double characters_per_minute = 0.0;

  bool operator==(const UserContribution&) const = default;
};

struct SessionResult {
  std::optional<ItemId> winner;  // nullopt: empty catalog
  std::string winner_label;
  TieBreak tie_break = TieBreak::none;
  NetPreferenceTable table;
  TimeMs finalized_at_ms = 0;
  std::vector<UserContribution> contributions;
};

// Argmax of net preference; ties go to the earlier first proposal, then the
// lexicographically smaller label.
SessionResult select_winner(const NetPreferenceTable& table, const SuggestionCatalog& catalog,
                            TimeMs finalized_at_ms = 0);

// Nets rounded to 4 decimals.
Json to_json(const SessionResult& result, const SuggestionCatalog& catalog);
double round4(double value);

}  // namespace csi
