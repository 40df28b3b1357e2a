#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "csi/domain.hpp"
#include "csi/ids.hpp"
#include "csi/json.hpp"

namespace csi {

// All messages in a room since the previous cycle of the same kind.
struct DialogBlock {
  RoomId room;
  std::uint64_t cycle_index = 0;
  std::vector<Message> messages;

  bool empty() const { return messages.empty(); }
};

// Reference to a suggestion: a catalog id once resolved, plus the text the
// dialog used for it.
struct ItemRef {
  std::optional<ItemId> id;
  std::string text;

  bool operator==(const ItemRef&) const = default;
};

enum class StanceKind { proposed, supported, opposed };

std::string to_string(StanceKind kind);
StanceKind parse_stance_kind(const std::string& text);

struct StanceEntry {
  ItemRef item;
  StanceKind kind = StanceKind::proposed;
  // Non-zero, in [-3, 3]; positive for proposed/supported, negative for opposed.
  int conviction = 1;
  std::vector<MessageId> evidence;
  // Timestamp of the earliest evidencing message, filled from the block.
  TimeMs first_evidence_at_ms = 0;

  bool operator==(const StanceEntry&) const = default;
};

// True when conviction is in range, non-zero and its sign matches kind.
bool is_valid_stance(StanceKind kind, int conviction);

struct ObserverReport {
  RoomId room;
  std::uint64_t cycle_index = 0;
  std::vector<StanceEntry> entries;
  std::string summary_text;
  // Set when the backend failed and the report was replaced by an empty one.
  bool degraded = false;

  bool empty() const { return entries.empty(); }
  bool operator==(const ObserverReport&) const = default;
};

struct PreferenceLabel {
  ParticipantId participant;
  ItemRef item;
  int strength = 0;  // [-3, 3]
  TimeMs at_ms = 0;

  bool operator==(const PreferenceLabel&) const = default;
};

using Roster = std::vector<ParticipantId>;

Json to_json(const ItemRef& item);
ItemRef item_ref_from_json(const Json& json);
Json to_json(const StanceEntry& entry);
StanceEntry stance_entry_from_json(const Json& json);
Json to_json(const ObserverReport& report);
ObserverReport observer_report_from_json(const Json& json);
Json to_json(const PreferenceLabel& label);
PreferenceLabel preference_label_from_json(const Json& json);

}  // namespace csi
