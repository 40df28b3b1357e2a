#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "csi/catalog.hpp"
#include "csi/domain.hpp"
#include "csi/json.hpp"
#include "csi/lm.hpp"
#include "csi/reports.hpp"

namespace csi {

// Every message of a session, in posting order, indexed by room.
class Transcript {
 public:
  explicit Transcript(std::size_t room_count = 0) : by_room_(room_count) {}

  void resize(std::size_t room_count) { by_room_.resize(room_count); }

  // Assigns the next message id. Timestamps must be non-decreasing per room.
  const Message& append(RoomId room, Author author, std::string body, TimeMs at_ms);
  // Re-inserts a logged message verbatim (replay).
  const Message& restore(Message message);

  const std::vector<Message>& all() const { return all_; }
  std::size_t room_size(RoomId room) const { return by_room_.at(room.value()).size(); }
  const Message& room_message(RoomId room, std::size_t index) const {
    return all_[by_room_.at(room.value())[index]];
  }
  // Messages [from, room_size) of a room.
  std::vector<Message> room_slice(RoomId room, std::size_t from) const;
  std::uint64_t next_id() const { return next_id_; }

  bool operator==(const Transcript& other) const { return all_ == other.all_; }

 private:
  std::vector<Message> all_;
  std::vector<std::vector<std::size_t>> by_room_;
  std::uint64_t next_id_ = 1;
};

struct AgentTiming {
  TimeMs observer_min_ms = 45000;
  TimeMs observer_max_ms = 65000;
  TimeMs surrogate_delay_ms = 5000;
  std::size_t relay_top_k = 3;
  SurrogateMode mode = SurrogateMode::overt;
  std::uint64_t seed = 0;

  static AgentTiming from_config(const SessionConfig& config);
};

// Delay before cycle `cycle` of a room's observer: uniform over the configured
// interval, derived statelessly from (seed, room, cycle).
TimeMs observer_delay_ms(const AgentTiming& timing, RoomId room, std::uint64_t cycle);

struct RoomAgentState {
  std::optional<TimeMs> next_observer_at_ms;
  std::uint64_t next_cycle_index = 0;
  std::size_t observer_cursor = 0;  // room-local count of messages already distilled
  std::optional<ObserverReport> published;  // latest report, items resolved
  std::optional<TimeMs> published_at_ms;
  std::optional<TimeMs> next_surrogate_at_ms;
  std::optional<std::uint64_t> last_consumed_cycle;  // of the relay source

  bool operator==(const RoomAgentState&) const = default;
};

struct ObserverJob {
  RoomId room;
  std::uint64_t cycle_index = 0;
  TimeMs at_ms = 0;
  DialogBlock block;
  std::size_t cursor_after = 0;
};

// Everything needed to fold one observer cycle into agent state. This is
// the payload of an observer_report event.
struct ObserverOutcome {
  RoomId room;
  std::uint64_t cycle_index = 0;
  TimeMs at_ms = 0;
  ObserverReport report;  // validated, not yet resolved against the catalog
  std::size_t cursor_after = 0;
  TimeMs next_observer_at_ms = 0;
};

Json to_json(const ObserverOutcome& outcome);
ObserverOutcome observer_outcome_from_json(const Json& json);

struct SurrogateJob {
  RoomId room;
  RoomId source;
  std::uint64_t source_cycle = 0;
  ObserverReport selected;  // top-k entries of the source report
  SurrogateMode mode = SurrogateMode::overt;
  std::string source_name;
  TimeMs at_ms = 0;
};

// Top-k entries by |conviction| desc, then earlier first proposal, then label.
std::vector<StanceEntry> select_relay_entries(const ObserverReport& report,
                                              const SuggestionCatalog& catalog, std::size_t k);

// Observer and Surrogate scheduling plus the suggestion catalog and
// conviction ledger. Mutations happen only through apply_* so the same code
// path serves live cycles and event-log replay.
class AgentEngine {
 public:
  AgentEngine() = default;
  AgentEngine(Topology topology, AgentTiming timing);

  // Arms the first observer cycle of every room (no-op with one room).
  void arm(TimeMs start_ms);

  bool enabled() const { return topology_.surrogates_enabled(); }
  const Topology& topology() const { return topology_; }
  const AgentTiming& timing() const { return timing_; }
  const SuggestionCatalog& catalog() const { return catalog_; }
  SuggestionCatalog& catalog() { return catalog_; }
  const ConvictionLedger& ledger() const { return ledger_; }
  const RoomAgentState& room(RoomId room) const { return rooms_.at(room.value()); }
  std::size_t room_count() const { return rooms_.size(); }

  ObserverJob prepare_observer(RoomId room, TimeMs now_ms, const Transcript& transcript) const;
  ObserverOutcome conclude_observer(const ObserverJob& job, ObserverReport report) const;
  // Returns false (state untouched) for a stale cycle.
  bool apply_observer(const ObserverOutcome& outcome);

  // Nothing to relay -> nullopt.
  std::optional<SurrogateJob> prepare_surrogate(RoomId room, TimeMs now_ms) const;
  void apply_surrogate(RoomId room, std::uint64_t source_cycle);
  // Drops a due surrogate firing that has nothing to relay.
  void skip_surrogate(RoomId room);

  // One full observer cycle with a synchronous backend call.
  ObserverReport observer_cycle(RoomId room, TimeMs now_ms, const Transcript& transcript,
                                LanguageModel& backend);
  // One full surrogate cycle; posts the utterance into `transcript`.
  std::optional<Message> surrogate_cycle(RoomId room, TimeMs now_ms, Transcript& transcript,
                                         LanguageModel& backend);

  bool operator==(const AgentEngine& other) const {
    return catalog_ == other.catalog_ && ledger_ == other.ledger_ && rooms_ == other.rooms_;
  }

 private:
  Topology topology_;
  AgentTiming timing_;
  SuggestionCatalog catalog_;
  ConvictionLedger ledger_;
  std::vector<RoomAgentState> rooms_;
};

Json to_json(const AgentEngine& engine);

}  // namespace csi
