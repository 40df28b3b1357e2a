#pragma once

#include <array>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "csi/agents.hpp"
#include "csi/domain.hpp"
#include "csi/events.hpp"
#include "csi/json.hpp"
#include "csi/lm.hpp"
#include "csi/preference.hpp"

namespace csi {

enum class Phase { lobby, deliberating, finalized };
std::string to_string(Phase phase);

struct LabelState {
  std::size_t cursor = 0;  // room-local count of messages already labeled
  std::uint64_t passes = 0;
  RoomTriggerState trigger;

  bool operator==(const LabelState&) const = default;
};

struct ObserverCall {
  ObserverJob job;
  SuggestionCatalog catalog;
};

struct LabelCall {
  RoomId room;
  std::uint64_t pass_index = 0;
  TimeMs at_ms = 0;
  DialogBlock block;
  std::size_t cursor_after = 0;
  Roster roster;
  SuggestionCatalog catalog;
};

using BackendCall = std::variant<ObserverCall, LabelCall, SurrogateJob>;

struct ObserverReply {
  ObserverJob job;
  ObserverReport report;
};
struct LabelReply {
  LabelCall call;
  std::vector<PreferenceLabel> labels;
};
struct SurrogateReply {
  SurrogateJob job;
  std::optional<std::string> text;
};
using BackendReply = std::variant<ObserverReply, LabelReply, SurrogateReply>;

// Runs one backend call through the degrade/fallback wrappers. Safe to call
// from worker threads; touches nothing but its arguments.
BackendReply execute(const BackendCall& call, LanguageModel& backend);

// One deliberation session. Every state change is an Event appended to the
// log and folded in by apply(); replaying the log through the same fold
// reconstructs the state exactly.
//
// Times are milliseconds since the deliberation started. Lobby events carry
// time 0.
class Session {
 public:
  // inline_calls: backend calls happen inside advance() (deterministic).
  // deferred: due calls queue up for take_pending(); results come back via
  // complete(). Used by the live server.
  enum class Dispatch { inline_calls, deferred };

  // Validates the config and logs event 0. An empty session_id is replaced
  // by one derived from the seed.
  static Session create(SessionConfig config);
  // Rebuilds a session from its log. Throws on gaps or inconsistent records.
  static Session replay(std::span<const Event> events);

  void set_backend(std::shared_ptr<LanguageModel> backend, Dispatch dispatch = Dispatch::inline_calls);

  const std::string& id() const { return id_; }
  const SessionConfig& config() const { return config_; }
  Phase phase() const { return phase_; }
  const std::vector<Event>& events() const { return events_; }
  const std::vector<ParticipantId>& roster() const { return roster_; }
  const RoomPlan& plan() const { return plan_; }
  const Topology& topology() const { return agents_.topology(); }
  const Transcript& transcript() const { return transcript_; }
  const AgentEngine& agents() const { return agents_; }
  const PreferenceStore& preferences() const { return store_; }
  const LabelState& label_state(RoomId room) const { return labels_.at(room.value()); }
  const std::optional<SessionResult>& result() const { return result_; }
  TimeMs end_ms() const { return config_.duration_s * 1000; }
  TimeMs now_ms() const { return clock_ms_; }
  bool is_member(const ParticipantId& who) const;

  // Lobby only. Joining twice is a no-op.
  void join(const ParticipantId& who);
  // Adds any roster members not yet joined, partitions, builds the topology
  // and arms the agents. Rejected outside the lobby or with an empty roster.
  const RoomPlan& start(std::span<const ParticipantId> roster = {});

  // Runs timers due before `now_ms`, appends the message, then runs the
  // labeling trigger. Rejects unknown participants, empty bodies and posts
  // outside the deliberation window.
  Message post_message(const ParticipantId& who, std::string body, TimeMs now_ms);
  // Agent-authored message injected by scripted scenarios.
  Message post_agent_message(RoomId room, AuthorKind kind, std::string body, TimeMs now_ms);

  // Fires every timer due at or before now_ms, each at its own due time.
  // Past the end of the window the session finalizes itself.
  void advance(TimeMs now_ms);

  // Earliest pending timer, if any (excluding the end-of-session deadline).
  std::optional<TimeMs> next_timer() const;

  // Final labeling pass per room, winner selection, finalized event.
  // Idempotent: later calls return the stored result.
  const SessionResult& finalize(TimeMs now_ms);
  // advance(end) then finalize(end).
  const SessionResult& finish();

  // Deferred dispatch.
  std::vector<BackendCall> take_pending();
  // Returns false when the reply is stale or the session has moved on.
  bool complete(const BackendReply& reply, TimeMs now_ms);

  Json result_json() const;
  // Everything replay must reproduce.
  Json state_json() const;

 private:
  Session() = default;

  const Event& emit(EventKind kind, TimeMs at_ms, Json payload);
  void apply(const Event& event);
  void recompute_trigger(RoomId room);
  SessionResult compute_result(TimeMs at_ms) const;
  TriggerPolicy trigger_policy() const;
  std::optional<TimeMs> label_due(RoomId room) const;

  void fire(const BackendCall& call);
  void finish_call(const BackendReply& reply, TimeMs at_ms);
  LabelCall make_label_call(RoomId room, TimeMs at_ms) const;
  void require_deliberating(TimeMs now_ms);

  std::string id_;
  SessionConfig config_;
  Phase phase_ = Phase::lobby;
  std::vector<Event> events_;
  std::vector<ParticipantId> roster_;
  std::set<ParticipantId> roster_set_;
  RoomPlan plan_;
  Transcript transcript_;
  AgentEngine agents_;
  PreferenceStore store_;
  std::vector<LabelState> labels_;
  std::optional<SessionResult> result_;
  TimeMs clock_ms_ = 0;

  std::shared_ptr<LanguageModel> backend_;
  Dispatch dispatch_ = Dispatch::inline_calls;
  std::vector<BackendCall> pending_;
  // In-flight flags per room: label, observer, surrogate.
  std::vector<std::array<bool, 3>> in_flight_;
};

// Participants who receive an event over the wire: room members for
// messages and surrogate posts, everyone for finalized, nobody otherwise.
std::vector<ParticipantId> recipients(const Session& session, const Event& event);

}  // namespace csi
