#include "csi/session.hpp"

#include <algorithm>
#include <cstdio>

#include "csi/analytics.hpp"
#include "csi/error.hpp"
#include "csi/markers.hpp"
#include "csi/rng.hpp"

namespace csi {

namespace {

enum TimerKind : int { kLabel = 0, kObserver = 1, kSurrogate = 2 };

struct Due {
  TimeMs at = 0;
  TimerKind kind = kLabel;
  RoomId room;

  bool before(const Due& other) const {
    if (at != other.at) return at < other.at;
    if (kind != other.kind) return kind < other.kind;
    return room.value() < other.room.value();
  }
};

Json labels_json(const std::vector<PreferenceLabel>& labels) {
  Json out = Json::array();
  for (const auto& l : labels) out.push_back(to_json(l));
  return out;
}

}  // namespace

std::string to_string(Phase phase) {
  switch (phase) {
    case Phase::lobby: return "lobby";
    case Phase::deliberating: return "deliberating";
    case Phase::finalized: return "finalized";
  }
  return "?";
}

BackendReply execute(const BackendCall& call, LanguageModel& backend) {
  if (const auto* observer = std::get_if<ObserverCall>(&call)) {
    return ObserverReply{observer->job, distill_or_degrade(backend, observer->job.block, observer->catalog)};
  }
  if (const auto* label = std::get_if<LabelCall>(&call)) {
    return LabelReply{*label, labels_or_degrade(backend, label->block, label->catalog, label->roster)};
  }
  const auto& surrogate = std::get<SurrogateJob>(call);
  return SurrogateReply{surrogate,
                        phrase_or_fallback(backend, surrogate.selected, surrogate.mode, surrogate.source_name)};
}

Session Session::create(SessionConfig config) {
  config.validate();
  if (config.session_id.empty()) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "session-%016llx",
                  static_cast<unsigned long long>(mix64(config.rng_seed)));
    config.session_id = buf;
  }
  Session session;
  session.emit(EventKind::session_created, 0,
               Json{{"session_id", config.session_id}, {"config", to_json(config)}});
  return session;
}

Session Session::replay(std::span<const Event> events) {
  if (events.empty() || events.front().kind != EventKind::session_created) {
    throw Error("event log must begin with session_created");
  }
  Session session;
  for (const auto& e : events) {
    if (e.seq != session.events_.size()) {
      throw Error("event log gap: expected seq " + std::to_string(session.events_.size()) +
                  ", found " + std::to_string(e.seq));
    }
    session.apply(e);
    session.events_.push_back(e);
  }
  return session;
}

void Session::set_backend(std::shared_ptr<LanguageModel> backend, Dispatch dispatch) {
  backend_ = std::move(backend);
  dispatch_ = dispatch;
}

bool Session::is_member(const ParticipantId& who) const { return roster_set_.contains(who); }

const Event& Session::emit(EventKind kind, TimeMs at_ms, Json payload) {
  Event event{events_.size(), kind, at_ms, std::move(payload)};
  apply(event);
  events_.push_back(std::move(event));
  return events_.back();
}

void Session::apply(const Event& e) {
  const Json& p = e.payload;
  clock_ms_ = std::max(clock_ms_, e.at_ms);
  switch (e.kind) {
    case EventKind::session_created: {
      if (!events_.empty()) throw Error("session_created must be the first event");
      config_ = config_from_json(p.at("config"));
      config_.validate();
      id_ = p.at("session_id").get<std::string>();
      config_.session_id = id_;
      break;
    }
    case EventKind::participant_joined: {
      if (phase_ != Phase::lobby) throw PhaseError("participant_joined outside the lobby");
      ParticipantId who{p.at("participant").get<std::string>()};
      if (roster_set_.insert(who).second) roster_.push_back(std::move(who));
      break;
    }
    case EventKind::deliberation_started: {
      if (phase_ != Phase::lobby) throw PhaseError("deliberation_started outside the lobby");
      plan_ = room_plan_from_json(p.at("plan"));
      Topology topology = topology_from_json(p.at("topology"));
      agents_ = AgentEngine(std::move(topology), AgentTiming::from_config(config_));
      agents_.arm(0);
      transcript_ = Transcript(plan_.room_count());
      labels_.assign(plan_.room_count(), LabelState{});
      in_flight_.assign(plan_.room_count(), {false, false, false});
      phase_ = Phase::deliberating;
      break;
    }
    case EventKind::message: {
      if (phase_ != Phase::deliberating) throw PhaseError("message outside deliberation");
      const Message& m = transcript_.restore(message_from_json(p));
      if (m.author.is_human()) labels_.at(m.room.value()).trigger.note_human_message(m.timestamp_ms);
      break;
    }
    case EventKind::observer_report: {
      if (phase_ != Phase::deliberating) throw PhaseError("observer_report outside deliberation");
      if (!agents_.apply_observer(observer_outcome_from_json(p))) {
        throw Error("observer_report for an unexpected cycle");
      }
      break;
    }
    case EventKind::labels_applied: {
      if (phase_ != Phase::deliberating) throw PhaseError("labels_applied outside deliberation");
      const RoomId room = parse_room_key(p.at("room").get<std::string>());
      auto& state = labels_.at(room.value());
      if (p.at("pass_index").get<std::uint64_t>() != state.passes) {
        throw Error("labels_applied for an unexpected pass");
      }
      std::vector<PreferenceLabel> labels;
      std::vector<CatalogDelta> deltas;
      for (const auto& l : p.at("labels")) {
        auto label = preference_label_from_json(l);
        label.item.id = agents_.catalog().mention(label.item, label.at_ms, room, deltas);
        labels.push_back(std::move(label));
      }
      apply_labels(store_, labels, roster_set_);
      state.cursor = p.at("cursor_after").get<std::size_t>();
      state.passes += 1;
      recompute_trigger(room);
      break;
    }
    case EventKind::surrogate_posted: {
      if (phase_ != Phase::deliberating) throw PhaseError("surrogate_posted outside deliberation");
      const RoomId room = parse_room_key(p.at("room").get<std::string>());
      if (p.at("source_cycle").is_null()) {
        agents_.skip_surrogate(room);
        break;
      }
      if (!p.at("message").is_null()) transcript_.restore(message_from_json(p.at("message")));
      agents_.apply_surrogate(room, p.at("source_cycle").get<std::uint64_t>());
      break;
    }
    case EventKind::finalized: {
      if (phase_ != Phase::deliberating) throw PhaseError("finalized outside deliberation");
      SessionResult result = compute_result(e.at_ms);
      if (to_json(result, agents_.catalog()) != p.at("result")) {
        throw Error("finalized record disagrees with the replayed state");
      }
      result_ = std::move(result);
      phase_ = Phase::finalized;
      break;
    }
  }
}

void Session::recompute_trigger(RoomId room) {
  auto& state = labels_.at(room.value());
  state.trigger.reset();
  for (std::size_t i = state.cursor; i < transcript_.room_size(room); ++i) {
    const auto& m = transcript_.room_message(room, i);
    if (m.author.is_human()) state.trigger.note_human_message(m.timestamp_ms);
  }
}

TriggerPolicy Session::trigger_policy() const {
  return TriggerPolicy{config_.preference_msg_trigger, config_.preference_time_trigger_s * 1000};
}

std::optional<TimeMs> Session::label_due(RoomId room) const {
  const auto& state = labels_.at(room.value());
  const auto policy = trigger_policy();
  if (state.trigger.messages_since_last_pass >= policy.message_trigger) {
    for (std::size_t i = transcript_.room_size(room); i > state.cursor; --i) {
      const auto& m = transcript_.room_message(room, i - 1);
      if (m.author.is_human()) return m.timestamp_ms;
    }
  }
  return trigger_deadline(state.trigger, policy);
}

std::optional<TimeMs> Session::next_timer() const {
  if (phase_ != Phase::deliberating) return std::nullopt;
  std::optional<TimeMs> best;
  auto consider = [&](std::optional<TimeMs> t) {
    if (t && (!best || *t < *best)) best = t;
  };
  for (std::size_t i = 0; i < plan_.room_count(); ++i) {
    const RoomId room{static_cast<std::uint32_t>(i)};
    const auto& flags = in_flight_[i];
    if (!flags[kLabel]) consider(label_due(room));
    if (!flags[kObserver]) consider(agents_.room(room).next_observer_at_ms);
    if (!flags[kSurrogate]) consider(agents_.room(room).next_surrogate_at_ms);
  }
  return best;
}

void Session::join(const ParticipantId& who) {
  if (phase_ != Phase::lobby) throw PhaseError("joins are closed once deliberation starts");
  if (who.value().empty()) throw Error("participant id must be non-empty");
  if (roster_set_.contains(who)) return;
  emit(EventKind::participant_joined, 0, Json{{"participant", who.value()}});
}

const RoomPlan& Session::start(std::span<const ParticipantId> roster) {
  if (phase_ != Phase::lobby) throw PhaseError("session already started");
  for (const auto& who : roster) join(who);
  if (roster_.empty()) throw Error("cannot start a session with an empty roster");

  RoomPlan plan = partition_population(roster_, config_);
  Topology topology = build_topology(plan.rooms, config_.topology_kind, config_.rng_seed);
  emit(EventKind::deliberation_started, 0,
       Json{{"plan", to_json(plan)}, {"topology", to_json(topology)}});
  return plan_;
}

void Session::require_deliberating(TimeMs now_ms) {
  if (phase_ == Phase::lobby) throw PhaseError("deliberation has not started");
  if (now_ms < clock_ms_) throw Error("time must not go backwards");
  advance(now_ms);
  if (phase_ != Phase::deliberating) throw PhaseError("session is finalized");
}

Message Session::post_message(const ParticipantId& who, std::string body, TimeMs now_ms) {
  require_deliberating(now_ms);
  const auto room = plan_.room_of(who);
  if (!room) throw Error("unknown participant: " + who.value());
  if (trim(body).empty()) throw Error("message body must be non-empty");
  const Message message{MessageId{transcript_.next_id()}, *room, Author::human(who), std::move(body), now_ms};
  emit(EventKind::message, now_ms, to_json(message));
  advance(now_ms);
  return message;
}

Message Session::post_agent_message(RoomId room, AuthorKind kind, std::string body, TimeMs now_ms) {
  require_deliberating(now_ms);
  if (room.value() >= plan_.room_count()) throw Error("unknown room: " + room_key(room));
  if (kind == AuthorKind::participant) throw Error("agent message needs an agent author kind");
  if (trim(body).empty()) throw Error("message body must be non-empty");
  const Author author = kind == AuthorKind::observer_agent ? Author::observer(room) : Author::surrogate(room);
  const Message message{MessageId{transcript_.next_id()}, room, author, std::move(body), now_ms};
  emit(EventKind::message, now_ms, to_json(message));
  advance(now_ms);
  return message;
}

LabelCall Session::make_label_call(RoomId room, TimeMs at_ms) const {
  const auto& state = labels_.at(room.value());
  LabelCall call;
  call.room = room;
  call.pass_index = state.passes;
  call.at_ms = at_ms;
  call.block = DialogBlock{room, state.passes, transcript_.room_slice(room, state.cursor)};
  call.cursor_after = transcript_.room_size(room);
  call.roster = plan_.members_of(room);
  call.catalog = agents_.catalog();
  return call;
}

void Session::advance(TimeMs now_ms) {
  if (phase_ != Phase::deliberating) return;
  const TimeMs limit = std::min(now_ms, end_ms());
  while (phase_ == Phase::deliberating) {
    std::optional<Due> next;
    for (std::size_t i = 0; i < plan_.room_count(); ++i) {
      const RoomId room{static_cast<std::uint32_t>(i)};
      const auto& flags = in_flight_[i];
      auto consider = [&](std::optional<TimeMs> at, TimerKind kind) {
        if (flags[kind] || !at) return;
        Due due{*at, kind, room};
        if (!next || due.before(*next)) next = due;
      };
      consider(label_due(room), kLabel);
      consider(agents_.room(room).next_observer_at_ms, kObserver);
      consider(agents_.room(room).next_surrogate_at_ms, kSurrogate);
    }
    if (!next || next->at > limit) break;

    const TimeMs at = std::max(next->at, clock_ms_);
    clock_ms_ = at;
    switch (next->kind) {
      case kLabel:
        fire(make_label_call(next->room, at));
        break;
      case kObserver:
        fire(ObserverCall{agents_.prepare_observer(next->room, at, transcript_), agents_.catalog()});
        break;
      case kSurrogate: {
        auto job = agents_.prepare_surrogate(next->room, at);
        if (job) {
          fire(*job);
        } else {
          emit(EventKind::surrogate_posted, at,
               Json{{"room", room_key(next->room)}, {"source_room", nullptr},
                    {"source_cycle", nullptr}, {"message", nullptr}});
        }
        break;
      }
    }
  }
  clock_ms_ = std::max(clock_ms_, limit);
  if (phase_ == Phase::deliberating && now_ms > end_ms()) finalize(end_ms());
}

void Session::fire(const BackendCall& call) {
  if (!backend_) throw Error("session has no language-model backend");
  if (dispatch_ == Dispatch::inline_calls) {
    const TimeMs at = clock_ms_;
    finish_call(execute(call, *backend_), at);
    return;
  }
  RoomId room;
  int kind = kLabel;
  if (const auto* o = std::get_if<ObserverCall>(&call)) {
    room = o->job.room;
    kind = kObserver;
  } else if (const auto* l = std::get_if<LabelCall>(&call)) {
    room = l->room;
  } else {
    room = std::get<SurrogateJob>(call).room;
    kind = kSurrogate;
  }
  in_flight_.at(room.value())[kind] = true;
  pending_.push_back(call);
}

void Session::finish_call(const BackendReply& reply, TimeMs at_ms) {
  if (const auto* o = std::get_if<ObserverReply>(&reply)) {
    const auto outcome = agents_.conclude_observer(o->job, o->report);
    emit(EventKind::observer_report, at_ms, to_json(outcome));
  } else if (const auto* l = std::get_if<LabelReply>(&reply)) {
    emit(EventKind::labels_applied, at_ms,
         Json{{"room", room_key(l->call.room)},
              {"pass_index", l->call.pass_index},
              {"cursor_after", l->call.cursor_after},
              {"labels", labels_json(l->labels)}});
  } else {
    const auto& s = std::get<SurrogateReply>(reply);
    Json message = nullptr;
    if (s.text) {
      message = to_json(Message{MessageId{transcript_.next_id()}, s.job.room,
                                Author::surrogate(s.job.room), *s.text, at_ms});
    }
    emit(EventKind::surrogate_posted, at_ms,
         Json{{"room", room_key(s.job.room)}, {"source_room", room_key(s.job.source)},
              {"source_cycle", s.job.source_cycle}, {"message", std::move(message)}});
  }
}

std::vector<BackendCall> Session::take_pending() { return std::exchange(pending_, {}); }

bool Session::complete(const BackendReply& reply, TimeMs now_ms) {
  if (phase_ != Phase::deliberating) return false;
  RoomId room;
  int kind = kLabel;
  bool fresh = false;
  if (const auto* o = std::get_if<ObserverReply>(&reply)) {
    room = o->job.room;
    kind = kObserver;
    fresh = o->job.cycle_index == agents_.room(room).next_cycle_index;
  } else if (const auto* l = std::get_if<LabelReply>(&reply)) {
    room = l->call.room;
    fresh = l->call.pass_index == labels_.at(room.value()).passes;
  } else {
    const auto& s = std::get<SurrogateReply>(reply);
    room = s.job.room;
    kind = kSurrogate;
    const auto consumed = agents_.room(room).last_consumed_cycle;
    fresh = !consumed || *consumed < s.job.source_cycle;
  }
  if (room.value() >= in_flight_.size()) return false;
  in_flight_[room.value()][kind] = false;
  if (!fresh) return false;
  const TimeMs at = std::min(std::max(clock_ms_, now_ms), end_ms());
  clock_ms_ = at;
  finish_call(reply, at);
  return true;
}

SessionResult Session::compute_result(TimeMs at_ms) const {
  SessionResult result =
      select_winner(net_preferences(store_, roster_.size(), agents_.catalog()), agents_.catalog(), at_ms);
  result.contributions = analytics::compute_contributions(transcript_.all(), roster_,
                                                          static_cast<double>(config_.duration_s));
  return result;
}

const SessionResult& Session::finalize(TimeMs now_ms) {
  if (phase_ == Phase::finalized) return *result_;
  if (phase_ == Phase::lobby) throw PhaseError("cannot finalize before deliberation starts");

  const TimeMs at = std::min(std::max(now_ms, clock_ms_), end_ms());
  // Timers due up to the finalize time still run.
  const Dispatch saved = dispatch_;
  if (now_ms <= end_ms()) advance(at);
  dispatch_ = Dispatch::inline_calls;
  pending_.clear();
  for (auto& flags : in_flight_) flags = {false, false, false};

  for (std::size_t i = 0; i < plan_.room_count(); ++i) {
    const RoomId room{static_cast<std::uint32_t>(i)};
    if (labels_[i].trigger.messages_since_last_pass == 0) continue;
    if (!backend_) throw Error("session has no language-model backend");
    finish_call(execute(make_label_call(room, at), *backend_), at);
  }
  dispatch_ = saved;

  const SessionResult result = compute_result(at);
  emit(EventKind::finalized, at, Json{{"result", to_json(result, agents_.catalog())}});
  return *result_;
}

const SessionResult& Session::finish() {
  advance(end_ms());
  return finalize(end_ms());
}

Json Session::result_json() const {
  if (!result_) return nullptr;
  return to_json(*result_, agents_.catalog());
}

Json Session::state_json() const {
  Json roster = Json::array();
  for (const auto& p : roster_) roster.push_back(p.value());
  Json messages = Json::array();
  for (const auto& m : transcript_.all()) messages.push_back(to_json(m));
  Json label_states = Json::array();
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    const auto& s = labels_[i];
    label_states.push_back(Json{{"room", room_key(RoomId{static_cast<std::uint32_t>(i)})},
                                {"cursor", s.cursor},
                                {"passes", s.passes},
                                {"messages_since_last_pass", s.trigger.messages_since_last_pass},
                                {"oldest_unlabeled_msg_at_ms",
                                 s.trigger.oldest_unlabeled_msg_at_ms
                                     ? Json(*s.trigger.oldest_unlabeled_msg_at_ms)
                                     : Json(nullptr)}});
  }
  Json state{{"session_id", id_},
             {"phase", to_string(phase_)},
             {"config", to_json(config_)},
             {"roster", std::move(roster)},
             {"plan", nullptr},
             {"topology", nullptr},
             {"messages", std::move(messages)},
             {"agents", nullptr},
             {"preferences", to_json(store_)},
             {"labeling", std::move(label_states)},
             {"result", result_json()}};
  if (phase_ != Phase::lobby) {
    state["plan"] = to_json(plan_);
    state["topology"] = to_json(agents_.topology());
    state["agents"] = to_json(agents_);
  }
  return state;
}

std::vector<ParticipantId> recipients(const Session& session, const Event& event) {
  switch (event.kind) {
    case EventKind::message:
      return session.plan().members_of(parse_room_key(event.payload.at("room").get<std::string>()));
    case EventKind::surrogate_posted:
      if (event.payload.at("message").is_null()) return {};
      return session.plan().members_of(parse_room_key(event.payload.at("room").get<std::string>()));
    case EventKind::finalized:
      return session.roster();
    default:
      return {};
  }
}

}  // namespace csi
