#include "csi/agents.hpp"

#include <algorithm>
#include <cstdlib>

#include "csi/error.hpp"
#include "csi/rng.hpp"

namespace csi {

namespace {
constexpr std::uint64_t kObserverStream = 3;
}

const Message& Transcript::append(RoomId room, Author author, std::string body, TimeMs at_ms) {
  Message m{MessageId{next_id_}, room, std::move(author), std::move(body), at_ms};
  return restore(std::move(m));
}

const Message& Transcript::restore(Message message) {
  auto& room = by_room_.at(message.room.value());
  if (!room.empty() && all_[room.back()].timestamp_ms > message.timestamp_ms) {
    throw Error("message timestamps must be non-decreasing within a room");
  }
  if (message.body.empty()) throw Error("message body must be non-empty");
  next_id_ = std::max(next_id_, message.id.value() + 1);
  room.push_back(all_.size());
  all_.push_back(std::move(message));
  return all_.back();
}

std::vector<Message> Transcript::room_slice(RoomId room, std::size_t from) const {
  std::vector<Message> out;
  const auto& indices = by_room_.at(room.value());
  for (std::size_t i = from; i < indices.size(); ++i) out.push_back(all_[indices[i]]);
  return out;
}

AgentTiming AgentTiming::from_config(const SessionConfig& config) {
  AgentTiming t;
  t.observer_min_ms = config.observer_interval_min_s * 1000;
  t.observer_max_ms = config.observer_interval_max_s * 1000;
  t.surrogate_delay_ms = config.surrogate_delay_s * 1000;
  t.relay_top_k = static_cast<std::size_t>(config.relay_top_k);
  t.mode = config.surrogate_mode;
  t.seed = config.rng_seed;
  return t;
}

TimeMs observer_delay_ms(const AgentTiming& timing, RoomId room, std::uint64_t cycle) {
  const std::uint64_t stream = mix64(kObserverStream ^ mix64(room.value()) ^ (cycle << 20));
  SplitMix64 rng(derive_seed(timing.seed, stream));
  return rng.between(timing.observer_min_ms, timing.observer_max_ms);
}

Json to_json(const ObserverOutcome& o) {
  return Json{{"room", room_key(o.room)},
              {"cycle_index", o.cycle_index},
              {"at_ms", o.at_ms},
              {"report", to_json(o.report)},
              {"cursor_after", o.cursor_after},
              {"next_observer_at_ms", o.next_observer_at_ms}};
}

ObserverOutcome observer_outcome_from_json(const Json& json) {
  ObserverOutcome o;
  o.room = parse_room_key(json.at("room").get<std::string>());
  o.cycle_index = json.at("cycle_index").get<std::uint64_t>();
  o.at_ms = json.at("at_ms").get<TimeMs>();
  o.report = observer_report_from_json(json.at("report"));
  o.cursor_after = json.at("cursor_after").get<std::size_t>();
  o.next_observer_at_ms = json.at("next_observer_at_ms").get<TimeMs>();
  return o;
}

std::vector<StanceEntry> select_relay_entries(const ObserverReport& report,
                                              const SuggestionCatalog& catalog, std::size_t k) {
  struct Ranked {
    const StanceEntry* entry;
    TimeMs proposed_at;
    std::string label;
  };
  std::vector<Ranked> ranked;
  for (const auto& entry : report.entries) {
    const CatalogItem* item = entry.item.id ? catalog.find(*entry.item.id) : catalog.find_alias(entry.item.text);
    ranked.push_back({&entry, item ? item->first_proposed_at_ms : entry.first_evidence_at_ms,
                      item ? item->canonical_label : entry.item.text});
  }
  std::stable_sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) {
    const int ca = std::abs(a.entry->conviction);
    const int cb = std::abs(b.entry->conviction);
    if (ca != cb) return ca > cb;
    if (a.proposed_at != b.proposed_at) return a.proposed_at < b.proposed_at;
    return a.label < b.label;
  });
  std::vector<StanceEntry> out;
  for (std::size_t i = 0; i < ranked.size() && i < k; ++i) out.push_back(*ranked[i].entry);
  return out;
}

AgentEngine::AgentEngine(Topology topology, AgentTiming timing)
    : topology_(std::move(topology)), timing_(timing), rooms_(topology_.relay_source.size()) {}

void AgentEngine::arm(TimeMs start_ms) {
  if (!enabled()) return;
  for (std::size_t i = 0; i < rooms_.size(); ++i) {
    const RoomId room{static_cast<std::uint32_t>(i)};
    rooms_[i].next_observer_at_ms = start_ms + observer_delay_ms(timing_, room, 0);
  }
}

ObserverJob AgentEngine::prepare_observer(RoomId room, TimeMs now_ms,
                                          const Transcript& transcript) const {
  const auto& state = rooms_.at(room.value());
  ObserverJob job;
  job.room = room;
  job.cycle_index = state.next_cycle_index;
  job.at_ms = now_ms;
  job.block = DialogBlock{room, state.next_cycle_index, transcript.room_slice(room, state.observer_cursor)};
  job.cursor_after = transcript.room_size(room);
  return job;
}

ObserverOutcome AgentEngine::conclude_observer(const ObserverJob& job, ObserverReport report) const {
  ObserverOutcome outcome;
  outcome.room = job.room;
  outcome.cycle_index = job.cycle_index;
  outcome.at_ms = job.at_ms;
  outcome.report = std::move(report);
  outcome.cursor_after = job.cursor_after;
  outcome.next_observer_at_ms = job.at_ms + observer_delay_ms(timing_, job.room, job.cycle_index + 1);
  return outcome;
}

bool AgentEngine::apply_observer(const ObserverOutcome& outcome) {
  auto& state = rooms_.at(outcome.room.value());
  if (outcome.cycle_index != state.next_cycle_index) return false;

  ObserverReport resolved = outcome.report;
  update_catalog(resolved, catalog_, ledger_);

  state.next_cycle_index = outcome.cycle_index + 1;
  state.observer_cursor = outcome.cursor_after;
  state.next_observer_at_ms = outcome.next_observer_at_ms;
  state.published = std::move(resolved);
  state.published_at_ms = outcome.at_ms;

  if (enabled() && !state.published->empty()) {
    auto& successor = rooms_.at(topology_.successor_of(outcome.room).value());
    successor.next_surrogate_at_ms = outcome.at_ms + timing_.surrogate_delay_ms;
  }
  return true;
}

std::optional<SurrogateJob> AgentEngine::prepare_surrogate(RoomId room, TimeMs now_ms) const {
  if (!enabled()) return std::nullopt;
  const RoomId source = topology_.source_of(room);
  const auto& src = rooms_.at(source.value());
  const auto& self = rooms_.at(room.value());
  if (!src.published || src.published->empty()) return std::nullopt;
  if (self.last_consumed_cycle && *self.last_consumed_cycle >= src.published->cycle_index) {
    return std::nullopt;
  }
  SurrogateJob job;
  job.room = room;
  job.source = source;
  job.source_cycle = src.published->cycle_index;
  job.selected = *src.published;
  job.selected.entries = select_relay_entries(*src.published, catalog_, timing_.relay_top_k);
  job.mode = timing_.mode;
  job.source_name = room_display_name(source);
  job.at_ms = now_ms;
  return job;
}

void AgentEngine::apply_surrogate(RoomId room, std::uint64_t source_cycle) {
  auto& state = rooms_.at(room.value());
  state.last_consumed_cycle = source_cycle;
  state.next_surrogate_at_ms.reset();
}

void AgentEngine::skip_surrogate(RoomId room) { rooms_.at(room.value()).next_surrogate_at_ms.reset(); }

ObserverReport AgentEngine::observer_cycle(RoomId room, TimeMs now_ms, const Transcript& transcript,
                                           LanguageModel& backend) {
  const auto job = prepare_observer(room, now_ms, transcript);
  auto outcome = conclude_observer(job, distill_or_degrade(backend, job.block, catalog_));
  apply_observer(outcome);
  return *rooms_.at(room.value()).published;
}

std::optional<Message> AgentEngine::surrogate_cycle(RoomId room, TimeMs now_ms, Transcript& transcript,
                                                    LanguageModel& backend) {
  const auto job = prepare_surrogate(room, now_ms);
  if (!job) {
    skip_surrogate(room);
    return std::nullopt;
  }
  auto text = phrase_or_fallback(backend, job->selected, job->mode, job->source_name);
  apply_surrogate(room, job->source_cycle);
  if (!text) return std::nullopt;
  return transcript.append(room, Author::surrogate(room), std::move(*text), now_ms);
}

Json to_json(const AgentEngine& engine) {
  Json rooms = Json::array();
  for (std::size_t i = 0; i < engine.room_count(); ++i) {
    const auto& s = engine.room(RoomId{static_cast<std::uint32_t>(i)});
    auto opt = [](const auto& v) { return v ? Json(*v) : Json(nullptr); };
    rooms.push_back(Json{{"room", room_key(RoomId{static_cast<std::uint32_t>(i)})},
                         {"next_observer_at_ms", opt(s.next_observer_at_ms)},
                         {"next_cycle_index", s.next_cycle_index},
                         {"observer_cursor", s.observer_cursor},
                         {"published", s.published ? to_json(*s.published) : Json(nullptr)},
                         {"published_at_ms", opt(s.published_at_ms)},
                         {"next_surrogate_at_ms", opt(s.next_surrogate_at_ms)},
                         {"last_consumed_cycle", opt(s.last_consumed_cycle)}});
  }
  return Json{{"catalog", to_json(engine.catalog())},
              {"ledger", to_json(engine.ledger())},
              {"rooms", std::move(rooms)}};
}

}  // namespace csi
