#include "csi/sim.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "csi/error.hpp"
#include "csi/markers.hpp"

namespace csi::sim {

namespace {

Json expectations_json(const Expectations& e) {
  Json out = Json::object();
  if (e.winner) out["winner"] = *e.winner;
  if (!e.min_rooms_reached.empty()) {
    Json reached = Json::object();
    for (const auto& [item, count] : e.min_rooms_reached) reached[item] = count;
    out["min_rooms_reached"] = std::move(reached);
  }
  return out;
}

// Ring distance from `from` to `to` following relay direction.
std::size_t ring_distance(const Topology& topology, RoomId from, RoomId to) {
  std::size_t d = 0;
  RoomId at = from;
  while (at != to) {
    at = topology.successor_of(at);
    if (++d > topology.order.size()) throw Error("room not on the ring: " + room_key(to));
  }
  return d;
}

}  // namespace

Scenario scenario_from_json(const Json& json) {
  if (!json.is_object()) throw ConfigError(std::vector<FieldError>{{"scenario", "must be a JSON object"}});
  std::vector<FieldError> errors;
  Scenario s;
  try {
    s.name = json.value("name", std::string{});
    s.description = json.value("description", std::string{});
  } catch (const std::exception&) {
    errors.push_back({"name", "must be a string"});
  }
  if (json.contains("config")) s.config = json.at("config");

  if (json.contains("roster")) {
    const auto& roster = json.at("roster");
    if (!roster.is_array()) {
      errors.push_back({"roster", "must be an array of participant ids"});
    } else {
      for (std::size_t i = 0; i < roster.size(); ++i) {
        if (!roster[i].is_string()) {
          errors.push_back({"roster[" + std::to_string(i) + "]", "must be a string"});
          continue;
        }
        s.roster.emplace_back(roster[i].get<std::string>());
      }
    }
  }

  if (json.contains("script")) {
    const auto& script = json.at("script");
    if (!script.is_array()) {
      errors.push_back({"script", "must be an array"});
    } else {
      for (std::size_t i = 0; i < script.size(); ++i) {
        const std::string where = "script[" + std::to_string(i) + "]";
        const auto& entry = script[i];
        try {
          ScriptEntry e;
          e.participant = ParticipantId{entry.at("participant").get<std::string>()};
          e.at_ms = entry.at("at_ms").get<TimeMs>();
          e.body = entry.at("body").get<std::string>();
          if (entry.contains("as_agent") && !entry.at("as_agent").is_null()) {
            e.as_agent = parse_author_kind(entry.at("as_agent").get<std::string>());
          }
          s.script.push_back(std::move(e));
        } catch (const std::exception& ex) {
          errors.push_back({where, ex.what()});
        }
      }
    }
  }

  if (json.contains("expectations")) {
    const auto& e = json.at("expectations");
    try {
      if (e.contains("winner") && !e.at("winner").is_null()) {
        s.expectations.winner = normalize_item(e.at("winner").get<std::string>());
      }
      if (e.contains("min_rooms_reached")) {
        for (const auto& [item, count] : e.at("min_rooms_reached").items()) {
          s.expectations.min_rooms_reached[normalize_item(item)] = count.get<std::size_t>();
        }
      }
    } catch (const std::exception& ex) {
      errors.push_back({"expectations", ex.what()});
    }
  }

  if (!errors.empty()) throw ConfigError(std::move(errors));
  return s;
}

Json to_json(const Scenario& s) {
  Json roster = Json::array();
  for (const auto& p : s.roster) roster.push_back(p.value());
  Json script = Json::array();
  for (const auto& e : s.script) {
    Json entry{{"participant", e.participant.value()}, {"at_ms", e.at_ms}, {"body", e.body}};
    if (e.as_agent) entry["as_agent"] = to_string(*e.as_agent);
    script.push_back(std::move(entry));
  }
  return Json{{"name", s.name},
              {"description", s.description},
              {"config", s.config},
              {"roster", std::move(roster)},
              {"script", std::move(script)},
              {"expectations", expectations_json(s.expectations)}};
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open scenario " + path.string());
  Json json;
  try {
    json = Json::parse(in);
  } catch (const std::exception& e) {
    throw Error("scenario " + path.string() + ": " + e.what());
  }
  Scenario s = scenario_from_json(json);
  if (s.name.empty()) s.name = path.stem().string();
  return s;
}

SessionConfig scenario_config(const Scenario& scenario, std::uint64_t seed) {
  SessionConfig config = config_from_json(scenario.config);
  config.rng_seed = seed;
  config.clock_mode = ClockMode::virtual_clock;
  if (config.session_id.empty()) config.session_id = "sim-" + (scenario.name.empty() ? "scenario" : scenario.name);
  return config;
}

void validate(const Scenario& scenario) {
  std::vector<FieldError> errors;
  SessionConfig config;
  try {
    config = config_from_json(scenario.config);
    config.validate();
  } catch (const ConfigError& e) {
    for (const auto& f : e.errors()) errors.push_back({"config." + f.field, f.reason});
  }

  if (scenario.roster.empty()) errors.push_back({"roster", "must not be empty"});
  std::set<ParticipantId> members;
  for (std::size_t i = 0; i < scenario.roster.size(); ++i) {
    const auto& p = scenario.roster[i];
    const std::string where = "roster[" + std::to_string(i) + "]";
    if (p.value().empty()) errors.push_back({where, "must be non-empty"});
    if (!members.insert(p).second) errors.push_back({where, "duplicate participant '" + p.value() + "'"});
  }

  const TimeMs end = config.duration_s * 1000;
  for (std::size_t i = 0; i < scenario.script.size(); ++i) {
    const auto& e = scenario.script[i];
    const std::string where = "script[" + std::to_string(i) + "]";
    if (!members.contains(e.participant)) {
      errors.push_back({where + ".participant", "'" + e.participant.value() + "' is not in the roster"});
    }
    if (e.at_ms < 0 || e.at_ms > end) {
      errors.push_back({where + ".at_ms", "must lie within [0, " + std::to_string(end) + "]"});
    }
    if (trim(e.body).empty()) errors.push_back({where + ".body", "must be non-empty"});
    if (e.as_agent && *e.as_agent == AuthorKind::participant) {
      errors.push_back({where + ".as_agent", "must name an agent kind"});
    }
  }
  if (!errors.empty()) throw ConfigError(std::move(errors));
}

std::size_t PropagationTrace::rooms_reached(const std::string& item) const {
  auto it = first_seen.find(normalize_item(item));
  if (it == first_seen.end()) return 0;
  return static_cast<std::size_t>(std::count_if(it->second.begin(), it->second.end(),
                                                [](const auto& t) { return t.has_value(); }));
}

PropagationTrace trace_propagation(const Transcript& transcript, std::size_t room_count) {
  PropagationTrace trace;
  trace.room_count = room_count;
  for (const auto& m : transcript.all()) {
    for (const auto& marker : parse_markers(m.body)) {
      auto [it, inserted] = trace.first_seen.try_emplace(normalize_item(marker.item));
      if (inserted) it->second.resize(room_count);
      auto& slot = it->second.at(m.room.value());
      if (!slot || m.timestamp_ms < *slot) slot = m.timestamp_ms;
    }
  }
  return trace;
}

ScenarioRun run_scenario(const Scenario& scenario, std::uint64_t seed) {
  validate(scenario);
  Session session = Session::create(scenario_config(scenario, seed));
  session.set_backend(std::make_shared<MockLanguageModel>());
  session.start(scenario.roster);

  std::vector<ScriptEntry> script = scenario.script;
  std::stable_sort(script.begin(), script.end(),
                   [](const ScriptEntry& a, const ScriptEntry& b) { return a.at_ms < b.at_ms; });
  for (const auto& e : script) {
    if (e.as_agent) {
      session.post_agent_message(*session.plan().room_of(e.participant), *e.as_agent, e.body, e.at_ms);
    } else {
      session.post_message(e.participant, e.body, e.at_ms);
    }
  }
  session.finish();

  ScenarioRun run;
  run.name = scenario.name;
  run.seed = seed;
  run.events = session.events();
  run.result = *session.result();
  run.result_json = session.result_json();
  run.plan = session.plan();
  run.topology = session.topology();
  run.trace = trace_propagation(session.transcript(), session.plan().room_count());

  const auto& expect = scenario.expectations;
  if (expect.winner && run.result.winner_label != *expect.winner) {
    run.expectation_failures.push_back("winner: expected '" + *expect.winner + "', got '" +
                                       run.result.winner_label + "'");
  }
  for (const auto& [item, count] : expect.min_rooms_reached) {
    const auto reached = run.trace.rooms_reached(item);
    if (reached < count) {
      run.expectation_failures.push_back("'" + item + "' reached " + std::to_string(reached) +
                                         " rooms, expected at least " + std::to_string(count));
    }
  }
  return run;
}

std::string propagation_csv(const PropagationTrace& trace, const Topology& topology) {
  std::ostringstream out;
  out << "item,room,ring_distance,first_seen_ms\n";
  for (const auto& [item, rooms] : trace.first_seen) {
    std::optional<RoomId> origin;
    for (std::size_t r = 0; r < rooms.size(); ++r) {
      if (rooms[r] && (!origin || *rooms[r] < *rooms[origin->value()])) {
        origin = RoomId{static_cast<std::uint32_t>(r)};
      }
    }
    for (std::size_t r = 0; r < rooms.size(); ++r) {
      const RoomId room{static_cast<std::uint32_t>(r)};
      out << item << ',' << room_key(room) << ',';
      if (origin && topology.surrogates_enabled()) out << ring_distance(topology, *origin, room);
      else if (origin) out << 0;
      out << ',';
      if (rooms[r]) out << *rooms[r];
      out << '\n';
    }
  }
  return out.str();
}

void write_run(const ScenarioRun& run, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_event_log(dir / "events.jsonl", run.events);
  {
    std::ofstream out(dir / "result.json", std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + (dir / "result.json").string());
    out << run.result_json.dump(2) << '\n';
  }
  std::ofstream out(dir / "propagation.csv", std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + (dir / "propagation.csv").string());
  out << propagation_csv(run.trace, run.topology);
}

ProbeResult propagation_probe(std::size_t n_rooms, std::uint64_t seed) {
  if (n_rooms < 2) throw Error("propagation probe needs at least 2 rooms");

  SessionConfig defaults;
  const TimeMs hop_ms = (defaults.observer_interval_max_s + defaults.surrogate_delay_s) * 1000;

  Scenario probe;
  probe.name = "probe-" + std::to_string(n_rooms);
  const std::size_t population = n_rooms * static_cast<std::size_t>(defaults.target_room_size);
  for (std::size_t i = 0; i < population; ++i) {
    probe.roster.emplace_back("listener-" + std::to_string(i + 1));
  }
  // Long enough for the farthest room plus one spare observer interval.
  probe.config = Json{{"duration_s", static_cast<std::int64_t>(n_rooms) * hop_ms / 1000 + 60}};

  // The plan is a pure function of (roster, config), so the speaker for
  // room 0 is known before the run.
  const RoomPlan plan = partition_population(probe.roster, scenario_config(probe, seed));
  if (plan.room_count() != n_rooms) throw Error("probe population did not partition into the requested rooms");
  const RoomId origin{0};
  const std::string item = "probe-item";
  probe.script.push_back({plan.members_of(origin).front(), 0, "PROPOSE(" + item + ")", std::nullopt});

  const ScenarioRun run = run_scenario(probe, seed);
  const auto& seen = run.trace.first_seen.at(item);

  ProbeResult result;
  result.n_rooms = n_rooms;
  result.seed = seed;
  result.item = item;
  RoomId at = origin;
  for (std::size_t k = 0; k < n_rooms; ++k) {
    result.hops.push_back(HopLatency{at, k, seen.at(at.value()), static_cast<TimeMs>(k) * hop_ms});
    at = run.topology.successor_of(at);
  }
  result.all_within_bound = std::all_of(result.hops.begin(), result.hops.end(),
                                        [](const HopLatency& h) { return h.within_bound(); });
  result.monotone = result.all_within_bound;
  for (std::size_t k = 1; k < result.hops.size() && result.monotone; ++k) {
    result.monotone = *result.hops[k - 1].first_arrival_ms <= *result.hops[k].first_arrival_ms;
  }
  return result;
}

std::string probe_csv(const ProbeResult& probe) {
  std::ostringstream out;
  out << "distance,room,first_arrival_ms,bound_ms,within_bound\n";
  for (const auto& h : probe.hops) {
    out << h.distance << ',' << room_key(h.room) << ',';
    if (h.first_arrival_ms) out << *h.first_arrival_ms;
    out << ',' << h.bound_ms << ',' << (h.within_bound() ? "true" : "false") << '\n';
  }
  return out.str();
}

Json to_json(const ProbeResult& probe) {
  Json hops = Json::array();
  for (const auto& h : probe.hops) {
    hops.push_back(Json{{"distance", h.distance},
                        {"room", room_key(h.room)},
                        {"first_arrival_ms", h.first_arrival_ms ? Json(*h.first_arrival_ms) : Json(nullptr)},
                        {"bound_ms", h.bound_ms},
                        {"within_bound", h.within_bound()}});
  }
  return Json{{"n_rooms", probe.n_rooms},
              {"seed", probe.seed},
              {"item", probe.item},
              {"all_within_bound", probe.all_within_bound},
              {"monotone", probe.monotone},
              {"hops", std::move(hops)}};
}

}  // namespace csi::sim
