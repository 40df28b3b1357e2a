#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "csi/domain.hpp"
#include "csi/events.hpp"
#include "csi/json.hpp"
#include "csi/preference.hpp"
#include "csi/session.hpp"

namespace csi::sim {

// One scripted post. With as_agent set, the body is posted as that agent
// kind into the participant's room (the participant only locates the room).
struct ScriptEntry {
  ParticipantId participant;
  TimeMs at_ms = 0;
  std::string body;
  std::optional<AuthorKind> as_agent;
};

struct Expectations {
  std::optional<std::string> winner;  // normalized item text
  std::map<std::string, std::size_t> min_rooms_reached;
};

struct Scenario {
  std::string name;
  std::string description;
  Json config = Json::object();  // overrides on top of SessionConfig defaults
  std::vector<ParticipantId> roster;
  std::vector<ScriptEntry> script;
  Expectations expectations;
};

Scenario scenario_from_json(const Json& json);
Json to_json(const Scenario& scenario);
Scenario load_scenario(const std::filesystem::path& path);

// Effective session config: defaults, then overrides, then the run seed.
SessionConfig scenario_config(const Scenario& scenario, std::uint64_t seed);

// Throws ConfigError listing every problem found.
void validate(const Scenario& scenario);

// First time each item (normalized) shows up in each room, from any author.
struct PropagationTrace {
  std::size_t room_count = 0;
  std::map<std::string, std::vector<std::optional<TimeMs>>> first_seen;

  std::size_t rooms_reached(const std::string& item) const;
};

PropagationTrace trace_propagation(const Transcript& transcript, std::size_t room_count);

struct ScenarioRun {
  std::string name;
  std::uint64_t seed = 0;
  std::vector<Event> events;
  SessionResult result;
  Json result_json;
  RoomPlan plan;
  Topology topology;
  PropagationTrace trace;
  std::vector<std::string> expectation_failures;
};

// Virtual clock, mock backend, inline dispatch. Deterministic for
// (scenario, seed).
ScenarioRun run_scenario(const Scenario& scenario, std::uint64_t seed);

// item,room,ring_distance,first_seen_ms (one row per item and room; empty
// first_seen_ms for rooms never reached). Distance is measured from the
// room where the item first appeared.
std::string propagation_csv(const PropagationTrace& trace, const Topology& topology);

// Writes events.jsonl, result.json and propagation.csv into `dir`.
void write_run(const ScenarioRun& run, const std::filesystem::path& dir);

struct HopLatency {
  RoomId room;
  std::size_t distance = 0;
  std::optional<TimeMs> first_arrival_ms;
  TimeMs bound_ms = 0;

  bool within_bound() const { return first_arrival_ms && *first_arrival_ms <= bound_ms; }
};

struct ProbeResult {
  std::size_t n_rooms = 0;
  std::uint64_t seed = 0;
  std::string item;
  std::vector<HopLatency> hops;  // ordered by ring distance, origin first
  bool all_within_bound = false;
  bool monotone = false;
};

// One PROPOSE in room 0 at t = 0, silent listeners elsewhere; measures the
// first arrival per ring distance k against k * (observer max + surrogate
// delay). Needs at least two rooms.
ProbeResult propagation_probe(std::size_t n_rooms, std::uint64_t seed);
std::string probe_csv(const ProbeResult& probe);
Json to_json(const ProbeResult& probe);

}  // namespace csi::sim
