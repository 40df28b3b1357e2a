#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <random>
#include <sstream>

#include "csi/error.hpp"
#include "csi/events.hpp"
#include "csi/markers.hpp"
#include "csi/sim.hpp"
#include "script_oracle.hpp"
#include "support.hpp"

using namespace csi;
using namespace csi::sim;

namespace fs = std::filesystem;

namespace {

fs::path scenario_dir() { return fs::path(CSI_SOURCE_DIR) / "scenarios"; }

std::vector<fs::path> bundled() {
  std::vector<fs::path> out;
  for (const auto& entry : fs::directory_iterator(scenario_dir())) {
    if (entry.path().extension() == ".json") out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

oracle::BatchResult oracle_for(const Scenario& s, std::size_t rooms) {
  std::vector<std::string> roster;
  for (const auto& p : s.roster) roster.push_back(p.value());
  std::vector<oracle::ScriptLine> lines;
  for (const auto& e : s.script) lines.push_back({e.participant.value(), e.at_ms, e.body, e.as_agent.has_value()});
  return oracle::script_outcome(roster, lines, rooms);
}

std::string label_of(const Json& result, const std::string& item_id) {
  for (const auto& row : result.at("table")) {
    if (row.at("item_id") == item_id) return row.at("label").get<std::string>();
  }
  return {};
}

}  // namespace

TEST_CASE("two rooms: the broad favourite beats the loud minority") {
  Scenario s;
  s.name = "two-rooms";
  s.config = Json{{"rng_seed", 12}};
  s.roster = testing_support::people("p", 10);
  const auto plan = partition_population(s.roster, scenario_config(s, 12));
  REQUIRE(plan.room_count() == 2);
  TimeMs t = 1000;
  for (const auto& p : plan.members_of(RoomId{0})) {
    s.script.push_back({p, t, "SUPPORT(lantern, 3)", std::nullopt});
    t += 1000;
  }
  for (const auto& p : plan.members_of(RoomId{1})) {
    s.script.push_back({p, t, "SUPPORT(harbor, 1)", std::nullopt});
    t += 1000;
  }
  validate(s);
  const auto run = run_scenario(s, 12);
  REQUIRE(run.result.winner.has_value());
  CHECK(run.result.winner_label == "lantern");
  std::map<std::string, double> nets;
  for (const auto& row : run.result_json.at("table")) nets[row.at("label")] = row.at("net").get<double>();
  CHECK(nets.at("lantern") == 1.5);
  CHECK(nets.at("harbor") == 0.5);
}

TEST_CASE("empty script: nothing to win") {
  Scenario s;
  s.name = "quiet";
  s.roster = testing_support::people("q", 9);
  const auto run = run_scenario(s, 1);
  CHECK_FALSE(run.result.winner.has_value());
  CHECK(run.result_json.at("winner").is_null());
  CHECK(run.result_json.at("table").empty());
}

TEST_CASE("runs are byte-identical for the same seed") {
  for (const auto& path : bundled()) {
    const auto s = load_scenario(path);
    const auto a = run_scenario(s, 7);
    const auto b = run_scenario(s, 7);
    CHECK_MESSAGE(to_jsonl(a.events) == to_jsonl(b.events), path.filename().string());
    CHECK(a.result_json.dump() == b.result_json.dump());
    const auto replayed = Session::replay(a.events);
    CHECK(replayed.result_json() == a.result_json);
  }
}

TEST_CASE("bundled scenarios agree with the offline script oracle") {
  for (const auto& path : bundled()) {
    const auto s = load_scenario(path);
    const auto seed = scenario_config(s, 0).rng_seed;
    const auto run = run_scenario(s, seed);
    const auto expected = oracle_for(s, run.plan.room_count());
    INFO(path.filename().string());

    std::set<std::string> labels, oracle_labels;
    for (const auto& row : run.result_json.at("table")) {
      const auto label = row.at("label").get<std::string>();
      labels.insert(label);
      CHECK(row.at("sum").get<std::int64_t>() == expected.sums.at(label));
      CHECK(std::abs(row.at("net").get<double>() - round4(expected.nets.at(label))) < 1e-12);
    }
    for (const auto& [key, sum] : expected.sums) oracle_labels.insert(key);
    CHECK(labels == oracle_labels);

    if (expected.winner) {
      REQUIRE(!run.result_json.at("winner").is_null());
      CHECK(label_of(run.result_json, run.result_json.at("winner")) == *expected.winner);
    } else {
      CHECK(run.result_json.at("winner").is_null());
    }
    CHECK(run.result_json.at("tie_break") == expected.tie_break);
    CHECK(run.expectation_failures.empty());
  }
}

TEST_CASE("validation lists every problem") {
  Scenario s;
  s.config = Json{{"duration_s", 10}, {"relay_top_k", 0}};
  s.roster = {ParticipantId{"a"}, ParticipantId{"a"}, ParticipantId{""}};
  s.script.push_back({ParticipantId{"ghost"}, 20000, "  ", AuthorKind::participant});
  try {
    validate(s);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    std::set<std::string> fields;
    for (const auto& f : e.errors()) fields.insert(f.field);
    CHECK(fields.contains("config.relay_top_k"));
    CHECK(fields.contains("roster[1]"));
    CHECK(fields.contains("roster[2]"));
    CHECK(fields.contains("script[0].participant"));
    CHECK(fields.contains("script[0].at_ms"));
    CHECK(fields.contains("script[0].body"));
    CHECK(fields.contains("script[0].as_agent"));
  }

  Scenario empty;
  CHECK_THROWS_AS(validate(empty), ConfigError);
}

TEST_CASE("scenario JSON round trip") {
  for (const auto& path : bundled()) {
    const auto s = load_scenario(path);
    const auto again = scenario_from_json(to_json(s));
    CHECK(to_json(again) == to_json(s));
  }
}

TEST_CASE("probe: two and eight rooms stay within the hop bound") {
  SessionConfig defaults;
  const TimeMs hop = (defaults.observer_interval_max_s + defaults.surrogate_delay_s) * 1000;
  for (std::size_t n : {2u, 8u}) {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
      const auto probe = propagation_probe(n, seed);
      REQUIRE(probe.hops.size() == n);
      TimeMs previous = -1;
      for (std::size_t k = 0; k < n; ++k) {
        const auto& hop_k = probe.hops[k];
        CHECK(hop_k.distance == k);
        CHECK(hop_k.bound_ms == static_cast<TimeMs>(k) * hop);
        REQUIRE(hop_k.first_arrival_ms.has_value());
        CHECK(*hop_k.first_arrival_ms <= hop_k.bound_ms);
        CHECK(*hop_k.first_arrival_ms >= previous);
        previous = *hop_k.first_arrival_ms;
      }
      CHECK(probe.all_within_bound);
      CHECK(probe.monotone);
    }
  }
  CHECK_THROWS_AS(propagation_probe(1, 1), Error);
}

TEST_CASE("propagation csv covers every item and room") {
  const auto s = load_scenario(scenario_dir() / "propagation.json");
  const auto run = run_scenario(s, 4);
  const auto csv = propagation_csv(run.trace, run.topology);
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  CHECK(line == "item,room,ring_distance,first_seen_ms");
  std::size_t rows = 0;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == run.trace.first_seen.size() * run.plan.room_count());
  CHECK(run.trace.rooms_reached("the greenhouse") >= 8);

  const auto dir = fs::temp_directory_path() / "csi-sim-test";
  fs::remove_all(dir);
  write_run(run, dir);
  CHECK(fs::exists(dir / "events.jsonl"));
  CHECK(fs::exists(dir / "result.json"));
  CHECK(fs::exists(dir / "propagation.csv"));
  CHECK(read_event_log(dir / "events.jsonl") == run.events);
  fs::remove_all(dir);
}

TEST_CASE("random scenarios agree with the offline script oracle") {
  const char* items[] = {"north", "south", "east", "west", "centre"};
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 100; ++trial) {
    Scenario s;
    s.name = "random";
    s.config = Json{{"rng_seed", trial}};
    s.roster = testing_support::people("r", 4 + rng() % 20);
    TimeMs t = 0;
    const std::size_t lines = rng() % 60;
    for (std::size_t i = 0; i < lines; ++i) {
      t += 1 + static_cast<TimeMs>(rng() % 6000);
      if (t > 360000) break;
      const std::string item = items[rng() % 5];
      const int strength = 1 + static_cast<int>(rng() % 3);
      std::string body;
      switch (rng() % 4) {
        case 0: body = "PROPOSE(" + item + ", " + std::to_string(strength) + ")"; break;
        case 1: body = "SUPPORT(" + item + ", " + std::to_string(strength) + ")"; break;
        case 2: body = "OPPOSE(" + item + ", " + std::to_string(strength) + ")"; break;
        default: body = "thinking about " + item;
      }
      s.script.push_back({s.roster[rng() % s.roster.size()], t, body, std::nullopt});
    }
    const auto run = run_scenario(s, static_cast<std::uint64_t>(trial));
    const auto expected = oracle_for(s, run.plan.room_count());
    INFO("trial " << trial);
    REQUIRE(run.result_json.at("table").size() == expected.sums.size());
    for (const auto& row : run.result_json.at("table")) {
      CHECK(row.at("sum").get<std::int64_t>() == expected.sums.at(row.at("label").get<std::string>()));
    }
    if (expected.winner) {
      CHECK(label_of(run.result_json, run.result_json.at("winner")) == *expected.winner);
      CHECK(run.result_json.at("tie_break") == expected.tie_break);
    } else {
      CHECK(run.result_json.at("winner").is_null());
    }
  }
}
