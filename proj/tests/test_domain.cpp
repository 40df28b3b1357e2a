#include <doctest.h>

#include <algorithm>
#include <set>

#include "csi/domain.hpp"
#include "csi/error.hpp"
#include "partition_check.hpp"
#include "support.hpp"

using namespace csi;
using testing_support::people;

namespace {

std::vector<std::string> names(const std::vector<ParticipantId>& ids) {
  std::vector<std::string> out;
  for (const auto& id : ids) out.push_back(id.value());
  return out;
}

std::vector<std::vector<std::string>> rooms_of(const RoomPlan& plan) {
  std::vector<std::vector<std::string>> out;
  for (const auto& members : plan.members) out.push_back(names(members));
  return out;
}

std::vector<std::size_t> sizes(const RoomPlan& plan) {
  std::vector<std::size_t> out;
  for (const auto& m : plan.members) out.push_back(m.size());
  std::sort(out.rbegin(), out.rend());
  return out;
}

std::vector<FieldError> config_errors(const SessionConfig& c) {
  try {
    c.validate();
  } catch (const ConfigError& e) {
    return e.errors();
  }
  return {};
}

bool has_field(const std::vector<FieldError>& errors, const std::string& field) {
  return std::any_of(errors.begin(), errors.end(), [&](const FieldError& e) { return e.field == field; });
}

}  // namespace

TEST_CASE("config: defaults are valid") {
  SessionConfig c;
  CHECK_NOTHROW(c.validate());
  CHECK(c.duration_s == 360);
  CHECK(c.observer_interval_min_s == 45);
  CHECK(c.observer_interval_max_s == 65);
  CHECK(c.preference_msg_trigger == 5);
  CHECK(c.preference_time_trigger_s == 15);
  CHECK(c.target_room_size == 5);
}

TEST_CASE("config: every violation is listed") {
  SessionConfig c;
  c.duration_s = 0;
  c.observer_interval_min_s = 70;
  c.preference_msg_trigger = 0;
  c.preference_time_trigger_s = 0;
  c.target_room_size = 8;
  const auto errors = config_errors(c);
  CHECK(has_field(errors, "duration_s"));
  CHECK(has_field(errors, "observer_interval_s"));
  CHECK(has_field(errors, "preference_msg_trigger"));
  CHECK(has_field(errors, "preference_time_trigger_s"));
  CHECK(has_field(errors, "target_room_size"));
}

TEST_CASE("config: interval lower bound at least one") {
  SessionConfig c;
  c.observer_interval_min_s = 0;
  CHECK(has_field(config_errors(c), "observer_interval_s"));
  c.observer_interval_min_s = 1;
  c.observer_interval_max_s = 1;
  CHECK(config_errors(c).empty());
}

TEST_CASE("config: room size range") {
  for (int size = 1; size <= 10; ++size) {
    SessionConfig c;
    c.target_room_size = size;
    CHECK_MESSAGE(config_errors(c).empty() == (size >= 4 && size <= 7), size);
  }
}

TEST_CASE("config: json round trip") {
  SessionConfig c;
  c.session_id = "abc";
  c.question = "Where should we go?";
  c.duration_s = 120;
  c.observer_interval_min_s = 10;
  c.observer_interval_max_s = 20;
  c.surrogate_mode = SurrogateMode::natural;
  c.rng_seed = 0xfedcba9876543210ULL;
  c.clock_mode = ClockMode::wall;
  c.condition = Condition::standard_chat;
  c.relay_top_k = 2;
  CHECK(config_from_json(to_json(c)) == c);
  CHECK(config_from_json(Json::parse(to_json(c).dump())) == c);
}

TEST_CASE("config: missing keys take defaults") {
  CHECK(config_from_json(Json::object()) == SessionConfig{});
}

TEST_CASE("config: bad types and enums are field errors") {
  Json j = {{"duration_s", "long"}, {"surrogate_mode", "loud"}, {"observer_interval_s", {1}},
            {"topology_kind", "star"}};
  try {
    config_from_json(j);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(has_field(e.errors(), "duration_s"));
    CHECK(has_field(e.errors(), "surrogate_mode"));
    CHECK(has_field(e.errors(), "observer_interval_s"));
    CHECK(has_field(e.errors(), "topology_kind"));
  }
  CHECK_THROWS_AS(config_from_json(Json::array()), ConfigError);
}

TEST_CASE("partition: three hundred makes sixty rooms of five") {
  const auto pop = people("u", 300);
  const auto plan = partition_population(pop, SessionConfig{});
  REQUIRE(plan.room_count() == 60u);
  for (const auto& m : plan.members) CHECK(m.size() == 5u);
}

TEST_CASE("partition: small population is one room") {
  for (std::size_t p = 1; p <= 7; ++p) {
    const auto plan = partition_population(people("u", p), SessionConfig{});
    CHECK(plan.room_count() == 1u);
    CHECK(plan.population() == p);
  }
}

TEST_CASE("partition: forty eight and eleven") {
  CHECK(sizes(partition_population(people("u", 48), SessionConfig{})) == (std::vector<std::size_t>{5, 5, 5, 5, 5, 5, 5, 5, 4, 4}));
  CHECK(sizes(partition_population(people("u", 11), SessionConfig{})) == (std::vector<std::size_t>{6, 5}));
}

// Brute force over every room count: the chosen count must yield legal,
// even rooms.
TEST_CASE("partition: brute force agrees with rule") {
  for (std::size_t target = 4; target <= 7; ++target) {
    for (std::size_t p = 8; p <= 400; ++p) {
      std::set<std::size_t> legal;
      for (std::size_t n = 1; n <= p; ++n) {
        const std::size_t lo = p / n, hi = lo + (p % n ? 1 : 0);
        if (lo >= 4 && hi <= 7) legal.insert(n);
      }
      CHECK_MESSAGE(legal.contains(partition_room_count(p, target)), "p=" << p << " target=" << target);
    }
  }
}

TEST_CASE("partition: properties over populations") {
  for (std::int64_t target = 4; target <= 7; ++target) {
    SessionConfig c;
    c.target_room_size = target;
    for (std::size_t p = 8; p <= 2000; p += (p < 200 ? 1 : 37)) {
      const auto pop = people("u", p);
      const auto plan = partition_population(pop, c);
      const auto verdict = oracle::check_partition(names(pop), rooms_of(plan), 4, 7);
      REQUIRE_MESSAGE(verdict.ok, "p=" << p << ": " << verdict.why);
      for (const auto& who : pop) {
        REQUIRE(plan.room_of(who).has_value());
      }
    }
  }
}

TEST_CASE("partition: deterministic per seed") {
  const auto pop = people("u", 48);
  SessionConfig a, b;
  a.rng_seed = b.rng_seed = 9;
  CHECK(partition_population(pop, a) == partition_population(pop, b));
  b.rng_seed = 10;
  CHECK(partition_population(pop, a).members != partition_population(pop, b).members);
}

TEST_CASE("partition: standard chat is one room") {
  SessionConfig c;
  c.condition = Condition::standard_chat;
  CHECK(partition_population(people("u", 48), c).room_count() == 1u);
}

TEST_CASE("partition: rejects empty and duplicates") {
  CHECK_THROWS_AS(partition_population(std::vector<ParticipantId>{}, SessionConfig{}), Error);
  std::vector<ParticipantId> dup{ParticipantId{"a"}, ParticipantId{"b"}, ParticipantId{"a"}};
  CHECK_THROWS_AS(partition_population(dup, SessionConfig{}), Error);
}

TEST_CASE("partition: plan json round trip") {
  const auto plan = partition_population(people("u", 23), SessionConfig{});
  CHECK(room_plan_from_json(Json::parse(to_json(plan).dump())) == plan);
}

TEST_CASE("topology: identity ring") {
  const auto t = ring_from_order({RoomId{0}, RoomId{1}, RoomId{2}});
  CHECK(t.source_of(RoomId{0}) == RoomId{2});
  CHECK(t.source_of(RoomId{1}) == RoomId{0});
  CHECK(t.source_of(RoomId{2}) == RoomId{1});
  CHECK(t.successor_of(RoomId{0}) == RoomId{1});
}

TEST_CASE("topology: single room maps to itself") {
  const std::vector<RoomId> rooms{RoomId{0}};
  const auto t = build_topology(rooms, TopologyKind::directed_ring, 1);
  CHECK(t.source_of(RoomId{0}) == RoomId{0});
  CHECK_FALSE(t.surrogates_enabled());
}

// Walking relay_source must visit every room once and return after n steps.
TEST_CASE("topology: always one cycle") {
  for (std::uint32_t n = 2; n <= 40; ++n) {
    std::vector<RoomId> rooms;
    for (std::uint32_t i = 0; i < n; ++i) rooms.emplace_back(i);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const auto t = build_topology(rooms, TopologyKind::directed_ring, seed);
      std::set<std::uint32_t> visited;
      RoomId at{0};
      for (std::uint32_t step = 0; step < n; ++step) {
        REQUIRE_MESSAGE(t.source_of(at) != at, "self loop");
        visited.insert(at.value());
        at = t.source_of(at);
      }
      CHECK(at == RoomId{0});
      CHECK(visited.size() == n);
      CHECK(t == build_topology(rooms, TopologyKind::directed_ring, seed));
    }
  }
}

TEST_CASE("topology: unknown kind rejected") {
  const std::vector<RoomId> rooms{RoomId{0}, RoomId{1}};
  CHECK_THROWS_AS(build_topology(rooms, std::string("star"), 1), Error);
  CHECK_NOTHROW(build_topology(rooms, std::string("directed_ring"), 1));
}

TEST_CASE("topology: json round trip") {
  std::vector<RoomId> rooms;
  for (std::uint32_t i = 0; i < 8; ++i) rooms.emplace_back(i);
  const auto t = build_topology(rooms, TopologyKind::directed_ring, 5);
  CHECK(topology_from_json(Json::parse(to_json(t).dump())) == t);
}

TEST_CASE("messagejson: round trip for every author kind") {
  for (const auto& m : {testing_support::human(3, 1, "u01", "héllo", 1500),
                        testing_support::agent(4, 2, AuthorKind::observer_agent, "x", 2),
                        testing_support::agent(5, 0, AuthorKind::surrogate_agent, "RELAY(a)", 9)}) {
    CHECK(message_from_json(Json::parse(to_json(m).dump())) == m);
  }
}

TEST_CASE("roomkeys: round trip") {
  CHECK(room_key(RoomId{3}) == "room-3");
  CHECK(room_display_name(RoomId{3}) == "ThinkTank 4");
  CHECK(parse_room_key("room-12") == RoomId{12});
  CHECK_THROWS_AS(parse_room_key("room-"), Error);
  CHECK_THROWS_AS(parse_room_key("lobby"), Error);
}
