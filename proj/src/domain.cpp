#include "csi/domain.hpp"

#include <algorithm>
#include <set>

#include "csi/error.hpp"
#include "csi/rng.hpp"

namespace csi {

namespace {

constexpr std::uint64_t kPartitionStream = 1;
constexpr std::uint64_t kTopologyStream = 2;

template <typename Enum, std::size_t N>
Enum parse_enum(const std::string& text, const std::pair<Enum, const char*> (&table)[N],
                const char* what) {
  for (const auto& [value, name] : table) {
    if (text == name) return value;
  }
  throw Error("unknown " + std::string(what) + ": '" + text + "'");
}

template <typename Enum, std::size_t N>
std::string enum_name(Enum value, const std::pair<Enum, const char*> (&table)[N]) {
  for (const auto& [v, name] : table) {
    if (v == value) return name;
  }
  return "?";
}

constexpr std::pair<SurrogateMode, const char*> kSurrogateModes[] = {
    {SurrogateMode::overt, "overt"}, {SurrogateMode::natural, "natural"}};
constexpr std::pair<TopologyKind, const char*> kTopologyKinds[] = {
    {TopologyKind::directed_ring, "directed_ring"}};
constexpr std::pair<ClockMode, const char*> kClockModes[] = {
    {ClockMode::wall, "wall"}, {ClockMode::virtual_clock, "virtual"}};
constexpr std::pair<Condition, const char*> kConditions[] = {
    {Condition::swarm, "swarm"}, {Condition::standard_chat, "standard_chat"}};
constexpr std::pair<AuthorKind, const char*> kAuthorKinds[] = {
    {AuthorKind::participant, "participant"},
    {AuthorKind::observer_agent, "observer_agent"},
    {AuthorKind::surrogate_agent, "surrogate_agent"}};

}  // namespace

std::string room_key(RoomId room) { return "room-" + std::to_string(room.value()); }

std::string room_display_name(RoomId room) {
  return "ThinkTank " + std::to_string(room.value() + 1);
}

RoomId parse_room_key(const std::string& key) {
  constexpr std::string_view prefix = "room-";
  if (key.size() <= prefix.size() || key.compare(0, prefix.size(), prefix) != 0) {
    throw Error("malformed room id: '" + key + "'");
  }
  const std::string digits = key.substr(prefix.size());
  if (!std::all_of(digits.begin(), digits.end(), [](char c) { return c >= '0' && c <= '9'; })) {
    throw Error("malformed room id: '" + key + "'");
  }
  return RoomId{static_cast<std::uint32_t>(std::stoul(digits))};
}

std::string to_string(SurrogateMode mode) { return enum_name(mode, kSurrogateModes); }
std::string to_string(TopologyKind kind) { return enum_name(kind, kTopologyKinds); }
std::string to_string(ClockMode mode) { return enum_name(mode, kClockModes); }
std::string to_string(Condition condition) { return enum_name(condition, kConditions); }
std::string to_string(AuthorKind kind) { return enum_name(kind, kAuthorKinds); }

SurrogateMode parse_surrogate_mode(const std::string& text) {
  return parse_enum(text, kSurrogateModes, "surrogate mode");
}
TopologyKind parse_topology_kind(const std::string& text) {
  return parse_enum(text, kTopologyKinds, "topology kind");
}
ClockMode parse_clock_mode(const std::string& text) {
  return parse_enum(text, kClockModes, "clock mode");
}
Condition parse_condition(const std::string& text) {
  return parse_enum(text, kConditions, "condition");
}
AuthorKind parse_author_kind(const std::string& text) {
  return parse_enum(text, kAuthorKinds, "author kind");
}

ConfigError::ConfigError(std::vector<FieldError> errors)
    : Error([&] {
        std::string what = "invalid session config:";
        for (const auto& e : errors) what += " " + e.field + " " + e.reason + ";";
        return what;
      }()),
      errors_(std::move(errors)) {}

void SessionConfig::validate() const {
  std::vector<FieldError> errors;
  if (duration_s <= 0) errors.push_back({"duration_s", "must be > 0"});
  if (observer_interval_min_s < 1) {
    errors.push_back({"observer_interval_s", "lower bound must be >= 1"});
  }
  if (observer_interval_min_s > observer_interval_max_s) {
    errors.push_back({"observer_interval_s", "lower bound must be <= upper bound"});
  }
  if (preference_msg_trigger < 1) errors.push_back({"preference_msg_trigger", "must be >= 1"});
  if (preference_time_trigger_s < 1) {
    errors.push_back({"preference_time_trigger_s", "must be >= 1"});
  }
  if (surrogate_delay_s < 0) errors.push_back({"surrogate_delay_s", "must be >= 0"});
  if (relay_top_k < 1) errors.push_back({"relay_top_k", "must be >= 1"});
  if (target_room_size < 4 || target_room_size > 7) {
    errors.push_back({"target_room_size", "must be in [4, 7]"});
  }
  if (!errors.empty()) throw ConfigError(std::move(errors));
}

Json to_json(const SessionConfig& c) {
  return Json{
      {"session_id", c.session_id},
      {"question", c.question},
      {"duration_s", c.duration_s},
      {"observer_interval_s", Json::array({c.observer_interval_min_s, c.observer_interval_max_s})},
      {"preference_msg_trigger", c.preference_msg_trigger},
      {"preference_time_trigger_s", c.preference_time_trigger_s},
      {"surrogate_delay_s", c.surrogate_delay_s},
      {"relay_top_k", c.relay_top_k},
      {"surrogate_mode", to_string(c.surrogate_mode)},
      {"topology_kind", to_string(c.topology_kind)},
      {"target_room_size", c.target_room_size},
      {"rng_seed", c.rng_seed},
      {"clock_mode", to_string(c.clock_mode)},
      {"condition", to_string(c.condition)},
  };
}

SessionConfig config_from_json(const Json& json) {
  if (!json.is_object()) throw ConfigError(std::vector<FieldError>{{"config", "must be a JSON object"}});
  SessionConfig c;
  std::vector<FieldError> errors;

  auto read = [&](const char* key, auto& out) {
    if (!json.contains(key)) return;
    try {
      json.at(key).get_to(out);
    } catch (const std::exception&) {
      errors.push_back({key, "has the wrong type"});
    }
  };
  auto read_enum = [&](const char* key, auto& out, auto parse) {
    if (!json.contains(key)) return;
    try {
      out = parse(json.at(key).template get<std::string>());
    } catch (const std::exception& e) {
      errors.push_back({key, e.what()});
    }
  };

  read("session_id", c.session_id);
  read("question", c.question);
  read("duration_s", c.duration_s);
  if (json.contains("observer_interval_s")) {
    const auto& range = json.at("observer_interval_s");
    if (range.is_array() && range.size() == 2 && range[0].is_number_integer() &&
        range[1].is_number_integer()) {
      c.observer_interval_min_s = range[0].get<std::int64_t>();
      c.observer_interval_max_s = range[1].get<std::int64_t>();
    } else {
      errors.push_back({"observer_interval_s", "must be a [lower, upper] pair of integers"});
    }
  }
  read("preference_msg_trigger", c.preference_msg_trigger);
  read("preference_time_trigger_s", c.preference_time_trigger_s);
  read("surrogate_delay_s", c.surrogate_delay_s);
  read("relay_top_k", c.relay_top_k);
  read_enum("surrogate_mode", c.surrogate_mode, parse_surrogate_mode);
  read_enum("topology_kind", c.topology_kind, parse_topology_kind);
  read("target_room_size", c.target_room_size);
  read("rng_seed", c.rng_seed);
  read_enum("clock_mode", c.clock_mode, parse_clock_mode);
  read_enum("condition", c.condition, parse_condition);

  if (!errors.empty()) throw ConfigError(std::move(errors));
  return c;
}

const std::vector<ParticipantId>& RoomPlan::members_of(RoomId room) const {
  return members.at(room.value());
}

std::optional<RoomId> RoomPlan::room_of(const ParticipantId& participant) const {
  auto it = assignment.find(participant);
  if (it == assignment.end()) return std::nullopt;
  return it->second;
}

Json to_json(const RoomPlan& plan) {
  Json rooms = Json::array();
  for (std::size_t i = 0; i < plan.rooms.size(); ++i) {
    Json members = Json::array();
    for (const auto& p : plan.members[i]) members.push_back(p.value());
    rooms.push_back(Json{{"room", room_key(plan.rooms[i])}, {"members", std::move(members)}});
  }
  return Json{{"rooms", std::move(rooms)}};
}

RoomPlan room_plan_from_json(const Json& json) {
  RoomPlan plan;
  for (const auto& entry : json.at("rooms")) {
    const RoomId room = parse_room_key(entry.at("room").get<std::string>());
    plan.rooms.push_back(room);
    auto& members = plan.members.emplace_back();
    for (const auto& m : entry.at("members")) {
      ParticipantId id{m.get<std::string>()};
      plan.assignment.emplace(id, room);
      members.push_back(std::move(id));
    }
  }
  return plan;
}

RoomId Topology::successor_of(RoomId room) const {
  for (std::size_t i = 0; i < relay_source.size(); ++i) {
    if (relay_source[i] == room) return RoomId{static_cast<std::uint32_t>(i)};
  }
  throw Error("room not in topology: " + room_key(room));
}

Json to_json(const Topology& t) {
  Json order = Json::array();
  for (auto r : t.order) order.push_back(room_key(r));
  Json sources = Json::object();
  for (std::size_t i = 0; i < t.relay_source.size(); ++i) {
    sources[room_key(RoomId{static_cast<std::uint32_t>(i)})] = room_key(t.relay_source[i]);
  }
  return Json{{"kind", to_string(t.kind)}, {"order", std::move(order)},
              {"relay_source", std::move(sources)}};
}

Topology topology_from_json(const Json& json) {
  Topology t;
  t.kind = parse_topology_kind(json.at("kind").get<std::string>());
  for (const auto& r : json.at("order")) t.order.push_back(parse_room_key(r.get<std::string>()));
  t.relay_source.resize(t.order.size());
  for (const auto& [key, value] : json.at("relay_source").items()) {
    t.relay_source.at(parse_room_key(key).value()) = parse_room_key(value.get<std::string>());
  }
  return t;
}

std::string Author::id() const {
  return is_human() ? participant.value() : room_key(room);
}

Json to_json(const Author& author) {
  return Json{{"kind", to_string(author.kind)}, {"id", author.id()}};
}

Author author_from_json(const Json& json) {
  const AuthorKind kind = parse_author_kind(json.at("kind").get<std::string>());
  const auto id = json.at("id").get<std::string>();
  switch (kind) {
    case AuthorKind::participant:
      return Author::human(ParticipantId{id});
    case AuthorKind::observer_agent:
      return Author::observer(parse_room_key(id));
    case AuthorKind::surrogate_agent:
      return Author::surrogate(parse_room_key(id));
  }
  throw Error("unreachable author kind");
}

Json to_json(const Message& m) {
  return Json{{"message_id", m.id.value()},
              {"room", room_key(m.room)},
              {"author", to_json(m.author)},
              {"body", m.body},
              {"at_ms", m.timestamp_ms}};
}

Message message_from_json(const Json& json) {
  Message m;
  m.id = MessageId{json.at("message_id").get<std::uint64_t>()};
  m.room = parse_room_key(json.at("room").get<std::string>());
  m.author = author_from_json(json.at("author"));
  m.body = json.at("body").get<std::string>();
  m.timestamp_ms = json.at("at_ms").get<TimeMs>();
  return m;
}

std::size_t partition_room_count(std::size_t population, std::size_t target_room_size) {
  if (population <= 7) return 1;
  std::size_t n = (population + target_room_size - 1) / target_room_size;
  while (n > 1 && population / n < 4) --n;
  return n;
}

RoomPlan partition_population(std::span<const ParticipantId> participants,
                              const SessionConfig& config) {
  if (participants.empty()) throw Error("cannot partition an empty population");

  std::vector<ParticipantId> shuffled(participants.begin(), participants.end());
  SplitMix64 rng(derive_seed(config.rng_seed, kPartitionStream));
  rng.shuffle(std::span<ParticipantId>(shuffled));

  const std::size_t p = shuffled.size();
  const std::size_t n = config.condition == Condition::standard_chat
                            ? 1
                            : partition_room_count(p, static_cast<std::size_t>(config.target_room_size));

  RoomPlan plan;
  plan.rooms.reserve(n);
  plan.members.resize(n);
  plan.assignment.reserve(p);
  const std::size_t base = p / n;
  const std::size_t extra = p % n;
  std::size_t next = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const RoomId room{static_cast<std::uint32_t>(i)};
    plan.rooms.push_back(room);
    const std::size_t size = base + (i < extra ? 1 : 0);
    plan.members[i].reserve(size);
    for (std::size_t j = 0; j < size; ++j, ++next) {
      // The assignment map doubles as the duplicate check.
      if (!plan.assignment.emplace(shuffled[next], room).second) {
        throw Error("duplicate participant id: " + shuffled[next].value());
      }
      plan.members[i].push_back(std::move(shuffled[next]));
    }
  }
  return plan;
}

Topology ring_from_order(std::vector<RoomId> order) {
  Topology t;
  t.kind = TopologyKind::directed_ring;
  const std::size_t n = order.size();
  t.relay_source.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const RoomId room = order[i];
    if (room.value() >= n) throw Error("room ids must be numbered 0..n-1");
    t.relay_source[room.value()] = order[(i + n - 1) % n];
  }
  t.order = std::move(order);
  return t;
}

Topology build_topology(std::span<const RoomId> rooms, TopologyKind kind, std::uint64_t seed) {
  if (rooms.empty()) throw Error("topology needs at least one room");
  switch (kind) {
    case TopologyKind::directed_ring: {
      std::vector<RoomId> order(rooms.begin(), rooms.end());
      SplitMix64 rng(derive_seed(seed, kTopologyStream));
      rng.shuffle(std::span<RoomId>(order));
      return ring_from_order(std::move(order));
    }
  }
  throw Error("unknown topology kind");
}

Topology build_topology(std::span<const RoomId> rooms, const std::string& kind, std::uint64_t seed) {
  return build_topology(rooms, parse_topology_kind(kind), seed);
}

}  // namespace csi
