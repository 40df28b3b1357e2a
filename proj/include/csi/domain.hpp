#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "csi/ids.hpp"
#include "csi/json.hpp"

namespace csi {

enum class SurrogateMode { overt, natural };
enum class TopologyKind { directed_ring };
enum class ClockMode { wall, virtual_clock };
// standard_chat puts the whole roster in one room with agents disabled
// (the control arm of a two-condition comparison).
enum class Condition { swarm, standard_chat };

std::string to_string(SurrogateMode mode);
std::string to_string(TopologyKind kind);
std::string to_string(ClockMode mode);
std::string to_string(Condition condition);
SurrogateMode parse_surrogate_mode(const std::string& text);
TopologyKind parse_topology_kind(const std::string& text);
ClockMode parse_clock_mode(const std::string& text);
Condition parse_condition(const std::string& text);

struct SessionConfig {
  std::string session_id;
  std::string question;
  std::int64_t duration_s = 360;
  std::int64_t observer_interval_min_s = 45;
  std::int64_t observer_interval_max_s = 65;
  std::int64_t preference_msg_trigger = 5;
  std::int64_t preference_time_trigger_s = 15;
  std::int64_t surrogate_delay_s = 5;
  std::int64_t relay_top_k = 3;
  SurrogateMode surrogate_mode = SurrogateMode::overt;
  TopologyKind topology_kind = TopologyKind::directed_ring;
  std::int64_t target_room_size = 5;
  std::uint64_t rng_seed = 0;
  ClockMode clock_mode = ClockMode::virtual_clock;
  Condition condition = Condition::swarm;

  // Throws ConfigError listing every violated field.
  void validate() const;

  bool operator==(const SessionConfig&) const = default;
};

Json to_json(const SessionConfig& config);
// Missing keys take their defaults; unknown enum strings and wrong types
// are reported as field errors.
SessionConfig config_from_json(const Json& json);

struct RoomPlan {
  std::vector<RoomId> rooms;
  // members[i] belongs to rooms[i], in assignment order.
  std::vector<std::vector<ParticipantId>> members;
  std::unordered_map<ParticipantId, RoomId> assignment;

  std::size_t room_count() const { return rooms.size(); }
  const std::vector<ParticipantId>& members_of(RoomId room) const;
  std::optional<RoomId> room_of(const ParticipantId& participant) const;
  std::size_t population() const { return assignment.size(); }

  bool operator==(const RoomPlan&) const = default;
};

Json to_json(const RoomPlan& plan);
RoomPlan room_plan_from_json(const Json& json);

struct Topology {
  TopologyKind kind = TopologyKind::directed_ring;
  // Ring order after the seeded shuffle.
  std::vector<RoomId> order;
  // relay_source[room index] = room whose reports this room's surrogate relays.
  std::vector<RoomId> relay_source;

  RoomId source_of(RoomId room) const { return relay_source.at(room.value()); }
  // The room that relays `room`'s reports.
  RoomId successor_of(RoomId room) const;
  bool surrogates_enabled() const { return relay_source.size() >= 2; }

  bool operator==(const Topology&) const = default;
};

Json to_json(const Topology& topology);
Topology topology_from_json(const Json& json);

enum class AuthorKind { participant, observer_agent, surrogate_agent };

std::string to_string(AuthorKind kind);
AuthorKind parse_author_kind(const std::string& text);

struct Author {
  AuthorKind kind = AuthorKind::participant;
  ParticipantId participant;  // set when kind == participant
  RoomId room;                // set for agent authors

  static Author human(ParticipantId id) { return {AuthorKind::participant, std::move(id), RoomId{}}; }
  static Author observer(RoomId room) { return {AuthorKind::observer_agent, {}, room}; }
  static Author surrogate(RoomId room) { return {AuthorKind::surrogate_agent, {}, room}; }

  bool is_human() const { return kind == AuthorKind::participant; }
  // Wire id: participant id for humans, room key for agents.
  std::string id() const;

  bool operator==(const Author&) const = default;
};

Json to_json(const Author& author);
Author author_from_json(const Json& json);

struct Message {
  MessageId id;
  RoomId room;
  Author author;
  std::string body;
  TimeMs timestamp_ms = 0;

  bool operator==(const Message&) const = default;
};

Json to_json(const Message& message);
Message message_from_json(const Json& json);

// Splits the population into rooms of 4..7 (one room when p <= 7 or the
// condition is standard_chat). Participants are shuffled with the config
// seed and sliced so room sizes differ by at most one.
RoomPlan partition_population(std::span<const ParticipantId> participants,
                              const SessionConfig& config);

// Room count chosen by the partition rule for a population of p.
std::size_t partition_room_count(std::size_t population, std::size_t target_room_size);

// Directed ring over a seeded shuffle of `rooms`: the room at ring position
// i relays from position i-1. Rooms must be numbered 0..n-1.
Topology build_topology(std::span<const RoomId> rooms, TopologyKind kind, std::uint64_t seed);
// Ring over an explicit order, no shuffle.
Topology ring_from_order(std::vector<RoomId> order);
// Overload for the textual kind used in config files; throws on unknown kinds.
Topology build_topology(std::span<const RoomId> rooms, const std::string& kind, std::uint64_t seed);

}  // namespace csi
