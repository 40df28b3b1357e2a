#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>

namespace csi {

// Thin tagged wrapper so participant, item and room ids cannot be mixed up.
template <typename Tag, typename T>
class StrongId {
 public:
  using value_type = T;

  StrongId() = default;
  explicit StrongId(T value) : value_(std::move(value)) {}

  const T& value() const { return value_; }

  friend auto operator<=>(const StrongId&, const StrongId&) = default;
  friend bool operator==(const StrongId&, const StrongId&) = default;

 private:
  T value_{};
};

using ParticipantId = StrongId<struct ParticipantTag, std::string>;
using ItemId = StrongId<struct ItemTag, std::string>;
using MessageId = StrongId<struct MessageTag, std::uint64_t>;
using RoomId = StrongId<struct RoomTag, std::uint32_t>;

using TimeMs = std::int64_t;

// "room-3"
std::string room_key(RoomId room);
// "ThinkTank 4" (one-based, as shown to participants)
std::string room_display_name(RoomId room);
// Inverse of room_key; throws csi::Error on malformed input.
RoomId parse_room_key(const std::string& key);

}  // namespace csi

template <typename Tag, typename T>
struct std::hash<csi::StrongId<Tag, T>> {
  std::size_t operator()(const csi::StrongId<Tag, T>& id) const noexcept {
    return std::hash<T>{}(id.value());
  }
};
