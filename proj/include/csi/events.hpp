#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "csi/ids.hpp"
#include "csi/json.hpp"

namespace csi {

enum class EventKind {
  session_created,
  participant_joined,
  deliberation_started,
  message,
  observer_report,
  labels_applied,
  surrogate_posted,
  finalized,
};

std::string to_string(EventKind kind);
EventKind parse_event_kind(const std::string& text);

struct Event {
  std::uint64_t seq = 0;
  EventKind kind = EventKind::session_created;
  TimeMs at_ms = 0;
  Json payload;

  bool operator==(const Event&) const = default;
};

Json to_json(const Event& event);
Event event_from_json(const Json& json);

// One compact JSON object per line, seq first.
std::string to_jsonl_line(const Event& event);
std::string to_jsonl(const std::vector<Event>& events);

// Throws csi::Error on malformed lines or a seq that is not gapless from 0.
std::vector<Event> parse_jsonl(std::istream& in);
std::vector<Event> read_event_log(const std::filesystem::path& path);
void write_event_log(const std::filesystem::path& path, const std::vector<Event>& events);

}  // namespace csi
