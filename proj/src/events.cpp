#include "csi/events.hpp"

#include <fstream>
#include <sstream>

#include "csi/error.hpp"

namespace csi {

namespace {
constexpr std::pair<EventKind, const char*> kKinds[] = {
    {EventKind::session_created, "session_created"},
    {EventKind::participant_joined, "participant_joined"},
    {EventKind::deliberation_started, "deliberation_started"},
    {EventKind::message, "message"},
    {EventKind::observer_report, "observer_report"},
    {EventKind::labels_applied, "labels_applied"},
    {EventKind::surrogate_posted, "surrogate_posted"},
    {EventKind::finalized, "finalized"},
};
}  // namespace

std::string to_string(EventKind kind) {
  for (const auto& [k, name] : kKinds) {
    if (k == kind) return name;
  }
  return "?";
}

EventKind parse_event_kind(const std::string& text) {
  for (const auto& [k, name] : kKinds) {
    if (text == name) return k;
  }
  throw Error("unknown event kind: '" + text + "'");
}

Json to_json(const Event& e) {
  return Json{{"seq", e.seq}, {"kind", to_string(e.kind)}, {"at_ms", e.at_ms}, {"payload", e.payload}};
}

Event event_from_json(const Json& json) {
  Event e;
  e.seq = json.at("seq").get<std::uint64_t>();
  e.kind = parse_event_kind(json.at("kind").get<std::string>());
  e.at_ms = json.at("at_ms").get<TimeMs>();
  e.payload = json.at("payload");
  return e;
}

std::string to_jsonl_line(const Event& event) { return to_json(event).dump() + "\n"; }

std::string to_jsonl(const std::vector<Event>& events) {
  std::string out;
  for (const auto& e : events) out += to_jsonl_line(e);
  return out;
}

std::vector<Event> parse_jsonl(std::istream& in) {
  std::vector<Event> events;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    Event e;
    try {
      e = event_from_json(Json::parse(line));
    } catch (const std::exception& ex) {
      throw Error("event log line " + std::to_string(line_no) + ": " + ex.what());
    }
    if (e.seq != events.size()) {
      throw Error("event log line " + std::to_string(line_no) + ": expected seq " +
                  std::to_string(events.size()) + ", found " + std::to_string(e.seq));
    }
    events.push_back(std::move(e));
  }
  return events;
}

std::vector<Event> read_event_log(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open event log " + path.string());
  return parse_jsonl(in);
}

void write_event_log(const std::filesystem::path& path, const std::vector<Event>& events) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write event log " + path.string());
  out << to_jsonl(events);
}

}  // namespace csi
