#include <algorithm>
#include <atomic>
#include <boost/asio/post.hpp>
#include <boost/asio/thread_pool.hpp>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "csi/log.hpp"
#include "csi/rng.hpp"
#include "csi/server.hpp"

namespace csi {

namespace fs = std::filesystem;

struct SessionHub::Slot {
  explicit Slot(Session s) : session(std::move(s)) {}

  std::mutex mutex;
  Session session;
  std::shared_ptr<LanguageModel> backend;
  std::optional<std::chrono::steady_clock::time_point> started_at;
  TimeMs virtual_now = 0;
  std::size_t persisted = 0;
  std::size_t delivered = 0;
  std::map<ParticipantId, std::vector<std::shared_ptr<Connection>>> connections;
  std::vector<analytics::SurveyResponse> survey;
};

namespace {

bool valid_session_id(const std::string& id) {
  if (id.empty() || id.size() > 128) return false;
  return std::all_of(id.begin(), id.end(), [](unsigned char c) {
    return std::isalnum(c) || c == '-' || c == '_' || c == '.';
  }) && id.front() != '.';
}

fs::path log_path(const fs::path& dir, const std::string& id) { return dir / (id + ".events.jsonl"); }
fs::path survey_path(const fs::path& dir, const std::string& id) { return dir / (id + ".survey.csv"); }

Json distribution_json(const analytics::Distribution& d) {
  return Json{{"n", d.n},
              {"mean", d.mean},
              {"variance", d.variance},
              {"p10", d.p10},
              {"p25", d.p25},
              {"p50", d.p50},
              {"p75", d.p75},
              {"p90", d.p90},
              {"contribution_ratio", d.contribution_ratio ? Json(*d.contribution_ratio) : Json(nullptr)}};
}

}  // namespace

Json message_frame(const Message& m) {
  return Json{{"type", "message"},
              {"message_id", m.id.value()},
              {"room", room_key(m.room)},
              {"author", to_json(m.author)},
              {"body", m.body},
              {"at_ms", m.timestamp_ms}};
}

Json joined_frame(const std::optional<RoomId>& room, const std::vector<ParticipantId>& roster) {
  Json members = Json::array();
  for (const auto& p : roster) members.push_back(p.value());
  return Json{{"type", "joined"},
              {"room", room ? Json(room_key(*room)) : Json(nullptr)},
              {"room_name", room ? Json(room_display_name(*room)) : Json(nullptr)},
              {"roster", std::move(members)}};
}

Json error_frame(const std::string& error) { return Json{{"type", "error"}, {"error", error}}; }

SessionHub::SessionHub(HubOptions options, BackendFactory backends, Clock clock)
    : options_(std::move(options)),
      backends_(std::move(backends)),
      clock_(std::move(clock)),
      workers_(std::make_unique<boost::asio::thread_pool>(std::max<std::size_t>(1, options_.backend_workers))) {
  fs::create_directories(options_.state_dir);
}

SessionHub::~SessionHub() { workers_->join(); }

std::vector<std::string> SessionHub::load_state() {
  std::vector<std::string> loaded;
  std::vector<fs::path> logs;
  for (const auto& entry : fs::directory_iterator(options_.state_dir)) {
    const std::string name = entry.path().filename().string();
    if (name.size() > 13 && name.ends_with(".events.jsonl")) logs.push_back(entry.path());
  }
  std::sort(logs.begin(), logs.end());
  for (const auto& path : logs) {
    auto slot = std::make_shared<Slot>(Session::replay(read_event_log(path)));
    auto& s = slot->session;
    slot->backend = backends_(s.config());
    s.set_backend(slot->backend, options_.dispatch);
    slot->persisted = slot->delivered = s.events().size();
    slot->virtual_now = s.now_ms();
    if (s.phase() != Phase::lobby) {
      // Resume the wall clock from the last logged time.
      slot->started_at = clock_() - std::chrono::milliseconds(s.now_ms());
    }
    const auto survey_file = survey_path(options_.state_dir, s.id());
    if (fs::exists(survey_file)) {
      std::ifstream in(survey_file, std::ios::binary);
      std::stringstream text;
      text << in.rdbuf();
      slot->survey = analytics::parse_survey_csv(text.str());
    }
    std::lock_guard lock(mutex_);
    loaded.push_back(s.id());
    slots_[s.id()] = std::move(slot);
  }
  return loaded;
}

std::shared_ptr<SessionHub::Slot> SessionHub::find(const std::string& id) const {
  std::lock_guard lock(mutex_);
  auto it = slots_.find(id);
  if (it == slots_.end()) throw NotFound("no session '" + id + "'");
  return it->second;
}

TimeMs SessionHub::now_of(const Slot& slot) const {
  TimeMs now = slot.virtual_now;
  if (slot.session.config().clock_mode == ClockMode::wall) {
    now = 0;
    if (slot.started_at) {
      now = std::chrono::duration_cast<std::chrono::milliseconds>(clock_() - *slot.started_at).count();
    }
  }
  return std::max(now, slot.session.now_ms());
}

std::string SessionHub::create(Json config) {
  if (!config.is_object()) config = Json::object();
  // A live server runs on the wall clock unless told otherwise.
  if (!config.contains("clock_mode")) config["clock_mode"] = "wall";

  std::string id = config.value("session_id", std::string{});
  if (id.empty()) {
    static std::atomic<std::uint64_t> counter{0};
    const auto ticks = static_cast<std::uint64_t>(clock_().time_since_epoch().count());
    char buf[40];
    std::snprintf(buf, sizeof buf, "session-%012llx",
                  static_cast<unsigned long long>(mix64(ticks ^ mix64(++counter)) >> 16));
    id = buf;
    config["session_id"] = id;
  }
  if (!valid_session_id(id)) {
    throw ConfigError(std::vector<FieldError>{{"session_id", "may contain only letters, digits, '-', '_' and '.'"}});
  }

  auto slot = std::make_shared<Slot>(Session::create(config_from_json(config)));
  slot->backend = backends_(slot->session.config());
  slot->session.set_backend(slot->backend, options_.dispatch);
  {
    std::lock_guard lock(mutex_);
    if (slots_.contains(id) || fs::exists(log_path(options_.state_dir, id))) {
      throw ConfigError(std::vector<FieldError>{{"session_id", "'" + id + "' already exists"}});
    }
    slots_[id] = slot;
  }
  std::lock_guard lock(slot->mutex);
  sync(slot);
  log::info("created " + id);
  return id;
}

Json SessionHub::start(const std::string& id, const std::vector<ParticipantId>& roster) {
  auto slot = find(id);
  std::lock_guard lock(slot->mutex);
  try {
    slot->session.start(roster);
  } catch (...) {
    sync(slot);
    throw;
  }
  slot->started_at = clock_();
  slot->virtual_now = 0;
  sync(slot);
  return to_json(slot->session.plan());
}

void SessionHub::join(const std::string& id, const ParticipantId& who, const std::string& token,
                      const std::shared_ptr<Connection>& connection, std::uint64_t resume_after) {
  if (options_.token && token != *options_.token) throw Unauthorized("bad join token");
  auto slot = find(id);
  std::lock_guard lock(slot->mutex);
  auto& s = slot->session;
  if (s.phase() == Phase::lobby) {
    s.join(who);
  } else if (!s.is_member(who)) {
    throw PhaseError("joins are closed once deliberation starts");
  }
  slot->connections[who].push_back(connection);
  sync(slot);
  send_joined(*slot, who, *connection);
  if (s.phase() == Phase::lobby) return;

  const RoomId room = *s.plan().room_of(who);
  for (std::size_t i = 0; i < s.transcript().room_size(room); ++i) {
    const auto& m = s.transcript().room_message(room, i);
    if (m.id.value() > resume_after) connection->send(message_frame(m).dump());
  }
  if (s.phase() == Phase::finalized) {
    connection->send(Json{{"type", "session_end"}, {"result", s.result_json()}}.dump());
  }
}

void SessionHub::leave(const std::string& id, const ParticipantId& who, const Connection* connection) {
  std::shared_ptr<Slot> slot;
  try {
    slot = find(id);
  } catch (const NotFound&) {
    return;
  }
  std::lock_guard lock(slot->mutex);
  auto it = slot->connections.find(who);
  if (it == slot->connections.end()) return;
  std::erase_if(it->second, [&](const auto& c) { return c.get() == connection; });
  if (it->second.empty()) slot->connections.erase(it);
}

void SessionHub::post(const std::string& id, const ParticipantId& who, const std::string& body) {
  auto slot = find(id);
  std::lock_guard lock(slot->mutex);
  try {
    slot->session.post_message(who, body, now_of(*slot));
  } catch (...) {
    sync(slot);
    throw;
  }
  sync(slot);
}

void SessionHub::set_clock(const std::string& id, TimeMs now_ms) {
  auto slot = find(id);
  std::lock_guard lock(slot->mutex);
  if (slot->session.config().clock_mode != ClockMode::virtual_clock) {
    throw PhaseError("session runs on the wall clock");
  }
  if (now_ms < slot->session.now_ms()) throw Error("the clock cannot move backwards");
  slot->virtual_now = now_ms;
  slot->session.advance(now_ms);
  sync(slot);
}

void SessionHub::tick() {
  std::vector<std::shared_ptr<Slot>> slots;
  {
    std::lock_guard lock(mutex_);
    for (const auto& [id, slot] : slots_) slots.push_back(slot);
  }
  for (const auto& slot : slots) {
    std::lock_guard lock(slot->mutex);
    auto& s = slot->session;
    if (s.phase() != Phase::deliberating || s.config().clock_mode != ClockMode::wall) continue;
    try {
      s.advance(now_of(*slot));
    } catch (const std::exception& e) {
      log::error("tick " + s.id() + ": " + e.what());
    }
    sync(slot);
  }
}

Json SessionHub::finalize(const std::string& id) {
  auto slot = find(id);
  std::lock_guard lock(slot->mutex);
  try {
    slot->session.finalize(now_of(*slot));
  } catch (...) {
    sync(slot);
    throw;
  }
  sync(slot);
  return slot->session.result_json();
}

Json SessionHub::results(const std::string& id) {
  auto slot = find(id);
  std::lock_guard lock(slot->mutex);
  if (!slot->session.result()) throw PhaseError("session is not finalized");
  return slot->session.result_json();
}

std::string SessionHub::transcript(const std::string& id) {
  auto slot = find(id);
  std::lock_guard lock(slot->mutex);
  return to_jsonl(slot->session.events());
}

Json SessionHub::metrics(const std::string& id) {
  auto slot = find(id);
  std::lock_guard lock(slot->mutex);
  if (slot->session.roster().empty()) throw PhaseError("no participants yet");
  const auto stats = analytics::contribution_stats(slot->session.events());
  Json users = Json::array();
  for (const auto& u : stats.users) {
    users.push_back(Json{{"participant", u.participant.value()},
                         {"messages", u.messages},
                         {"characters", u.characters},
                         {"messages_per_minute", u.messages_per_minute},
                         {"characters_per_minute", u.characters_per_minute}});
  }
  return Json{{"session_id", id},
              {"window_s", stats.window_s},
              {"messages_per_minute", distribution_json(stats.messages_per_minute)},
              {"characters_per_minute", distribution_json(stats.characters_per_minute)},
              {"users", std::move(users)}};
}

Json SessionHub::state(const std::string& id) {
  auto slot = find(id);
  std::lock_guard lock(slot->mutex);
  Json state = slot->session.state_json();
  state["now_ms"] = now_of(*slot);
  return state;
}

void SessionHub::survey(const std::string& id, const Json& body) {
  auto slot = find(id);
  std::lock_guard lock(slot->mutex);
  auto& s = slot->session;
  if (s.phase() != Phase::finalized) throw PhaseError("the survey opens when the session ends");
  if (!body.is_object() || !body.contains("participant")) {
    throw ConfigError(std::vector<FieldError>{{"participant", "is required"}});
  }
  const ParticipantId who{body.at("participant").get<std::string>()};
  if (!s.is_member(who)) throw ConfigError(std::vector<FieldError>{{"participant", "is not in the roster"}});

  std::vector<std::pair<std::string, std::string>> answers;
  if (body.contains("answers")) {
    for (const auto& [question, answer] : body.at("answers").items()) {
      answers.emplace_back(question, answer.get<std::string>());
    }
  } else if (body.contains("question") && body.contains("answer")) {
    answers.emplace_back(body.at("question").get<std::string>(), body.at("answer").get<std::string>());
  }
  if (answers.empty()) throw ConfigError(std::vector<FieldError>{{"answers", "at least one answer is required"}});

  std::vector<FieldError> errors;
  std::vector<analytics::SurveyResponse> parsed;
  for (const auto& [question, answer] : answers) {
    if (question.empty() || question.find_first_of(",\"\r\n") != std::string::npos) {
      errors.push_back({"question", "'" + question + "' is not a valid question id"});
      continue;
    }
    try {
      parsed.push_back({who, question, analytics::parse_survey_answer(answer)});
    } catch (const std::exception& e) {
      errors.push_back({"answers." + question, e.what()});
    }
  }
  if (!errors.empty()) throw ConfigError(std::move(errors));

  for (auto& response : parsed) {
    auto it = std::find_if(slot->survey.begin(), slot->survey.end(), [&](const auto& r) {
      return r.participant == response.participant && r.question == response.question;
    });
    if (it != slot->survey.end()) *it = std::move(response);
    else slot->survey.push_back(std::move(response));
  }
  const auto path = survey_path(options_.state_dir, id);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << analytics::write_survey_csv(slot->survey);
}

std::string SessionHub::survey_csv(const std::string& id) {
  auto slot = find(id);
  std::lock_guard lock(slot->mutex);
  return analytics::write_survey_csv(slot->survey);
}

std::vector<std::string> SessionHub::ids() const {
  std::lock_guard lock(mutex_);
  std::vector<std::string> out;
  for (const auto& [id, slot] : slots_) out.push_back(id);
  return out;
}

void SessionHub::drain() {
  std::unique_lock lock(outstanding_mutex_);
  outstanding_cv_.wait(lock, [&] { return outstanding_ == 0; });
}

void SessionHub::sync(const std::shared_ptr<Slot>& slot) {
  const auto& events = slot->session.events();
  if (slot->persisted < events.size()) {
    const auto path = log_path(options_.state_dir, slot->session.id());
    std::ofstream out(path, std::ios::binary | std::ios::app);
    if (!out) throw Error("cannot append to " + path.string());
    for (; slot->persisted < events.size(); ++slot->persisted) out << to_jsonl_line(events[slot->persisted]);
    out.flush();
  }
  for (; slot->delivered < events.size(); ++slot->delivered) deliver(*slot, events[slot->delivered]);
  dispatch(slot);
}

void SessionHub::deliver(Slot& slot, const Event& event) {
  auto& s = slot.session;
  auto send_to = [&](const ParticipantId& who, const std::string& frame) {
    auto it = slot.connections.find(who);
    if (it == slot.connections.end()) return;
    for (const auto& c : it->second) c->send(frame);
  };

  switch (event.kind) {
    case EventKind::deliberation_started:
      for (const auto& [who, connections] : slot.connections) {
        for (const auto& c : connections) send_joined(slot, who, *c);
      }
      return;
    case EventKind::message:
    case EventKind::surrogate_posted: {
      const Json& payload = event.kind == EventKind::message ? event.payload : event.payload.at("message");
      if (payload.is_null()) return;
      const std::string frame = message_frame(message_from_json(payload)).dump();
      for (const auto& who : recipients(s, event)) send_to(who, frame);
      return;
    }
    case EventKind::finalized: {
      const std::string frame = Json{{"type", "session_end"}, {"result", event.payload.at("result")}}.dump();
      for (const auto& who : recipients(s, event)) send_to(who, frame);
      return;
    }
    default:
      return;
  }
}

void SessionHub::send_joined(Slot& slot, const ParticipantId& who, Connection& connection) {
  const auto& s = slot.session;
  Json frame;
  if (s.phase() == Phase::lobby) {
    frame = joined_frame(std::nullopt, s.roster());
  } else {
    const RoomId room = *s.plan().room_of(who);
    frame = joined_frame(room, s.plan().members_of(room));
  }
  frame["session"] = s.id();
  frame["participant"] = who.value();
  frame["phase"] = to_string(s.phase());
  connection.send(frame.dump());
}

void SessionHub::dispatch(const std::shared_ptr<Slot>& slot) {
  for (auto& call : slot->session.take_pending()) {
    {
      std::lock_guard lock(outstanding_mutex_);
      ++outstanding_;
    }
    boost::asio::post(*workers_, [this, slot, call = std::move(call)] {
      try {
        const BackendReply reply = execute(call, *slot->backend);
        std::lock_guard lock(slot->mutex);
        if (slot->session.phase() == Phase::deliberating) {
          const TimeMs now = now_of(*slot);
          slot->session.complete(reply, now);
          slot->session.advance(now);
        }
        sync(slot);
      } catch (const std::exception& e) {
        log::error("backend completion for " + slot->session.id() + ": " + e.what());
      }
      std::lock_guard lock(outstanding_mutex_);
      if (--outstanding_ == 0) outstanding_cv_.notify_all();
    });
  }
}

// --- REST ------------------------------------------------------------------

namespace {

HttpReply json_reply(unsigned status, const Json& body) { return {status, "application/json", body.dump()}; }

HttpReply error_reply(unsigned status, const std::string& message, Json errors = nullptr) {
  Json body{{"error", message}};
  if (!errors.is_null()) body["errors"] = std::move(errors);
  return json_reply(status, body);
}

std::vector<std::string> split_path(std::string target) {
  if (auto q = target.find('?'); q != std::string::npos) target.resize(q);
  std::vector<std::string> parts;
  std::string part;
  std::istringstream in(target);
  while (std::getline(in, part, '/')) {
    if (!part.empty()) parts.push_back(part);
  }
  return parts;
}

Json parse_body(const std::string& body) {
  if (body.empty()) return Json::object();
  return Json::parse(body);
}

}  // namespace

HttpReply handle_rest(SessionHub& hub, const std::string& method, const std::string& target,
                      const std::string& body) {
  const auto parts = split_path(target);
  try {
    if (parts.empty() || parts[0] != "sessions") {
      if (method == "GET" && parts.size() == 1 && parts[0] == "health") return json_reply(200, Json{{"ok", true}});
      return error_reply(404, "no such endpoint");
    }
    if (parts.size() == 1) {
      if (method == "POST") return json_reply(201, Json{{"session_id", hub.create(parse_body(body))}});
      if (method == "GET") return json_reply(200, Json(hub.ids()));
      return error_reply(405, "method not allowed");
    }
    const std::string& id = parts[1];
    if (parts.size() == 2) {
      if (method == "GET") return json_reply(200, hub.state(id));
      return error_reply(405, "method not allowed");
    }
    if (parts.size() != 3) return error_reply(404, "no such endpoint");
    const std::string& action = parts[2];

    if (method == "POST") {
      if (action == "start") {
        const Json request = parse_body(body);
        std::vector<ParticipantId> roster;
        if (request.contains("roster")) {
          for (const auto& p : request.at("roster")) roster.emplace_back(p.get<std::string>());
        }
        return json_reply(200, hub.start(id, roster));
      }
      if (action == "clock") {
        hub.set_clock(id, parse_body(body).at("now_ms").get<TimeMs>());
        return json_reply(200, Json{{"ok", true}});
      }
      if (action == "finalize") return json_reply(200, hub.finalize(id));
      if (action == "survey") {
        hub.survey(id, parse_body(body));
        return json_reply(200, Json{{"ok", true}});
      }
    } else if (method == "GET") {
      if (action == "results") return json_reply(200, hub.results(id));
      if (action == "transcript") return {200, "application/x-ndjson", hub.transcript(id)};
      if (action == "metrics") return json_reply(200, hub.metrics(id));
      if (action == "survey") return {200, "text/csv", hub.survey_csv(id)};
    }
    return error_reply(404, "no such endpoint");
  } catch (const ConfigError& e) {
    Json errors = Json::array();
    for (const auto& f : e.errors()) errors.push_back(Json{{"field", f.field}, {"reason", f.reason}});
    return error_reply(400, e.what(), std::move(errors));
  } catch (const NotFound& e) {
    return error_reply(404, e.what());
  } catch (const Unauthorized& e) {
    return error_reply(403, e.what());
  } catch (const PhaseError& e) {
    return error_reply(409, e.what());
  } catch (const Json::exception& e) {
    return error_reply(400, std::string("bad request body: ") + e.what());
  } catch (const Error& e) {
    return error_reply(400, e.what());
  } catch (const std::exception& e) {
    log::error(std::string("request failed: ") + e.what());
    return error_reply(500, "internal error");
  }
}

// --- WebSocket frames ----------------------------------------------------

bool WsProtocol::on_frame(const std::string& text) {
  Json frame;
  try {
    frame = Json::parse(text);
  } catch (const std::exception&) {
    connection_->send(error_frame("frames must be JSON objects").dump());
    return true;
  }
  const std::string type = frame.is_object() ? frame.value("type", std::string{}) : std::string{};

  if (type == "join") {
    if (participant_) {
      connection_->send(error_frame("already joined").dump());
      return true;
    }
    try {
      const std::string session = frame.at("session").get<std::string>();
      const ParticipantId who{frame.at("participant").get<std::string>()};
      const std::string token = frame.value("token", std::string{});
      const std::uint64_t resume_after = frame.value("resume_after", std::uint64_t{0});
      hub_.join(session, who, token, connection_, resume_after);
      session_ = session;
      participant_ = who;
      return true;
    } catch (const std::exception& e) {
      connection_->send(error_frame(e.what()).dump());
      return false;
    }
  }
  if (type == "message") {
    if (!participant_) {
      connection_->send(error_frame("join first").dump());
      return true;
    }
    try {
      hub_.post(*session_, *participant_, frame.at("body").get<std::string>());
    } catch (const std::exception& e) {
      connection_->send(error_frame(e.what()).dump());
    }
    return true;
  }
  connection_->send(error_frame("unknown frame type '" + type + "'").dump());
  return true;
}

void WsProtocol::on_close() {
  if (session_ && participant_) hub_.leave(*session_, *participant_, connection_.get());
}

}  // namespace csi
