#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "csi/analytics.hpp"
#include "csi/error.hpp"
#include "csi/json.hpp"
#include "csi/lm.hpp"
#include "csi/session.hpp"

namespace boost::asio {
class thread_pool;
}

namespace csi {

class NotFound : public Error {
 public:
  using Error::Error;
};

class Unauthorized : public Error {
 public:
  using Error::Error;
};

// A client connection. send() must not block: implementations queue the
// frame and deliver frames in call order.
class Connection {
 public:
  virtual ~Connection() = default;
  virtual void send(std::string frame) = 0;
  virtual void close() = 0;
};

struct HubOptions {
  std::filesystem::path state_dir = "state";
  std::optional<std::string> token;  // static join token, none = open
  Session::Dispatch dispatch = Session::Dispatch::deferred;
  std::size_t backend_workers = 4;
};

// All live sessions of one server process. Each session is guarded by its
// own mutex, which serializes every mutation of it; event lines are
// appended to <state_dir>/<id>.events.jsonl as they are emitted and then
// fanned out to the connections of their recipients.
//
// Wall-clock sessions measure time from their start; virtual-clock sessions
// only move when set_clock() is called.
class SessionHub {
 public:
  using Clock = std::function<std::chrono::steady_clock::time_point()>;
  // One backend per session; the HTTP backend needs the session question.
  using BackendFactory = std::function<std::shared_ptr<LanguageModel>(const SessionConfig&)>;

  SessionHub(HubOptions options, BackendFactory backends,
             Clock clock = [] { return std::chrono::steady_clock::now(); });
  ~SessionHub();
  SessionHub(const SessionHub&) = delete;
  SessionHub& operator=(const SessionHub&) = delete;

  // Replays every event log in the state directory. Returns the ids loaded.
  std::vector<std::string> load_state();

  std::string create(Json config);
  Json start(const std::string& id, const std::vector<ParticipantId>& roster = {});
  // Registers the connection and sends it a joined frame, followed by any
  // of its room's messages with an id above resume_after.
  void join(const std::string& id, const ParticipantId& who, const std::string& token,
            const std::shared_ptr<Connection>& connection, std::uint64_t resume_after = 0);
  void leave(const std::string& id, const ParticipantId& who, const Connection* connection);
  void post(const std::string& id, const ParticipantId& who, const std::string& body);
  // Virtual-clock sessions only.
  void set_clock(const std::string& id, TimeMs now_ms);
  // Advances every wall-clock session to the current time.
  void tick();
  Json finalize(const std::string& id);

  Json results(const std::string& id);
  std::string transcript(const std::string& id);
  Json metrics(const std::string& id);
  Json state(const std::string& id);
  void survey(const std::string& id, const Json& body);
  std::string survey_csv(const std::string& id);

  std::vector<std::string> ids() const;
  // Blocks until no backend call is outstanding (tests).
  void drain();

 private:
  struct Slot;

  std::shared_ptr<Slot> find(const std::string& id) const;
  TimeMs now_of(const Slot& slot) const;
  // Persists and fans out new events, then dispatches queued backend calls.
  // Caller holds slot.mutex.
  void sync(const std::shared_ptr<Slot>& slot);
  void dispatch(const std::shared_ptr<Slot>& slot);
  void deliver(Slot& slot, const Event& event);
  void send_joined(Slot& slot, const ParticipantId& who, Connection& connection);

  HubOptions options_;
  BackendFactory backends_;
  Clock clock_;
  mutable std::mutex mutex_;
  std::map<std::string, std::shared_ptr<Slot>> slots_;
  std::unique_ptr<boost::asio::thread_pool> workers_;
  std::mutex outstanding_mutex_;
  std::condition_variable outstanding_cv_;
  std::size_t outstanding_ = 0;
};

// Wire frames.
Json message_frame(const Message& message);
Json joined_frame(const std::optional<RoomId>& room, const std::vector<ParticipantId>& roster);
Json error_frame(const std::string& error);

struct HttpReply {
  unsigned status = 200;
  std::string content_type = "application/json";
  std::string body;
};

// REST routing without any networking:
//   POST /sessions                   config -> {session_id}
//   POST /sessions/{id}/start        optional {roster:[...]} -> plan
//   POST /sessions/{id}/clock        {now_ms} (virtual clock)
//   POST /sessions/{id}/finalize     -> result
//   POST /sessions/{id}/survey       {participant, question, answer} or {participant, answers:{...}}
//   GET  /sessions                   -> ids
//   GET  /sessions/{id}              -> state
//   GET  /sessions/{id}/results
//   GET  /sessions/{id}/transcript   JSONL event log
//   GET  /sessions/{id}/metrics
//   GET  /sessions/{id}/survey       CSV
HttpReply handle_rest(SessionHub& hub, const std::string& method, const std::string& target,
                      const std::string& body);

// Client frames of one WebSocket connection. Returns false when the
// connection should close.
class WsProtocol {
 public:
  WsProtocol(SessionHub& hub, std::shared_ptr<Connection> connection)
      : hub_(hub), connection_(std::move(connection)) {}
  bool on_frame(const std::string& text);
  void on_close();

 private:
  SessionHub& hub_;
  std::shared_ptr<Connection> connection_;
  std::optional<std::string> session_;
  std::optional<ParticipantId> participant_;
};

struct ServerOptions {
  std::string address = "127.0.0.1";
  std::uint16_t port = 8080;  // 0 picks a free port
  std::size_t threads = 2;
  std::chrono::milliseconds tick{200};
};

// HTTP + WebSocket front end (Boost.Beast). WebSocket upgrades are served
// on /ws, everything else goes to handle_rest.
class Server {
 public:
  Server(SessionHub& hub, ServerOptions options);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  // Binds and starts the I/O threads. Returns the bound port.
  std::uint16_t start();
  void stop();
  // start() then block until stop() or a signal.
  void run();
  std::uint16_t port() const { return port_; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  std::uint16_t port_ = 0;
};

}  // namespace csi
