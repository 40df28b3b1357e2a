#include <boost/asio/bind_executor.hpp>
#include <boost/asio/dispatch.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/asio/signal_set.hpp>
#include <boost/asio/steady_timer.hpp>
#include <boost/asio/strand.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>
#include <deque>

#include "csi/log.hpp"
#include "csi/server.hpp"

namespace csi {

namespace net = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = net::ip::tcp;

namespace {

constexpr std::size_t kBodyLimit = 1 << 20;

class WsSession : public Connection, public std::enable_shared_from_this<WsSession> {
 public:
  WsSession(tcp::socket socket, SessionHub& hub) : ws_(std::move(socket)), hub_(hub) {}

  void run(http::request<http::string_body> request) {
    protocol_ = std::make_unique<WsProtocol>(hub_, shared_from_this());
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.read_message_max(64 * 1024);
    ws_.async_accept(request, [self = shared_from_this()](beast::error_code ec) {
      if (ec) return self->closed();
      self->read();
    });
  }

  void send(std::string frame) override {
    net::post(ws_.get_executor(), [self = shared_from_this(), frame = std::move(frame)]() mutable {
      self->queue_.push_back(std::move(frame));
      if (self->queue_.size() == 1) self->write();
    });
  }

  void close() override {
    net::post(ws_.get_executor(), [self = shared_from_this()] {
      self->ws_.async_close(websocket::close_code::normal, [self](beast::error_code) {});
    });
  }

 private:
  void read() {
    ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) return self->closed();
      const std::string text = beast::buffers_to_string(self->buffer_.data());
      self->buffer_.consume(self->buffer_.size());
      if (!self->protocol_->on_frame(text)) {
        self->closing_ = true;
        if (self->queue_.empty()) self->close();
        return;
      }
      self->read();
    });
  }

  void write() {
    ws_.text(true);
    ws_.async_write(net::buffer(queue_.front()), [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) return self->closed();
      self->queue_.pop_front();
      if (!self->queue_.empty()) return self->write();
      if (self->closing_) self->close();
    });
  }

  void closed() {
    if (done_) return;
    done_ = true;
    if (protocol_) protocol_->on_close();
    protocol_.reset();  // breaks the protocol -> connection cycle
  }

  websocket::stream<beast::tcp_stream> ws_;
  SessionHub& hub_;
  beast::flat_buffer buffer_;
  std::deque<std::string> queue_;
  std::unique_ptr<WsProtocol> protocol_;
  bool closing_ = false;
  bool done_ = false;
};

class HttpSession : public std::enable_shared_from_this<HttpSession> {
 public:
  HttpSession(tcp::socket socket, SessionHub& hub) : stream_(std::move(socket)), hub_(hub) {}

  void run() {
    net::dispatch(stream_.get_executor(), [self = shared_from_this()] { self->read(); });
  }

 private:
  void read() {
    parser_.emplace();
    parser_->body_limit(kBodyLimit);
    stream_.expires_after(std::chrono::seconds(30));
    http::async_read(stream_, buffer_, *parser_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) {
        self->stream_.socket().shutdown(tcp::socket::shutdown_send, ec);
        return;
      }
      self->handle(self->parser_->release());
    });
  }

  void handle(http::request<http::string_body> request) {
    if (websocket::is_upgrade(request)) {
      if (request.target() != "/ws") {
        respond(request, HttpReply{404, "application/json", R"({"error":"websocket endpoint is /ws"})"});
        return;
      }
      stream_.expires_never();
      std::make_shared<WsSession>(stream_.release_socket(), hub_)->run(std::move(request));
      return;
    }
    const HttpReply reply = handle_rest(hub_, std::string(request.method_string()),
                                        std::string(request.target()), request.body());
    respond(request, reply);
  }

  void respond(const http::request<http::string_body>& request, const HttpReply& reply) {
    auto response = std::make_shared<http::response<http::string_body>>(
        static_cast<http::status>(reply.status), request.version());
    response->set(http::field::server, "csi");
    response->set(http::field::content_type, reply.content_type);
    response->keep_alive(request.keep_alive());
    response->body() = reply.body;
    response->prepare_payload();
    http::async_write(stream_, *response, [self = shared_from_this(), response](beast::error_code ec, std::size_t) {
      if (ec) return;
      if (!response->keep_alive()) {
        self->stream_.socket().shutdown(tcp::socket::shutdown_send, ec);
        return;
      }
      self->read();
    });
  }

  beast::tcp_stream stream_;
  SessionHub& hub_;
  beast::flat_buffer buffer_;
  std::optional<http::request_parser<http::string_body>> parser_;
};

}  // namespace

struct Server::Impl {
  Impl(SessionHub& h, ServerOptions o) : hub(h), options(std::move(o)), acceptor(io), ticker(io) {}

  void accept() {
    acceptor.async_accept(net::make_strand(io), [this](beast::error_code ec, tcp::socket socket) {
      if (ec) {
        if (ec != net::error::operation_aborted) log::warn("accept: " + ec.message());
      } else {
        std::make_shared<HttpSession>(std::move(socket), hub)->run();
      }
      if (acceptor.is_open()) accept();
    });
  }

  void tick() {
    ticker.expires_after(options.tick);
    ticker.async_wait([this](beast::error_code ec) {
      if (ec) return;
      hub.tick();
      tick();
    });
  }

  SessionHub& hub;
  ServerOptions options;
  net::io_context io;
  tcp::acceptor acceptor;
  net::steady_timer ticker;
  std::vector<std::thread> threads;
};

Server::Server(SessionHub& hub, ServerOptions options) : impl_(std::make_unique<Impl>(hub, std::move(options))) {}

Server::~Server() { stop(); }

std::uint16_t Server::start() {
  auto& i = *impl_;
  const tcp::endpoint endpoint(net::ip::make_address(i.options.address), i.options.port);
  i.acceptor.open(endpoint.protocol());
  i.acceptor.set_option(net::socket_base::reuse_address(true));
  i.acceptor.bind(endpoint);
  i.acceptor.listen(net::socket_base::max_listen_connections);
  port_ = i.acceptor.local_endpoint().port();
  i.accept();
  i.tick();
  for (std::size_t t = 0; t < std::max<std::size_t>(1, i.options.threads); ++t) {
    i.threads.emplace_back([&io = i.io] { io.run(); });
  }
  log::info("listening on " + i.options.address + ":" + std::to_string(port_));
  return port_;
}

void Server::stop() {
  if (!impl_) return;
  auto& i = *impl_;
  net::post(i.io, [&i] {
    beast::error_code ec;
    i.acceptor.close(ec);
    i.ticker.cancel();
  });
  i.io.stop();
  for (auto& t : i.threads) {
    if (t.joinable()) t.join();
  }
  i.threads.clear();
}

void Server::run() {
  if (impl_->threads.empty()) start();
  net::io_context signals_io;
  net::signal_set signals(signals_io, SIGINT, SIGTERM);
  signals.async_wait([&](beast::error_code, int) { log::info("shutting down"); });
  signals_io.run();
  stop();
}

}  // namespace csi
