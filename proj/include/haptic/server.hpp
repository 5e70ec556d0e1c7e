#pragma once

// Network front end: a raw TCP listener for the hand client and a WebSocket
// listener for browser clients. Both carry the same NDJSON lines; over
// WebSocket every text frame holds exactly one encoded line, newline
// included. All socket work happens on one I/O thread; the tick loop runs on
// its own thread with absolute deadlines.

#include <array>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include "haptic/driver.hpp"
#include "haptic/error.hpp"
#include "haptic/protocol.hpp"
#include "haptic/session.hpp"

namespace haptic {

struct ServerOptions {
  std::string address = "127.0.0.1";
  std::uint16_t port = kDefaultPort;  // 0 picks a free port
  std::uint16_t ui_port = kDefaultUiPort;
  bool enable_ui = true;
  std::chrono::milliseconds handshake_timeout{5000};
  std::size_t outbound_capacity = 1024;
  std::optional<std::string> recording_path;
  std::function<void(const std::string&)> on_event;
};

namespace net {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;

class Hub;

class Connection : public std::enable_shared_from_this<Connection> {
 public:
  Connection(Hub& hub, std::uint64_t id, asio::io_context& io);
  virtual ~Connection() = default;

  virtual void start() = 0;
  void send(std::shared_ptr<const std::string> line);
  void close();

  std::uint64_t id() const noexcept { return id_; }
  const ConnectionProtocol& protocol() const noexcept { return *protocol_; }
  std::size_t dropped() const noexcept { return outbound_.dropped(); }

 protected:
  void arm_handshake_timer();
  void on_bytes(std::string_view chunk);
  void finish();
  virtual void write_one(const std::string& line, std::function<void(bool)> done) = 0;
  virtual void shutdown_transport() = 0;
  virtual std::string kind() const = 0;

  Hub& hub_;
  std::uint64_t id_;
  bool closing_ = false;
  bool finished_ = false;

 private:
  void apply(ConnectionProtocol::Actions act);
  void pump();

  std::unique_ptr<ConnectionProtocol> protocol_;
  LineFramer framer_;
  asio::steady_timer handshake_timer_;
  DropOldestQueue outbound_;
  std::shared_ptr<const std::string> inflight_;
  bool writing_ = false;
};

class Hub {
 public:
  Hub(asio::io_context& io, SessionDriver& driver, const ServerOptions& opt)
      : io_(io), driver_(driver), opt_(opt) {}

  asio::io_context& io() noexcept { return io_; }
  SessionDriver& driver() noexcept { return driver_; }
  HandSlot& slot() noexcept { return slot_; }
  const ServerOptions& options() const noexcept { return opt_; }

  std::uint64_t next_id() noexcept { return ++last_id_; }
  void add(const std::shared_ptr<Connection>& c) { conns_[c->id()] = c; }
  void remove(std::uint64_t id) { conns_.erase(id); }
  std::size_t size() const noexcept { return conns_.size(); }

  void event(const std::string& line) const {
    if (opt_.on_event) opt_.on_event(line);
  }

  void broadcast(const std::vector<Outgoing>& out) {
    for (const auto& o : out) {
      auto line = std::make_shared<const std::string>(encode(o.msg));
      for (auto& [id, c] : conns_) {
        const auto& p = c->protocol();
        if (!p.handshaken()) continue;
        if (o.to == Audience::Hand && !p.is_hand()) continue;
        c->send(line);
      }
    }
  }

  void close_all() {
    auto copy = conns_;
    for (auto& [id, c] : copy) c->close();
  }

 private:
  asio::io_context& io_;
  SessionDriver& driver_;
  const ServerOptions& opt_;
  HandSlot slot_;
  std::map<std::uint64_t, std::shared_ptr<Connection>> conns_;
  std::uint64_t last_id_ = 0;
};

inline Connection::Connection(Hub& hub, std::uint64_t id, asio::io_context& io)
    : hub_(hub),
      id_(id),
      protocol_(std::make_unique<ConnectionProtocol>(hub.slot(), hub.driver())),
      handshake_timer_(io),
      outbound_(hub.options().outbound_capacity) {}

inline void Connection::arm_handshake_timer() {
  handshake_timer_.expires_after(hub_.options().handshake_timeout);
  handshake_timer_.async_wait([self = shared_from_this()](const boost::system::error_code& ec) {
    if (ec || self->finished_) return;
    auto act = self->protocol_->on_handshake_timeout();
    if (act.close) self->hub_.event("timeout id=" + std::to_string(self->id_));
    self->apply(std::move(act));
  });
}

inline void Connection::on_bytes(std::string_view chunk) {
  if (closing_) return;
  const bool was_handshaken = protocol_->handshaken();
  for (auto& line : framer_.feed(chunk)) {
    if (line.empty()) continue;
    apply(protocol_->on_line(line));
    if (closing_) {
      hub_.event("rejected id=" + std::to_string(id_));
      return;
    }
  }
  if (framer_.overflowed()) {
    apply(protocol_->on_overflow());
    return;
  }
  if (!was_handshaken && protocol_->handshaken()) {
    handshake_timer_.cancel();
    hub_.event("hello id=" + std::to_string(id_) + " role=" +
               (protocol_->is_hand() ? "hand" : "observer") + " via " + kind());
  }
}

inline void Connection::apply(ConnectionProtocol::Actions act) {
  for (auto& r : act.replies) send(std::make_shared<const std::string>(std::move(r)));
  if (act.close) {
    closing_ = true;
    handshake_timer_.cancel();
    if (!writing_) finish();
  }
}

inline void Connection::send(std::shared_ptr<const std::string> line) {
  if (finished_) return;
  outbound_.push(*line);
  pump();
}

inline void Connection::pump() {
  if (writing_ || finished_) return;
  if (outbound_.empty()) {
    if (closing_) finish();
    return;
  }
  inflight_ = std::make_shared<const std::string>(outbound_.front());
  outbound_.pop();
  writing_ = true;
  write_one(*inflight_, [self = shared_from_this()](bool ok) {
    self->writing_ = false;
    self->inflight_.reset();
    if (!ok) {
      self->finish();
      return;
    }
    self->pump();
  });
}

inline void Connection::close() {
  closing_ = true;
  handshake_timer_.cancel();
  if (!writing_) finish();
}

inline void Connection::finish() {
  if (finished_) return;
  finished_ = true;
  handshake_timer_.cancel();
  protocol_->on_close();
  shutdown_transport();
  std::string line = "disconnect id=" + std::to_string(id_);
  if (protocol_->is_hand()) {
    char parity[64];
    std::snprintf(parity, sizeof parity, " max_dv_disagreement=%.3g",
                  hub_.driver().max_distance_disagreement());
    line += parity;
  }
  hub_.event(line);
  hub_.remove(id_);
}

class TcpConnection final : public Connection {
 public:
  TcpConnection(Hub& hub, std::uint64_t id, tcp::socket socket)
      : Connection(hub, id, hub.io()), socket_(std::move(socket)) {}

  void start() override {
    arm_handshake_timer();
    read();
  }

 protected:
  std::string kind() const override { return "tcp"; }

  void write_one(const std::string& line, std::function<void(bool)> done) override {
    asio::async_write(socket_, asio::buffer(line),
                      [done = std::move(done)](const boost::system::error_code& ec, std::size_t) {
                        done(!ec);
                      });
  }

  void shutdown_transport() override {
    boost::system::error_code ignored;
    socket_.shutdown(tcp::socket::shutdown_both, ignored);
    socket_.close(ignored);
  }

 private:
  void read() {
    socket_.async_read_some(
        asio::buffer(buf_),
        [self = std::static_pointer_cast<TcpConnection>(shared_from_this())](
            const boost::system::error_code& ec, std::size_t n) {
          if (ec) {
            self->finish();
            return;
          }
          self->on_bytes(std::string_view(self->buf_.data(), n));
          if (!self->finished_) self->read();
        });
  }

  tcp::socket socket_;
  std::array<char, 4096> buf_{};
};

class WsConnection final : public Connection {
 public:
  WsConnection(Hub& hub, std::uint64_t id, tcp::socket socket)
      : Connection(hub, id, hub.io()), ws_(std::move(socket)) {}

  void start() override {
    arm_handshake_timer();
    ws_.text(true);
    ws_.read_message_max(1 << 20);
    ws_.async_accept([self = std::static_pointer_cast<WsConnection>(shared_from_this())](
                         const boost::system::error_code& ec) {
      if (ec) {
        self->finish();
        return;
      }
      self->accepted_ = true;
      self->read();
    });
  }

 protected:
  std::string kind() const override { return "websocket"; }

  void write_one(const std::string& line, std::function<void(bool)> done) override {
    if (!accepted_) {
      done(false);
      return;
    }
    ws_.async_write(asio::buffer(line),
                    [done = std::move(done)](const boost::system::error_code& ec, std::size_t) {
                      done(!ec);
                    });
  }

  void shutdown_transport() override {
    boost::system::error_code ignored;
    beast::get_lowest_layer(ws_).shutdown(tcp::socket::shutdown_both, ignored);
    beast::get_lowest_layer(ws_).close(ignored);
  }

 private:
  void read() {
    ws_.async_read(buffer_, [self = std::static_pointer_cast<WsConnection>(shared_from_this())](
                                const boost::system::error_code& ec, std::size_t) {
      if (ec) {
        self->finish();
        return;
      }
      std::string frame = beast::buffers_to_string(self->buffer_.data());
      self->buffer_.consume(self->buffer_.size());
      if (frame.empty() || frame.back() != '\n') frame.push_back('\n');
      self->on_bytes(frame);
      if (!self->finished_) self->read();
    });
  }

  websocket::stream<tcp::socket> ws_;
  beast::flat_buffer buffer_;
  bool accepted_ = false;
};

template <class Conn>
class Listener {
 public:
  Listener(Hub& hub, const std::string& address, std::uint16_t port)
      : hub_(hub), acceptor_(hub.io()) {
    boost::system::error_code ec;
    const auto addr = asio::ip::make_address(address, ec);
    if (ec) throw Error(ErrorCode::InvalidArgument, "bad listen address '" + address + "'");
    const tcp::endpoint ep(addr, port);
    acceptor_.open(ep.protocol(), ec);
    if (!ec) acceptor_.set_option(asio::socket_base::reuse_address(true), ec);
    if (!ec) acceptor_.bind(ep, ec);
    if (!ec) acceptor_.listen(asio::socket_base::max_listen_connections, ec);
    if (ec)
      throw Error(ErrorCode::Io, "cannot listen on " + address + ":" + std::to_string(port) +
                                     ": " + ec.message());
  }

  std::uint16_t port() const { return acceptor_.local_endpoint().port(); }

  void accept() {
    acceptor_.async_accept([this](const boost::system::error_code& ec, tcp::socket socket) {
      if (ec) return;  // acceptor closed
      boost::system::error_code ignored;
      socket.set_option(tcp::no_delay(true), ignored);
      const auto remote = socket.remote_endpoint(ignored);
      auto conn = std::make_shared<Conn>(hub_, hub_.next_id(), std::move(socket));
      hub_.add(conn);
      hub_.event("connect id=" + std::to_string(conn->id()) + " from " +
                 remote.address().to_string() + ":" + std::to_string(remote.port()));
      conn->start();
      accept();
    });
  }

  void close() {
    boost::system::error_code ignored;
    acceptor_.close(ignored);
  }

 private:
  Hub& hub_;
  tcp::acceptor acceptor_;
};

}  // namespace net

/// Both listeners are bound in the constructor, so an occupied port is
/// reported before anything starts running.
class Server {
 public:
  Server(SessionConfig config, ServerOptions options)
      : opt_(std::move(options)), driver_(std::move(config)), hub_(io_, driver_, opt_) {
    if (opt_.recording_path) driver_.record_to(*opt_.recording_path);
    tcp_.emplace(hub_, opt_.address, opt_.port);
    if (opt_.enable_ui) ws_.emplace(hub_, opt_.address, opt_.ui_port);
  }

  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;
  ~Server() { stop(); }

  std::uint16_t port() const { return tcp_->port(); }
  std::optional<std::uint16_t> ui_port() const {
    return ws_ ? std::optional<std::uint16_t>(ws_->port()) : std::nullopt;
  }
  const SessionDriver& driver() const noexcept { return driver_; }

  /// Spawns the I/O and tick threads and returns immediately.
  void start() {
    if (running_.exchange(true)) return;
    tcp_->accept();
    if (ws_) ws_->accept();
    io_thread_ = std::thread([this] {
      auto guard = boost::asio::make_work_guard(io_);
      io_.run();
    });
    tick_thread_ = std::thread([this] { tick_loop(); });
  }

  void stop() {
    if (!running_.load() || stopping_.exchange(true)) return;
    wait_cv_.notify_all();
    if (tick_thread_.joinable()) tick_thread_.join();
    boost::asio::post(io_, [this] {
      tcp_->close();
      if (ws_) ws_->close();
      hub_.close_all();
    });
    // Give pending goodbyes a moment to flush before tearing the loop down.
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
    io_.stop();
    if (io_thread_.joinable()) io_thread_.join();
  }

 private:
  void tick_loop() {
    using clock = std::chrono::steady_clock;
    const auto period = std::chrono::milliseconds(driver_.session().config().tick_ms);
    auto next = clock::now() + period;
    while (!stopping_.load()) {
      {
        std::unique_lock lock(wait_mu_);
        wait_cv_.wait_until(lock, next, [this] { return stopping_.load(); });
      }
      if (stopping_.load()) break;
      next += period;
      // Never try to make up for a long stall with a burst of ticks.
      if (const auto now = clock::now(); next < now) next = now + period;
      std::vector<Outgoing> out;
      try {
        out = driver_.run_tick();
      } catch (const std::exception& e) {
        out.push_back({ErrorMessage{"internal", e.what()}, Audience::Hand});
      }
      for (const auto& o : out)
        if (const auto* r = std::get_if<CalibResult>(&o.msg)) {
          char line[96];
          std::snprintf(line, sizeof line, "calibrated n=%lld rmse=%.6g",
                        static_cast<long long>(r->n), r->rmse);
          hub_.event(line);
        }
      if (!out.empty())
        boost::asio::post(io_, [this, out = std::move(out)] { hub_.broadcast(out); });
    }
  }

  ServerOptions opt_;
  boost::asio::io_context io_;
  SessionDriver driver_;
  net::Hub hub_;
  std::optional<net::Listener<net::TcpConnection>> tcp_;
  std::optional<net::Listener<net::WsConnection>> ws_;
  std::thread io_thread_;
  std::thread tick_thread_;
  std::atomic<bool> running_{false};
  std::atomic<bool> stopping_{false};
  std::mutex wait_mu_;
  std::condition_variable wait_cv_;
};

}  // namespace haptic
