#pragma once

// Transport-independent halves of the haptic service.
//
// SessionDriver is the tick side: it owns the Session, drains the inbound
// queue once per tick and returns the messages to broadcast. ConnectionProtocol
// is the per-connection side: handshake, decoding and policy. The network
// server glues the two together; tests drive them synchronously.

#include <atomic>
#include <cstdint>
#include <fstream>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "haptic/protocol.hpp"
#include "haptic/recording.hpp"
#include "haptic/session.hpp"

namespace haptic {

enum class Audience { All, Hand };

struct Outgoing {
  WireMessage msg;
  Audience to = Audience::All;
};

class SessionDriver {
 public:
  explicit SessionDriver(SessionConfig config) : session_(std::move(config)) {
    session_.set_keep_trajectory(false);
    publish_object();
  }

  /// Streams every tick to `path` as a replayable recording. The file is
  /// rewritten with a fresh header whenever a calibration is installed.
  void record_to(const std::string& path) {
    record_path_ = path;
    session_.set_sample_sink([this](const TrajectorySample& s) {
      if (record_) {
        write_sample(record_, s);
        record_.flush();
      }
    });
    if (session_.calibrated()) start_recording();
  }

  InboundQueue& inbound() noexcept { return inbound_; }

  // Tick-thread only.
  Session& session() noexcept { return session_; }

  void set_client_distance(bool on) noexcept { client_distance_.store(on); }
  void hand_disconnected() noexcept { hand_gone_.store(true); }

  ObjectState object_snapshot() const {
    std::lock_guard lock(snapshot_mu_);
    return snapshot_;
  }

  double max_distance_disagreement() const noexcept { return max_parity_.load(); }
  std::int64_t ticks() const noexcept { return ticks_.load(); }

  std::vector<Outgoing> run_tick() {
    std::vector<Outgoing> out;
    session_.set_client_distance_authority(client_distance_.load());
    auto in = inbound_.drain();

    if (hand_gone_.exchange(false)) {
      latest_.reset();
      prev_buttons_ = {};
      warned_uncalibrated_ = false;
    }

    for (const auto& p : in.pairs) session_.add_calibration_pair(p);

    if (in.hand) {
      if (session_.calibrating() && session_.pending_pairs() > 0) {
        try {
          out.push_back({session_.finish_calibration(), Audience::All});
          warned_uncalibrated_ = false;
          if (record_path_) start_recording();
        } catch (const Error& e) {
          out.push_back({ErrorMessage{"calibration_failed", e.what()}, Audience::Hand});
        }
      }
      const HandButtons& b = in.hand->buttons;
      if (b.switch_object && !prev_buttons_.switch_object) {
        session_.switch_object();
        out.push_back({publish_object(), Audience::All});
      }
      if (b.hide && !prev_buttons_.hide) {
        session_.set_visibility(!session_.visible());
        out.push_back({publish_object(), Audience::All});
      }
      prev_buttons_ = b;
      latest_ = *in.hand;
    }

    if (latest_ && !session_.calibrating()) {
      if (!session_.calibrated()) {
        if (!warned_uncalibrated_)
          out.push_back({ErrorMessage{"uncalibrated",
                                      "send calib_pair messages before hand updates"},
                         Audience::Hand});
        warned_uncalibrated_ = true;
      } else {
        out.push_back({session_.tick(*latest_), Audience::All});
        max_parity_.store(session_.max_distance_disagreement());
        ticks_.fetch_add(1);
      }
    }
    return out;
  }

 private:
  void start_recording() {
    SessionConfig cfg = session_.config();
    cfg.calib = session_.calibration();
    record_.close();
    record_.clear();
    record_.open(*record_path_, std::ios::trunc);
    if (!record_) throw Error(ErrorCode::Io, "cannot open '" + *record_path_ + "' for writing");
    write_header(record_, cfg);
    record_.flush();
  }

  ObjectState publish_object() {
    ObjectState s = session_.object_state();
    std::lock_guard lock(snapshot_mu_);
    snapshot_ = s;
    return s;
  }

  Session session_;
  InboundQueue inbound_;
  std::atomic<bool> client_distance_{false};
  std::atomic<bool> hand_gone_{false};
  std::atomic<double> max_parity_{0.0};
  std::atomic<std::int64_t> ticks_{0};
  mutable std::mutex snapshot_mu_;
  ObjectState snapshot_;
  std::optional<HandUpdate> latest_;
  HandButtons prev_buttons_;
  bool warned_uncalibrated_ = false;
  std::optional<std::string> record_path_;
  std::ofstream record_;
};

/// At most one hand-role connection at a time.
class HandSlot {
 public:
  bool try_claim() noexcept {
    bool expected = false;
    return taken_.compare_exchange_strong(expected, true);
  }
  void release() noexcept { taken_.store(false); }
  bool taken() const noexcept { return taken_.load(); }

 private:
  std::atomic<bool> taken_{false};
};

class ConnectionProtocol {
 public:
  struct Actions {
    std::vector<std::string> replies;  // encoded lines
    bool close = false;
  };

  ConnectionProtocol(HandSlot& slot, SessionDriver& driver) : slot_(slot), driver_(driver) {}
  ConnectionProtocol(const ConnectionProtocol&) = delete;
  ConnectionProtocol& operator=(const ConnectionProtocol&) = delete;
  ~ConnectionProtocol() { on_close(); }

  bool handshaken() const noexcept { return handshaken_; }
  std::optional<Role> role() const noexcept { return role_; }
  bool is_hand() const noexcept { return role_ == Role::Hand; }

  Actions on_line(std::string_view line) {
    Actions act;
    if (closed_) return act;
    std::optional<WireMessage> msg;
    try {
      msg = decode(line);
    } catch (const SchemaError& e) {
      reply(act, error_for(e));
      if (!handshaken_) close(act);
      return act;
    }
    if (!handshaken_) {
      handshake(*msg, act);
      return act;
    }
    dispatch(*msg, act);
    return act;
  }

  Actions on_handshake_timeout() {
    Actions act;
    if (handshaken_ || closed_) return act;
    reply(act, ErrorMessage{"handshake_timeout", "no hello within the handshake window"});
    close(act);
    return act;
  }

  Actions on_overflow() {
    Actions act;
    reply(act, ErrorMessage{"line_too_long", "frame exceeds the maximum line length"});
    close(act);
    return act;
  }

  void on_close() {
    if (role_ == Role::Hand && !released_) {
      released_ = true;
      driver_.hand_disconnected();
      slot_.release();
    }
    closed_ = true;
  }

 private:
  static void reply(Actions& act, const WireMessage& m) { act.replies.push_back(encode(m)); }
  void close(Actions& act) {
    act.close = true;
    on_close();
  }

  void handshake(const WireMessage& msg, Actions& act) {
    const auto* hello = std::get_if<Hello>(&msg);
    if (!hello) {
      reply(act, ErrorMessage{"expected_hello", "the first message must be hello"});
      close(act);
      return;
    }
    if (hello->version != kProtocolVersion) {
      reply(act, ErrorMessage{"unsupported_version",
                              "server speaks version " + std::to_string(kProtocolVersion)});
      close(act);
      return;
    }
    if (hello->role == Role::Hand) {
      if (!slot_.try_claim()) {
        reply(act, ErrorMessage{"busy", "another hand client is connected"});
        close(act);
        return;
      }
      driver_.set_client_distance(hello->client_distance);
    }
    role_ = hello->role;
    handshaken_ = true;
    reply(act, driver_.object_snapshot());
  }

  void dispatch(const WireMessage& msg, Actions& act) {
    if (role_ == Role::Observer) {
      if (!std::holds_alternative<ErrorMessage>(msg))
        reply(act, ErrorMessage{"read_only", "observers cannot send commands"});
      return;
    }
    if (const auto* h = std::get_if<HandUpdate>(&msg)) {
      if (last_t_ms_ && h->t_ms < *last_t_ms_) {
        reply(act, ErrorMessage{"non_monotonic", "hand timestamps must not decrease"});
        return;
      }
      last_t_ms_ = h->t_ms;
      driver_.inbound().push_hand(*h);
    } else if (const auto* p = std::get_if<CalibPair>(&msg)) {
      driver_.inbound().push_pair(*p);
    } else if (std::holds_alternative<Hello>(msg)) {
      reply(act, ErrorMessage{"unexpected_hello", "already connected"});
    } else if (!std::holds_alternative<ErrorMessage>(msg)) {
      reply(act, ErrorMessage{"unexpected_type",
                              std::string("clients may not send '") + type_name(msg) + "'"});
    }
  }

  HandSlot& slot_;
  SessionDriver& driver_;
  bool handshaken_ = false;
  bool closed_ = false;
  bool released_ = false;
  std::optional<Role> role_;
  std::optional<std::int64_t> last_t_ms_;
};

}  // namespace haptic
