#pragma once

// Wire messages exchanged between hand sources and the haptic server.
//
// Framing is newline-delimited JSON: every message is a single JSON object on
// one line, terminated by '\n', carrying a "type" discriminator. Unknown extra
// fields are ignored on decode. Lengths are meters, times integer
// milliseconds.

#include <cstdint>
#include <cstddef>
#include <deque>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "haptic/calibration.hpp"
#include "haptic/control.hpp"
#include "haptic/json_codec.hpp"

namespace haptic {

inline constexpr int kProtocolVersion = 1;
inline constexpr std::uint16_t kDefaultPort = 9750;
inline constexpr std::uint16_t kDefaultUiPort = 9751;

struct HandButtons {
  bool switch_object = false;
  bool hide = false;
  bool draw = false;
  bool operator==(const HandButtons&) const = default;
};

struct HandUpdate {
  std::int64_t t_ms = 0;
  Vec3 pos = Vec3::Zero();  // controller frame
  double d_v = 0.0;
  HandButtons buttons;
  bool operator==(const HandUpdate&) const = default;
};

struct RobotUpdate {
  std::int64_t t_ms = 0;
  Vec3 ee_pos = Vec3::Zero();  // robot frame
  double d_r = 0.0;
  ContactPhase phase = ContactPhase::Free;
  bool clamped = false;
  bool operator==(const RobotUpdate&) const = default;
};

struct ObjectState {
  ShapeSpec shape;
  bool visible = true;
  bool operator==(const ObjectState&) const = default;
};

struct CalibPair {
  Vec3 a = Vec3::Zero();
  Vec3 b = Vec3::Zero();
  bool operator==(const CalibPair&) const = default;
};

struct CalibResult {
  Mat3 r = Mat3::Identity();
  Vec3 t = Vec3::Zero();
  double rmse = 0.0;
  std::int64_t n = 0;
  bool operator==(const CalibResult&) const = default;
};

enum class Role { Hand, Observer };

struct Hello {
  int version = kProtocolVersion;
  Role role = Role::Hand;
  // When set, the server places the robot from the client's d_v instead of
  // its own recomputation.
  bool client_distance = false;
  bool operator==(const Hello&) const = default;
};

struct ErrorMessage {
  std::string code;
  std::string detail;
  bool operator==(const ErrorMessage&) const = default;
};

using WireMessage = std::variant<HandUpdate, RobotUpdate, ObjectState, CalibPair,
                                 CalibResult, Hello, ErrorMessage>;

inline const char* type_name(const WireMessage& m) {
  static constexpr const char* kNames[] = {"hand",         "robot", "object", "calib_pair",
                                           "calib_result", "hello", "error"};
  return kNames[m.index()];
}

namespace detail {

inline const char* phase_name(ContactPhase p) { return to_string(p); }

inline ContactPhase phase_from(const std::string& s) {
  if (s == "free") return ContactPhase::Free;
  if (s == "approaching") return ContactPhase::Approaching;
  if (s == "contact") return ContactPhase::Contact;
  json_io::invalid("phase", "unknown phase '" + s + "'");
}

inline void require_finite(bool ok, const char* what) {
  if (!ok)
    throw Error(ErrorCode::InvalidArgument,
                std::string("cannot encode non-finite ") + what);
}

inline double non_negative(const Json& obj, std::string_view key) {
  const double v = json_io::read_number(obj, key);
  if (v < 0.0) json_io::invalid(key, "must be non-negative");
  return v;
}

}  // namespace detail

inline Json calib_result_json(const CalibResult& c) {
  Json j;
  j["r"] = json_io::mat3(c.r);
  j["t"] = json_io::vec3(c.t);
  j["rmse"] = c.rmse;
  j["n"] = c.n;
  return j;
}

inline CalibResult calib_result_from(const Json& j) {
  json_io::check_vec3_arity(j, {"t"});
  CalibResult c;
  c.r = json_io::read_mat3(j, "r");
  c.t = json_io::read_vec3(j, "t");
  c.rmse = detail::non_negative(j, "rmse");
  c.n = json_io::read_int(j, "n");
  return c;
}

inline Json to_json(const WireMessage& msg) {
  Json j;
  j["type"] = type_name(msg);
  std::visit(
      [&](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, HandUpdate>) {
          detail::require_finite(m.pos.allFinite() && std::isfinite(m.d_v), "hand update");
          j["t_ms"] = m.t_ms;
          j["pos"] = json_io::vec3(m.pos);
          j["d_v"] = m.d_v;
          j["buttons"] = {{"switch", m.buttons.switch_object},
                          {"hide", m.buttons.hide},
                          {"draw", m.buttons.draw}};
        } else if constexpr (std::is_same_v<T, RobotUpdate>) {
          detail::require_finite(m.ee_pos.allFinite() && std::isfinite(m.d_r), "robot update");
          j["t_ms"] = m.t_ms;
          j["ee_pos"] = json_io::vec3(m.ee_pos);
          j["d_r"] = m.d_r;
          j["phase"] = detail::phase_name(m.phase);
          j["clamped"] = m.clamped;
        } else if constexpr (std::is_same_v<T, ObjectState>) {
          j["shape"] = json_io::shape(m.shape);
          j["visible"] = m.visible;
        } else if constexpr (std::is_same_v<T, CalibPair>) {
          detail::require_finite(m.a.allFinite() && m.b.allFinite(), "calibration pair");
          j["a"] = json_io::vec3(m.a);
          j["b"] = json_io::vec3(m.b);
        } else if constexpr (std::is_same_v<T, CalibResult>) {
          detail::require_finite(m.r.allFinite() && m.t.allFinite() && std::isfinite(m.rmse),
                                 "calibration result");
          const Json body = calib_result_json(m);
          for (const auto& [k, v] : body.items()) j[k] = v;
        } else if constexpr (std::is_same_v<T, Hello>) {
          j["version"] = m.version;
          j["role"] = m.role == Role::Hand ? "hand" : "observer";
          j["client_distance"] = m.client_distance;
        } else {
          j["code"] = m.code;
          j["detail"] = m.detail;
        }
      },
      msg);
  return j;
}

/// One line of NDJSON, terminated by '\n'. Throws on non-finite numerics.
inline std::string encode(const WireMessage& msg) {
  if (const auto* o = std::get_if<ObjectState>(&msg)) validate(o->shape);
  std::string out = to_json(msg).dump();
  out.push_back('\n');
  return out;
}

inline WireMessage from_json(const Json& j) {
  using namespace json_io;
  if (!j.is_object())
    throw SchemaError(SchemaFault::Malformed, "", "message must be a JSON object");
  const std::string type = read_string(j, "type");
  if (type == "hand") {
    check_vec3_arity(j, {"pos"});
    HandUpdate m;
    m.t_ms = read_int(j, "t_ms");
    m.pos = read_vec3(j, "pos");
    m.d_v = detail::non_negative(j, "d_v");
    const Json& b = require(j, "buttons");
    if (!b.is_object()) invalid("buttons", "expected an object");
    m.buttons.switch_object = read_bool(b, "switch");
    m.buttons.hide = read_bool(b, "hide");
    m.buttons.draw = read_bool(b, "draw");
    return m;
  }
  if (type == "robot") {
    check_vec3_arity(j, {"ee_pos"});
    RobotUpdate m;
    m.t_ms = read_int(j, "t_ms");
    m.ee_pos = read_vec3(j, "ee_pos");
    m.d_r = detail::non_negative(j, "d_r");
    m.phase = detail::phase_from(read_string(j, "phase"));
    m.clamped = read_bool(j, "clamped");
    return m;
  }
  if (type == "object") {
    return ObjectState{as_shape(require(j, "shape")), read_bool(j, "visible")};
  }
  if (type == "calib_pair") {
    check_vec3_arity(j, {"a", "b"});
    return CalibPair{read_vec3(j, "a"), read_vec3(j, "b")};
  }
  if (type == "calib_result") {
    return calib_result_from(j);
  }
  if (type == "hello") {
    Hello m;
    const auto version = read_int(j, "version");
    if (version < 1 || version > 1'000'000) invalid("version", "out of range");
    m.version = static_cast<int>(version);
    const std::string role = read_string(j, "role");
    if (role == "hand") m.role = Role::Hand;
    else if (role == "observer") m.role = Role::Observer;
    else invalid("role", "expected 'hand' or 'observer'");
    m.client_distance = read_bool_or(j, "client_distance", false);
    return m;
  }
  if (type == "error") {
    return ErrorMessage{read_string(j, "code"), read_string(j, "detail")};
  }
  throw SchemaError(SchemaFault::UnknownType, "type", "unknown message type '" + type + "'");
}

/// Decodes one framed line (with or without its trailing newline).
inline WireMessage decode(std::string_view line) {
  while (!line.empty() && (line.back() == '\n' || line.back() == '\r'))
    line.remove_suffix(1);
  if (line.find('\n') != std::string_view::npos)
    throw SchemaError(SchemaFault::Malformed, "", "frame contains more than one line");
  return from_json(json_io::parse(line));
}

/// Error reply describing why `line` was rejected.
inline ErrorMessage error_for(const SchemaError& e) {
  return ErrorMessage{to_string(e.fault()), e.what()};
}

/// Splits an arbitrarily chunked byte stream back into lines. Lines longer
/// than `max_line` bytes put the framer into a sticky overflow state.
class LineFramer {
 public:
  explicit LineFramer(std::size_t max_line = 1 << 20) : max_line_(max_line) {}

  std::vector<std::string> feed(std::string_view chunk) {
    std::vector<std::string> lines;
    if (overflowed_) return lines;
    for (char c : chunk) {
      if (c == '\n') {
        if (!buffer_.empty() && buffer_.back() == '\r') buffer_.pop_back();
        lines.push_back(std::move(buffer_));
        buffer_.clear();
      } else {
        buffer_.push_back(c);
        if (buffer_.size() > max_line_) {
          overflowed_ = true;
          buffer_.clear();
          break;
        }
      }
    }
    return lines;
  }

  bool overflowed() const noexcept { return overflowed_; }
  std::size_t pending() const noexcept { return buffer_.size(); }

 private:
  std::size_t max_line_;
  std::string buffer_;
  bool overflowed_ = false;
};

/// Inbound side of the tick loop: hand poses are latest-wins, calibration
/// pairs are kept in order without loss. Safe to fill from I/O threads while
/// the tick thread drains it.
class InboundQueue {
 public:
  struct Drained {
    std::optional<HandUpdate> hand;  // only when a new pose arrived
    std::vector<CalibPair> pairs;
    std::size_t dropped_hands = 0;
  };

  void push_hand(const HandUpdate& h) {
    std::lock_guard lock(mu_);
    if (hand_) ++dropped_;
    hand_ = h;
  }

  void push_pair(const CalibPair& p) {
    std::lock_guard lock(mu_);
    pairs_.push_back(p);
  }

  Drained drain() {
    std::lock_guard lock(mu_);
    Drained out;
    out.hand = std::exchange(hand_, std::nullopt);
    out.pairs.assign(pairs_.begin(), pairs_.end());
    pairs_.clear();
    out.dropped_hands = std::exchange(dropped_, 0);
    return out;
  }

 private:
  std::mutex mu_;
  std::optional<HandUpdate> hand_;
  std::deque<CalibPair> pairs_;
  std::size_t dropped_ = 0;
};

/// Bounded outbound buffer that discards the oldest entry when full.
class DropOldestQueue {
 public:
  explicit DropOldestQueue(std::size_t capacity) : capacity_(capacity ? capacity : 1) {}

  void push(std::string item) {
    if (items_.size() == capacity_) {
      items_.pop_front();
      ++dropped_;
    }
    items_.push_back(std::move(item));
  }

  bool empty() const noexcept { return items_.empty(); }
  std::size_t size() const noexcept { return items_.size(); }
  std::size_t dropped() const noexcept { return dropped_; }
  const std::string& front() const { return items_.front(); }
  void pop() { items_.pop_front(); }

 private:
  std::size_t capacity_;
  std::deque<std::string> items_;
  std::size_t dropped_ = 0;
};

}  // namespace haptic
