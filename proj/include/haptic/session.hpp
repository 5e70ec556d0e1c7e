#pragma once

// The tick loop that binds the virtual scene, the placement law and the robot
// simulator. A Session is a single-owner state machine: one context feeds it
// hand poses and reads back robot updates.

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "haptic/calibration.hpp"
#include "haptic/control.hpp"
#include "haptic/geometry.hpp"
#include "haptic/json_codec.hpp"
#include "haptic/protocol.hpp"
#include "haptic/robotsim.hpp"

namespace haptic {

struct SessionConfig {
  std::int64_t tick_ms = 10;
  RobotLimits limits;
  double eps_contact = 0.002;
  Vec3 o_robot = Vec3::Zero();
  Vec3 o_headset = Vec3(-0.75, 0.0, 0.0);
  std::optional<RigidTransform> calib;
  std::vector<ShapeSpec> object_set;
  std::uint64_t rng_seed = 1;
  Vec3 ee_home = Vec3(-0.3, 0.0, 0.0);

  double dt() const { return static_cast<double>(tick_ms) / 1000.0; }

  void validate() const {
    if (tick_ms < 1) throw Error(ErrorCode::InvalidArgument, "tick_ms must be >= 1");
    if (!(eps_contact > 0.0) || !std::isfinite(eps_contact))
      throw Error(ErrorCode::InvalidArgument, "eps_contact must be positive");
    limits.validate();
    viewing_axis(o_robot, o_headset);
    if (calib && !calib->is_valid(1e-6))
      throw Error(ErrorCode::InvalidArgument, "calibration rotation is not proper");
    for (const auto& s : object_set) haptic::validate(s);
    if (!is_finite(ee_home)) throw Error(ErrorCode::InvalidArgument, "ee_home not finite");
  }
};

/// Plane, sphere and 45-degree cube placed `distance` meters in front of the
/// headset along the viewing axis, expressed in a controller frame that
/// coincides with the robot frame.
inline std::vector<ShapeSpec> default_object_set(const Vec3& o_robot, const Vec3& o_headset,
                                                 double distance = 0.5) {
  const Vec3 axis = viewing_axis(o_robot, o_headset);
  const Vec3 c = o_headset + distance * axis;
  return {Plane{c, -axis}, Sphere{c, 0.15}, RotatedCube{c, 0.15, std::numbers::pi / 4.0}};
}

inline SessionConfig default_session_config() {
  SessionConfig cfg;
  cfg.object_set = default_object_set(cfg.o_robot, cfg.o_headset);
  return cfg;
}

inline Json config_to_json(const SessionConfig& c) {
  Json j;
  j["tick_ms"] = c.tick_ms;
  j["limits"] = {{"v_max", c.limits.v_max},
                 {"a_max", c.limits.a_max},
                 {"reach", c.limits.reach},
                 {"workspace_origin", json_io::vec3(c.limits.workspace_origin)}};
  j["eps_contact"] = c.eps_contact;
  j["o_robot"] = json_io::vec3(c.o_robot);
  j["o_headset"] = json_io::vec3(c.o_headset);
  j["calib"] = c.calib ? json_io::transform(*c.calib) : Json(nullptr);
  Json shapes = Json::array();
  for (const auto& s : c.object_set) shapes.push_back(json_io::shape(s));
  j["object_set"] = shapes;
  j["rng_seed"] = c.rng_seed;
  j["ee_home"] = json_io::vec3(c.ee_home);
  return j;
}

/// Absent fields take their defaults; an absent object_set means the default
/// three objects.
inline SessionConfig config_from_json(const Json& j) {
  using namespace json_io;
  if (!j.is_object()) invalid("config", "expected a JSON object");
  SessionConfig c;
  if (j.contains("tick_ms")) c.tick_ms = read_int(j, "tick_ms");
  if (auto it = j.find("limits"); it != j.end()) {
    const Json& l = *it;
    if (!l.is_object()) invalid("limits", "expected an object");
    c.limits.v_max = read_number_or(l, "v_max", c.limits.v_max);
    c.limits.a_max = read_number_or(l, "a_max", c.limits.a_max);
    c.limits.reach = read_number_or(l, "reach", c.limits.reach);
    if (l.contains("workspace_origin")) c.limits.workspace_origin = read_vec3(l, "workspace_origin");
  }
  c.eps_contact = read_number_or(j, "eps_contact", c.eps_contact);
  if (j.contains("o_robot")) c.o_robot = read_vec3(j, "o_robot");
  if (j.contains("o_headset")) c.o_headset = read_vec3(j, "o_headset");
  if (auto it = j.find("calib"); it != j.end() && !it->is_null()) c.calib = as_transform(*it);
  if (auto it = j.find("object_set"); it != j.end()) {
    if (!it->is_array()) invalid("object_set", "expected an array of shapes");
    for (const auto& s : *it) c.object_set.push_back(as_shape(s, "object_set"));
  } else {
    c.object_set = default_object_set(c.o_robot, c.o_headset);
  }
  if (j.contains("rng_seed")) {
    const Json& s = j["rng_seed"];
    if (!s.is_number_integer()) invalid("rng_seed", "expected an integer");
    c.rng_seed = s.get<std::uint64_t>();
  }
  if (j.contains("ee_home")) c.ee_home = read_vec3(j, "ee_home");
  try {
    c.validate();
  } catch (const SchemaError&) {
    throw;
  } catch (const Error& e) {
    invalid("config", e.what());
  }
  return c;
}

struct TrajectorySample {
  std::int64_t t_ms = 0;
  Vec3 hand_v = Vec3::Zero();
  Vec3 hand_r = Vec3::Zero();
  Vec3 ee_pos = Vec3::Zero();
  double d_v = 0.0;
  double d_r = 0.0;
  ContactPhase phase = ContactPhase::Free;
  bool drawing = false;
  std::int64_t object = 0;
  bool clamped = false;
  bool operator==(const TrajectorySample&) const = default;
};

struct TrajectoryRecord {
  std::vector<TrajectorySample> samples;
};

class Session {
 public:
  explicit Session(SessionConfig config)
      : config_(std::move(config)), rng_(config_.rng_seed) {
    config_.validate();
    axis_ = viewing_axis(config_.o_robot, config_.o_headset);
    calib_ = config_.calib;
    reset_robot();
  }

  const SessionConfig& config() const noexcept { return config_; }
  const Vec3& axis() const noexcept { return axis_; }

  bool calibrated() const noexcept { return calib_.has_value(); }
  const RigidTransform& calibration() const {
    if (!calib_) throw Error(ErrorCode::Uncalibrated, "session is not calibrated");
    return *calib_;
  }
  void set_calibration(const RigidTransform& tf) {
    if (!tf.is_valid(1e-6)) throw Error(ErrorCode::InvalidArgument, "calibration is not rigid");
    calib_ = tf;
  }

  void set_client_distance_authority(bool on) noexcept { client_distance_ = on; }
  bool client_distance_authority() const noexcept { return client_distance_; }

  /// Keeps every tick in memory when on (default); a long-running server
  /// turns it off and streams samples through the sink instead.
  void set_keep_trajectory(bool on) noexcept { keep_trajectory_ = on; }
  void set_sample_sink(std::function<void(const TrajectorySample&)> sink) {
    sink_ = std::move(sink);
  }

  const TrajectoryRecord& trajectory() const noexcept { return trajectory_; }
  const RobotState& robot() const noexcept { return robot_; }
  const PlacementTarget& last_target() const noexcept { return target_; }
  std::int64_t ticks() const noexcept { return ticks_; }

  /// Largest |d_v(client) - d_v(server)| seen so far.
  double max_distance_disagreement() const noexcept { return max_parity_; }
  double last_distance_disagreement() const noexcept { return last_parity_; }

  void reset_robot() {
    robot_ = RobotState{};
    robot_.ee_pos = clamp_workspace(config_.ee_home, config_.limits).first;
    robot_.ee_facing = -axis_;
    target_ = PlacementTarget{robot_.ee_pos, robot_.ee_facing};
  }

  /// Moves the end-effector instantly; used to gather calibration pairs.
  void teleport_robot(const Vec3& p) {
    robot_.ee_pos = clamp_workspace(p, config_.limits).first;
    robot_.speed = 0.0;
  }

  RobotUpdate tick(const HandUpdate& hand) {
    if (!calib_) throw Error(ErrorCode::Uncalibrated, "session is not calibrated");
    if (!hand.pos.allFinite() || !(hand.d_v >= 0.0) || !std::isfinite(hand.d_v))
      throw Error(ErrorCode::InvalidArgument, "hand update not finite");

    const ShapeSpec& shape = current_object();
    const Vec3 hand_r = apply_transform(*calib_, hand.pos);
    const SurfaceQuery q = nearest_point(shape, hand.pos);
    last_parity_ = std::abs(hand.d_v - q.distance);
    max_parity_ = std::max(max_parity_, last_parity_);
    const double d_v = client_distance_ ? hand.d_v : q.distance;

    target_ = placement_target({hand_r, d_v, axis_, q.normal}, *calib_);
    robot_ = step(robot_, target_, config_.limits, config_.dt());
    const double d_r = (robot_.ee_pos - hand_r).norm();
    robot_.in_contact = detect_contact(robot_.ee_pos, hand_r, config_.eps_contact);

    RobotUpdate out;
    out.t_ms = ticks_ * config_.tick_ms;
    out.ee_pos = robot_.ee_pos;
    out.d_r = d_r;
    out.phase = contact_phase(d_v, d_r, config_.eps_contact);
    out.clamped = robot_.clamped;
    ++ticks_;

    TrajectorySample s;
    s.t_ms = out.t_ms;
    s.hand_v = hand.pos;
    s.hand_r = hand_r;
    s.ee_pos = out.ee_pos;
    s.d_v = d_v;
    s.d_r = d_r;
    s.phase = out.phase;
    s.drawing = hand.buttons.draw;
    s.object = static_cast<std::int64_t>(object_index_);
    s.clamped = out.clamped;
    if (keep_trajectory_) trajectory_.samples.push_back(s);
    if (sink_) sink_(s);
    return out;
  }

  // -- objects ---------------------------------------------------------------

  const ShapeSpec& current_object() const {
    if (config_.object_set.empty()) throw Error(ErrorCode::EmptySet, "object set is empty");
    return config_.object_set[object_index_];
  }
  std::size_t object_index() const noexcept { return object_index_; }

  void select_object(std::size_t index) {
    if (index >= config_.object_set.size())
      throw Error(ErrorCode::InvalidArgument, "object index out of range");
    object_index_ = index;
  }

  /// Uniform draw from the object set using the session RNG.
  const ShapeSpec& switch_object() {
    if (config_.object_set.empty()) throw Error(ErrorCode::EmptySet, "object set is empty");
    std::uniform_int_distribution<std::size_t> pick(0, config_.object_set.size() - 1);
    object_index_ = pick(rng_);
    return config_.object_set[object_index_];
  }

  ObjectState set_visibility(bool visible) {
    visible_ = visible;
    return object_state();
  }
  bool visible() const noexcept { return visible_; }
  ObjectState object_state() const { return {current_object(), visible_}; }

  // -- calibration capture ---------------------------------------------------

  /// Drops the current calibration and everything recorded under it.
  void begin_calibration() {
    calibrating_ = true;
    calib_.reset();
    pairs_.clear();
    trajectory_.samples.clear();
  }
  bool calibrating() const noexcept { return calibrating_; }
  std::size_t pending_pairs() const noexcept { return pairs_.size(); }

  void add_calibration_pair(const CalibPair& p) {
    if (!calibrating_) begin_calibration();
    pairs_.push_back({p.a, p.b});
  }

  /// Solves for the controller->robot transform from the captured pairs,
  /// installs it and restarts the clock and robot. On failure the session
  /// stays uncalibrated and capture mode is left.
  CalibResult finish_calibration() {
    calibrating_ = false;
    std::vector<CalibrationSample> samples;
    samples.swap(pairs_);
    const RigidTransform tf = estimate_transform(samples);
    calib_ = tf;
    ticks_ = 0;
    reset_robot();
    return {tf.r, tf.t, alignment_rmse(tf, samples), static_cast<std::int64_t>(samples.size())};
  }

 private:
  SessionConfig config_;
  std::mt19937_64 rng_;
  Vec3 axis_;
  std::optional<RigidTransform> calib_;
  bool client_distance_ = false;
  bool keep_trajectory_ = true;
  std::function<void(const TrajectorySample&)> sink_;
  TrajectoryRecord trajectory_;
  RobotState robot_;
  PlacementTarget target_;
  std::int64_t ticks_ = 0;
  double max_parity_ = 0.0;
  double last_parity_ = 0.0;
  std::size_t object_index_ = 0;
  bool visible_ = true;
  bool calibrating_ = false;
  std::vector<CalibrationSample> pairs_;
};

}  // namespace haptic
