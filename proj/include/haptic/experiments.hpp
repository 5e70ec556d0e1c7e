#pragma once

// Headless experiment scenarios: a simulated desk scene with a known
// controller->robot transform, a calibration capture, and scripted hands
// driving the session. Each scenario returns a machine-readable summary and
// the recording of every tick.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "haptic/calibration.hpp"
#include "haptic/classify.hpp"
#include "haptic/recording.hpp"
#include "haptic/scripted.hpp"
#include "haptic/session.hpp"

namespace haptic {

struct Scene {
  SessionConfig config;     // objects in the controller frame, calib unset
  RigidTransform truth;     // controller -> robot, as the hardware would be
  Vec3 user_dir_v;          // controller frame, from the objects toward the user
};

/// The tracker's frame is rotated a quarter turn about the vertical and
/// offset from the robot base. Objects sit `distance` m in front of the
/// headset along the viewing axis.
inline Scene make_scene(std::uint64_t seed = 1, double distance = 0.5) {
  Scene scene;
  scene.config = SessionConfig{};
  scene.config.rng_seed = seed;
  scene.truth = {rotation_z(std::numbers::pi / 2.0), Vec3(0.05, -0.10, 0.02)};
  const Vec3 axis = viewing_axis(scene.config.o_robot, scene.config.o_headset);
  const RigidTransform to_v = scene.truth.inverse();
  const Vec3 c_v = apply_transform(to_v, scene.config.o_headset + distance * axis);
  scene.user_dir_v = (to_v.r * -axis).normalized();
  scene.config.object_set = {Plane{c_v, scene.user_dir_v}, Sphere{c_v, 0.15},
                             RotatedCube{c_v, 0.15, std::numbers::pi / 4.0}};
  return scene;
}

inline std::size_t object_index_of(const SessionConfig& cfg, ShapeKind kind) {
  for (std::size_t i = 0; i < cfg.object_set.size(); ++i)
    if (kind_of(cfg.object_set[i]) == kind) return i;
  throw Error(ErrorCode::InvalidArgument, std::string("no ") + to_string(kind) + " in object set");
}

/// Synthetic capture: controller points spread over the reachable space in
/// front of the user; the robot reading is the true image plus iid Gaussian
/// noise of `sigma` m per axis.
inline std::vector<CalibrationSample> synthetic_pairs(const RigidTransform& truth, std::size_t n,
                                                      double sigma, std::uint64_t seed,
                                                      const Vec3& around = Vec3::Zero(),
                                                      double half_size = 0.25) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::normal_distribution<double> noise(0.0, sigma > 0.0 ? sigma : 1.0);
  std::vector<CalibrationSample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 a = around + half_size * draw_vec3([&] { return unit(rng); });
    Vec3 b = apply_transform(truth, a);
    if (sigma > 0.0) b += draw_vec3([&] { return noise(rng); });
    out.push_back({a, b});
  }
  return out;
}

/// Capture procedure in simulation: the end-effector is teleported onto the
/// real fingertip and both frames are read.
inline CalibResult capture_calibration(Session& session, const Scene& scene, std::size_t n_pairs,
                                       double sigma, std::uint64_t seed) {
  const Vec3 around = anchor_of(scene.config.object_set.front()) + 0.2 * scene.user_dir_v;
  session.begin_calibration();
  for (const auto& s : synthetic_pairs(scene.truth, n_pairs, sigma, seed, around)) {
    session.teleport_robot(s.b);
    session.add_calibration_pair({s.a, session.robot().ee_pos});
  }
  return session.finish_calibration();
}

/// Ticks the session through a scripted hand; returns the samples produced.
inline std::vector<TrajectorySample> run_script(Session& session, const TrajectorySpec& spec,
                                                std::int64_t extra_ms = 0) {
  std::vector<TrajectorySample> out;
  const std::int64_t end = duration_ms(spec) + extra_ms;
  const std::int64_t tick = session.config().tick_ms;
  session.set_sample_sink([&](const TrajectorySample& s) { out.push_back(s); });
  for (std::int64_t t = 0; t <= end; t += tick) session.tick(scripted_hand(spec, t));
  session.set_sample_sink(nullptr);
  return out;
}

struct ScenarioOutcome {
  Json summary;
  Recording recording;
};

inline Session calibrated_session(const Scene& scene, std::uint64_t seed, double calib_sigma = 0.0) {
  Session session(scene.config);
  capture_calibration(session, scene, 486, calib_sigma, seed ^ 0x9e3779b97f4a7c15ULL);
  return session;
}

inline Recording recording_of(const Session& session) {
  SessionConfig cfg = session.config();
  cfg.calib = session.calibration();
  return {cfg, session.trajectory()};
}

// -- approach ---------------------------------------------------------------

struct ApproachTrial {
  double steady_gap = 0.0;               // max |d_r - d_v| once caught up
  std::optional<std::int64_t> catch_up;  // ticks after motion start
  std::optional<std::int64_t> contact_latency;  // ticks from d_v <= eps to Contact
  bool contact_sound = true;  // Contact only ever with d_v, d_r <= eps
};

struct ApproachOptions {
  std::size_t trials = 100;
  double speed = 0.2;
  double start_distance = 0.4;
  std::int64_t dwell_ms = 1000;
  std::int64_t hold_ms = 100;
  double max_incidence = std::numbers::pi / 4.0;  // line vs. inward normal
};

/// Analyses one approach run (samples from dwell start to the end of hold).
inline ApproachTrial analyse_approach(std::span<const TrajectorySample> samples,
                                      std::int64_t motion_start_tick, double eps) {
  ApproachTrial trial;
  std::optional<std::size_t> first_close, first_contact;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    if (s.phase == ContactPhase::Contact && !(s.d_v <= eps && s.d_r <= eps)) trial.contact_sound = false;
    if (static_cast<std::int64_t>(i) < motion_start_tick) continue;
    const double gap = std::abs(s.d_r - s.d_v);
    // The hand first moves on the tick after motion_start_tick; the robot has
    // caught up once it sits on its target again after that.
    if (!trial.catch_up && static_cast<std::int64_t>(i) > motion_start_tick && gap <= 1e-9)
      trial.catch_up = static_cast<std::int64_t>(i) - motion_start_tick;
    if (trial.catch_up) trial.steady_gap = std::max(trial.steady_gap, gap);
    if (!first_close && s.d_v <= eps) first_close = i;
    if (!first_contact && s.phase == ContactPhase::Contact) first_contact = i;
  }
  if (first_close && first_contact)
    trial.contact_latency = static_cast<std::int64_t>(*first_contact) - static_cast<std::int64_t>(*first_close);
  return trial;
}

/// Random approach line onto the front of `shape`, entering the surface at
/// an angle of at most `max_incidence` from the inward normal.
inline Approach random_approach(const ShapeSpec& shape, const Vec3& user_dir, std::mt19937_64& rng,
                                const ApproachOptions& opt) {
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
  const auto [u, v] = detail::lateral_basis(user_dir);
  const double half = 0.7 * detail::lateral_half_size(shape);
  const double lu = unit(rng);
  const double lv = unit(rng);
  const auto hit = detail::project_front(shape, user_dir, half * (lu * u + lv * v));
  const auto [nu, nv] = orthonormal_basis(hit.normal);
  const double tilt = std::acos(1.0 - (unit(rng) + 1.0) / 2.0 * (1.0 - std::cos(opt.max_incidence)));
  const double az = angle(rng);
  const Vec3 outward = std::cos(tilt) * hit.normal +
                       std::sin(tilt) * (std::cos(az) * nu + std::sin(az) * nv);
  Approach a;
  a.shape = shape;
  a.direction = -outward.normalized();
  a.start = hit.point + opt.start_distance * outward.normalized();
  a.speed = opt.speed;
  a.dwell_ms = opt.dwell_ms;
  return a;
}

struct ApproachSummary {
  std::vector<ApproachTrial> trials;
  double bound = 0.0;
  double max_gap = 0.0;
  std::int64_t max_latency = 0;
  bool all_contacted = true;
  bool all_caught_up = true;
  bool contact_sound = true;
};

inline ApproachSummary run_approach_trials(Session& session, const Scene& scene, std::uint64_t seed,
                                           const ApproachOptions& opt = {}) {
  ApproachSummary sum;
  sum.bound = 2.0 * opt.speed * session.config().dt();
  std::mt19937_64 rng(seed);
  const std::int64_t tick = session.config().tick_ms;
  for (std::size_t k = 0; k < opt.trials; ++k) {
    session.select_object(k % session.config().object_set.size());
    const Approach a = random_approach(session.current_object(), scene.user_dir_v, rng, opt);
    const auto samples = run_script(session, a, opt.hold_ms);
    const ApproachTrial t = analyse_approach(samples, a.dwell_ms / tick, session.config().eps_contact);
    sum.max_gap = std::max(sum.max_gap, t.steady_gap);
    if (t.contact_latency) sum.max_latency = std::max(sum.max_latency, *t.contact_latency);
    else sum.all_contacted = false;
    if (!t.catch_up) sum.all_caught_up = false;
    if (!t.contact_sound) sum.contact_sound = false;
    sum.trials.push_back(t);
  }
  return sum;
}

inline ScenarioOutcome scenario_approach(std::uint64_t seed, std::size_t trials = 100) {
  const Scene scene = make_scene(seed);
  Session session = calibrated_session(scene, seed);
  ApproachOptions opt;
  opt.trials = trials;
  const ApproachSummary s = run_approach_trials(session, scene, seed, opt);
  Json j;
  j["scenario"] = "approach";
  j["seed"] = seed;
  j["trials"] = s.trials.size();
  j["hand_speed"] = opt.speed;
  j["steady_state_gap"] = s.max_gap;
  j["bound"] = s.bound;
  j["max_contact_latency_ticks"] = s.max_latency;
  j["all_contacted"] = s.all_contacted;
  j["all_caught_up"] = s.all_caught_up;
  j["contact_sound"] = s.contact_sound;
  return {j, recording_of(session)};
}

// -- slides -----------------------------------------------------------------

inline OrbitSlide slide_on(const ShapeSpec& shape, const Vec3& user_dir, double standoff) {
  OrbitSlide o;
  o.shape = shape;
  o.user_dir = user_dir;
  o.standoff = standoff;
  o.dwell_ms = 500;
  return o;
}

inline Json surface_error_json(const SurfaceError& e) {
  return {{"mean_error", e.mean}, {"max_error", e.max}, {"n", e.n}};
}

inline ScenarioOutcome scenario_slide(std::uint64_t seed, double standoff = 0.0) {
  const Scene scene = make_scene(seed);
  Session session = calibrated_session(scene, seed);
  Json objects = Json::array();
  for (std::size_t i = 0; i < scene.config.object_set.size(); ++i) {
    session.select_object(i);
    const ShapeSpec& shape = session.current_object();
    TrajectoryRecord rec{run_script(session, slide_on(shape, scene.user_dir_v, standoff), 200)};
    Json o = surface_error_json(trajectory_surface_error(rec, shape));
    o["kind"] = to_string(kind_of(shape));
    objects.push_back(o);
  }
  Json j;
  j["scenario"] = "slide";
  j["seed"] = seed;
  j["standoff"] = standoff;
  j["objects"] = objects;
  return {j, recording_of(session)};
}

inline ScenarioOutcome scenario_taskii(std::uint64_t seed, double standoff = 0.0) {
  const Scene scene = make_scene(seed);
  Session session = calibrated_session(scene, seed);
  session.select_object(object_index_of(scene.config, ShapeKind::Sphere));
  const ShapeSpec& shape = session.current_object();
  run_script(session, slide_on(shape, scene.user_dir_v, standoff), 200);
  const SurfaceError e = trajectory_surface_error(session.trajectory(), shape);
  Json j{{"scenario", "taskii"}, {"seed", seed}, {"standoff", standoff}, {"mean_error", e.mean},
           {"max_error", e.max}, {"n", e.n}};
  return {j, recording_of(session)};
}

// -- task I: probe and classify --------------------------------------------

struct TaskIOptions {
  std::size_t trials = 30;
  std::size_t pokes = 16;
  double contact_noise = 0.0;  // Gaussian sigma per axis, m
};

struct TaskIResult {
  ConfusionMatrix confusion;
  std::size_t unclassified = 0;  // trials with too few contacts
  std::vector<Classification> fits;
};

/// First contact position (controller frame) of every poke that produced one.
inline std::vector<Vec3> first_contacts(std::span<const TrajectorySample> samples, const PokeGrid& grid,
                                        std::int64_t tick_ms) {
  std::vector<Vec3> out;
  std::vector<bool> seen(grid.n_points, false);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].phase != ContactPhase::Contact) continue;
    const std::size_t k = poke_index(grid, static_cast<std::int64_t>(i) * tick_ms);
    if (seen[k]) continue;
    seen[k] = true;
    out.push_back(samples[i].hand_v);
  }
  return out;
}

inline TaskIResult run_task_i(Session& session, const Scene& scene, std::uint64_t seed,
                              const TaskIOptions& opt = {}) {
  TaskIResult res;
  std::mt19937_64 noise_rng(seed * 7919 + 17);
  std::normal_distribution<double> noise(0.0, opt.contact_noise > 0.0 ? opt.contact_noise : 1.0);
  ClassifierOptions copt;
  for (const auto& s : scene.config.object_set)
    if (const auto* c = std::get_if<RotatedCube>(&s)) copt.cube_yaw = c->yaw;
  for (std::size_t trial = 0; trial < opt.trials; ++trial) {
    const ShapeSpec shape = session.switch_object();
    session.set_visibility(false);
    PokeGrid grid;
    grid.shape = shape;
    grid.user_dir = scene.user_dir_v;
    grid.n_points = opt.pokes;
    const auto samples = run_script(session, grid);
    std::vector<Vec3> contacts = first_contacts(samples, grid, session.config().tick_ms);
    if (opt.contact_noise > 0.0)
      for (auto& c : contacts) c += draw_vec3([&] { return noise(noise_rng); });
    const ShapeKind truth = kind_of(shape);
    session.set_visibility(true);
    if (contacts.size() < kMinContactsForClassification) {
      ++res.unclassified;
      // Counted as a miss against the next kind in order.
      res.confusion.add(truth, kAllShapeKinds[(static_cast<std::size_t>(truth) + 1) % 3]);
      continue;
    }
    const Classification c = classify_shape(contacts, copt);
    res.fits.push_back(c);
    res.confusion.add(truth, c.kind);
  }
  return res;
}

inline Json confusion_json(const ConfusionMatrix& m) {
  Json labels = Json::array();
  for (auto k : kAllShapeKinds) labels.push_back(to_string(k));
  Json rows = Json::array();
  for (const auto& row : m.counts) rows.push_back(Json::array({row[0], row[1], row[2]}));
  return {{"labels", labels}, {"rows_truth_cols_predicted", rows}};
}

inline ScenarioOutcome scenario_taski(std::uint64_t seed, double contact_noise = 0.0,
                                      std::size_t trials = 30) {
  const Scene scene = make_scene(seed);
  Session session = calibrated_session(scene, seed);
  TaskIOptions opt;
  opt.trials = trials;
  opt.contact_noise = contact_noise;
  const TaskIResult r = run_task_i(session, scene, seed, opt);
  Json j;
  j["scenario"] = "taski";
  j["seed"] = seed;
  j["trials"] = r.confusion.total();
  j["contact_noise"] = contact_noise;
  j["correct"] = r.confusion.correct();
  j["accuracy"] = r.confusion.accuracy();
  j["unclassified"] = r.unclassified;
  j["confusion"] = confusion_json(r.confusion);
  return {j, recording_of(session)};
}

}  // namespace haptic
