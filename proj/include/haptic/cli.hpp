#pragma once

// Command line front end. run_cli is the whole program; tools/haptic_cli.cpp
// only forwards main() to it, and tests call it in-process.
//
// Exit codes: 0 success, 1 verification failure, 2 usage or I/O error.

#include <pthread.h>
#include <signal.h>

#include <cstdio>
#include <functional>
#include <iostream>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "haptic/classify.hpp"
#include "haptic/experiments.hpp"
#include "haptic/files.hpp"
#include "haptic/recording.hpp"
#include "haptic/server.hpp"

namespace haptic {

inline constexpr int kExitOk = 0;
inline constexpr int kExitVerify = 1;
inline constexpr int kExitUsage = 2;

inline constexpr std::size_t kFewPairsWarning = 20;

struct CliContext {
  std::ostream& out = std::cout;
  std::ostream& err = std::cerr;
  // Called by `serve` once the listeners are up; returning stops the server.
  // Unset means block until SIGINT or SIGTERM.
  std::function<void(const Server&)> serve_until;
};

namespace cli_detail {

inline std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

/// --shape accepts inline JSON or a path to a JSON file.
inline ShapeSpec shape_argument(const std::string& arg) {
  const auto first = arg.find_first_not_of(" \t\r\n");
  const bool inline_json = first != std::string::npos && arg[first] == '{';
  const Json j = json_io::parse(inline_json ? arg : read_text_file(arg));
  return json_io::as_shape(j);
}

// Blocks SIGINT/SIGTERM in every thread created afterwards so that the main
// thread can collect them synchronously.
class SignalWaiter {
 public:
  SignalWaiter() {
    sigemptyset(&set_);
    sigaddset(&set_, SIGINT);
    sigaddset(&set_, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &set_, &old_);
  }
  SignalWaiter(const SignalWaiter&) = delete;
  SignalWaiter& operator=(const SignalWaiter&) = delete;
  ~SignalWaiter() { pthread_sigmask(SIG_SETMASK, &old_, nullptr); }

  int wait() {
    int sig = 0;
    sigwait(&set_, &sig);
    return sig;
  }

 private:
  sigset_t set_{};
  sigset_t old_{};
};

struct ServeArgs {
  std::string config;
  std::string bind = "0.0.0.0";
  int port = kDefaultPort;
  int ui_port = kDefaultUiPort;
  bool no_ui = false;
  std::string record;
  int handshake_ms = 5000;
};

inline int serve(const ServeArgs& a, CliContext& ctx) {
  SessionConfig config = a.config.empty() ? default_session_config() : load_config(a.config);
  const std::int64_t tick_ms = config.tick_ms;
  const bool calibrated = config.calib.has_value();

  ServerOptions opt;
  opt.address = a.bind;
  opt.port = static_cast<std::uint16_t>(a.port);
  opt.ui_port = static_cast<std::uint16_t>(a.ui_port);
  opt.enable_ui = !a.no_ui;
  opt.handshake_timeout = std::chrono::milliseconds(a.handshake_ms);
  if (!a.record.empty()) opt.recording_path = a.record;
  auto out_mu = std::make_shared<std::mutex>();
  std::ostream& out = ctx.out;
  opt.on_event = [out_mu, &out](const std::string& line) {
    std::lock_guard lock(*out_mu);
    out << line << std::endl;
  };

  std::optional<SignalWaiter> signals;
  if (!ctx.serve_until) signals.emplace();

  Server server(std::move(config), std::move(opt));
  {
    std::lock_guard lock(*out_mu);
    out << "listening tcp=" << a.bind << ":" << server.port();
    if (server.ui_port()) out << " websocket=" << a.bind << ":" << *server.ui_port();
    out << " tick_ms=" << tick_ms << (calibrated ? " calibrated" : " uncalibrated")
        << std::endl;
  }
  server.start();
  if (ctx.serve_until) {
    ctx.serve_until(server);
  } else {
    const int sig = signals->wait();
    std::lock_guard lock(*out_mu);
    out << "shutting down on signal " << sig << std::endl;
  }
  server.stop();
  return kExitOk;
}

struct SimulateArgs {
  std::string scenario;
  std::uint64_t seed = 1;
  std::string out;
  double noise = 0.0;
  double standoff = 0.0;
  std::optional<std::size_t> trials;
};

inline int simulate(const SimulateArgs& a, CliContext& ctx) {
  ScenarioOutcome r;
  if (a.scenario == "approach") {
    r = scenario_approach(a.seed, a.trials.value_or(ApproachOptions{}.trials));
  } else if (a.scenario == "slide") {
    r = scenario_slide(a.seed, a.standoff);
  } else if (a.scenario == "taski") {
    r = scenario_taski(a.seed, a.noise, a.trials.value_or(TaskIOptions{}.trials));
  } else if (a.scenario == "taskii") {
    r = scenario_taskii(a.seed, a.standoff);
  } else {
    ctx.err << "error: unknown scenario '" << a.scenario
            << "' (expected approach, slide, taski or taskii)\n";
    return kExitUsage;
  }
  save_recording(a.out, r.recording);
  const std::string summary_path = a.out + ".summary.json";
  write_text_file(summary_path, r.summary.dump(2) + "\n");

  const Json& s = r.summary;
  std::ostream& o = ctx.out;
  o << a.scenario << " seed=" << a.seed;
  if (a.scenario == "approach") {
    o << " trials=" << s["trials"].get<std::size_t>()
      << " steady_state_gap=" << fmt("%.6g", s["steady_state_gap"].get<double>())
      << " bound=" << fmt("%.6g", s["bound"].get<double>())
      << " max_contact_latency_ticks=" << s["max_contact_latency_ticks"].get<std::int64_t>();
  } else if (a.scenario == "taski") {
    o << " noise=" << fmt("%.6g", a.noise) << " accuracy=" << fmt("%.4f", s["accuracy"].get<double>())
      << " (" << s["correct"].get<int>() << "/" << s["trials"].get<int>() << ")";
  } else if (a.scenario == "taskii") {
    o << " mean_error=" << fmt("%.6g", s["mean_error"].get<double>())
      << " max_error=" << fmt("%.6g", s["max_error"].get<double>());
  } else {
    for (const auto& obj : s["objects"])
      o << " " << obj["kind"].get<std::string>() << "=" << fmt("%.6g", obj["mean_error"].get<double>());
  }
  o << " ticks=" << r.recording.record.samples.size() << " summary=" << summary_path << "\n";
  return kExitOk;
}

inline int calibrate(const std::string& pairs_path, const std::string& out_path, CliContext& ctx) {
  const auto pairs = load_pairs(pairs_path);
  if (pairs.size() < kFewPairsWarning)
    ctx.err << "warning: only " << pairs.size() << " pairs; at least " << kFewPairsWarning
            << " are recommended\n";
  const RigidTransform tf = estimate_transform(pairs);
  const CalibResult res{tf.r, tf.t, alignment_rmse(tf, pairs),
                        static_cast<std::int64_t>(pairs.size())};
  save_calib_result(out_path, res);
  ctx.out << "n=" << res.n << " rmse=" << fmt("%.6g", res.rmse) << " m\n";
  return kExitOk;
}

inline int metrics(const std::string& recording_path, const std::string& shape_arg,
                   CliContext& ctx) {
  const Recording rec = load_recording(recording_path);
  SurfaceError e;
  if (!shape_arg.empty()) {
    e = trajectory_surface_error(rec.record, shape_argument(shape_arg));
  } else {
    // Without --shape, each sample is measured against the object it was
    // recorded with.
    if (!rec.config)
      throw Error(ErrorCode::InvalidArgument, "recording has no header; pass --shape");
    const auto& objects = rec.config->object_set;
    double sum = 0.0;
    for (const auto& s : rec.record.samples) {
      if (!s.drawing) continue;
      if (s.object < 0 || static_cast<std::size_t>(s.object) >= objects.size())
        throw Error(ErrorCode::Schema, "sample references an unknown object");
      const double d = nearest_point(objects[static_cast<std::size_t>(s.object)], s.hand_v).distance;
      sum += d;
      e.max = std::max(e.max, d);
      ++e.n;
    }
    if (e.n == 0) throw Error(ErrorCode::InvalidArgument, "recording has no drawing samples");
    e.mean = sum / static_cast<double>(e.n);
  }
  ctx.out << "mean_error=" << fmt("%.9g", e.mean) << " max_error=" << fmt("%.9g", e.max)
          << " n=" << e.n << "\n";
  return kExitOk;
}

inline int replay_cmd(const std::string& recording_path, CliContext& ctx) {
  const Recording rec = load_recording(recording_path);
  const ReplayReport r = replay(rec);
  ctx.out << "ticks=" << r.ticks << " mismatches=" << r.mismatches;
  if (r.first_mismatch)
    ctx.out << " first_mismatch_t_ms=" << rec.record.samples[*r.first_mismatch].t_ms;
  ctx.out << (r.identical() ? " identical" : " DIVERGED") << "\n";
  return r.identical() ? kExitOk : kExitVerify;
}

}  // namespace cli_detail

inline int run_cli(int argc, const char* const* argv, CliContext ctx = {}) {
  CLI::App app{"Encountered-type haptic display engine"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "haptic protocol " + std::to_string(kProtocolVersion));

  cli_detail::ServeArgs serve_args;
  auto* serve = app.add_subcommand("serve", "Run the haptic server until interrupted");
  serve->add_option("--config", serve_args.config, "Session config JSON file");
  serve->add_option("--port", serve_args.port, "TCP port for hand clients (0 = any)")
      ->check(CLI::Range(0, 65535));
  serve->add_option("--ui-port", serve_args.ui_port, "WebSocket port for browser clients (0 = any)")
      ->check(CLI::Range(0, 65535));
  serve->add_option("--bind", serve_args.bind, "Listen address");
  serve->add_flag("--no-ui", serve_args.no_ui, "Do not open the WebSocket listener");
  serve->add_option("--record", serve_args.record, "Write a replayable recording here");
  serve->add_option("--handshake-timeout-ms", serve_args.handshake_ms, "Hello deadline")
      ->check(CLI::PositiveNumber);

  cli_detail::SimulateArgs sim_args;
  std::size_t trials = 0;
  auto* sim = app.add_subcommand("simulate", "Run a scripted experiment headless");
  sim->add_option("--scenario", sim_args.scenario, "approach | slide | taski | taskii")->required();
  sim->add_option("--seed", sim_args.seed, "Random seed");
  sim->add_option("--out", sim_args.out, "Recording output path")->required();
  sim->add_option("--noise", sim_args.noise, "taski: contact noise sigma per axis, m")
      ->check(CLI::NonNegativeNumber);
  sim->add_option("--standoff", sim_args.standoff, "slide/taskii: radial offset of the stroke, m");
  auto* trials_opt = sim->add_option("--trials", trials, "Number of trials")->check(CLI::PositiveNumber);

  std::string pairs_path, calib_out;
  auto* cal = app.add_subcommand("calibrate", "Solve the controller-to-robot transform");
  cal->add_option("--pairs", pairs_path, "NDJSON file of {a, b} pairs")->required();
  cal->add_option("--out", calib_out, "Calibration result output path")->required();

  std::string metrics_rec, metrics_shape;
  auto* met = app.add_subcommand("metrics", "Surface error of a recording's drawing samples");
  met->add_option("--recording", metrics_rec, "Recording file")->required();
  met->add_option("--shape", metrics_shape, "Shape as inline JSON or a JSON file");

  std::string replay_rec;
  auto* rep = app.add_subcommand("replay", "Re-simulate a recording and check determinism");
  rep->add_option("--recording", replay_rec, "Recording file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, ctx.out, ctx.err) == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*serve) return cli_detail::serve(serve_args, ctx);
    if (*sim) {
      if (*trials_opt) sim_args.trials = trials;
      return cli_detail::simulate(sim_args, ctx);
    }
    if (*cal) return cli_detail::calibrate(pairs_path, calib_out, ctx);
    if (*met) return cli_detail::metrics(metrics_rec, metrics_shape, ctx);
    if (*rep) return cli_detail::replay_cmd(replay_rec, ctx);
  } catch (const Error& e) {
    ctx.err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    ctx.err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace haptic
