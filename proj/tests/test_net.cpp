#include <gtest/gtest.h>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "haptic/cli.hpp"
#include "haptic/driver.hpp"
#include "haptic/experiments.hpp"
#include "haptic/files.hpp"
#include "haptic/server.hpp"
#include "net_client.hpp"
#include "support.hpp"

using namespace haptic;
using namespace std::chrono_literals;
namespace fs = std::filesystem;

namespace {

SessionConfig calibrated_config() {
  SessionConfig c = default_session_config();
  c.calib = RigidTransform::identity();
  return c;
}

HandUpdate hand(std::int64_t t_ms, const Vec3& p = Vec3(-0.4, 0, 0)) {
  HandUpdate h;
  h.t_ms = t_ms;
  h.pos = p;
  return h;
}

std::string hello_line(Role role = Role::Hand) {
  Hello h;
  h.role = role;
  return encode(h);
}

template <class T>
std::optional<T> as(const std::optional<std::string>& line) {
  if (!line) return std::nullopt;
  const WireMessage m = decode(*line);
  if (const auto* t = std::get_if<T>(&m)) return *t;
  return std::nullopt;
}

/// Reads until an error line arrives or the stream stalls.
std::optional<ErrorMessage> next_error(test::LineClient& c, std::chrono::milliseconds timeout = 2000ms) {
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  while (std::chrono::steady_clock::now() < deadline) {
    const auto line = c.read_line(timeout);
    if (!line) return std::nullopt;
    if (auto e = as<ErrorMessage>(line)) return e;
  }
  return std::nullopt;
}

fs::path scratch_dir() {
  static const fs::path dir = [] {
    fs::path p = fs::temp_directory_path() /
                 ("haptic_tests_" + std::to_string(::getpid()));
    fs::create_directories(p);
    return p;
  }();
  return dir;
}

struct CliRun {
  int code = 0;
  std::string out;
  std::string err;
};

CliRun cli(std::vector<std::string> args, std::function<void(const Server&)> until = nullptr) {
  args.insert(args.begin(), "haptic");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  CliRun r;
  r.code = run_cli(static_cast<int>(argv.size()), argv.data(),
                   CliContext{.out = out, .err = err, .serve_until = std::move(until)});
  r.out = out.str();
  r.err = err.str();
  return r;
}

}  // namespace

// ------------------------------------------------------------------ driver

TEST(Driver, UncalibratedHandGetsOneError) {
  SessionDriver d(default_session_config());
  d.inbound().push_hand(hand(0));
  auto out = d.run_tick();
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(std::get<ErrorMessage>(out[0].msg).code, "uncalibrated");
  EXPECT_EQ(out[0].to, Audience::Hand);
  d.inbound().push_hand(hand(10));
  EXPECT_TRUE(d.run_tick().empty());
  EXPECT_EQ(d.ticks(), 0);
}

TEST(Driver, PairsThenHandCalibratesAndStreams) {
  SessionDriver d(default_session_config());
  std::mt19937_64 rng(1);
  const RigidTransform truth = test::random_transform(rng, 0.2);
  for (const auto& p : synthetic_pairs(truth, 30, 0.0, 2)) d.inbound().push_pair({p.a, p.b});
  EXPECT_TRUE(d.run_tick().empty());  // pairs alone do not finish capture
  d.inbound().push_hand(hand(0));
  auto out = d.run_tick();
  ASSERT_EQ(out.size(), 2u);
  const auto& res = std::get<CalibResult>(out[0].msg);
  EXPECT_EQ(res.n, 30);
  EXPECT_LT(res.rmse, 1e-9);
  EXPECT_EQ(std::get<RobotUpdate>(out[1].msg).t_ms, 0);
  // The latest pose keeps driving the robot without new input.
  out = d.run_tick();
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(std::get<RobotUpdate>(out[0].msg).t_ms, 10);
}

TEST(Driver, BadCalibrationReportsFailure) {
  SessionDriver d(default_session_config());
  d.inbound().push_pair({Vec3::Zero(), Vec3::Zero()});
  d.inbound().push_hand(hand(0));
  auto out = d.run_tick();
  ASSERT_GE(out.size(), 1u);
  EXPECT_EQ(std::get<ErrorMessage>(out[0].msg).code, "calibration_failed");
}

TEST(Driver, ButtonEdgesSwitchAndHide) {
  SessionDriver d(calibrated_config());
  HandUpdate h = hand(0);
  h.buttons.hide = true;
  d.inbound().push_hand(h);
  auto out = d.run_tick();
  ASSERT_EQ(out.size(), 2u);
  EXPECT_FALSE(std::get<ObjectState>(out[0].msg).visible);
  EXPECT_FALSE(d.object_snapshot().visible);
  h.t_ms = 10;  // still held: no second toggle
  d.inbound().push_hand(h);
  EXPECT_EQ(d.run_tick().size(), 1u);
  h.t_ms = 20;
  h.buttons = {true, false, false};
  d.inbound().push_hand(h);
  out = d.run_tick();
  ASSERT_EQ(out.size(), 2u);
  EXPECT_TRUE(std::holds_alternative<ObjectState>(out[0].msg));
}

TEST(Driver, RecordsReplayableFile) {
  const fs::path path = scratch_dir() / "driver.ndjson";
  {
    SessionDriver d(calibrated_config());
    d.record_to(path.string());
    for (int i = 0; i < 50; ++i) {
      d.inbound().push_hand(hand(10 * i, Vec3(-0.4 + 0.004 * i, 0.01 * i, 0)));
      d.run_tick();
    }
  }
  const Recording rec = load_recording(path.string());
  ASSERT_TRUE(rec.config);
  EXPECT_EQ(rec.record.samples.size(), 50u);
  EXPECT_TRUE(replay(rec).identical());
}

// --------------------------------------------------------------- protocol

TEST(Connection, GarbageFirstLineClosesWithError) {
  HandSlot slot;
  SessionDriver d(default_session_config());
  ConnectionProtocol p(slot, d);
  const auto act = p.on_line("garbage");
  ASSERT_EQ(act.replies.size(), 1u);
  EXPECT_EQ(std::get<ErrorMessage>(decode(act.replies[0])).code, "malformed_json");
  EXPECT_TRUE(act.close);
  EXPECT_TRUE(p.on_line(hello_line()).replies.empty());
}

TEST(Connection, FirstMessageMustBeHello) {
  HandSlot slot;
  SessionDriver d(default_session_config());
  ConnectionProtocol p(slot, d);
  const auto act = p.on_line(encode(hand(0)));
  EXPECT_EQ(std::get<ErrorMessage>(decode(act.replies.at(0))).code, "expected_hello");
  EXPECT_TRUE(act.close);
}

TEST(Connection, SecondHandIsBusyUntilFirstLeaves) {
  HandSlot slot;
  SessionDriver d(default_session_config());
  auto first = std::make_unique<ConnectionProtocol>(slot, d);
  auto act = first->on_line(hello_line());
  EXPECT_FALSE(act.close);
  EXPECT_TRUE(std::holds_alternative<ObjectState>(decode(act.replies.at(0))));
  ConnectionProtocol second(slot, d);
  act = second.on_line(hello_line());
  EXPECT_EQ(std::get<ErrorMessage>(decode(act.replies.at(0))).code, "busy");
  EXPECT_TRUE(act.close);
  ConnectionProtocol observer(slot, d);
  EXPECT_FALSE(observer.on_line(hello_line(Role::Observer)).close);
  first.reset();
  ConnectionProtocol third(slot, d);
  EXPECT_FALSE(third.on_line(hello_line()).close);
}

TEST(Connection, PolicyAfterHandshake) {
  HandSlot slot;
  SessionDriver d(default_session_config());
  ConnectionProtocol p(slot, d);
  p.on_line(hello_line());
  auto code_of = [&](const std::string& line) {
    const auto act = p.on_line(line);
    EXPECT_FALSE(act.close);
    return act.replies.empty() ? std::string() : std::get<ErrorMessage>(decode(act.replies[0])).code;
  };
  EXPECT_EQ(code_of(encode(hand(100))), "");
  EXPECT_EQ(code_of(encode(hand(50))), "non_monotonic");
  EXPECT_EQ(code_of("{"), "malformed_json");
  EXPECT_EQ(code_of(R"({"type":"warp"})"), "unknown_type");
  EXPECT_EQ(code_of(R"({"type":"hand","pos":[1,2]})"), "bad_arity");
  EXPECT_EQ(code_of(R"({"type":"hand","pos":[1,2,3]})"), "missing_field");
  EXPECT_EQ(code_of(hello_line()), "unexpected_hello");
  EXPECT_EQ(code_of(encode(RobotUpdate{})), "unexpected_type");

  ConnectionProtocol obs(slot, d);
  obs.on_line(hello_line(Role::Observer));
  EXPECT_EQ(std::get<ErrorMessage>(decode(obs.on_line(encode(hand(0))).replies.at(0))).code,
            "read_only");
}

TEST(Connection, UnsupportedVersionAndTimeout) {
  HandSlot slot;
  SessionDriver d(default_session_config());
  ConnectionProtocol p(slot, d);
  auto act = p.on_line(R"({"type":"hello","version":2,"role":"hand"})");
  EXPECT_EQ(std::get<ErrorMessage>(decode(act.replies.at(0))).code, "unsupported_version");
  EXPECT_FALSE(slot.taken());
  ConnectionProtocol q(slot, d);
  act = q.on_handshake_timeout();
  EXPECT_TRUE(act.close);
  EXPECT_EQ(std::get<ErrorMessage>(decode(act.replies.at(0))).code, "handshake_timeout");
}

// ----------------------------------------------------------------- server

namespace {

ServerOptions loopback(bool ui = false) {
  ServerOptions o;
  o.address = "127.0.0.1";
  o.port = 0;
  o.ui_port = 0;
  o.enable_ui = ui;
  return o;
}

}  // namespace

TEST(Server, StreamsAtTickRate) {
  Server server(calibrated_config(), loopback());
  server.start();
  test::LineClient c(server.port());
  c.send(hello_line());
  ASSERT_TRUE(as<ObjectState>(c.read_line()));
  c.send(encode(hand(0)));
  ASSERT_TRUE(as<RobotUpdate>(c.read_line()));
  constexpr int kUpdates = 200;
  const auto start = std::chrono::steady_clock::now();
  std::int64_t prev_t = -1;
  for (int i = 0; i < kUpdates; ++i) {
    const auto r = as<RobotUpdate>(c.read_line());
    ASSERT_TRUE(r);
    if (prev_t >= 0) {
      EXPECT_EQ(r->t_ms, prev_t + 10);
    }
    prev_t = r->t_ms;
  }
  const double period_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count() /
      kUpdates;
  EXPECT_GE(period_ms, 9.0);
  EXPECT_LE(period_ms, 11.0);
}

TEST(Server, RefusesSecondHand) {
  Server server(calibrated_config(), loopback());
  server.start();
  test::LineClient a(server.port());
  a.send(hello_line());
  ASSERT_TRUE(as<ObjectState>(a.read_line()));
  test::LineClient b(server.port());
  b.send(hello_line());
  const auto e = as<ErrorMessage>(b.read_line());
  ASSERT_TRUE(e);
  EXPECT_EQ(e->code, "busy");
  EXPECT_TRUE(b.closed_within(1000ms));
}

TEST(Server, GarbageFirstLineThenDisconnect) {
  Server server(calibrated_config(), loopback());
  server.start();
  test::LineClient c(server.port());
  c.send("this is not json\n");
  const auto e = as<ErrorMessage>(c.read_line());
  ASSERT_TRUE(e);
  EXPECT_EQ(e->code, "malformed_json");
  EXPECT_TRUE(c.closed_within(1000ms));
}

TEST(Server, HandshakeTimeout) {
  ServerOptions o = loopback();
  o.handshake_timeout = 100ms;
  Server server(calibrated_config(), o);
  server.start();
  test::LineClient c(server.port());
  const auto e = as<ErrorMessage>(c.read_line(1000ms));
  ASSERT_TRUE(e);
  EXPECT_EQ(e->code, "handshake_timeout");
  EXPECT_TRUE(c.closed_within(1000ms));
}

TEST(Server, OverlongLineIsRejected) {
  Server server(calibrated_config(), loopback());
  server.start();
  test::LineClient c(server.port());
  c.send(hello_line());
  ASSERT_TRUE(as<ObjectState>(c.read_line()));
  c.send(std::string((1 << 20) + 16, 'x'));
  const auto e = next_error(c);
  ASSERT_TRUE(e);
  EXPECT_EQ(e->code, "line_too_long");
}

TEST(Server, SurvivesFuzzCorpus) {
  Server server(calibrated_config(), loopback(true));
  server.start();
  std::mt19937_64 rng(99);
  test::LineClient c(server.port());
  c.send(hello_line());
  ASSERT_TRUE(as<ObjectState>(c.read_line()));
  std::string batch;
  for (int i = 0; i < 300; ++i) batch += test::fuzz_line(rng) + "\n";
  c.send(batch);
  for (int i = 0; i < 10; ++i) {
    test::LineClient pre(server.port());
    pre.send(test::fuzz_line(rng) + "\n");
    pre.closed_within(500ms);
  }
  c.send(hello_line());
  bool saw = false;
  for (int i = 0; i < 2000 && !saw; ++i) {
    const auto line = c.read_line();
    ASSERT_TRUE(line) << "fuzzed connection went silent";
    if (const auto e = as<ErrorMessage>(line)) saw = e->code == "unexpected_hello";
  }
  EXPECT_TRUE(saw);
  test::LineClient fresh(server.port());
  fresh.send(hello_line(Role::Observer));
  EXPECT_TRUE(as<ObjectState>(fresh.read_line()));
}

TEST(Server, WebSocketObserverSeesStream) {
  Server server(calibrated_config(), loopback(true));
  server.start();
  ASSERT_TRUE(server.ui_port());
  test::WsClient ws(*server.ui_port());
  ws.send(hello_line(Role::Observer));
  const auto first = ws.read_frame();
  ASSERT_TRUE(first);
  ASSERT_EQ(first->back(), '\n');
  EXPECT_EQ(first->find('\n'), first->size() - 1);
  EXPECT_TRUE(std::holds_alternative<ObjectState>(decode(*first)));

  test::LineClient h(server.port());
  h.send(hello_line());
  ASSERT_TRUE(as<ObjectState>(h.read_line()));
  h.send(encode(hand(0)));
  const auto tcp_line = h.read_line();
  ASSERT_TRUE(tcp_line);
  std::optional<std::string> frame;
  for (int i = 0; i < 5; ++i) {
    frame = ws.read_frame();
    ASSERT_TRUE(frame);
    if (std::holds_alternative<RobotUpdate>(decode(*frame))) break;
  }
  // Same bytes on both transports.
  EXPECT_EQ(*frame, *tcp_line + "\n");
}

TEST(Server, HandDisconnectFreesSlot) {
  Server server(calibrated_config(), loopback());
  server.start();
  {
    test::LineClient a(server.port());
    a.send(hello_line());
    ASSERT_TRUE(as<ObjectState>(a.read_line()));
  }
  std::this_thread::sleep_for(50ms);
  test::LineClient b(server.port());
  b.send(hello_line());
  EXPECT_TRUE(as<ObjectState>(b.read_line()));
}

// -------------------------------------------------------------------- cli

TEST(Cli, HelpAndUsageErrors) {
  EXPECT_EQ(cli({"--help"}).code, 0);
  EXPECT_EQ(cli({}).code, 2);
  EXPECT_EQ(cli({"frobnicate"}).code, 2);
  EXPECT_EQ(cli({"simulate", "--scenario", "approach"}).code, 2);
}

TEST(Cli, MissingConfigNamesPath) {
  const std::string path = (scratch_dir() / "does_not_exist.json").string();
  const CliRun r = cli({"serve", "--config", path});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find(path), std::string::npos) << r.err;
}

TEST(Cli, BadConfigIsRejected) {
  const fs::path path = scratch_dir() / "bad.json";
  write_text_file(path.string(), R"({"tick_ms": -5})");
  const CliRun r = cli({"serve", "--config", path.string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find(path.string()), std::string::npos);
}

TEST(Cli, ServeBannerListsBothPorts) {
  std::uint16_t seen = 0;
  const CliRun r = cli({"serve", "--bind", "127.0.0.1", "--port", "0", "--ui-port", "0"},
                       [&](const Server& s) { seen = s.port(); });
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("listening tcp=127.0.0.1:" + std::to_string(seen)), std::string::npos)
      << r.out;
  EXPECT_NE(r.out.find("websocket=127.0.0.1:"), std::string::npos);
  EXPECT_NE(r.out.find("uncalibrated"), std::string::npos);
}

TEST(Cli, OccupiedPortExitsTwo) {
  Server holder(calibrated_config(), loopback());
  const std::string port = std::to_string(holder.port());
  const CliRun r = cli({"serve", "--bind", "127.0.0.1", "--port", port, "--no-ui"},
                       [](const Server&) {});
  EXPECT_EQ(r.code, 2);
  EXPECT_FALSE(r.err.empty());
}

TEST(Cli, UnknownScenarioExitsTwo) {
  const CliRun r = cli({"simulate", "--scenario", "juggle", "--out",
                        (scratch_dir() / "x.ndjson").string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("juggle"), std::string::npos);
}

TEST(Cli, CalibrateFiles) {
  const fs::path two = scratch_dir() / "two.ndjson";
  {
    std::ofstream f(two);
    write_pairs(f, {{Vec3(0, 0, 0), Vec3(1, 0, 0)}, {Vec3(1, 0, 0), Vec3(2, 0, 0)}});
  }
  EXPECT_EQ(cli({"calibrate", "--pairs", two.string(), "--out", (scratch_dir() / "c2.json").string()}).code, 2);

  std::mt19937_64 rng(12);
  const RigidTransform truth = test::random_transform(rng, 0.3);
  const fs::path many = scratch_dir() / "many.ndjson";
  {
    std::ofstream f(many);
    write_pairs(f, synthetic_pairs(truth, 486, 0.0, 13));
  }
  const fs::path out = scratch_dir() / "calib.json";
  const CliRun r = cli({"calibrate", "--pairs", many.string(), "--out", out.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out.substr(0, 6), "n=486 ");
  const CalibResult res = load_calib_result(out.string());
  EXPECT_LT(res.rmse, 1e-9);
  EXPECT_LT((res.t - truth.t).norm(), 1e-9);

  const fs::path noisy = scratch_dir() / "noisy.ndjson";
  {
    std::ofstream f(noisy);
    write_pairs(f, synthetic_pairs(truth, 486, 0.0028, 14));
  }
  const CliRun n = cli({"calibrate", "--pairs", noisy.string(), "--out", out.string()});
  ASSERT_EQ(n.code, 0);
  // Six significant digits: "0.00dddddd".
  const auto pos = n.out.find("rmse=");
  ASSERT_NE(pos, std::string::npos);
  const std::string value = n.out.substr(pos + 5, n.out.find(' ', pos) - pos - 5);
  EXPECT_EQ(value.size(), 10u) << value;
  EXPECT_NE(n.out.find(" m"), std::string::npos);
}

TEST(Cli, SimulateMetricsReplay) {
  const std::string rec = (scratch_dir() / "taskii.ndjson").string();
  CliRun r = cli({"simulate", "--scenario", "taskii", "--seed", "7", "--out", rec});
  ASSERT_EQ(r.code, 0) << r.err;
  const Json summary = Json::parse(read_text_file(rec + ".summary.json"));
  EXPECT_LT(summary["mean_error"].get<double>(), 1e-6);

  r = cli({"metrics", "--recording", rec});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out.substr(0, 11), "mean_error=");
  EXPECT_LT(std::stod(r.out.substr(11)), 1e-6);

  r = cli({"replay", "--recording", rec});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("identical"), std::string::npos);

  // Tamper with one robot field.
  std::string text = read_text_file(rec);
  const auto at = text.find("\"d_r\":", text.size() / 2);
  ASSERT_NE(at, std::string::npos);
  text.insert(at + 6, "1");
  const std::string bad = (scratch_dir() / "tampered.ndjson").string();
  write_text_file(bad, text);
  r = cli({"replay", "--recording", bad});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.out.find("DIVERGED"), std::string::npos);
}

TEST(Cli, MetricsOnOffsetStroke) {
  const std::string rec = (scratch_dir() / "offset.ndjson").string();
  ASSERT_EQ(cli({"simulate", "--scenario", "taskii", "--standoff", "0.025", "--out", rec}).code, 0);
  const CliRun r = cli({"metrics", "--recording", rec});
  ASSERT_EQ(r.code, 0);
  EXPECT_NEAR(std::stod(r.out.substr(11)), 0.025, 1e-3);

  const Scene scene = make_scene(1);
  const std::string shape = json_io::shape(scene.config.object_set[1]).dump();
  const CliRun s = cli({"metrics", "--recording", rec, "--shape", shape});
  ASSERT_EQ(s.code, 0) << s.err;
  EXPECT_NEAR(std::stod(s.out.substr(11)), 0.025, 1e-3);
}

TEST(Cli, MetricsRejectsBrokenRecording) {
  const std::string rec = (scratch_dir() / "broken.ndjson").string();
  write_text_file(rec, "{\"t_ms\":0,\"hand_v\":[0,0]}\n");
  const CliRun r = cli({"metrics", "--recording", rec});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("line 1"), std::string::npos);
}
