#pragma once

// Recording files: NDJSON, one tick per line. An optional first line
// {"type":"header","version":1,"config":{...}} carries the session
// configuration (including calibration) needed to re-simulate the run.

#include <cstdint>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>

#include "haptic/json_codec.hpp"
#include "haptic/protocol.hpp"
#include "haptic/session.hpp"

namespace haptic {

struct Recording {
  std::optional<SessionConfig> config;
  TrajectoryRecord record;
};

inline Json sample_to_json(const TrajectorySample& s) {
  Json j;
  j["t_ms"] = s.t_ms;
  j["hand_v"] = json_io::vec3(s.hand_v);
  j["hand_r"] = json_io::vec3(s.hand_r);
  j["ee_pos"] = json_io::vec3(s.ee_pos);
  j["d_v"] = s.d_v;
  j["d_r"] = s.d_r;
  j["phase"] = to_string(s.phase);
  j["drawing"] = s.drawing;
  j["object"] = s.object;
  j["clamped"] = s.clamped;
  return j;
}

inline TrajectorySample sample_from_json(const Json& j) {
  using namespace json_io;
  if (!j.is_object()) invalid("sample", "expected a JSON object");
  check_vec3_arity(j, {"hand_v", "hand_r", "ee_pos"});
  TrajectorySample s;
  s.t_ms = read_int(j, "t_ms");
  s.hand_v = read_vec3(j, "hand_v");
  s.hand_r = read_vec3(j, "hand_r");
  s.ee_pos = read_vec3(j, "ee_pos");
  s.d_v = read_number(j, "d_v");
  s.d_r = read_number(j, "d_r");
  s.phase = detail::phase_from(read_string(j, "phase"));
  s.drawing = read_bool(j, "drawing");
  if (j.contains("object")) s.object = read_int(j, "object");
  s.clamped = read_bool_or(j, "clamped", false);
  return s;
}

inline void write_header(std::ostream& out, const SessionConfig& config) {
  Json h;
  h["type"] = "header";
  h["version"] = kProtocolVersion;
  h["config"] = config_to_json(config);
  out << h.dump() << '\n';
}

inline void write_sample(std::ostream& out, const TrajectorySample& s) {
  out << sample_to_json(s).dump() << '\n';
}

inline void write_recording(std::ostream& out, const Recording& rec) {
  if (rec.config) write_header(out, *rec.config);
  for (const auto& s : rec.record.samples) write_sample(out, s);
}

inline void save_recording(const std::string& path, const Recording& rec) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot open '" + path + "' for writing");
  write_recording(out, rec);
  if (!out) throw Error(ErrorCode::Io, "failed writing '" + path + "'");
}

/// Strict reader: any bad line is reported with its 1-based line number, and
/// timestamps must strictly increase.
inline Recording read_recording(std::istream& in) {
  Recording rec;
  std::string line;
  std::size_t line_no = 0;
  bool last_had_newline = true;
  while (std::getline(in, line)) {
    ++line_no;
    last_had_newline = !in.eof();
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    try {
      const Json j = json_io::parse(line);
      if (j.is_object() && j.value("type", "") == "header") {
        if (line_no != 1) json_io::invalid("type", "header must be the first line");
        rec.config = config_from_json(json_io::require(j, "config"));
        continue;
      }
      TrajectorySample s = sample_from_json(j);
      if (!rec.record.samples.empty() && s.t_ms <= rec.record.samples.back().t_ms)
        json_io::invalid("t_ms", "timestamps must strictly increase");
      rec.record.samples.push_back(s);
    } catch (const Error& e) {
      std::string msg = "line " + std::to_string(line_no) + ": " + e.what();
      if (!last_had_newline) msg += " (truncated final line)";
      throw Error(ErrorCode::Schema, msg);
    }
  }
  return rec;
}

inline Recording load_recording(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open '" + path + "'");
  return read_recording(in);
}

struct ReplayReport {
  std::size_t ticks = 0;
  std::size_t mismatches = 0;
  std::optional<std::size_t> first_mismatch;  // index into samples
  bool identical() const { return mismatches == 0; }
};

inline HandUpdate hand_from_sample(const TrajectorySample& s) {
  HandUpdate h;
  h.t_ms = s.t_ms;
  h.pos = s.hand_v;
  h.d_v = s.d_v;
  h.buttons.draw = s.drawing;
  return h;
}

/// Feeds the recorded hand poses through a fresh session built from the
/// header config and compares every robot-side field bit for bit.
inline ReplayReport replay(const Recording& rec) {
  if (!rec.config) throw Error(ErrorCode::Schema, "recording has no header; cannot replay");
  if (!rec.config->calib) throw Error(ErrorCode::Schema, "recording header has no calibration");
  Session session(*rec.config);
  session.set_client_distance_authority(true);
  session.set_keep_trajectory(false);
  ReplayReport report;
  for (std::size_t i = 0; i < rec.record.samples.size(); ++i) {
    const TrajectorySample& want = rec.record.samples[i];
    TrajectorySample got;
    session.set_sample_sink([&](const TrajectorySample& s) { got = s; });
    if (want.object < 0 || static_cast<std::size_t>(want.object) >= rec.config->object_set.size())
      throw Error(ErrorCode::Schema,
                  "sample " + std::to_string(i) + " references an unknown object");
    session.select_object(static_cast<std::size_t>(want.object));
    session.tick(hand_from_sample(want));
    ++report.ticks;
    if (!(got == want)) {
      if (!report.first_mismatch) report.first_mismatch = i;
      ++report.mismatches;
    }
  }
  return report;
}

}  // namespace haptic
