#pragma once

// On-disk formats other than recordings: calibration pair files (NDJSON,
// {"a":[..],"b":[..]} per line), calibration result files and session
// config files (single JSON documents).

#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "haptic/calibration.hpp"
#include "haptic/json_codec.hpp"
#include "haptic/protocol.hpp"
#include "haptic/session.hpp"

namespace haptic {

inline std::vector<CalibrationSample> read_pairs(std::istream& in) {
  std::vector<CalibrationSample> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    try {
      const Json j = json_io::parse(line);
      if (!j.is_object()) json_io::invalid("pair", "expected a JSON object");
      json_io::check_vec3_arity(j, {"a", "b"});
      out.push_back({json_io::read_vec3(j, "a"), json_io::read_vec3(j, "b")});
    } catch (const Error& e) {
      throw Error(ErrorCode::Schema, "line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

inline void write_pairs(std::ostream& out, const std::vector<CalibrationSample>& pairs) {
  for (const auto& p : pairs) {
    Json j;
    j["a"] = json_io::vec3(p.a);
    j["b"] = json_io::vec3(p.b);
    out << j.dump() << '\n';
  }
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw Error(ErrorCode::Io, "failed writing '" + path + "'");
}

inline std::vector<CalibrationSample> load_pairs(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open '" + path + "'");
  return read_pairs(in);
}

inline CalibResult load_calib_result(const std::string& path) {
  return calib_result_from(json_io::parse(read_text_file(path)));
}

inline void save_calib_result(const std::string& path, const CalibResult& r) {
  write_text_file(path, calib_result_json(r).dump(2) + "\n");
}

inline SessionConfig load_config(const std::string& path) {
  const std::string text = read_text_file(path);
  try {
    return config_from_json(json_io::parse(text));
  } catch (const Error& e) {
    throw Error(ErrorCode::Schema, "'" + path + "': " + e.what());
  }
}

inline void save_config(const std::string& path, const SessionConfig& c) {
  write_text_file(path, config_to_json(c).dump(2) + "\n");
}

}  // namespace haptic
