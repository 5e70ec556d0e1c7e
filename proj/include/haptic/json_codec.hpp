#pragma once

// JSON field readers/writers shared by the wire protocol, config and
// recording files. Readers throw SchemaError naming the offending field.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <string_view>

#include "json.hpp"

#include "haptic/calibration.hpp"
#include "haptic/error.hpp"
#include "haptic/geometry.hpp"

namespace haptic {

using Json = nlohmann::ordered_json;

enum class SchemaFault { Malformed, UnknownType, MissingField, Arity, InvalidValue };

inline const char* to_string(SchemaFault f) {
  switch (f) {
    case SchemaFault::Malformed: return "malformed_json";
    case SchemaFault::UnknownType: return "unknown_type";
    case SchemaFault::MissingField: return "missing_field";
    case SchemaFault::Arity: return "bad_arity";
    case SchemaFault::InvalidValue: return "invalid_value";
  }
  return "?";
}

class SchemaError : public Error {
 public:
  SchemaError(SchemaFault fault, std::string field, const std::string& what)
      : Error(ErrorCode::Schema, what), fault_(fault), field_(std::move(field)) {}

  SchemaFault fault() const noexcept { return fault_; }
  const std::string& field() const noexcept { return field_; }

 private:
  SchemaFault fault_;
  std::string field_;
};

namespace json_io {

[[noreturn]] inline void missing(std::string_view key) {
  throw SchemaError(SchemaFault::MissingField, std::string(key),
                    "missing required field '" + std::string(key) + "'");
}

[[noreturn]] inline void invalid(std::string_view key, std::string_view why) {
  throw SchemaError(SchemaFault::InvalidValue, std::string(key),
                    "field '" + std::string(key) + "': " + std::string(why));
}

inline const Json& require(const Json& obj, std::string_view key) {
  auto it = obj.find(key);
  if (it == obj.end()) missing(key);
  return *it;
}

inline double as_number(const Json& v, std::string_view key) {
  if (!v.is_number()) invalid(key, "expected a number");
  const double x = v.get<double>();
  if (!std::isfinite(x)) invalid(key, "not finite");
  return x;
}

inline double read_number(const Json& obj, std::string_view key) {
  return as_number(require(obj, key), key);
}

inline double read_number_or(const Json& obj, std::string_view key, double fallback) {
  auto it = obj.find(key);
  return it == obj.end() ? fallback : as_number(*it, key);
}

inline std::int64_t read_int(const Json& obj, std::string_view key) {
  const Json& v = require(obj, key);
  if (!v.is_number_integer()) invalid(key, "expected an integer");
  return v.get<std::int64_t>();
}

inline bool read_bool(const Json& obj, std::string_view key) {
  const Json& v = require(obj, key);
  if (!v.is_boolean()) invalid(key, "expected a boolean");
  return v.get<bool>();
}

inline bool read_bool_or(const Json& obj, std::string_view key, bool fallback) {
  auto it = obj.find(key);
  if (it == obj.end()) return fallback;
  if (!it->is_boolean()) invalid(key, "expected a boolean");
  return it->get<bool>();
}

inline std::string read_string(const Json& obj, std::string_view key) {
  const Json& v = require(obj, key);
  if (!v.is_string()) invalid(key, "expected a string");
  return v.get<std::string>();
}

inline Vec3 as_vec3(const Json& v, std::string_view key) {
  if (!v.is_array()) invalid(key, "expected an array of 3 numbers");
  if (v.size() != 3)
    throw SchemaError(SchemaFault::Arity, std::string(key),
                      "field '" + std::string(key) + "' must have 3 components, got " +
                          std::to_string(v.size()));
  return {as_number(v[0], key), as_number(v[1], key), as_number(v[2], key)};
}

inline Vec3 read_vec3(const Json& obj, std::string_view key) {
  return as_vec3(require(obj, key), key);
}

/// Arity is checked before presence of other fields so that a short vector is
/// reported as such even when the message is otherwise incomplete.
inline void check_vec3_arity(const Json& obj, std::initializer_list<std::string_view> keys) {
  for (auto key : keys) {
    auto it = obj.find(key);
    if (it != obj.end()) as_vec3(*it, key);
  }
}

inline Mat3 read_mat3(const Json& obj, std::string_view key) {
  const Json& v = require(obj, key);
  if (!v.is_array() || v.size() != 3)
    throw SchemaError(SchemaFault::Arity, std::string(key),
                      "field '" + std::string(key) + "' must be a 3x3 array");
  Mat3 m;
  for (int i = 0; i < 3; ++i) m.row(i) = as_vec3(v[i], key).transpose();
  return m;
}

inline Json vec3(const Vec3& v) { return Json::array({v.x(), v.y(), v.z()}); }

inline Json mat3(const Mat3& m) {
  Json rows = Json::array();
  for (int i = 0; i < 3; ++i) rows.push_back(vec3(m.row(i).transpose()));
  return rows;
}

inline Json shape(const ShapeSpec& s) {
  return std::visit(
      [](const auto& v) -> Json {
        using T = std::decay_t<decltype(v)>;
        Json j;
        if constexpr (std::is_same_v<T, Plane>) {
          j["kind"] = "plane";
          j["point"] = vec3(v.point);
          j["normal"] = vec3(v.normal);
        } else if constexpr (std::is_same_v<T, Sphere>) {
          j["kind"] = "sphere";
          j["center"] = vec3(v.center);
          j["radius"] = v.radius;
        } else {
          j["kind"] = "cube";
          j["center"] = vec3(v.center);
          j["half_extent"] = v.half_extent;
          j["yaw"] = v.yaw;
        }
        return j;
      },
      s);
}

/// Cube yaw defaults to 45 degrees when absent.
inline ShapeSpec as_shape(const Json& j, std::string_view key = "shape") {
  if (!j.is_object()) invalid(key, "expected a shape object");
  const std::string kind = read_string(j, "kind");
  ShapeSpec out;
  if (kind == "plane") {
    check_vec3_arity(j, {"point", "normal"});
    out = Plane{read_vec3(j, "point"), read_vec3(j, "normal")};
  } else if (kind == "sphere") {
    check_vec3_arity(j, {"center"});
    out = Sphere{read_vec3(j, "center"), read_number(j, "radius")};
  } else if (kind == "cube") {
    check_vec3_arity(j, {"center"});
    out = RotatedCube{read_vec3(j, "center"), read_number(j, "half_extent"),
                      read_number_or(j, "yaw", std::numbers::pi / 4.0)};
  } else {
    invalid("kind", "unknown shape kind '" + kind + "'");
  }
  try {
    validate(out);
  } catch (const Error& e) {
    invalid(key, e.what());
  }
  return out;
}

inline Json transform(const RigidTransform& tf) {
  Json j;
  j["r"] = mat3(tf.r);
  j["t"] = vec3(tf.t);
  return j;
}

inline RigidTransform as_transform(const Json& j, std::string_view key = "calib") {
  if (!j.is_object()) invalid(key, "expected an object with r and t");
  RigidTransform tf{read_mat3(j, "r"), read_vec3(j, "t")};
  if (!tf.is_valid(1e-6)) invalid(key, "r is not a proper rotation");
  return tf;
}

/// Parses a single JSON document; malformed text becomes SchemaError.
inline Json parse(std::string_view text) {
  Json j = Json::parse(text, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded())
    throw SchemaError(SchemaFault::Malformed, "", "malformed JSON");
  return j;
}

}  // namespace json_io
}  // namespace haptic
