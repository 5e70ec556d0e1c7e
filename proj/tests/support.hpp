#pragma once

#include <cmath>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Geometry>

#include "haptic/calibration.hpp"
#include "haptic/geometry.hpp"
#include "haptic/protocol.hpp"

namespace haptic::test {

inline Vec3 random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  return draw_vec3([&] { return g(rng); }).normalized();
}

inline Vec3 random_box(std::mt19937_64& rng, double half) {
  std::uniform_real_distribution<double> u(-half, half);
  return draw_vec3([&] { return u(rng); });
}

/// Uniform over SO(3) via a normalized Gaussian quaternion.
inline Mat3 random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  const double w = g(rng), x = g(rng), y = g(rng), z = g(rng);
  return Eigen::Quaterniond(w, x, y, z).normalized().toRotationMatrix();
}

inline RigidTransform random_transform(std::mt19937_64& rng, double t_half = 1.0) {
  return {random_rotation(rng), random_box(rng, t_half)};
}

/// Independent surface sampler for the rotated cube: pick a face with equal
/// probability, then a uniform point on it.
inline std::vector<Vec3> brute_cube_surface(const RotatedCube& c, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> face(0, 5);
  std::uniform_real_distribution<double> u(-c.half_extent, c.half_extent);
  const Eigen::AngleAxisd yaw(c.yaw, Vec3::UnitZ());
  std::vector<Vec3> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int f = face(rng);
    const int axis = f / 2;
    const double s = (f % 2) ? 1.0 : -1.0;
    Vec3 q;
    q[axis] = s * c.half_extent;
    const double first = u(rng);
    const double second = u(rng);
    q[(axis + 1) % 3] = first;
    q[(axis + 2) % 3] = second;
    out.push_back(c.center + yaw * q);
  }
  return out;
}

inline ShapeSpec random_shape(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> kind(0, 2);
  std::uniform_real_distribution<double> size(0.01, 0.5);
  std::uniform_real_distribution<double> yaw(0.0, 6.28);
  switch (kind(rng)) {
    case 0: {
      const Vec3 p = random_box(rng, 2.0);
      return Plane{p, random_unit(rng)};
    }
    case 1: {
      const Vec3 c = random_box(rng, 2.0);
      return Sphere{c, size(rng)};
    }
    default: {
      const Vec3 c = random_box(rng, 2.0);
      const double h = size(rng);
      return RotatedCube{c, h, yaw(rng)};
    }
  }
}

inline std::string random_text(std::mt19937_64& rng) {
  static const std::string alphabet =
      "abcdefghijklmnopqrstuvwxyz_ 0123456789\"{}[]:,\\\n\t\xc3\xa9";
  std::uniform_int_distribution<std::size_t> len(0, 24), pick(0, alphabet.size() - 1);
  std::string s;
  for (std::size_t i = len(rng); i > 0; --i) s.push_back(alphabet[pick(rng)]);
  // Keep the string valid UTF-8: the two-byte sequence is only emitted whole.
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const unsigned char c = static_cast<unsigned char>(s[i]);
    if (c == 0xc3 || c == 0xa9) continue;
    out.push_back(s[i]);
  }
  if (len(rng) % 3 == 0) out += "\xc3\xa9";
  return out;
}

/// Any message the wire can carry, with finite random fields.
inline WireMessage random_message(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> type(0, 6);
  std::uniform_int_distribution<std::int64_t> t_ms(0, 1'000'000'000);
  std::uniform_real_distribution<double> dist(0.0, 2.0);
  std::bernoulli_distribution coin(0.5);
  switch (type(rng)) {
    case 0: {
      HandUpdate m;
      m.t_ms = t_ms(rng);
      m.pos = random_box(rng, 3.0);
      m.d_v = dist(rng);
      m.buttons = {coin(rng), coin(rng), coin(rng)};
      return m;
    }
    case 1: {
      RobotUpdate m;
      m.t_ms = t_ms(rng);
      m.ee_pos = random_box(rng, 1.0);
      m.d_r = dist(rng);
      m.phase = static_cast<ContactPhase>(std::uniform_int_distribution<int>(0, 2)(rng));
      m.clamped = coin(rng);
      return m;
    }
    case 2: {
      ShapeSpec s = random_shape(rng);
      return ObjectState{s, coin(rng)};
    }
    case 3: {
      const Vec3 a = random_box(rng, 1.0);
      return CalibPair{a, random_box(rng, 1.0)};
    }
    case 4: {
      CalibResult m;
      m.r = random_rotation(rng);
      m.t = random_box(rng, 1.0);
      m.rmse = dist(rng) * 0.01;
      m.n = std::uniform_int_distribution<std::int64_t>(3, 100'000)(rng);
      return m;
    }
    case 5: {
      Hello m;
      m.role = coin(rng) ? Role::Hand : Role::Observer;
      m.client_distance = coin(rng);
      return m;
    }
    default: {
      std::string code = random_text(rng);
      return ErrorMessage{code, random_text(rng)};
    }
  }
}

/// One line of hostile input: mutated valid messages, wrong types, deep
/// nesting, stray bytes. Never contains a newline.
inline std::string fuzz_line(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> kind(0, 7);
  std::uniform_int_distribution<int> byte(0, 255);
  std::string line;
  switch (kind(rng)) {
    case 0: {  // random bytes
      const int n = std::uniform_int_distribution<int>(1, 200)(rng);
      for (int i = 0; i < n; ++i) line.push_back(static_cast<char>(byte(rng)));
      break;
    }
    case 1: {  // flipped bytes in a valid message
      line = encode(random_message(rng));
      line.pop_back();
      for (int i = 0; i < 3; ++i) {
        const auto at = std::uniform_int_distribution<std::size_t>(0, line.size() - 1)(rng);
        line[at] = static_cast<char>(byte(rng));
      }
      break;
    }
    case 2: {  // truncated valid message
      line = encode(random_message(rng));
      line.resize(std::uniform_int_distribution<std::size_t>(0, line.size() - 2)(rng));
      break;
    }
    case 3: {  // deep nesting
      const int depth = std::uniform_int_distribution<int>(1, 5000)(rng);
      line = std::string(static_cast<std::size_t>(depth), '[') + std::string(static_cast<std::size_t>(depth), ']');
      break;
    }
    case 4: {  // right keys, wrong value types
      static const char* kBad[] = {
          R"({"type":"hand","t_ms":"soon","pos":[0,0,0],"d_v":0.1,"buttons":{"switch":false,"hide":false,"draw":false}})",
          R"({"type":"hand","t_ms":1e300,"pos":[0,0,0],"d_v":0.1,"buttons":{"switch":false,"hide":false,"draw":false}})",
          R"({"type":"hand","t_ms":1,"pos":[1e999,0,0],"d_v":0.1,"buttons":{"switch":false,"hide":false,"draw":false}})",
          R"({"type":"hand","t_ms":1,"pos":null,"d_v":0.1,"buttons":[]})",
          R"({"type":"calib_pair","a":[0,0,0,0],"b":[0,0,0]})",
          R"({"type":"object","shape":{"kind":"torus"},"visible":true})",
          R"({"type":17})",
          R"({"type":"hello","version":-3,"role":"hand"})",
          R"({"type":"robot","t_ms":0,"ee_pos":[0,0,0],"d_r":-1,"phase":"free","clamped":false})",
          R"({"type":"error"})",
          R"("hand")",
          "null",
      };
      line = kBad[std::uniform_int_distribution<std::size_t>(0, std::size(kBad) - 1)(rng)];
      break;
    }
    case 5:  // a valid message, which must be handled normally
      line = encode(random_message(rng));
      line.pop_back();
      break;
    case 6:
      line = std::string(std::uniform_int_distribution<std::size_t>(1, 64)(rng), ' ') + "\r";
      break;
    default: {  // unbalanced structure
      line = R"({"type":"hand","pos":[)";
      line += std::string(std::uniform_int_distribution<std::size_t>(0, 20)(rng), '{');
      break;
    }
  }
  for (auto& c : line)
    if (c == '\n') c = ' ';
  return line;
}

}  // namespace haptic::test
