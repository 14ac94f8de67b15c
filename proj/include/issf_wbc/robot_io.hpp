// Copyright 2026 The issf-wbc Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "issf_wbc/model.hpp"

namespace issf_wbc {

inline constexpr const char* kRobotFormat = "issf-wbc/robot/v1";

/// Parse or validation failure with the offending field path.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& field, const std::string& message)
      : std::runtime_error(field + ": " + message), field_(field) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

namespace json_util {

using nlohmann::json;

inline const json& require(const json& j, const std::string& key, const std::string& path) {
  if (!j.is_object() || !j.contains(key)) throw ConfigError(path + "." + key, "missing required field");
  return j.at(key);
}

inline double number(const json& j, const std::string& path) {
  if (!j.is_number()) throw ConfigError(path, "expected a number");
  return j.get<double>();
}

inline double number_or(const json& j, const std::string& key, double fallback, const std::string& path) {
  if (!j.contains(key)) return fallback;
  return number(j.at(key), path + "." + key);
}

inline Vec3 vec3(const json& j, const std::string& path) {
  if (!j.is_array() || j.size() != 3) throw ConfigError(path, "expected an array of 3 numbers");
  return {number(j[0], path + "[0]"), number(j[1], path + "[1]"), number(j[2], path + "[2]")};
}

inline Vec3 vec3_or(const json& j, const std::string& key, const Vec3& fallback, const std::string& path) {
  if (!j.contains(key)) return fallback;
  return vec3(j.at(key), path + "." + key);
}

inline VecX vecx(const json& j, const std::string& path) {
  if (!j.is_array()) throw ConfigError(path, "expected an array of numbers");
  VecX v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[Eigen::Index(i)] = number(j[i], path + "[" + std::to_string(i) + "]");
  return v;
}

inline std::string string(const json& j, const std::string& path) {
  if (!j.is_string()) throw ConfigError(path, "expected a string");
  return j.get<std::string>();
}

/// Parse text as JSON; syntax errors report line/column.
inline json parse_text(const std::string& text, const std::string& source) {
  try {
    return json::parse(text, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    // nlohmann reports a byte offset; convert it to line/column.
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i < text.size() && i + 1 < e.byte; ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw ConfigError(source + ":" + std::to_string(line) + ":" + std::to_string(col), "syntax error");
  }
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(path, "cannot open file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace json_util

inline Mat3 parse_inertia(const nlohmann::json& j, const std::string& path) {
  using namespace json_util;
  if (j.is_array() && j.size() == 6) {
    // [ixx, iyy, izz, ixy, ixz, iyz]
    const VecX v = vecx(j, path);
    Mat3 I;
    I << v[0], v[3], v[4], v[3], v[1], v[5], v[4], v[5], v[2];
    return I;
  }
  if (j.is_array() && j.size() == 3 && j[0].is_array()) {
    Mat3 I;
    for (int r = 0; r < 3; ++r) I.row(r) = vec3(j[r], path + "[" + std::to_string(r) + "]").transpose();
    return I;
  }
  throw ConfigError(path, "expected [ixx,iyy,izz,ixy,ixz,iyz] or a 3x3 array");
}

inline Shape parse_shape(const nlohmann::json& j, const std::string& path) {
  using namespace json_util;
  const std::string kind = string(require(j, "shape", path), path + ".shape");
  const double radius = number(require(j, "radius", path), path + ".radius");
  if (!(radius > 0.0)) throw ConfigError(path + ".radius", "must be > 0");
  if (kind == "sphere") {
    Vec3 c = j.contains("center") ? vec3(j.at("center"), path + ".center") : vec3_or(j, "p0", Vec3::Zero(), path);
    return Shape::sphere(c, radius);
  }
  if (kind == "capsule") {
    const Vec3 a = vec3(require(j, "p0", path), path + ".p0");
    const Vec3 b = vec3(require(j, "p1", path), path + ".p1");
    // Coincident endpoints degrade to a sphere.
    if ((a - b).norm() == 0.0) return Shape::sphere(a, radius);
    return Shape::capsule(a, b, radius);
  }
  throw ConfigError(path + ".shape", "unknown shape '" + kind + "' (expected sphere|capsule)");
}

inline RobotModel robot_from_json(const nlohmann::json& doc, const std::string& source = "robot") {
  using namespace json_util;
  const std::string fmt = string(require(doc, "format", source), source + ".format");
  if (fmt != kRobotFormat) throw ConfigError(source + ".format", "unsupported format '" + fmt + "'");

  RobotModel model;
  model.name = doc.value("name", std::string("robot"));
  const auto& links = require(doc, "links", source);
  const auto& joints = require(doc, "joints", source);
  if (!links.is_array() || !joints.is_array()) throw ConfigError(source, "links and joints must be arrays");

  for (std::size_t i = 0; i < links.size(); ++i) {
    const std::string p = source + ".links[" + std::to_string(i) + "]";
    const auto& lj = links[i];
    LinkSpec l;
    l.name = lj.value("name", "link" + std::to_string(i));
    l.mass = number(require(lj, "mass", p), p + ".mass");
    l.com = vec3_or(lj, "com", Vec3::Zero(), p);
    l.inertia = parse_inertia(require(lj, "inertia", p), p + ".inertia");
    l.parent = lj.contains("parent") ? static_cast<int>(number(lj.at("parent"), p + ".parent"))
                                     : static_cast<int>(i) - 1;
    Pose T = Pose::Identity();
    if (lj.contains("origin")) {
      const auto& o = lj.at("origin");
      T.translation() = vec3_or(o, "xyz", Vec3::Zero(), p + ".origin");
      T.linear() = rpy_to_rotation(vec3_or(o, "rpy", Vec3::Zero(), p + ".origin"));
    }
    l.parent_to_joint = T;
    model.links.push_back(l);
  }

  for (std::size_t i = 0; i < joints.size(); ++i) {
    const std::string p = source + ".joints[" + std::to_string(i) + "]";
    const auto& jj = joints[i];
    JointSpec js;
    js.name = jj.value("name", "joint" + std::to_string(i));
    const Vec3 axis = vec3(require(jj, "axis", p), p + ".axis");
    if (axis.norm() == 0.0) throw ConfigError(p + ".axis", "must be non-zero");
    js.axis = axis.normalized();
    js.q_min = number(require(jj, "q_min", p), p + ".q_min");
    js.q_max = number(require(jj, "q_max", p), p + ".q_max");
    js.qd_max = number_or(jj, "qd_max", js.qd_max, p);
    js.tau_max = number_or(jj, "tau_max", js.tau_max, p);
    model.joints.push_back(js);
  }

  if (doc.contains("collision")) {
    const auto& coll = doc.at("collision");
    for (std::size_t i = 0; i < coll.size(); ++i) {
      const std::string p = source + ".collision[" + std::to_string(i) + "]";
      const auto& cj = coll[i];
      CollisionBody b;
      b.name = cj.value("name", "body" + std::to_string(i));
      const auto& link = require(cj, "link", p);
      if (link.is_string()) {
        const std::string ln = link.get<std::string>();
        b.link = (ln == "base") ? kBaseLink : model.find_link(ln);
        if (ln != "base" && b.link < 0) throw ConfigError(p + ".link", "unknown link '" + ln + "'");
      } else {
        b.link = static_cast<int>(number(link, p + ".link"));
      }
      b.shape = parse_shape(cj, p);
      model.collision_bodies.push_back(b);
    }
  }

  try {
    model.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(source, e.what());
  }
  return model;
}

inline RobotModel load_robot(const std::string& path) {
  return robot_from_json(json_util::parse_text(json_util::read_file(path), path), path);
}

}  // namespace issf_wbc
