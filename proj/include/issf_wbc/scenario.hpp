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

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "issf_wbc/robot_io.hpp"
#include "issf_wbc/sim.hpp"

namespace issf_wbc {

inline constexpr const char* kScenarioFormat = "issf-wbc/scenario/v1";

/// A scenario file resolved against its robot: everything run_closed_loop
/// needs, plus the model pair.
struct Scenario {
  std::string name;
  std::string source;
  std::string robot_path;
  RobotModel nominal;
  ClosedLoopSetup setup;

  RobotModel plant() const { return scaled_masses(nominal, setup.sim.mass_scale); }
};

namespace scenario_detail {

using nlohmann::json;
using namespace json_util;

inline double positive(const json& j, const std::string& key, double fallback, const std::string& path) {
  const double v = number_or(j, key, fallback, path);
  if (!(v > 0.0)) throw ConfigError(path + "." + key, "must be > 0");
  return v;
}

/// Scalar (broadcast) or per-joint array.
inline VecX gain(const json& j, const std::string& key, double fallback, int n, const std::string& path) {
  if (!j.contains(key)) return VecX::Constant(n, fallback);
  const auto& g = j.at(key);
  if (g.is_number()) return VecX::Constant(n, g.get<double>());
  VecX v = vecx(g, path + "." + key);
  if (v.size() != n) throw ConfigError(path + "." + key, "expected " + std::to_string(n) + " entries");
  return v;
}

inline int body_index(const RobotModel& m, const json& j, const std::string& path) {
  const std::string name = string(j, path);
  const int idx = m.find_body(name);
  if (idx < 0) throw ConfigError(path, "unknown collision body '" + name + "'");
  return idx;
}

inline int link_index(const RobotModel& m, const json& j, const std::string& path) {
  if (j.is_number_integer()) {
    const int idx = j.get<int>();
    if (idx < kBaseLink || idx >= m.n_dof()) throw ConfigError(path, "link index out of range");
    return idx;
  }
  const std::string name = string(j, path);
  if (name == "base") return kBaseLink;
  const int idx = m.find_link(name);
  if (idx < 0) throw ConfigError(path, "unknown link '" + name + "'");
  return idx;
}

inline LinkPoint link_point(const RobotModel& m, const json& j, const std::string& path) {
  return {link_index(m, require(j, "link", path), path + ".link"), vec3_or(j, "point", Vec3::Zero(), path)};
}

inline Trajectory trajectory(const json& j, const std::string& path, int dim) {
  const std::string type = string(require(j, "type", path), path + ".type");
  if (type == "constant") {
    const VecX v = vecx(require(j, "value", path), path + ".value");
    if (v.size() != dim) throw ConfigError(path + ".value", "expected " + std::to_string(dim) + " entries");
    return Trajectory::constant(v);
  }
  if (type == "circle") {
    if (dim != 3) throw ConfigError(path + ".type", "circle trajectories need a point task");
    try {
      return Trajectory::circle(vec3(require(j, "center", path), path + ".center"), vec3_or(j, "u", Vec3::UnitX(), path),
                                vec3_or(j, "v", Vec3::UnitY(), path), number(require(j, "radius", path), path + ".radius"),
                                number(require(j, "period", path), path + ".period"), number_or(j, "phase", 0.0, path),
                                number_or(j, "ramp", 0.0, path));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(path, e.what());
    }
  }
  if (type == "waypoints") {
    const auto& times = require(j, "times", path);
    const auto& points = require(j, "points", path);
    if (!times.is_array() || !points.is_array() || times.size() != points.size() || times.empty())
      throw ConfigError(path, "times and points must be non-empty arrays of equal length");
    std::vector<double> ts;
    std::vector<VecX> ps;
    for (std::size_t i = 0; i < times.size(); ++i) {
      const std::string pi = path + ".points[" + std::to_string(i) + "]";
      ts.push_back(number(times[i], path + ".times[" + std::to_string(i) + "]"));
      ps.push_back(vecx(points[i], pi));
      if (ps.back().size() != dim) throw ConfigError(pi, "expected " + std::to_string(dim) + " entries");
    }
    try {
      return Trajectory::waypoints(std::move(ts), std::move(ps));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(path, e.what());
    }
  }
  throw ConfigError(path + ".type", "unknown trajectory type '" + type + "'");
}

inline void barrier_params(const json& filter, BarrierKind kind, BarrierParams& p, const std::string& path) {
  const char* key = nullptr;
  switch (kind) {
    case BarrierKind::JointLimitMin:
    case BarrierKind::JointLimitMax: key = "joint_limit"; break;
    case BarrierKind::SelfCollision: key = "self_collision"; break;
    case BarrierKind::ObjectCollision: key = "object_collision"; break;
    case BarrierKind::Workspace: key = "workspace"; break;
  }
  for (const char* table : {"alpha", "epsilon"}) {
    if (!filter.contains(table)) continue;
    const auto& t = filter.at(table);
    const std::string tp = path + "." + table;
    double* dst = std::string(table) == "alpha" ? &p.alpha : &p.epsilon;
    if (t.is_number()) {
      *dst = t.get<double>();
    } else if (t.is_object()) {
      if (t.contains(key)) {
        const auto& v = t.at(key);
        if (v.is_string() && v.get<std::string>() == "inf")
          *dst = std::numeric_limits<double>::infinity();
        else
          *dst = number(v, tp + "." + key);
      }
    } else {
      throw ConfigError(tp, "expected a number or a per-kind object");
    }
    if (!(*dst > 0.0)) throw ConfigError(tp, "must be > 0");
  }
}

inline Scenario build_scenario(const nlohmann::json& doc, const std::string& source,
                               const std::filesystem::path& base_dir) {
  using namespace json_util;
  using namespace scenario_detail;
  if (!doc.is_object()) throw ConfigError(source, "expected a JSON object");
  if (doc.contains("format") && doc.at("format") != kScenarioFormat)
    throw ConfigError(source + ".format", std::string("expected '") + kScenarioFormat + "'");

  Scenario sc;
  sc.source = source;
  sc.name = doc.contains("name") ? string(doc.at("name"), source + ".name")
                                 : std::filesystem::path(source).stem().string();
  const std::string robot = string(require(doc, "robot", source), source + ".robot");
  std::filesystem::path rp(robot);
  if (rp.is_relative()) rp = base_dir / rp;
  sc.robot_path = rp.lexically_normal().string();
  try {
    sc.nominal = load_robot(sc.robot_path);
  } catch (const ConfigError& e) {
    throw ConfigError(source + ".robot", e.what());
  }
  const RobotModel& m = sc.nominal;
  const int n = m.n_dof();
  auto& st = sc.setup;

  // sim
  {
    const std::string p = source + ".sim";
    const json sim = doc.value("sim", json::object());
    auto& c = st.sim;
    c.duration = number_or(sim, "duration", c.duration, p);
    c.dt_control = positive(sim, "dt_control", c.dt_control, p);
    c.dt_physics = positive(sim, "dt_physics", c.dt_physics, p);
    c.mass_scale = positive(sim, "mass_scale", c.mass_scale, p);
    c.seed = sim.contains("seed") ? sim.at("seed").get<std::uint64_t>() : 0;
    c.gravity = vec3_or(sim, "gravity", c.gravity, p);
    c.pipelined = sim.value("pipelined", false);
    c.obstacle_measurement_std = number_or(sim, "obstacle_noise", 0.0, p);
    c.obstacle_process_noise = positive(sim, "obstacle_process_noise", c.obstacle_process_noise, p);
    const std::string integ = sim.value("integrator", "semi-implicit-euler");
    if (integ == "semi-implicit-euler") c.integrator = Integrator::SemiImplicitEuler;
    else if (integ == "rk4") c.integrator = Integrator::Rk4;
    else throw ConfigError(p + ".integrator", "expected 'semi-implicit-euler' or 'rk4'");
    const std::string plant = sim.value("plant", "dynamics");
    if (plant == "dynamics") c.plant = PlantMode::Dynamics;
    else if (plant == "acceleration") c.plant = PlantMode::Acceleration;
    else if (plant == "velocity") c.plant = PlantMode::Velocity;
    else throw ConfigError(p + ".plant", "expected 'dynamics', 'acceleration' or 'velocity'");
    if (sim.contains("external_torque")) {
      const auto& pulses = sim.at("external_torque");
      for (std::size_t i = 0; i < pulses.size(); ++i) {
        const std::string pp = p + ".external_torque[" + std::to_string(i) + "]";
        TorquePulse tp;
        tp.joint = static_cast<int>(number(require(pulses[i], "joint", pp), pp + ".joint"));
        if (tp.joint < 0 || tp.joint >= n) throw ConfigError(pp + ".joint", "joint index out of range");
        tp.start = number_or(pulses[i], "start", 0.0, pp);
        tp.duration = number(require(pulses[i], "duration", pp), pp + ".duration");
        tp.magnitude = number(require(pulses[i], "magnitude", pp), pp + ".magnitude");
        tp.period = number_or(pulses[i], "period", 0.0, pp);
        c.external_torque.push_back(tp);
      }
    }
    try {
      c.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(p, e.what());
    }
  }

  // initial state
  {
    const std::string p = source + ".initial";
    st.initial = JointState::zero(n);
    if (doc.contains("initial")) {
      const auto& ini = doc.at("initial");
      if (ini.contains("q")) st.initial.q = vecx(ini.at("q"), p + ".q");
      if (ini.contains("qd")) st.initial.qd = vecx(ini.at("qd"), p + ".qd");
      if (st.initial.q.size() != n) throw ConfigError(p + ".q", "expected " + std::to_string(n) + " entries");
      if (st.initial.qd.size() != n) throw ConfigError(p + ".qd", "expected " + std::to_string(n) + " entries");
    }
  }

  // tasks
  if (doc.contains("tasks")) {
    const auto& tasks = doc.at("tasks");
    if (!tasks.is_array()) throw ConfigError(source + ".tasks", "expected an array");
    const KinematicsCache kin(m, st.initial.q);
    for (std::size_t i = 0; i < tasks.size(); ++i) {
      const std::string p = source + ".tasks[" + std::to_string(i) + "]";
      const auto& tj = tasks[i];
      TrackedTask tt;
      tt.task.name = tj.value("name", "task" + std::to_string(i));
      tt.task.priority = static_cast<int>(number_or(tj, "priority", double(i + 1), p));
      tt.task.gain = number_or(tj, "gain", 5.0, p);
      if (tt.task.gain < 0.0) throw ConfigError(p + ".gain", "must be >= 0");
      if (tj.contains("link")) {
        const LinkPoint lp = link_point(m, tj, p);
        if (lp.link == kBaseLink) throw ConfigError(p + ".link", "point tasks need a robot link");
        tt.task.source = TaskSource::link_point(lp.link, lp.point);
      } else if (tj.contains("joints")) {
        std::vector<int> idx;
        const auto& js = tj.at("joints");
        if (!(js.is_string() && js.get<std::string>() == "all")) {
          if (!js.is_array()) throw ConfigError(p + ".joints", "expected \"all\" or an index array");
          for (std::size_t k = 0; k < js.size(); ++k) {
            const int j = static_cast<int>(number(js[k], p + ".joints[" + std::to_string(k) + "]"));
            if (j < 0 || j >= n) throw ConfigError(p + ".joints[" + std::to_string(k) + "]", "joint index out of range");
            idx.push_back(j);
          }
        }
        tt.task.source = TaskSource::joint_space(std::move(idx));
      } else {
        throw ConfigError(p, "task needs either 'link' (point task) or 'joints'");
      }
      VecX current;
      const auto& src = tt.task.source;
      if (src.kind == TaskSource::Kind::Point) {
        current = link_pose(kin.poses, src.point.link) * src.point.point;
      } else if (src.joints.empty()) {
        current = st.initial.q;
      } else {
        current.resize(static_cast<Eigen::Index>(src.joints.size()));
        for (std::size_t k = 0; k < src.joints.size(); ++k) current[Eigen::Index(k)] = st.initial.q[src.joints[k]];
      }
      const int dim = static_cast<int>(current.size());
      tt.trajectory = tj.contains("trajectory") ? trajectory(tj.at("trajectory"), p + ".trajectory", dim)
                                                : Trajectory::constant(current);
      if (tt.trajectory.coverage() < st.sim.duration)
        throw ConfigError(p + ".trajectory", "waypoints end before the simulation duration");
      st.tasks.push_back(std::move(tt));
    }
    for (std::size_t i = 1; i < st.tasks.size(); ++i)
      if (st.tasks[i].task.priority <= st.tasks[i - 1].task.priority)
        throw ConfigError(source + ".tasks[" + std::to_string(i) + "].priority", "priorities must strictly increase");
  }

  // obstacles
  if (doc.contains("obstacles")) {
    const auto& obs = doc.at("obstacles");
    for (std::size_t i = 0; i < obs.size(); ++i) {
      const std::string p = source + ".obstacles[" + std::to_string(i) + "]";
      ObstacleSpec o;
      o.name = obs[i].value("name", "obstacle" + std::to_string(i));
      o.shape = parse_shape(obs[i], p);
      if (obs[i].contains("motion")) {
        const auto& mj = obs[i].at("motion");
        const std::string mp = p + ".motion";
        o.motion.velocity = vec3_or(mj, "velocity", Vec3::Zero(), mp);
        o.motion.amplitude = vec3_or(mj, "amplitude", Vec3::Zero(), mp);
        o.motion.frequency = number_or(mj, "frequency", 0.0, mp);
        o.motion.phase = number_or(mj, "phase", 0.0, mp);
      }
      st.obstacles.push_back(o);
    }
  }

  // barrier pairs
  {
    const std::string p = source + ".barriers";
    const json bj = doc.value("barriers", json::object());
    auto& b = st.barriers;
    b.joint_limits = bj.value("joint_limits", true);
    if (!bj.contains("self_pairs") || (bj.at("self_pairs").is_string() && bj.at("self_pairs") == "auto")) {
      b.self_pairs = default_self_pairs(m);
    } else {
      const auto& sp = bj.at("self_pairs");
      if (!sp.is_array()) throw ConfigError(p + ".self_pairs", "expected \"auto\" or an array of name pairs");
      for (std::size_t i = 0; i < sp.size(); ++i) {
        const std::string pp = p + ".self_pairs[" + std::to_string(i) + "]";
        if (!sp[i].is_array() || sp[i].size() != 2) throw ConfigError(pp, "expected [body_a, body_b]");
        const int a = body_index(m, sp[i][0], pp + "[0]"), c = body_index(m, sp[i][1], pp + "[1]");
        if (a == c) throw ConfigError(pp, "a body cannot be paired with itself");
        b.self_pairs.push_back({a, c});
      }
    }
    if (bj.contains("object_pairs")) {
      const auto& op = bj.at("object_pairs");
      for (std::size_t i = 0; i < op.size(); ++i) {
        const std::string pp = p + ".object_pairs[" + std::to_string(i) + "]";
        if (!op[i].is_array() || op[i].size() != 2) throw ConfigError(pp, "expected [robot_body, obstacle]");
        const int a = body_index(m, op[i][0], pp + "[0]");
        const std::string oname = string(op[i][1], pp + "[1]");
        int oi = -1;
        for (std::size_t k = 0; k < st.obstacles.size(); ++k)
          if (st.obstacles[k].name == oname) oi = static_cast<int>(k);
        if (oi < 0) throw ConfigError(pp + "[1]", "unknown obstacle '" + oname + "'");
        b.object_pairs.push_back({a, oi});
      }
    }
    if (bj.contains("workspace")) {
      const auto& ws = bj.at("workspace");
      for (std::size_t i = 0; i < ws.size(); ++i) {
        const std::string pp = p + ".workspace[" + std::to_string(i) + "]";
        WorkspacePair w;
        w.name = ws[i].value("name", "workspace" + std::to_string(i));
        w.a = link_point(m, require(ws[i], "a", pp), pp + ".a");
        w.b = link_point(m, require(ws[i], "b", pp), pp + ".b");
        w.d_max = number(require(ws[i], "d_max", pp), pp + ".d_max");
        if (!(w.d_max > 0.0)) throw ConfigError(pp + ".d_max", "must be > 0");
        b.workspace.push_back(w);
      }
    }
  }

  // filter
  {
    const std::string p = source + ".filter";
    const json fj = doc.value("filter", json::object());
    auto& f = st.filter;
    const std::string mode = fj.value("mode", "issf-cbf");
    const auto parsed = parse_filter_mode(mode);
    if (!parsed) throw ConfigError(p + ".mode", "unknown mode '" + mode + "'");
    f.mode = *parsed;
    barrier_params(fj, BarrierKind::JointLimitMin, f.joint_limit, p);
    barrier_params(fj, BarrierKind::SelfCollision, f.self_collision, p);
    barrier_params(fj, BarrierKind::ObjectCollision, f.object_collision, p);
    barrier_params(fj, BarrierKind::Workspace, f.workspace, p);
    f.activation_distance = positive(fj, "activation_distance", f.activation_distance, p);
    if (fj.contains("slack")) {
      const auto& s = fj.at("slack");
      const std::string policy = s.value("policy", "relax");
      if (policy == "relax") f.slack.kind = SlackPolicy::Kind::SlackRelax;
      else if (policy == "hard-fail") f.slack.kind = SlackPolicy::Kind::HardFail;
      else throw ConfigError(p + ".slack.policy", "expected 'relax' or 'hard-fail'");
      f.slack.weight = positive(s, "weight", f.slack.weight, p + ".slack");
    }
  }

  // dynwbc
  {
    const std::string p = source + ".dynwbc";
    const json dj = doc.value("dynwbc", json::object());
    auto& w = st.weights;
    w = DynWbcWeights::defaults(n);
    w.w_qdd = positive(dj, "w_qdd", w.w_qdd, p);
    w.w_c = number_or(dj, "w_c", w.w_c, p);
    w.w_tau = number_or(dj, "w_tau", w.w_tau, p);
    w.w_M = number_or(dj, "w_M", w.w_M, p);
    w.kp_dyn = gain(dj, "kp_dyn", 400.0, n, p);
    w.kd_dyn = gain(dj, "kd_dyn", 40.0, n, p);
    w.kp = gain(dj, "kp", 100.0, n, p);
    w.kd = gain(dj, "kd", 10.0, n, p);
    st.dyn_options.torque_limits = dj.value("torque_limits", false);
    try {
      w.validate(n);
    } catch (const std::exception& e) {
      throw ConfigError(p, e.what());
    }
  }
  return sc;
}

}  // namespace scenario_detail

/// Throws ConfigError naming the offending field.
inline Scenario scenario_from_json(const nlohmann::json& doc, const std::string& source,
                                   const std::filesystem::path& base_dir) {
  try {
    return scenario_detail::build_scenario(doc, source, base_dir);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(source, std::string("malformed value (") + e.what() + ")");
  }
}

inline Scenario load_scenario(const std::string& path) {
  const auto doc = json_util::parse_text(json_util::read_file(path), path);
  return scenario_from_json(doc, path, std::filesystem::path(path).parent_path());
}

}  // namespace issf_wbc
