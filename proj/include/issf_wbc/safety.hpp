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

#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "issf_wbc/events.hpp"
#include "issf_wbc/geometry.hpp"
#include "issf_wbc/model.hpp"
#include "issf_wbc/qp.hpp"

namespace issf_wbc {

enum class BarrierKind { JointLimitMin, JointLimitMax, SelfCollision, ObjectCollision, Workspace };

inline const char* to_string(BarrierKind k) {
  switch (k) {
    case BarrierKind::JointLimitMin: return "joint_limit_min";
    case BarrierKind::JointLimitMax: return "joint_limit_max";
    case BarrierKind::SelfCollision: return "self_collision";
    case BarrierKind::ObjectCollision: return "object_collision";
    case BarrierKind::Workspace: return "workspace";
  }
  return "?";
}

inline constexpr int kNumBarrierKinds = 5;

inline bool is_collision(BarrierKind k) {
  return k == BarrierKind::SelfCollision || k == BarrierKind::ObjectCollision;
}

/// One velocity-level barrier row:
///   grad' qd >= drift - alpha h + |grad|^2 / epsilon.
/// epsilon = +inf drops the robustness term (plain CBF).
struct BarrierConstraint {
  BarrierKind kind = BarrierKind::JointLimitMin;
  std::string pair;
  double h = 0.0;
  VecX grad;
  double alpha = 1.0;
  double epsilon = std::numeric_limits<double>::infinity();
  double drift = 0.0;

  double issf_margin() const { return std::isinf(epsilon) ? 0.0 : grad.squaredNorm() / epsilon; }
  double rhs() const { return drift - alpha * h + issf_margin(); }
  /// Nominal barrier rate for joint velocity qd.
  double hdot(const VecX& qd) const { return grad.dot(qd) - drift; }
};

enum class FilterMode { WithoutCbf, Cbf, IssfCbf, Ecbf };

inline const char* to_string(FilterMode m) {
  switch (m) {
    case FilterMode::WithoutCbf: return "without-cbf";
    case FilterMode::Cbf: return "cbf";
    case FilterMode::IssfCbf: return "issf-cbf";
    case FilterMode::Ecbf: return "ecbf";
  }
  return "?";
}

inline std::optional<FilterMode> parse_filter_mode(const std::string& s) {
  if (s == "without-cbf" || s == "w/o-cbf" || s == "none") return FilterMode::WithoutCbf;
  if (s == "cbf") return FilterMode::Cbf;
  if (s == "issf-cbf" || s == "issf") return FilterMode::IssfCbf;
  if (s == "ecbf") return FilterMode::Ecbf;
  return std::nullopt;
}

struct BarrierParams {
  double alpha = 10.0;    // 1/s
  double epsilon = 10.0;  // robustness parameter, > 0 or +inf
};

struct SlackPolicy {
  enum class Kind { HardFail, SlackRelax };
  Kind kind = Kind::SlackRelax;
  double weight = 1e6;
};

struct FilterConfig {
  FilterMode mode = FilterMode::IssfCbf;
  BarrierParams joint_limit{20.0, 50.0};
  BarrierParams self_collision{10.0, 10.0};
  BarrierParams object_collision{10.0, 10.0};
  BarrierParams workspace{10.0, 30.0};
  SlackPolicy slack;
  double activation_distance = 0.3;  // m, collision rows farther apart are not emitted

  const BarrierParams& params(BarrierKind k) const {
    switch (k) {
      case BarrierKind::JointLimitMin:
      case BarrierKind::JointLimitMax: return joint_limit;
      case BarrierKind::SelfCollision: return self_collision;
      case BarrierKind::ObjectCollision: return object_collision;
      case BarrierKind::Workspace: return workspace;
    }
    return joint_limit;
  }

  void validate() const {
    for (const auto* p : {&joint_limit, &self_collision, &object_collision, &workspace}) {
      if (!(p->alpha > 0.0)) throw std::invalid_argument("filter config: alpha must be > 0");
      if (!(p->epsilon > 0.0)) throw std::invalid_argument("filter config: epsilon must be > 0 (or inf)");
    }
    if (!(activation_distance > 0.0)) throw std::invalid_argument("filter config: activation distance must be > 0");
    if (!(slack.weight > 0.0)) throw std::invalid_argument("filter config: slack weight must be > 0");
  }
};

struct CollisionPair {
  int body_a = 0;  // robot collision body indices
  int body_b = 0;
};

struct ObjectPair {
  int robot_body = 0;  // index into model.collision_bodies
  int obstacle = 0;    // index into the obstacle list
};

struct WorkspacePair {
  std::string name;
  LinkPoint a;
  LinkPoint b;
  double d_max = 1.0;
};

/// Declared barrier pairs for a scenario.
struct BarrierSet {
  bool joint_limits = true;
  std::vector<CollisionPair> self_pairs;
  std::vector<ObjectPair> object_pairs;
  std::vector<WorkspacePair> workspace;
};

/// All body pairs on distinct, non-adjacent links. The base counts as link -1.
inline std::vector<CollisionPair> default_self_pairs(const RobotModel& model) {
  std::vector<CollisionPair> pairs;
  const auto& b = model.collision_bodies;
  for (std::size_t i = 0; i < b.size(); ++i)
    for (std::size_t j = i + 1; j < b.size(); ++j)
      if (std::abs(b[i].link - b[j].link) > 1) pairs.push_back({int(i), int(j)});
  return pairs;
}

/// Barrier value of every declared pair, without activation gating.
struct BarrierSample {
  BarrierKind kind;
  std::string pair;
  double h;
};

/// Evaluates barrier rows for a model, a declared pair set and a filter config.
class BarrierCatalog {
 public:
  BarrierCatalog(const RobotModel& model, BarrierSet set, FilterConfig config)
      : model_(&model), set_(std::move(set)), config_(std::move(config)) {
    config_.validate();
    const int nb = static_cast<int>(model.collision_bodies.size());
    for (const auto& p : set_.self_pairs) {
      if (p.body_a < 0 || p.body_a >= nb || p.body_b < 0 || p.body_b >= nb || p.body_a == p.body_b)
        throw std::invalid_argument("barrier set: invalid self-collision pair");
    }
    for (const auto& p : set_.object_pairs)
      if (p.robot_body < 0 || p.robot_body >= nb || p.obstacle < 0)
        throw std::invalid_argument("barrier set: invalid object pair");
    for (const auto& w : set_.workspace)
      if (!(w.d_max > 0.0)) throw std::invalid_argument("barrier set: workspace d_max must be > 0");
  }

  const RobotModel& model() const { return *model_; }
  const BarrierSet& set() const { return set_; }
  const FilterConfig& config() const { return config_; }

  std::string self_pair_name(const CollisionPair& p) const {
    return model_->collision_bodies[p.body_a].name + "|" + model_->collision_bodies[p.body_b].name;
  }
  std::string object_pair_name(const ObjectPair& p, std::span<const CollisionBody> obstacles) const {
    const std::string obs = p.obstacle < int(obstacles.size()) ? obstacles[p.obstacle].name
                                                              : "obstacle" + std::to_string(p.obstacle);
    return model_->collision_bodies[p.robot_body].name + "|" + obs;
  }

  /// Velocity-level rows at configuration q. Collision rows beyond the
  /// activation distance are skipped unless `gate` is false; rows with a
  /// degenerate gradient are dropped and logged.
  std::vector<BarrierConstraint> collect(const VecX& q, std::span<const CollisionBody> obstacles,
                                         EventLog* log = nullptr, bool gate = true) const {
    detail::check_dim(*model_, q, "collect_constraints");
    const int n = model_->n_dof();
    const bool plain = config_.mode == FilterMode::Cbf;
    auto eps = [&](BarrierKind k) {
      return plain ? std::numeric_limits<double>::infinity() : config_.params(k).epsilon;
    };
    std::vector<BarrierConstraint> rows;

    if (set_.joint_limits) {
      for (int i = 0; i < n; ++i) {
        const auto& j = model_->joints[i];
        const std::string name = j.name.empty() ? "joint" + std::to_string(i) : j.name;
        BarrierConstraint lo{BarrierKind::JointLimitMin, name, q[i] - j.q_min, VecX::Unit(n, i),
                             config_.joint_limit.alpha, eps(BarrierKind::JointLimitMin), 0.0};
        BarrierConstraint hi{BarrierKind::JointLimitMax, name, j.q_max - q[i], -VecX::Unit(n, i),
                             config_.joint_limit.alpha, eps(BarrierKind::JointLimitMax), 0.0};
        rows.push_back(std::move(lo));
        rows.push_back(std::move(hi));
      }
    }

    const KinematicsCache kin(*model_, q);
    for (const auto& p : set_.self_pairs) {
      const auto& a = model_->collision_bodies[p.body_a];
      const auto& b = model_->collision_bodies[p.body_b];
      const auto bj = barrier_jacobian(kin, a, b);
      if (!bj) {
        drop(log, "self_collision " + self_pair_name(p));
        continue;
      }
      if (gate && bj->h > config_.activation_distance) continue;
      rows.push_back({BarrierKind::SelfCollision, self_pair_name(p), bj->h, bj->grad,
                      config_.self_collision.alpha, eps(BarrierKind::SelfCollision), 0.0});
    }

    for (const auto& p : set_.object_pairs) {
      if (p.obstacle >= int(obstacles.size())) throw std::invalid_argument("collect_constraints: missing obstacle");
      const auto& a = model_->collision_bodies[p.robot_body];
      const auto& o = obstacles[p.obstacle];
      const auto bj = barrier_jacobian(kin, a, o);
      if (!bj) {
        drop(log, "object_collision " + object_pair_name(p, obstacles));
        continue;
      }
      if (gate && bj->h > config_.activation_distance) continue;
      // d/dt h = grad' qd - n' v_O
      rows.push_back({BarrierKind::ObjectCollision, object_pair_name(p, obstacles), bj->h, bj->grad,
                      config_.object_collision.alpha, eps(BarrierKind::ObjectCollision),
                      bj->normal.dot(o.velocity)});
    }

    for (const auto& w : set_.workspace) {
      const auto wb = workspace_barrier(kin, w.a, w.b, w.d_max);
      rows.push_back({BarrierKind::Workspace, w.name, wb.h, wb.grad, config_.workspace.alpha,
                      eps(BarrierKind::Workspace), 0.0});
    }
    return rows;
  }

  /// Barrier values for every declared pair (no gating, no gradients kept).
  std::vector<BarrierSample> sample(const VecX& q, std::span<const CollisionBody> obstacles) const {
    std::vector<BarrierSample> out;
    const KinematicsCache kin(*model_, q);
    if (set_.joint_limits) {
      for (int i = 0; i < model_->n_dof(); ++i) {
        const auto& j = model_->joints[i];
        out.push_back({BarrierKind::JointLimitMin, j.name, q[i] - j.q_min});
        out.push_back({BarrierKind::JointLimitMax, j.name, j.q_max - q[i]});
      }
    }
    for (const auto& p : set_.self_pairs) {
      const auto pr = closest_points(kin.world_shape(model_->collision_bodies[p.body_a]),
                                     kin.world_shape(model_->collision_bodies[p.body_b]));
      out.push_back({BarrierKind::SelfCollision, self_pair_name(p), pr.h});
    }
    for (const auto& p : set_.object_pairs) {
      const auto pr = closest_points(kin.world_shape(model_->collision_bodies[p.robot_body]),
                                     kin.world_shape(obstacles[p.obstacle]));
      out.push_back({BarrierKind::ObjectCollision, object_pair_name(p, obstacles), pr.h});
    }
    for (const auto& w : set_.workspace) out.push_back({BarrierKind::Workspace, w.name, workspace_barrier(kin, w.a, w.b, w.d_max).h});
    return out;
  }

 private:
  static void drop(EventLog* log, const std::string& what) {
    if (!log) return;
    ++log->dropped_rows;
    log->note("dropped " + what + ": coincident witness points");
  }

  const RobotModel* model_;
  BarrierSet set_;
  FilterConfig config_;
};

/// Convenience wrapper over BarrierCatalog::collect.
inline std::vector<BarrierConstraint> collect_constraints(const RobotModel& model, const VecX& q,
                                                          std::span<const CollisionBody> obstacles,
                                                          const FilterConfig& config, const BarrierSet& set,
                                                          EventLog* log = nullptr) {
  return BarrierCatalog(model, set, config).collect(q, obstacles, log);
}

struct FilterResult {
  VecX qdot_safe;
  QpStatus status = QpStatus::Optimal;
  bool relaxed = false;            // slack variables were needed
  bool safety_guaranteed = true;   // false when relaxed or failed
  int iterations = 0;
  std::vector<char> active;        // per constraint row
  double max_slack = 0.0;
};

/// Minimally invasive projection of qdot_des onto the barrier rows:
///   argmin |qd - qdot_des|^2  s.t.  grad_i' qd >= rhs_i.
/// Modes without a velocity-level filter return qdot_des unchanged.
inline FilterResult filter_velocity(const VecX& qdot_des, std::span<const BarrierConstraint> constraints,
                                    const FilterConfig& config, QpSolver& qp, EventLog* log = nullptr,
                                    const std::optional<VecX>& warm_start = std::nullopt) {
  FilterResult out;
  out.active.assign(constraints.size(), 0);
  if (config.mode == FilterMode::WithoutCbf || config.mode == FilterMode::Ecbf || constraints.empty()) {
    out.qdot_safe = qdot_des;
    return out;
  }
  const int n = static_cast<int>(qdot_des.size());
  const int m = static_cast<int>(constraints.size());
  const bool plain = config.mode == FilterMode::Cbf;
  auto rhs = [&](const BarrierConstraint& c) { return plain ? c.drift - c.alpha * c.h : c.rhs(); };

  QpProblem p(n);
  p.H = 2.0 * MatX::Identity(n, n);
  p.g = -2.0 * qdot_des;
  p.A_ineq.resize(m, n);
  p.b_ineq.resize(m);
  for (int i = 0; i < m; ++i) {
    if (constraints[i].grad.size() != n) throw DimensionError("filter_velocity: gradient dimension mismatch");
    p.A_ineq.row(i) = constraints[i].grad.transpose();
    p.b_ineq[i] = rhs(constraints[i]);
  }
  const auto sol = qp.solve(p, warm_start);
  out.iterations = sol.iterations;
  if (sol.status == QpStatus::Optimal) {
    out.qdot_safe = sol.x;
    for (int i : sol.active_set) out.active[i] = 1;
    return out;
  }

  out.status = sol.status;
  out.safety_guaranteed = false;
  if (log) ++log->infeasible_qps;
  if (config.slack.kind == SlackPolicy::Kind::HardFail) {
    out.qdot_safe = qdot_des;
    if (log) log->note(std::string("safety filter QP ") + to_string(sol.status) + " (hard fail)");
    return out;
  }

  // One shared non-negative slack per barrier kind present.
  std::vector<int> slack_of_kind(kNumBarrierKinds, -1);
  int ns = 0;
  for (const auto& c : constraints)
    if (slack_of_kind[int(c.kind)] < 0) slack_of_kind[int(c.kind)] = ns++;
  QpProblem r(n + ns);
  r.H.topLeftCorner(n, n) = 2.0 * MatX::Identity(n, n);
  r.H.bottomRightCorner(ns, ns) = 2.0 * config.slack.weight * MatX::Identity(ns, ns);
  r.g.head(n) = -2.0 * qdot_des;
  r.A_ineq = MatX::Zero(m + ns, n + ns);
  r.b_ineq = VecX::Zero(m + ns);
  for (int i = 0; i < m; ++i) {
    r.A_ineq.row(i).head(n) = constraints[i].grad.transpose();
    r.A_ineq(i, n + slack_of_kind[int(constraints[i].kind)]) = 1.0;
    r.b_ineq[i] = p.b_ineq[i];
  }
  for (int k = 0; k < ns; ++k) r.A_ineq(m + k, n + k) = 1.0;
  const auto rs = qp.solve(r);
  out.iterations += rs.iterations;
  out.status = rs.status;
  out.relaxed = true;
  if (log) {
    ++log->slack_relaxations;
    log->note("safety filter relaxed with slack; safety not guaranteed");
  }
  if (rs.status != QpStatus::Optimal) {
    out.qdot_safe = qdot_des;
    return out;
  }
  out.qdot_safe = rs.x.head(n);
  out.max_slack = ns ? rs.x.tail(ns).maxCoeff() : 0.0;
  for (int i : rs.active_set)
    if (i < m) out.active[i] = 1;
  return out;
}

/// Acceleration-level row  a' qdd >= b.
struct AccelRow {
  BarrierKind kind;
  std::string pair;
  VecX a;
  double b = 0.0;
  double h_e = 0.0;
};

/// Exponential-CBF rows for the dynamic QP. With h_e = hdot + alpha h and
/// alpha_e = alpha_e_scale * alpha, enforces hdot_e >= -alpha_e h_e, affine
/// in qdd. The time derivative of the gradient (and of the obstacle drift)
/// is taken by central differences along the motion, step 1e-6.
inline std::vector<AccelRow> ecbf_rows(const BarrierCatalog& catalog, const JointState& state,
                                       std::span<const CollisionBody> obstacles, double alpha_e_scale = 1.0,
                                       EventLog* log = nullptr) {
  const auto rows = catalog.collect(state.q, obstacles, log);
  std::vector<AccelRow> out;
  out.reserve(rows.size());

  double speed2 = state.qd.squaredNorm();
  for (const auto& o : obstacles) speed2 += o.velocity.squaredNorm();
  const double speed = std::sqrt(speed2);
  std::vector<BarrierConstraint> plus, minus;
  double dt = 0.0;
  if (speed > 1e-12) {
    dt = 1e-6 / speed;
    auto shifted = [&](double s) {
      std::vector<CollisionBody> moved(obstacles.begin(), obstacles.end());
      for (auto& o : moved) {
        o.shape.p0 += s * o.velocity;
        o.shape.p1 += s * o.velocity;
      }
      return catalog.collect(state.q + s * state.qd, moved, nullptr, /*gate=*/false);
    };
    plus = shifted(dt);
    minus = shifted(-dt);
  }
  auto find = [](const std::vector<BarrierConstraint>& v, const BarrierConstraint& c) -> const BarrierConstraint* {
    for (const auto& r : v)
      if (r.kind == c.kind && r.pair == c.pair) return &r;
    return nullptr;
  };

  for (const auto& c : rows) {
    const double hdot = c.hdot(state.qd);
    const double alpha_e = alpha_e_scale * c.alpha;
    AccelRow row{c.kind, c.pair, c.grad, 0.0, hdot + c.alpha * c.h};
    double curvature = 0.0;  // d/dt(grad)' qd - d/dt(drift)
    if (dt > 0.0) {
      const auto* p = find(plus, c);
      const auto* m = find(minus, c);
      if (p && m) {
        curvature = ((p->grad - m->grad) / (2 * dt)).dot(state.qd) - (p->drift - m->drift) / (2 * dt);
      } else if (log) {
        log->note("ecbf: gradient derivative unavailable for " + c.pair);
      }
    }
    row.b = -alpha_e * row.h_e - c.alpha * hdot - curvature;
    out.push_back(std::move(row));
  }
  return out;
}

}  // namespace issf_wbc
