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

#include <Eigen/SVD>

#include <algorithm>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "issf_wbc/geometry.hpp"
#include "issf_wbc/model.hpp"

namespace issf_wbc {

/// Singular values below `relative_tol * sigma_max` are treated as zero.
inline constexpr double kPinvRelativeTol = 1e-4;

/// SVD pseudo-inverse with small singular values truncated to zero: those
/// below `relative_tol * sigma_max` or below `absolute_tol`.
inline MatX truncated_pinv(const MatX& J, double relative_tol = kPinvRelativeTol, double absolute_tol = 0.0) {
  if (J.size() == 0) return MatX::Zero(J.cols(), J.rows());
  Eigen::JacobiSVD<MatX> svd(J, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const VecX& sv = svd.singularValues();
  const double cutoff = std::max(relative_tol * (sv.size() ? sv[0] : 0.0), absolute_tol);
  VecX inv = VecX::Zero(sv.size());
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    if (sv[i] > cutoff && sv[i] > 0.0) inv[i] = 1.0 / sv[i];
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

/// One level of the stack: task Jacobian and commanded task velocity.
struct TaskLevel {
  MatX jacobian;
  VecX command;
};

struct PrioritizedResult {
  VecX qdot;
  std::vector<VecX> qdot_levels;   // cumulative command after each level
  std::vector<MatX> projectors;    // N_i after each level
};

/// Null-space prioritized differential IK:
///   qd_i = qd_{i-1} + (J_i N_{i-1})^+ (cmd_i - J_i qd_{i-1}),
///   N_i  = N_{i-1} - (J_i N_{i-1})^+ (J_i N_{i-1}),  qd_0 = 0, N_0 = I.
/// Singular values of the projected Jacobian at round-off level relative to
/// the unprojected J_i (an exhausted null space) are also discarded.
inline PrioritizedResult prioritized_velocity(std::span<const TaskLevel> levels, int n,
                                              double relative_tol = kPinvRelativeTol) {
  PrioritizedResult out;
  VecX qd = VecX::Zero(n);
  MatX N = MatX::Identity(n, n);
  for (std::size_t i = 0; i < levels.size(); ++i) {
    const auto& lv = levels[i];
    if (lv.jacobian.cols() != n || lv.jacobian.rows() != lv.command.size())
      throw DimensionError("prioritized_velocity: task " + std::to_string(i) + " has inconsistent dimensions");
    const MatX Jpre = lv.jacobian * N;
    const double noise_floor = 1e-10 * (1.0 + lv.jacobian.norm());
    const MatX Jpre_pinv = truncated_pinv(Jpre, relative_tol, noise_floor);
    qd += Jpre_pinv * (lv.command - lv.jacobian * qd);
    N -= Jpre_pinv * Jpre;
    out.qdot_levels.push_back(qd);
    out.projectors.push_back(N);
  }
  out.qdot = qd;
  return out;
}

/// Where a task reads its Jacobian from.
struct TaskSource {
  enum class Kind { Point, Joint };
  Kind kind = Kind::Point;
  LinkPoint point;          // Kind::Point: position of a link point
  std::vector<int> joints;  // Kind::Joint: selected joint indices (empty = all)

  static TaskSource link_point(int link, const Vec3& p) { return {Kind::Point, {link, p}, {}}; }
  static TaskSource joint_space(std::vector<int> idx = {}) { return {Kind::Joint, {}, std::move(idx)}; }
};

/// Operational-space task with position-error feedback:
///   cmd = target_velocity + gain * (target - current).
struct Task {
  std::string name;
  int priority = 1;  // 1 = highest
  TaskSource source;
  VecX target;
  VecX target_velocity;
  double gain = 5.0;  // 1/s
};

struct TaskEvaluation {
  MatX jacobian;
  VecX current;
  VecX command;
};

inline TaskEvaluation evaluate_task(const RobotModel& model, const KinematicsCache& kin, const VecX& q,
                                    const Task& task) {
  TaskEvaluation ev;
  const int n = model.n_dof();
  if (task.source.kind == TaskSource::Kind::Point) {
    const auto& lp = task.source.point;
    const Vec3 p = link_pose(kin.poses, lp.link) * lp.point;
    ev.jacobian = kin.jacobian(lp.link, p);
    ev.current = p;
  } else {
    std::vector<int> idx = task.source.joints;
    if (idx.empty())
      for (int i = 0; i < n; ++i) idx.push_back(i);
    ev.jacobian = MatX::Zero(static_cast<Eigen::Index>(idx.size()), n);
    ev.current.resize(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t r = 0; r < idx.size(); ++r) {
      if (idx[r] < 0 || idx[r] >= n) throw DimensionError("task '" + task.name + "': joint index out of range");
      ev.jacobian(Eigen::Index(r), idx[r]) = 1.0;
      ev.current[Eigen::Index(r)] = q[idx[r]];
    }
  }
  const auto k = ev.jacobian.rows();
  if (task.target.size() != k || task.target_velocity.size() != k)
    throw DimensionError("task '" + task.name + "': target dimension " + std::to_string(task.target.size()) +
                         " does not match task dimension " + std::to_string(k));
  ev.command = task.target_velocity + task.gain * (task.target - ev.current);
  return ev;
}

struct IkResult {
  VecX qdot_des;
  VecX q_des;
};

/// Nominal joint-velocity command from a priority-ordered task stack, and
/// its one-step integration q_des = q + qdot_des * dt. Task values use the
/// measured configuration.
inline IkResult prioritized_ik(const RobotModel& model, const JointState& state, std::span<const Task> tasks,
                               double dt, double relative_tol = kPinvRelativeTol) {
  if (!(dt > 0.0)) throw std::invalid_argument("prioritized_ik: dt must be > 0");
  detail::check_dim(model, state.q, "prioritized_ik");
  for (std::size_t i = 1; i < tasks.size(); ++i)
    if (tasks[i].priority <= tasks[i - 1].priority)
      throw std::invalid_argument("prioritized_ik: task priorities must be strictly increasing");
  const KinematicsCache kin(model, state.q);
  std::vector<TaskLevel> levels;
  levels.reserve(tasks.size());
  for (const auto& t : tasks) {
    auto ev = evaluate_task(model, kin, state.q, t);
    levels.push_back({std::move(ev.jacobian), std::move(ev.command)});
  }
  IkResult r;
  r.qdot_des = prioritized_velocity(levels, model.n_dof(), relative_tol).qdot;
  r.q_des = state.q + r.qdot_des * dt;
  return r;
}

}  // namespace issf_wbc
