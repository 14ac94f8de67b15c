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

#include <algorithm>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "issf_wbc/events.hpp"
#include "issf_wbc/model.hpp"
#include "issf_wbc/qp.hpp"
#include "issf_wbc/safety.hpp"

namespace issf_wbc {

/// Objective weights and feedback gains. Gains are per-joint diagonals.
struct DynWbcWeights {
  double w_qdd = 1.0;
  double w_c = 1e-2;
  double w_tau = 1e-4;
  double w_M = 1e-5;
  VecX kp_dyn;  // 1/s^2
  VecX kd_dyn;  // 1/s
  VecX kp;      // motor PD, N m / rad
  VecX kd;      // N m s / rad

  static DynWbcWeights defaults(int n) {
    DynWbcWeights w;
    w.kp_dyn = VecX::Constant(n, 400.0);
    w.kd_dyn = VecX::Constant(n, 40.0);
    w.kp = VecX::Constant(n, 100.0);
    w.kd = VecX::Constant(n, 10.0);
    return w;
  }

  void validate(int n) const {
    if (!(w_qdd > 0.0)) throw std::invalid_argument("dynwbc: w_qdd must be > 0");
    if (w_c < 0.0 || w_tau < 0.0 || w_M < 0.0) throw std::invalid_argument("dynwbc: weights must be >= 0");
    for (const VecX* g : {&kp_dyn, &kd_dyn, &kp, &kd}) {
      if (g->size() != n) throw DimensionError("dynwbc: gain vector size must equal n_dof");
      if ((g->array() < 0.0).any() || !g->allFinite()) throw std::invalid_argument("dynwbc: gains must be >= 0");
    }
    if ((kp_dyn.array() <= 0.0).any() || (kd_dyn.array() <= 0.0).any())
      throw std::invalid_argument("dynwbc: K_p^dyn and K_d^dyn must be positive");
  }
};

/// Generic contact block: wrenches F_c enter the dynamics through J_c' and
/// are restricted by the linearized cone U F_c <= 0.
struct ContactBlock {
  MatX J_c;    // k x n
  MatX U;      // r x k
  VecX F_des;  // k

  int size() const { return static_cast<int>(J_c.rows()); }

  void validate(int n) const {
    const auto k = J_c.rows();
    if (J_c.cols() != n) throw DimensionError("contact block: J_c must have n_dof columns");
    if (k % 3 != 0) throw DimensionError("contact block: wrench dimension must be a multiple of 3 or 6");
    if (U.cols() != k || F_des.size() != k) throw DimensionError("contact block: U / F_des size mismatch");
    if (!U.allFinite() || !J_c.allFinite() || !F_des.allFinite())
      throw std::invalid_argument("contact block: non-finite entries");
  }
};

inline VecX torque_limits(const RobotModel& model) {
  VecX t(model.n_dof());
  for (int i = 0; i < model.n_dof(); ++i) t[i] = model.joints[i].tau_max;
  return t;
}

/// qdd_safe = K_p^dyn (q_safe - q) + K_d^dyn (qd_safe - qd).
inline VecX safe_acceleration(const VecX& q_safe, const VecX& qdot_safe, const JointState& state,
                              const DynWbcWeights& gains) {
  if (q_safe.size() != state.q.size() || qdot_safe.size() != state.qd.size() ||
      gains.kp_dyn.size() != state.q.size() || gains.kd_dyn.size() != state.q.size())
    throw DimensionError("safe_acceleration: dimension mismatch");
  return gains.kp_dyn.cwiseProduct(q_safe - state.q) + gains.kd_dyn.cwiseProduct(qdot_safe - state.qd);
}

struct DynWbcOptions {
  bool torque_limits = false;  // enforce |tau| <= tau_max inside the QP
  SlackPolicy slack;           // applied to eCBF rows only
  Vec3 gravity = standard_gravity();
};

struct DynWbcResult {
  VecX tau;
  VecX qdd;
  VecX fc;
  QpStatus status = QpStatus::Optimal;
  bool relaxed = false;
  int iterations = 0;
  double kkt_residual = 0.0;
  double dynamics_residual = 0.0;  // |M qdd + h - tau - J_c' F_c|_inf
  std::vector<int> active_rows;    // indices into the inequality rows of the QP
};

/// Dense QP over x = [qdd; tau; F_c]:
///   min w_qdd |qdd - qdd_safe|^2 + w_c |F_c - F_des|^2 + w_tau |tau - tau_prev|^2 + w_M qdd' M qdd
///   s.t. M qdd + h = tau + J_c' F_c,  U F_c <= 0,  a_i' qdd >= b_i,  optional |tau| <= tau_max.
/// Inequality row order: contact cone, eCBF rows, torque limits (upper, then lower).
inline QpProblem build_dynwbc_qp(const MatX& M, const VecX& h, const VecX& qdd_safe, const ContactBlock* contact,
                                 std::span<const AccelRow> rows, const DynWbcWeights& w, const VecX& tau_prev,
                                 const VecX* tau_max = nullptr) {
  const int n = static_cast<int>(h.size());
  const int k = contact ? contact->size() : 0;
  const int nv = 2 * n + k;
  QpProblem p(nv);
  p.H.topLeftCorner(n, n) = 2.0 * (w.w_qdd * MatX::Identity(n, n) + w.w_M * M);
  p.H.block(n, n, n, n) = 2.0 * w.w_tau * MatX::Identity(n, n);
  p.g.head(n) = -2.0 * w.w_qdd * qdd_safe;
  p.g.segment(n, n) = -2.0 * w.w_tau * tau_prev;
  if (k > 0) {
    p.H.bottomRightCorner(k, k) = 2.0 * w.w_c * MatX::Identity(k, k);
    p.g.tail(k) = -2.0 * w.w_c * contact->F_des;
  }
  p.H = 0.5 * (p.H + p.H.transpose()).eval();

  MatX Aeq(n, nv);
  Aeq.leftCols(n) = M;
  Aeq.block(0, n, n, n) = -MatX::Identity(n, n);
  if (k > 0) Aeq.rightCols(k) = -contact->J_c.transpose();
  p.A_eq = Aeq;
  p.b_eq = -h;

  const int r_c = k > 0 ? static_cast<int>(contact->U.rows()) : 0;
  const int r_e = static_cast<int>(rows.size());
  const int r_t = tau_max ? 2 * n : 0;
  p.A_ineq = MatX::Zero(r_c + r_e + r_t, nv);
  p.b_ineq = VecX::Zero(r_c + r_e + r_t);
  if (r_c > 0) p.A_ineq.block(0, 2 * n, r_c, k) = -contact->U;
  for (int i = 0; i < r_e; ++i) {
    if (rows[i].a.size() != n) throw DimensionError("dynwbc: eCBF row dimension mismatch");
    p.A_ineq.row(r_c + i).head(n) = rows[i].a.transpose();
    p.b_ineq[r_c + i] = rows[i].b;
  }
  if (tau_max) {
    const int o = r_c + r_e;
    p.A_ineq.block(o, n, n, n) = -MatX::Identity(n, n);
    p.b_ineq.segment(o, n) = -*tau_max;
    p.A_ineq.block(o + n, n, n, n) = MatX::Identity(n, n);
    p.b_ineq.segment(o + n, n) = -*tau_max;
  }
  return p;
}

inline DynWbcResult solve_dynwbc(const RobotModel& model, const JointState& state, const VecX& qdd_safe,
                                 const ContactBlock* contact, std::span<const AccelRow> rows,
                                 const DynWbcWeights& weights, const VecX& tau_prev, QpSolver& qp,
                                 const DynWbcOptions& options = {}, EventLog* log = nullptr) {
  const int n = model.n_dof();
  detail::check_dim(model, state.q, "solve_dynwbc(q)");
  detail::check_dim(model, state.qd, "solve_dynwbc(qd)");
  detail::check_dim(model, qdd_safe, "solve_dynwbc(qdd_safe)");
  detail::check_dim(model, tau_prev, "solve_dynwbc(tau_prev)");
  if (!(weights.w_qdd > 0.0)) throw std::invalid_argument("dynwbc: w_qdd must be > 0");
  if (contact) {
    contact->validate(n);
    if (contact->size() > 0 && !(weights.w_c > 0.0))
      throw std::invalid_argument("dynwbc: w_c must be > 0 with a contact block");
  }
  const MatX M = mass_matrix(model, state.q);
  const VecX h = bias_forces(model, state.q, state.qd, options.gravity);
  const VecX tau_max = torque_limits(model);
  const VecX* limits = options.torque_limits ? &tau_max : nullptr;
  const int k = contact ? contact->size() : 0;

  auto finish = [&](const QpSolution& s, DynWbcResult& r) {
    r.status = s.status;
    r.iterations += s.iterations;
    r.kkt_residual = s.kkt_residual;
    r.active_rows = s.active_set;
    r.qdd = s.x.head(n);
    r.tau = s.x.segment(n, n);
    r.fc = k > 0 ? VecX(s.x.segment(2 * n, k)) : VecX();
    VecX res = M * r.qdd + h - r.tau;
    if (k > 0) res -= contact->J_c.transpose() * r.fc;
    r.dynamics_residual = res.cwiseAbs().maxCoeff();
  };

  DynWbcResult out;
  const QpProblem p = build_dynwbc_qp(M, h, qdd_safe, contact, rows, weights, tau_prev, limits);
  const auto sol = qp.solve(p);
  finish(sol, out);
  if (sol.status == QpStatus::Optimal || rows.empty()) {
    if (sol.status != QpStatus::Optimal && log) log->note(std::string("dynwbc QP ") + to_string(sol.status));
    return out;
  }
  if (log) ++log->infeasible_qps;
  if (options.slack.kind == SlackPolicy::Kind::HardFail) {
    if (log) log->note(std::string("dynwbc QP ") + to_string(sol.status) + " (hard fail)");
    return out;
  }

  // Relax eCBF rows with one slack per barrier kind, appended to x.
  std::vector<int> slack_of_kind(kNumBarrierKinds, -1);
  int ns = 0;
  for (const auto& r : rows)
    if (slack_of_kind[int(r.kind)] < 0) slack_of_kind[int(r.kind)] = ns++;
  const int nv = p.num_vars();
  const int r_c = k > 0 ? static_cast<int>(contact->U.rows()) : 0;
  QpProblem s(nv + ns);
  s.H.topLeftCorner(nv, nv) = p.H;
  s.H.bottomRightCorner(ns, ns) = 2.0 * options.slack.weight * MatX::Identity(ns, ns);
  s.g.head(nv) = p.g;
  s.A_eq = MatX::Zero(p.num_eq(), nv + ns);
  s.A_eq.leftCols(nv) = p.A_eq;
  s.b_eq = p.b_eq;
  s.A_ineq = MatX::Zero(p.num_ineq() + ns, nv + ns);
  s.A_ineq.topLeftCorner(p.num_ineq(), nv) = p.A_ineq;
  s.b_ineq = VecX::Zero(p.num_ineq() + ns);
  s.b_ineq.head(p.num_ineq()) = p.b_ineq;
  for (int i = 0; i < static_cast<int>(rows.size()); ++i) s.A_ineq(r_c + i, nv + slack_of_kind[int(rows[i].kind)]) = 1.0;
  for (int j = 0; j < ns; ++j) s.A_ineq(p.num_ineq() + j, nv + j) = 1.0;
  const auto relaxed = qp.solve(s);
  out = DynWbcResult{};
  out.iterations = sol.iterations;
  finish(relaxed, out);
  out.active_rows.erase(std::remove_if(out.active_rows.begin(), out.active_rows.end(),
                                       [&](int i) { return i >= p.num_ineq(); }),
                        out.active_rows.end());
  out.relaxed = true;
  if (log) {
    ++log->slack_relaxations;
    log->note("dynwbc eCBF rows relaxed with slack; safety not guaranteed");
  }
  return out;
}

struct MotorCommand {
  VecX tau;
  std::vector<char> clamped;  // per joint
  bool any_clamped() const { return std::any_of(clamped.begin(), clamped.end(), [](char c) { return c != 0; }); }
};

/// tau_cmd = tau_opt + K_p (q_safe - q) + K_d (qd_safe - qd), saturated at tau_max.
inline MotorCommand motor_torque(const VecX& tau_opt, const VecX& q_safe, const VecX& qdot_safe,
                                 const JointState& state, const DynWbcWeights& gains, const VecX& tau_max,
                                 EventLog* log = nullptr) {
  const auto n = tau_opt.size();
  if (q_safe.size() != n || qdot_safe.size() != n || state.q.size() != n || state.qd.size() != n ||
      gains.kp.size() != n || gains.kd.size() != n || tau_max.size() != n)
    throw DimensionError("motor_torque: dimension mismatch");
  MotorCommand cmd;
  cmd.tau = tau_opt + gains.kp.cwiseProduct(q_safe - state.q) + gains.kd.cwiseProduct(qdot_safe - state.qd);
  cmd.clamped.assign(static_cast<std::size_t>(n), 0);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double lim = tau_max[i];
    if (std::abs(cmd.tau[i]) > lim) {
      cmd.tau[i] = std::clamp(cmd.tau[i], -lim, lim);
      cmd.clamped[i] = 1;
      if (log) ++log->torque_clamps;
    }
  }
  return cmd;
}

}  // namespace issf_wbc
