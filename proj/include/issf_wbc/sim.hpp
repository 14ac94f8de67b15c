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

#include <chrono>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "issf_wbc/dynwbc.hpp"
#include "issf_wbc/estimator.hpp"
#include "issf_wbc/events.hpp"
#include "issf_wbc/kinwbc.hpp"
#include "issf_wbc/model.hpp"
#include "issf_wbc/qp.hpp"
#include "issf_wbc/safety.hpp"
#include "issf_wbc/trajectory.hpp"

namespace issf_wbc {

class SimulationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Integrator { SemiImplicitEuler, Rk4 };

/// How the plant responds to the controller.
///   Dynamics:     full rigid-body dynamics driven by tau_cmd (default).
///   Acceleration: diagnostic, qdd := qdd_safe exactly (DynWBC bypassed).
///   Velocity:     diagnostic, qd := qd_safe over the cycle (the ideal ROM).
enum class PlantMode { Dynamics, Acceleration, Velocity };

/// Square torque pulse on one joint, optionally repeated every `period` s.
struct TorquePulse {
  int joint = 0;
  double start = 0.0;
  double duration = 0.0;
  double magnitude = 0.0;  // N m
  double period = 0.0;

  double at(double t) const {
    if (t < start) return 0.0;
    double local = t - start;
    if (period > 0.0) local = std::fmod(local, period);
    return local < duration ? magnitude : 0.0;
  }
};

struct SimConfig {
  double dt_control = 5e-4;
  double dt_physics = 1e-4;
  double duration = 1.0;
  double mass_scale = 1.0;  // plant only
  Integrator integrator = Integrator::SemiImplicitEuler;
  PlantMode plant = PlantMode::Dynamics;
  bool pipelined = false;  // DynWBC consumes the previous cycle's qdd_safe
  std::vector<TorquePulse> external_torque;
  std::uint64_t seed = 0;
  Vec3 gravity = standard_gravity();
  double obstacle_measurement_std = 0.0;  // m
  double obstacle_process_noise = 1e-2;

  int substeps() const { return static_cast<int>(std::lround(dt_control / dt_physics)); }
  long cycles() const { return static_cast<long>(std::floor(duration / dt_control + 1e-9)); }

  void validate() const {
    if (!(dt_control > 0.0) || !(dt_physics > 0.0)) throw std::invalid_argument("sim: time steps must be > 0");
    if (dt_physics > dt_control * (1.0 + 1e-12)) throw std::invalid_argument("sim: dt_physics must be <= dt_control");
    if (std::abs(substeps() * dt_physics - dt_control) > 1e-9 * dt_control)
      throw std::invalid_argument("sim: dt_control must be an integer multiple of dt_physics");
    if (!(mass_scale > 0.0)) throw std::invalid_argument("sim: mass_scale must be > 0");
    if (!(duration >= 0.0)) throw std::invalid_argument("sim: duration must be >= 0");
    if (obstacle_measurement_std < 0.0) throw std::invalid_argument("sim: measurement noise must be >= 0");
  }

  VecX external(int n, double t) const {
    VecX tau = VecX::Zero(n);
    for (const auto& p : external_torque)
      if (p.joint >= 0 && p.joint < n) tau[p.joint] += p.at(t);
    return tau;
  }
};

/// Joint acceleration qdd = M^-1 (tau - h).
inline VecX forward_dynamics(const RobotModel& model, const VecX& q, const VecX& qd, const VecX& tau,
                             const Vec3& gravity) {
  const MatX M = mass_matrix(model, q);
  return M.llt().solve(tau - bias_forces(model, q, qd, gravity));
}

/// Advance the plant by one physics step under tau (plus any configured
/// external torque). Throws SimulationError on a non-finite state.
inline JointState step_physics(const RobotModel& plant, const JointState& s, const VecX& tau, const SimConfig& cfg) {
  const double dt = cfg.dt_physics;
  const int n = plant.n_dof();
  const VecX u = tau + cfg.external(n, s.t);
  JointState next = s;
  if (cfg.integrator == Integrator::SemiImplicitEuler) {
    const VecX a = forward_dynamics(plant, s.q, s.qd, u, cfg.gravity);
    next.qd = s.qd + dt * a;
    next.q = s.q + dt * next.qd;
  } else {
    auto f = [&](const VecX& q, const VecX& qd) { return forward_dynamics(plant, q, qd, u, cfg.gravity); };
    const VecX k1v = s.qd, k1a = f(s.q, s.qd);
    const VecX k2v = s.qd + 0.5 * dt * k1a, k2a = f(s.q + 0.5 * dt * k1v, k2v);
    const VecX k3v = s.qd + 0.5 * dt * k2a, k3a = f(s.q + 0.5 * dt * k2v, k3v);
    const VecX k4v = s.qd + dt * k3a, k4a = f(s.q + dt * k3v, k4v);
    next.q = s.q + dt / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v);
    next.qd = s.qd + dt / 6.0 * (k1a + 2 * k2a + 2 * k3a + k4a);
  }
  next.t = s.t + dt;
  if (!next.q.allFinite() || !next.qd.allFinite())
    throw SimulationError("non-finite plant state at t = " + std::to_string(s.t));
  return next;
}

struct ObstacleSpec {
  std::string name;
  Shape shape;  // world frame at t = 0
  ObstacleMotion motion;

  Vec3 reference() const { return 0.5 * (shape.p0 + shape.p1); }

  CollisionBody at(const Vec3& reference_position, const Vec3& velocity) const {
    const Vec3 shift = reference_position - reference();
    Shape s = shape;
    s.p0 += shift;
    s.p1 += shift;
    return {name, kBaseLink, s, velocity};
  }
  CollisionBody truth(double t) const { return at(reference() + motion.offset(t), motion.rate(t)); }
};

struct TrackedTask {
  Task task;
  Trajectory trajectory;
};

struct ClosedLoopSetup {
  std::vector<TrackedTask> tasks;
  std::vector<ObstacleSpec> obstacles;
  BarrierSet barriers;
  FilterConfig filter;
  DynWbcWeights weights;
  DynWbcOptions dyn_options;
  SimConfig sim;
  JointState initial;
  bool trace_constraints = false;
};

struct CycleRecord {
  double t = 0.0;
  VecX q, qd, qdot_des, qdot_safe, tau_cmd;
  std::vector<char> clamped;
  std::vector<double> h;  // every declared barrier, ground-truth obstacles
  double d_inf = 0.0;
  double dbar = 0.0;
  int qp_iters = 0;
  QpStatus qp_status = QpStatus::Optimal;
  bool relaxed = false;
  QpStatus dyn_status = QpStatus::Optimal;
  int dyn_iters = 0;
  double dyn_residual = 0.0;
  double task_error = 0.0;  // norm of the top-priority task error
};

struct ConstraintRecord {
  double t;
  BarrierKind kind;
  std::string pair;
  double h;
  double rhs;
  bool active;
};

struct RunTrace {
  int n_dof = 0;
  std::vector<std::string> barrier_names;
  std::vector<BarrierKind> barrier_kinds;
  std::vector<CycleRecord> cycles;
  std::vector<ConstraintRecord> constraints;
  EventLog events;
  double dbar = 0.0;
  bool aborted = false;
  std::string abort_reason;
  double wall_time_s = 0.0;
};

namespace detail {

inline std::vector<Task> tasks_at(const std::vector<TrackedTask>& tracked, double t) {
  std::vector<Task> out;
  out.reserve(tracked.size());
  for (const auto& tt : tracked) {
    Task task = tt.task;
    const auto s = tt.trajectory.sample(t);
    task.target = s.position;
    task.target_velocity = s.velocity;
    out.push_back(std::move(task));
  }
  return out;
}

}  // namespace detail

/// Closed loop: prioritized IK -> barrier rows -> safety filter -> safe
/// acceleration -> DynWBC -> motor torque -> plant sub-steps. The controller
/// uses `nominal`; the plant integrates `plant`.
inline RunTrace run_closed_loop(const RobotModel& nominal, const RobotModel& plant, const ClosedLoopSetup& setup) {
  const auto wall_start = std::chrono::steady_clock::now();
  const SimConfig& cfg = setup.sim;
  cfg.validate();
  const int n = nominal.n_dof();
  if (plant.n_dof() != n) throw DimensionError("run_closed_loop: plant and nominal models differ in size");
  detail::check_dim(nominal, setup.initial.q, "run_closed_loop(initial q)");
  detail::check_dim(nominal, setup.initial.qd, "run_closed_loop(initial qd)");
  setup.weights.validate(n);

  const BarrierCatalog catalog(nominal, setup.barriers, setup.filter);
  RunTrace trace;
  trace.n_dof = n;
  std::vector<CollisionBody> truth;
  for (const auto& o : setup.obstacles) truth.push_back(o.truth(0.0));
  for (const auto& s : catalog.sample(setup.initial.q, truth)) {
    trace.barrier_names.push_back(std::string(to_string(s.kind)) + ":" + s.pair);
    trace.barrier_kinds.push_back(s.kind);
  }

  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<ConstantVelocityKf> kfs;
  for (std::size_t i = 0; i < setup.obstacles.size(); ++i)
    kfs.emplace_back(cfg.obstacle_process_noise, cfg.obstacle_measurement_std);

  QpSolver filter_qp, dyn_qp;
  JointState state = setup.initial;
  state.t = 0.0;
  VecX tau_prev = gravity_torque(nominal, state.q, cfg.gravity);
  const VecX tau_max = torque_limits(nominal);
  std::optional<VecX> last_qdot_safe;
  VecX pending_qdd;  // pipelined mode
  const double dt = cfg.dt_control;
  const long n_cycles = cfg.cycles();
  trace.cycles.reserve(static_cast<std::size_t>(n_cycles));

  try {
    for (long k = 0; k < n_cycles; ++k) {
      const double t = static_cast<double>(k) * dt;
      state.t = t;
      CycleRecord rec;
      rec.t = t;
      rec.q = state.q;
      rec.qd = state.qd;

      // Obstacles: ground truth for metrics, noisy KF estimate for control.
      std::vector<CollisionBody> estimated;
      for (std::size_t i = 0; i < setup.obstacles.size(); ++i) {
        const auto& o = setup.obstacles[i];
        truth[i] = o.truth(t);
        Vec3 z = o.reference() + o.motion.offset(t);
        if (cfg.obstacle_measurement_std > 0.0)
          for (int a = 0; a < 3; ++a) z[a] += cfg.obstacle_measurement_std * noise(rng);
        const auto est = kfs[i].update(z, dt);
        estimated.push_back(o.at(est.position, est.velocity));
      }
      for (const auto& s : catalog.sample(state.q, truth)) rec.h.push_back(s.h);

      const auto tasks = detail::tasks_at(setup.tasks, t);
      const auto ik = prioritized_ik(nominal, state, tasks, dt);
      rec.qdot_des = ik.qdot_des;
      if (!tasks.empty()) {
        const KinematicsCache kin(nominal, state.q);
        const auto ev = evaluate_task(nominal, kin, state.q, tasks.front());
        rec.task_error = (tasks.front().target - ev.current).norm();
      }

      const auto rows = catalog.collect(state.q, estimated, &trace.events);
      const auto filtered = filter_velocity(ik.qdot_des, rows, setup.filter, filter_qp, &trace.events, last_qdot_safe);
      rec.qp_iters = filtered.iterations;
      rec.qp_status = filtered.status;
      rec.relaxed = filtered.relaxed;
      if (filtered.status != QpStatus::Optimal)
        throw SimulationError(std::string("safety filter QP ") + to_string(filtered.status) + " at t = " +
                              std::to_string(t));
      const VecX qdot_safe = filtered.qdot_safe;
      last_qdot_safe = qdot_safe;
      rec.qdot_safe = qdot_safe;
      if (setup.trace_constraints)
        for (std::size_t i = 0; i < rows.size(); ++i)
          trace.constraints.push_back({t, rows[i].kind, rows[i].pair, rows[i].h, rows[i].rhs(), filtered.active[i] != 0});

      const VecX q_safe = state.q + qdot_safe * dt;
      VecX qdd_safe = safe_acceleration(q_safe, qdot_safe, state, setup.weights);
      if (cfg.pipelined) {
        if (pending_qdd.size() == 0) pending_qdd = qdd_safe;
        std::swap(qdd_safe, pending_qdd);
      }

      const JointState start = state;
      if (cfg.plant == PlantMode::Dynamics) {
        std::vector<AccelRow> erows;
        if (setup.filter.mode == FilterMode::Ecbf) erows = ecbf_rows(catalog, state, estimated, 1.0, &trace.events);
        DynWbcOptions dopt = setup.dyn_options;
        dopt.gravity = cfg.gravity;
        dopt.slack = setup.filter.slack;
        const auto dyn = solve_dynwbc(nominal, state, qdd_safe, nullptr, erows, setup.weights, tau_prev, dyn_qp, dopt,
                                      &trace.events);
        rec.dyn_status = dyn.status;
        rec.dyn_iters = dyn.iterations;
        rec.dyn_residual = dyn.dynamics_residual;
        if (dyn.status != QpStatus::Optimal)
          throw SimulationError(std::string("dynwbc QP ") + to_string(dyn.status) + " at t = " + std::to_string(t));
        tau_prev = dyn.tau;
        const auto cmd = motor_torque(dyn.tau, q_safe, qdot_safe, state, setup.weights, tau_max, &trace.events);
        rec.tau_cmd = cmd.tau;
        rec.clamped = cmd.clamped;
        for (int s = 0; s < cfg.substeps(); ++s) state = step_physics(plant, state, cmd.tau, cfg);
      } else {
        rec.tau_cmd = VecX::Zero(n);
        rec.clamped.assign(static_cast<std::size_t>(n), 0);
        const double h = cfg.dt_physics;
        for (int s = 0; s < cfg.substeps(); ++s) {
          if (cfg.plant == PlantMode::Acceleration) {
            state.qd += h * qdd_safe;
            state.q += h * state.qd;
          } else {
            state.qd = qdot_safe;
            state.q += h * qdot_safe;
          }
          state.t += h;
        }
      }

      const VecX d = (state.q - start.q) / dt - qdot_safe;
      rec.d_inf = d.cwiseAbs().maxCoeff();
      trace.dbar = std::max(trace.dbar, rec.d_inf);
      rec.dbar = trace.dbar;
      trace.cycles.push_back(std::move(rec));
    }
  } catch (const SimulationError& e) {
    trace.aborted = true;
    trace.abort_reason = e.what();
    trace.events.note(std::string("run aborted: ") + e.what());
  } catch (const NotStrictlyConvex& e) {
    trace.aborted = true;
    trace.abort_reason = e.what();
    trace.events.note(std::string("run aborted: ") + e.what());
  }
  trace.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();
  return trace;
}

}  // namespace issf_wbc
