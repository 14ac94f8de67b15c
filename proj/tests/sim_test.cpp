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

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "issf_wbc/harness.hpp"
#include "issf_wbc/robot_io.hpp"
#include "issf_wbc/scenario.hpp"
#include "issf_wbc/sim.hpp"
#include "test_support.hpp"

namespace issf_wbc {
namespace {

std::string data_path(const std::string& rel) { return std::string(ISSF_WBC_DATA_DIR) + "/" + rel; }

Scenario shortened(const std::string& name, double duration) {
  Scenario sc = load_scenario(data_path("scenarios/" + name + ".scenario"));
  sc.setup.sim.duration = duration;
  return sc;
}

class EnergyTest : public ::testing::TestWithParam<Integrator> {};

TEST_P(EnergyTest, FreeMotionConservesEnergy) {
  const auto model = testing::planar_chain(3, 0.3);
  SimConfig cfg;
  cfg.gravity = Vec3::Zero();
  cfg.integrator = GetParam();
  JointState s{Eigen::Vector3d(0.3, -0.5, 0.8), Eigen::Vector3d(1.0, -0.7, 1.5), 0.0};
  const double e0 = kinetic_energy(model, s);
  const VecX tau = VecX::Zero(3);
  double worst = 0.0;
  for (int k = 0; k < 100000; ++k) {
    s = step_physics(model, s, tau, cfg);
    if (k % 100 == 0) worst = std::max(worst, std::abs(kinetic_energy(model, s) - e0) / e0);
  }
  EXPECT_LT(worst, 1e-3);
}

INSTANTIATE_TEST_SUITE_P(Integrators, EnergyTest, ::testing::Values(Integrator::SemiImplicitEuler, Integrator::Rk4));

TEST(StepPhysics, SmallAnglePendulumPeriod) {
  RobotModel m;
  LinkSpec l;
  l.name = "bob";
  l.mass = 1.0;
  const double length = 0.5;
  l.com = Vec3(length, 0, 0);
  l.inertia = Mat3::Identity() * 1e-9;
  l.parent = -1;
  l.parent_to_joint = Pose::Identity();
  m.links.push_back(l);
  JointSpec j;
  j.name = "pivot";
  j.axis = Vec3::UnitZ();
  m.joints.push_back(j);

  SimConfig cfg;
  cfg.gravity = Vec3(9.81, 0, 0);  // hangs along +x
  JointState s{VecX::Constant(1, 0.01), VecX::Zero(1), 0.0};
  std::vector<double> crossings;
  for (int k = 0; k < 60000 && crossings.size() < 5; ++k) {
    const JointState next = step_physics(m, s, VecX::Zero(1), cfg);
    if (s.q[0] > 0.0 && next.q[0] <= 0.0) {
      crossings.push_back(s.t + cfg.dt_physics * s.q[0] / (s.q[0] - next.q[0]));
    }
    s = next;
  }
  ASSERT_GE(crossings.size(), 3u);
  const double period = (crossings.back() - crossings.front()) / double(crossings.size() - 1);
  const double expected = 2.0 * std::numbers::pi * std::sqrt(length / 9.81);
  EXPECT_NEAR(period, expected, 0.01 * expected);
}

TEST(StepPhysics, HeavierPlantSagsUnderNominalGravityCompensation) {
  const auto nominal = load_robot(data_path("robots/arm7.robot"));
  const auto plant = scaled_masses(nominal, 1.2);
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 5; ++trial) {
    const VecX q = testing::random_q(rng, 7, 1.0);
    const VecX g = gravity_torque(nominal, q, standard_gravity());
    SimConfig cfg;
    cfg.dt_physics = 1e-6;
    cfg.dt_control = 1e-6;
    const JointState next = step_physics(plant, {q, VecX::Zero(7), 0.0}, g, cfg);
    const VecX measured = next.qd / cfg.dt_physics;
    // Everything scales with mass: h_plant = 1.2 h_nom, M_plant = 1.2 M_nom.
    const VecX expected = mass_matrix(nominal, q).llt().solve(g) * (1.0 - 1.2) / 1.2;
    EXPECT_LT((measured - expected).norm(), 1e-6 * (1.0 + expected.norm()));
  }
}

TEST(StepPhysics, NonFiniteStateThrows) {
  const auto model = testing::planar_chain(2, 0.3);
  SimConfig cfg;
  JointState s{Eigen::Vector2d(0, 0), Eigen::Vector2d(0, 0), 0.0};
  EXPECT_THROW(step_physics(model, s, Eigen::Vector2d(std::nan(""), 0), cfg), SimulationError);
}

TEST(SimConfig, Validation) {
  SimConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  EXPECT_EQ(cfg.substeps(), 5);
  cfg.dt_physics = 1e-3;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = SimConfig{};
  cfg.dt_physics = 2e-4;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
  cfg = SimConfig{};
  cfg.mass_scale = 0.0;
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

TEST(TorquePulse, Profile) {
  TorquePulse p{.joint = 1, .start = 0.5, .duration = 0.1, .magnitude = 2.0, .period = 1.0};
  EXPECT_EQ(p.at(0.4), 0.0);
  EXPECT_EQ(p.at(0.55), 2.0);
  EXPECT_EQ(p.at(0.7), 0.0);
  EXPECT_EQ(p.at(1.55), 2.0);
  SimConfig cfg;
  cfg.external_torque.push_back(p);
  EXPECT_EQ(cfg.external(3, 0.55), Eigen::Vector3d(0, 2, 0));
}

TEST(ClosedLoop, ZeroDurationGivesEmptyTrace) {
  const auto sc = shortened("hand_track", 0.0);
  const auto trace = run_closed_loop(sc.nominal, sc.plant(), sc.setup);
  EXPECT_TRUE(trace.cycles.empty());
  EXPECT_FALSE(trace.aborted);
  EXPECT_EQ(trace.dbar, 0.0);
}

TEST(ClosedLoop, BitwiseDeterministic) {
  const auto sc = shortened("moving_obstacle", 0.5);
  const auto a = run_scenario(sc);
  const auto b = run_scenario(sc);
  ASSERT_FALSE(a.trace.aborted);
  EXPECT_EQ(trace_csv(a.trace), trace_csv(b.trace));
}

TEST(ClosedLoop, MassMismatchIncreasesDiscrepancy) {
  auto sc = shortened("hand_track", 1.5);
  sc.setup.sim.mass_scale = 1.2;
  const double heavy = run_scenario(sc).trace.dbar;
  sc.setup.sim.mass_scale = 1.0;
  const double exact = run_scenario(sc).trace.dbar;
  EXPECT_LT(exact, heavy);
}

TEST(ClosedLoop, IdealVelocityPlantHasNoDiscrepancy) {
  auto sc = shortened("hand_track", 1.0);
  sc.setup.sim.plant = PlantMode::Velocity;
  const auto trace = run_scenario(sc).trace;
  ASSERT_FALSE(trace.aborted);
  EXPECT_LT(trace.dbar, 1e-9);
}

TEST(ClosedLoop, PipelinedStaysCloseToSequential) {
  auto sc = shortened("hand_track", 1.0);
  const auto seq = run_scenario(sc).trace;
  sc.setup.sim.pipelined = true;
  const auto pipe = run_scenario(sc).trace;
  ASSERT_FALSE(seq.aborted);
  ASSERT_FALSE(pipe.aborted);
  ASSERT_EQ(seq.cycles.size(), pipe.cycles.size());
  double worst = 0.0;
  for (std::size_t k = 0; k < seq.cycles.size(); ++k)
    worst = std::max(worst, (seq.cycles[k].q - pipe.cycles[k].q).lpNorm<Eigen::Infinity>());
  EXPECT_LT(worst, 0.01);
}

TEST(ClosedLoop, DynamicsResidualTinyEveryCycle) {
  const auto sc = shortened("moving_obstacle", 1.0);
  const auto trace = run_scenario(sc).trace;
  ASSERT_FALSE(trace.aborted);
  for (const auto& c : trace.cycles) ASSERT_LT(c.dyn_residual, 1e-8) << "t = " << c.t;
}

TEST(ClosedLoop, SmallerEpsilonKeepsLargerMargin) {
  const auto base = load_scenario(data_path("scenarios/hand_track.scenario"));
  double prev = std::numeric_limits<double>::infinity();
  for (double eps : {10.0, 20.0, 30.0}) {
    const auto m = run_scenario(with_mode(base, FilterMode::IssfCbf, 10.0, eps)).metrics;
    ASSERT_FALSE(m.aborted);
    EXPECT_LE(m.min_collision_h, prev + 1e-9) << "epsilon " << eps;
    prev = m.min_collision_h;
  }
}

// eCBF rows with an exact model, torques applied without motor feedback, and
// a fine step: h_e = hdot + alpha h stays nonnegative.
TEST(Ecbf, ExactDynamicsKeepsExponentialBarrier) {
  const auto model = load_robot(data_path("robots/planar3.robot"));
  BarrierSet set;
  set.joint_limits = true;
  FilterConfig fc;
  fc.mode = FilterMode::Ecbf;
  const BarrierCatalog catalog(model, set, fc);
  auto w = DynWbcWeights::defaults(3);
  SimConfig cfg;
  cfg.dt_physics = cfg.dt_control = 1e-4;
  QpSolver qp;
  JointState s{Eigen::Vector3d(1.2, 1.8, 2.0), Eigen::Vector3d(0.5, 0.5, 0.5), 0.0};
  VecX tau_prev = gravity_torque(model, s.q, cfg.gravity);
  const VecX push = Eigen::Vector3d(15.0, 15.0, 15.0);
  double worst = std::numeric_limits<double>::infinity();
  for (int k = 0; k < 15000; ++k) {
    const auto rows = ecbf_rows(catalog, s, {});
    for (const auto& r : rows) worst = std::min(worst, r.h_e);
    const auto res = solve_dynwbc(model, s, push, nullptr, rows, w, tau_prev, qp);
    ASSERT_EQ(res.status, QpStatus::Optimal);
    tau_prev = res.tau;
    s = step_physics(model, s, res.tau, cfg);
  }
  EXPECT_GE(worst, -1e-4);
  EXPECT_GT(s.q[2], 2.3);  // pressed against the limit, not stuck far away
}

}  // namespace
}  // namespace issf_wbc
