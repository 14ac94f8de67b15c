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
#include <random>

#include "issf_wbc/estimator.hpp"

namespace issf_wbc {
namespace {

TEST(ConstantVelocityKf, FirstMeasurementInitializes) {
  ConstantVelocityKf kf(1e-2, 0.01);
  EXPECT_FALSE(kf.initialized());
  const auto e = kf.update(Vec3(1, 2, 3), 5e-4);
  EXPECT_TRUE(kf.initialized());
  EXPECT_EQ(e.position, Vec3(1, 2, 3));
  EXPECT_EQ(e.velocity, Vec3::Zero());
}

TEST(ConstantVelocityKf, StationaryNoiseFree) {
  ConstantVelocityKf kf(1e-2, 0.0);
  const Vec3 p(0.3, -0.2, 0.5);
  ObstacleEstimate e;
  for (int k = 0; k < 100; ++k) e = kf.update(p, 5e-4);
  EXPECT_LT((e.position - p).norm(), 1e-12);
  EXPECT_LT(e.velocity.norm(), 1e-12);
}

TEST(ConstantVelocityKf, ConvergesToConstantVelocity) {
  ConstantVelocityKf kf(1e-2, 1e-4);
  const Vec3 v(0.5, 0.0, 0.0);
  const double dt = 5e-4;
  ObstacleEstimate e;
  for (int k = 0; k <= 200; ++k) e = kf.update(k * dt * v, dt);
  EXPECT_NEAR(e.velocity.x(), 0.5, 0.005);
  EXPECT_NEAR(e.velocity.y(), 0.0, 0.005);
}

TEST(ConstantVelocityKf, RejectsBadArguments) {
  EXPECT_THROW(ConstantVelocityKf(0.0, 0.1), std::invalid_argument);
  EXPECT_THROW(ConstantVelocityKf(1.0, -0.1), std::invalid_argument);
  ConstantVelocityKf kf;
  kf.update(Vec3::Zero(), 1e-3);
  EXPECT_THROW(kf.update(Vec3::Zero(), 0.0), std::invalid_argument);
}

TEST(ConstantVelocityKf, CovarianceStaysSymmetricPsd) {
  ConstantVelocityKf kf(1.0, 0.005);
  for (int k = 0; k < 5000; ++k) {
    kf.update(Vec3::Zero(), 5e-4);
    const auto& P = kf.axis_covariance();
    ASSERT_NEAR(P(0, 1), P(1, 0), 1e-15);
    ASSERT_GE(P(0, 0), 0.0);
    ASSERT_GE(P.determinant(), -1e-18);
  }
}

// Steady state of the discrete Riccati recursion, iterated in the standard
// (non-Joseph) form, is the oracle for the filter's posterior covariance and
// for the empirical position error.
TEST(ConstantVelocityKf, MatchesRiccatiSteadyState) {
  const double q = 0.5, r = 0.005, dt = 5e-4;
  Eigen::Matrix2d F, Q;
  F << 1, dt, 0, 1;
  Q << q * dt * dt * dt / 3, q * dt * dt / 2, q * dt * dt / 2, q * dt;
  Eigen::Matrix2d P = Eigen::Matrix2d::Identity();
  for (int k = 0; k < 200000; ++k) {
    const Eigen::Matrix2d Pm = F * P * F.transpose() + Q;
    const Eigen::Vector2d K = Pm.col(0) / (Pm(0, 0) + r * r);
    P = Pm - K * Pm.row(0);
  }

  ConstantVelocityKf kf(q, r);
  std::mt19937_64 rng(42);
  std::normal_distribution<double> noise(0.0, r);
  const Vec3 v(0.2, -0.1, 0.05);
  double sq = 0.0;
  int count = 0;
  const int steps = 40000;
  for (int k = 0; k < steps; ++k) {
    const Vec3 truth = k * dt * v;
    const auto e = kf.update(truth + Vec3(noise(rng), noise(rng), noise(rng)), dt);
    if (k > steps / 2) {
      sq += (e.position - truth).squaredNorm() / 3.0;
      ++count;
    }
  }
  EXPECT_NEAR(kf.axis_covariance()(0, 0), P(0, 0), 1e-6 * P(0, 0));
  EXPECT_NEAR(kf.axis_covariance()(1, 1), P(1, 1), 1e-6 * P(1, 1));
  EXPECT_LT(std::sqrt(sq / count), 1.2 * std::sqrt(P(0, 0)));
}

}  // namespace
}  // namespace issf_wbc
