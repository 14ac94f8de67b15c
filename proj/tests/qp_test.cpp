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

#include <random>

#include "issf_wbc/qp.hpp"
#include "qp_oracle.hpp"

namespace issf_wbc {
namespace {

TEST(QpSolver, ScalarHalfLineProjection) {
  QpProblem p(1);
  p.H(0, 0) = 2.0;
  p.add_inequality(VecX::Ones(1), 1.0);
  QpSolver solver;
  const auto s = solver.solve(p);
  ASSERT_EQ(s.status, QpStatus::Optimal);
  EXPECT_NEAR(s.x[0], 1.0, 1e-15);
  EXPECT_EQ(s.active_set, std::vector<int>{0});
  EXPECT_NEAR(s.lambda_ineq[0], 2.0, 1e-12);
}

TEST(QpSolver, UnconstrainedMinimum) {
  const Eigen::Vector3d x0(0.3, -1.2, 4.0);
  QpProblem p(3);
  p.H = 2.0 * MatX::Identity(3, 3);
  p.g = -2.0 * x0;
  const auto s = QpSolver().solve(p);
  ASSERT_TRUE(s.optimal());
  EXPECT_LT((s.x - x0).norm(), 1e-14);
}

TEST(QpSolver, MatchesEnumerationOracle) {
  std::mt19937_64 rng(42);
  QpSolver solver;
  int solved = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 1 + trial % 4;
    const int m = trial % 7;
    const int e = (trial % 5 == 0 && n > 1) ? 1 : 0;
    const QpProblem p = testing::random_qp(rng, n, m, e);
    const auto oracle = testing::enumerate_qp(p);
    ASSERT_TRUE(oracle.has_value());
    const auto s = solver.solve(p);
    ASSERT_EQ(s.status, QpStatus::Optimal) << "trial " << trial;
    EXPECT_LT((s.x - *oracle).cwiseAbs().maxCoeff(), 1e-6) << "trial " << trial;
    EXPECT_LT(s.kkt_residual, 1e-6);
    ++solved;
  }
  EXPECT_EQ(solved, 200);
}

TEST(QpSolver, OptimalSolutionsAreKktCertified) {
  std::mt19937_64 rng(5);
  QpSolver solver;
  for (int trial = 0; trial < 300; ++trial) {
    const QpProblem p = testing::random_qp(rng, 2 + trial % 12, trial % 40, trial % 3);
    const auto s = solver.solve(p);
    ASSERT_TRUE(s.optimal());
    const double b_norm = std::max(p.num_ineq() ? p.b_ineq.cwiseAbs().maxCoeff() : 0.0,
                                   p.num_eq() ? p.b_eq.cwiseAbs().maxCoeff() : 0.0);
    EXPECT_LT(s.residuals.primal, 1e-8 * (1.0 + b_norm));
    EXPECT_LT(s.residuals.stationarity, 1e-6 * (1.0 + p.g.cwiseAbs().maxCoeff()));
    EXPECT_LT(s.residuals.complementarity, 1e-8);
  }
}

TEST(QpSolver, WarmStartedResolveIsImmediate) {
  std::mt19937_64 rng(6);
  QpSolver solver;
  for (int trial = 0; trial < 100; ++trial) {
    const QpProblem p = testing::random_qp(rng, 3 + trial % 8, 5 + trial % 20, trial % 2);
    const auto cold = solver.solve(p);
    ASSERT_TRUE(cold.optimal());
    const auto warm = solver.solve(p, cold.x);
    ASSERT_TRUE(warm.optimal());
    EXPECT_TRUE(warm.warm_started);
    EXPECT_LE(warm.iterations, 2);
    EXPECT_LT((warm.x - cold.x).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(QpSolver, WarmStartFromOtherFeasiblePointConverges) {
  std::mt19937_64 rng(16);
  QpSolver solver;
  for (int trial = 0; trial < 100; ++trial) {
    QpProblem p = testing::random_qp(rng, 4, 8);
    const auto cold = solver.solve(p);
    ASSERT_TRUE(cold.optimal());
    // Perturb the cost; the previous optimum stays feasible.
    p.g += VecX::Random(4);
    const auto warm = solver.solve(p, cold.x);
    const auto ref = solver.solve(p);
    ASSERT_TRUE(warm.optimal());
    EXPECT_LT((warm.x - ref.x).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_LT(warm.kkt_residual, 1e-6);
  }
}

TEST(QpSolver, FeasibleCostCenterIsReturnedUnchanged) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 5;
    QpProblem p(n);
    const VecX x0 = VecX::Random(n);
    p.H = 2.0 * MatX::Identity(n, n);
    p.g = -2.0 * x0;
    for (int i = 0; i < 10; ++i) {
      const VecX a = VecX::Random(n);
      p.add_inequality(a, a.dot(x0) - 0.01 - std::abs(a[0]));
    }
    const auto s = QpSolver().solve(p);
    ASSERT_TRUE(s.optimal());
    EXPECT_LT((s.x - x0).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_TRUE(s.active_set.empty());
  }
}

TEST(QpSolver, ReportsInfeasibility) {
  QpProblem p(1);
  p.H(0, 0) = 1.0;
  p.add_inequality(VecX::Ones(1), 1.0);
  p.add_inequality(-VecX::Ones(1), 0.0);
  EXPECT_EQ(QpSolver().solve(p).status, QpStatus::Infeasible);

  QpProblem q(2);
  q.H.setIdentity();
  q.add_equality(Eigen::Vector2d(1, 1), 1.0);
  q.add_equality(Eigen::Vector2d(2, 2), 3.0);
  EXPECT_EQ(QpSolver().solve(q).status, QpStatus::Infeasible);

  QpProblem z(2);
  z.H.setIdentity();
  z.add_inequality(Eigen::Vector2d(0, 0), 1.0);
  EXPECT_EQ(QpSolver().solve(z).status, QpStatus::Infeasible);
}

TEST(QpSolver, DuplicateRowsAreCollapsed) {
  QpProblem p(2);
  p.H.setIdentity();
  p.add_inequality(Eigen::Vector2d(1, 0), 1.0);
  p.add_inequality(Eigen::Vector2d(1, 0), 1.0);
  p.add_inequality(Eigen::Vector2d(1, 0), 0.5);
  const auto s = QpSolver().solve(p);
  ASSERT_TRUE(s.optimal());
  EXPECT_NEAR(s.x[0], 1.0, 1e-15);
  EXPECT_EQ(s.active_set, std::vector<int>{0});
  EXPECT_LT(s.kkt_residual, 1e-12);
}

TEST(QpSolver, SingularHessianWithDeterminingEqualities) {
  // min |a - 1|^2 over (a, t) with t = 3a: H is singular in t alone.
  QpProblem p(2);
  p.H(0, 0) = 2.0;
  p.g[0] = -2.0;
  p.add_equality(Eigen::Vector2d(3, -1), 0.0);
  const auto s = QpSolver().solve(p);
  ASSERT_TRUE(s.optimal());
  EXPECT_NEAR(s.x[0], 1.0, 1e-12);
  EXPECT_NEAR(s.x[1], 3.0, 1e-12);
  EXPECT_LT(s.residuals.primal, 1e-12);
}

TEST(QpSolver, RejectsNonConvexAndMalformedProblems) {
  QpProblem p(2);
  p.H(0, 0) = 1.0;
  EXPECT_THROW(QpSolver().solve(p), NotStrictlyConvex);
  QpProblem asym(2);
  asym.H << 1, 0.5, 0, 1;
  EXPECT_THROW(QpSolver().solve(asym), std::invalid_argument);
  QpProblem bad(2);
  bad.H.setIdentity();
  bad.A_ineq = MatX::Ones(1, 3);
  bad.b_ineq = VecX::Zero(1);
  EXPECT_THROW(QpSolver().solve(bad), std::invalid_argument);
}

TEST(QpSolver, IterationCapYieldsMaxIter) {
  std::mt19937_64 rng(9);
  QpProblem p(4);
  p.H.setIdentity();
  p.g = VecX::Constant(4, 5.0);
  for (int i = 0; i < 4; ++i) p.add_inequality(VecX::Unit(4, i), 1.0);
  QpSolver capped(QpOptions{.max_iter = 2});
  EXPECT_EQ(capped.solve(p).status, QpStatus::MaxIter);
  EXPECT_EQ(QpSolver().solve(p).status, QpStatus::Optimal);
}

TEST(QpSolver, DeterministicAcrossSolves) {
  std::mt19937_64 rng(10);
  const QpProblem p = testing::random_qp(rng, 8, 20, 2);
  QpSolver a, b;
  const auto sa = a.solve(p);
  const auto sb = b.solve(p);
  const auto sa2 = a.solve(p);
  EXPECT_EQ(sa.x, sb.x);
  EXPECT_EQ(sa.x, sa2.x);
  EXPECT_EQ(sa.iterations, sb.iterations);
}

}  // namespace
}  // namespace issf_wbc
