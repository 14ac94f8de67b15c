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

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace issf_wbc {

using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;

/// minimize 0.5 x'Hx + g'x  subject to  A_ineq x >= b_ineq,  A_eq x = b_eq.
struct QpProblem {
  MatX H;
  VecX g;
  MatX A_ineq;
  VecX b_ineq;
  MatX A_eq;
  VecX b_eq;

  QpProblem() = default;
  explicit QpProblem(int n)
      : H(MatX::Zero(n, n)), g(VecX::Zero(n)), A_ineq(0, n), b_ineq(0), A_eq(0, n), b_eq(0) {}

  int num_vars() const { return static_cast<int>(g.size()); }
  int num_ineq() const { return static_cast<int>(b_ineq.size()); }
  int num_eq() const { return static_cast<int>(b_eq.size()); }

  double objective(const VecX& x) const { return 0.5 * x.dot(H * x) + g.dot(x); }

  void add_inequality(const VecX& row, double rhs) {
    const auto m = A_ineq.rows();
    A_ineq.conservativeResize(m + 1, num_vars());
    b_ineq.conservativeResize(m + 1);
    A_ineq.row(m) = row.transpose();
    b_ineq[m] = rhs;
  }

  void add_equality(const VecX& row, double rhs) {
    const auto p = A_eq.rows();
    A_eq.conservativeResize(p + 1, num_vars());
    b_eq.conservativeResize(p + 1);
    A_eq.row(p) = row.transpose();
    b_eq[p] = rhs;
  }
};

enum class QpStatus { Optimal, Infeasible, MaxIter };

inline const char* to_string(QpStatus s) {
  switch (s) {
    case QpStatus::Optimal: return "optimal";
    case QpStatus::Infeasible: return "infeasible";
    case QpStatus::MaxIter: return "max_iter";
  }
  return "?";
}

/// Absolute KKT residuals of a primal-dual pair.
struct KktResiduals {
  double stationarity = 0.0;      // |Hx + g - A_ineq' l - A_eq' mu|_inf
  double primal = 0.0;            // max constraint violation
  double complementarity = 0.0;   // max |l_i (a_i x - b_i)|
  double dual = 0.0;              // max(-l_i, 0)
};

inline KktResiduals kkt_residuals(const QpProblem& p, const VecX& x, const VecX& lambda_ineq,
                                  const VecX& lambda_eq) {
  KktResiduals r;
  VecX grad = p.H * x + p.g;
  if (p.num_ineq() > 0) grad -= p.A_ineq.transpose() * lambda_ineq;
  if (p.num_eq() > 0) grad -= p.A_eq.transpose() * lambda_eq;
  r.stationarity = grad.size() ? grad.cwiseAbs().maxCoeff() : 0.0;
  for (int i = 0; i < p.num_ineq(); ++i) {
    const double slack = p.A_ineq.row(i).dot(x) - p.b_ineq[i];
    r.primal = std::max(r.primal, -slack);
    r.complementarity = std::max(r.complementarity, std::abs(lambda_ineq[i] * slack));
    r.dual = std::max(r.dual, -lambda_ineq[i]);
  }
  for (int i = 0; i < p.num_eq(); ++i)
    r.primal = std::max(r.primal, std::abs(p.A_eq.row(i).dot(x) - p.b_eq[i]));
  return r;
}

struct QpSolution {
  VecX x;
  QpStatus status = QpStatus::Infeasible;
  /// Scaled KKT residual: max of stationarity/(1+|g|), primal/(1+|b|),
  /// complementarity and dual infeasibility.
  double kkt_residual = std::numeric_limits<double>::infinity();
  KktResiduals residuals;
  std::vector<int> active_set;  // indices into A_ineq
  VecX lambda_ineq;
  VecX lambda_eq;
  int iterations = 0;
  bool warm_started = false;

  bool optimal() const { return status == QpStatus::Optimal; }
};

/// Thrown when the Hessian is not strictly convex on the equality null space.
class NotStrictlyConvex : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

struct QpOptions {
  double feasibility_tol = 1e-11;  // relative, per row
  double dependency_tol = 1e-12;
  int max_iter = 0;  // 0: 10 * (n + m)
};

/// Dense strictly convex QP solver.
///
/// Equalities are eliminated with a null-space basis; the reduced problem is
/// solved by a Goldfarb-Idnani dual active-set method maintaining J = L^-T Q
/// and the triangular factor R with Givens rotations. A feasible warm start
/// switches to a primal active-set method seeded with the rows active at the
/// warm-start point, so re-solving an unchanged problem from its optimum
/// terminates in one iteration.
///
/// Not thread-safe: a solver owns scratch buffers. Use one per thread.
class QpSolver {
 public:
  explicit QpSolver(QpOptions options = {}) : opt_(options) {}

  QpSolution solve(const QpProblem& problem, const std::optional<VecX>& warm_start = std::nullopt) {
    check_dimensions(problem);
    const int n = problem.num_vars();
    const double g_scale = 1.0 + (n ? problem.g.cwiseAbs().maxCoeff() : 0.0);

    // Row de-duplication: bitwise-identical rows collapse onto the first,
    // keeping the tightest right-hand side.
    dedup(problem);

    QpSolution sol;
    sol.lambda_ineq = VecX::Zero(problem.num_ineq());
    sol.lambda_eq = VecX::Zero(problem.num_eq());

    if (!reduce_equalities(problem)) {
      sol.x = x_particular_;
      sol.status = QpStatus::Infeasible;
      return sol;
    }
    const int nz = static_cast<int>(Z_.cols());
    const int m = static_cast<int>(kept_.size());
    max_iter_ = opt_.max_iter > 0 ? opt_.max_iter : 10 * (n + problem.num_ineq()) + 10;

    // Reduced inequality rows C z >= d.
    C_.resize(m, nz);
    d_.resize(m);
    std::vector<char> constant_row(static_cast<std::size_t>(m), 0);
    for (int k = 0; k < m; ++k) {
      const int i = kept_[k];
      C_.row(k) = problem.A_ineq.row(i) * Z_;
      d_[k] = rhs_[k] - problem.A_ineq.row(i).dot(x_particular_);
      if (C_.row(k).norm() <= 1e-13 * (1.0 + problem.A_ineq.row(i).norm())) {
        constant_row[k] = 1;
        if (d_[k] > row_tol(k, VecX::Zero(nz))) {
          sol.x = x_particular_;
          sol.status = QpStatus::Infeasible;
          return sol;
        }
      }
    }
    for (int k = 0; k < m; ++k)
      if (constant_row[k]) C_.row(k).setZero(), d_[k] = -1.0;  // never binding

    VecX z = VecX::Zero(nz);
    VecX u_reduced = VecX::Zero(m);
    QpStatus status = QpStatus::Optimal;
    int iterations = 0;

    if (nz > 0) {
      Hz_ = Z_.transpose() * problem.H * Z_;
      Hz_ = 0.5 * (Hz_ + Hz_.transpose());
      gz_ = Z_.transpose() * (problem.H * x_particular_ + problem.g);
      llt_.compute(Hz_);
      const double diag_scale = Hz_.diagonal().cwiseAbs().maxCoeff();
      if (llt_.info() != Eigen::Success ||
          llt_.matrixL().toDenseMatrix().diagonal().minCoeff() <= 1e-10 * std::sqrt(std::max(diag_scale, 1e-300)))
        throw NotStrictlyConvex("QpSolver: Hessian is not positive definite on the equality null space");

      bool warm = false;
      if (warm_start && warm_start->size() == n) {
        const VecX z0 = Z_.transpose() * (*warm_start - x_particular_);
        if (reduced_feasible(z0) && (x_particular_ + Z_ * z0 - *warm_start).cwiseAbs().maxCoeff() <=
                                        1e-9 * (1.0 + warm_start->cwiseAbs().maxCoeff())) {
          warm = true;
          status = primal_active_set(z0, z, u_reduced, iterations);
        }
      }
      sol.warm_started = warm;
      if (!warm) status = dual_active_set(z, u_reduced, iterations);
    } else {
      // Fully determined by the equalities.
      if (!reduced_feasible(z)) status = QpStatus::Infeasible;
    }

    sol.x = x_particular_ + Z_ * z;
    sol.status = status;
    sol.iterations = iterations;
    for (int k = 0; k < m; ++k) {
      sol.lambda_ineq[kept_[k]] = u_reduced[k];
      if (u_reduced[k] > 0.0) sol.active_set.push_back(kept_[k]);
    }
    std::sort(sol.active_set.begin(), sol.active_set.end());

    // Equality multipliers from the stationarity condition (least squares).
    if (problem.num_eq() > 0) {
      VecX rhs = problem.H * sol.x + problem.g;
      if (problem.num_ineq() > 0) rhs -= problem.A_ineq.transpose() * sol.lambda_ineq;
      sol.lambda_eq = problem.A_eq.transpose().completeOrthogonalDecomposition().solve(rhs);
    }

    sol.residuals = kkt_residuals(problem, sol.x, sol.lambda_ineq, sol.lambda_eq);
    double b_scale = 1.0;
    if (problem.num_ineq()) b_scale = std::max(b_scale, 1.0 + problem.b_ineq.cwiseAbs().maxCoeff());
    if (problem.num_eq()) b_scale = std::max(b_scale, 1.0 + problem.b_eq.cwiseAbs().maxCoeff());
    sol.kkt_residual = std::max({sol.residuals.stationarity / g_scale, sol.residuals.primal / b_scale,
                                 sol.residuals.complementarity, sol.residuals.dual});
    return sol;
  }

 private:
  static void check_dimensions(const QpProblem& p) {
    const auto n = p.g.size();
    auto fail = [](const std::string& m) { throw std::invalid_argument("QpProblem: " + m); };
    if (p.H.rows() != n || p.H.cols() != n) fail("H must be n x n");
    if (p.A_ineq.rows() != p.b_ineq.size() || (p.A_ineq.rows() > 0 && p.A_ineq.cols() != n))
      fail("A_ineq/b_ineq dimension mismatch");
    if (p.A_eq.rows() != p.b_eq.size() || (p.A_eq.rows() > 0 && p.A_eq.cols() != n))
      fail("A_eq/b_eq dimension mismatch");
    if (n > 0 && (p.H - p.H.transpose()).cwiseAbs().maxCoeff() > 1e-9 * (1.0 + p.H.cwiseAbs().maxCoeff()))
      fail("H must be symmetric");
    if (!p.H.allFinite() || !p.g.allFinite() || !p.A_ineq.allFinite() || !p.b_ineq.allFinite() ||
        !p.A_eq.allFinite() || !p.b_eq.allFinite())
      fail("non-finite entries");
  }

  struct RowHash {
    std::size_t operator()(const std::vector<double>& v) const {
      std::size_t h = 1469598103934665603ull;
      for (double x : v) {
        if (x == 0.0) x = 0.0;  // fold -0.0
        std::uint64_t bits;
        std::memcpy(&bits, &x, sizeof bits);
        h = (h ^ bits) * 1099511628211ull;
      }
      return h;
    }
  };

  void dedup(const QpProblem& p) {
    kept_.clear();
    rhs_.clear();
    std::unordered_map<std::vector<double>, int, RowHash> seen;
    const int n = p.num_vars();
    std::vector<double> key(static_cast<std::size_t>(n));
    for (int i = 0; i < p.num_ineq(); ++i) {
      for (int c = 0; c < n; ++c) key[c] = p.A_ineq(i, c) == 0.0 ? 0.0 : p.A_ineq(i, c);
      auto [it, inserted] = seen.emplace(key, static_cast<int>(kept_.size()));
      if (inserted) {
        kept_.push_back(i);
        rhs_.push_back(p.b_ineq[i]);
      } else {
        rhs_[it->second] = std::max(rhs_[it->second], p.b_ineq[i]);
      }
    }
  }

  // Builds x_particular_ and an orthonormal null-space basis Z_ of A_eq.
  bool reduce_equalities(const QpProblem& p) {
    const int n = p.num_vars();
    if (p.num_eq() == 0) {
      x_particular_ = VecX::Zero(n);
      Z_ = MatX::Identity(n, n);
      return true;
    }
    Eigen::ColPivHouseholderQR<MatX> qr(p.A_eq.transpose());
    qr.setThreshold(1e-12);
    const int rank = static_cast<int>(qr.rank());
    const MatX Q = qr.householderQ() * MatX::Identity(n, n);
    Z_ = Q.rightCols(n - rank);
    x_particular_ = p.A_eq.completeOrthogonalDecomposition().solve(p.b_eq);
    const double resid = (p.A_eq * x_particular_ - p.b_eq).cwiseAbs().maxCoeff();
    return resid <= 1e-9 * (1.0 + p.b_eq.cwiseAbs().maxCoeff());
  }

  double row_tol(int k, const VecX& z) const {
    return opt_.feasibility_tol * (1.0 + std::abs(d_[k]) + C_.row(k).norm() * z.norm());
  }

  bool reduced_feasible(const VecX& z) const {
    for (int k = 0; k < C_.rows(); ++k)
      if (C_.row(k).dot(z) - d_[k] < -row_tol(k, z)) return false;
    return true;
  }

  // --- Goldfarb-Idnani ---------------------------------------------------

  bool add_constraint(const VecX& np, int& iq, double& r_norm) {
    const int n = static_cast<int>(J_.rows());
    VecX d = J_.transpose() * np;
    for (int j = n - 1; j >= iq + 1; --j) {
      double cc = d[j - 1], ss = d[j];
      const double h = std::hypot(cc, ss);
      if (h == 0.0) continue;
      d[j] = 0.0;
      ss /= h;
      cc /= h;
      if (cc < 0.0) {
        cc = -cc;
        ss = -ss;
        d[j - 1] = -h;
      } else {
        d[j - 1] = h;
      }
      const double xny = ss / (1.0 + cc);
      for (int k = 0; k < n; ++k) {
        const double t1 = J_(k, j - 1), t2 = J_(k, j);
        J_(k, j - 1) = t1 * cc + t2 * ss;
        J_(k, j) = xny * (t1 + J_(k, j - 1)) - t2;
      }
    }
    ++iq;
    for (int i = 0; i < iq; ++i) R_(i, iq - 1) = d[i];
    if (std::abs(d[iq - 1]) <= opt_.dependency_tol * r_norm) return false;
    r_norm = std::max(r_norm, std::abs(d[iq - 1]));
    return true;
  }

  void delete_constraint(std::vector<int>& active, VecX& u, int& iq, int l) {
    const int n = static_cast<int>(J_.rows());
    for (int j = l; j < iq - 1; ++j) {
      active[j] = active[j + 1];
      u[j] = u[j + 1];
      R_.col(j) = R_.col(j + 1);
    }
    active.pop_back();
    u[iq - 1] = 0.0;
    R_.col(iq - 1).setZero();
    --iq;
    for (int j = l; j < iq; ++j) {
      double cc = R_(j, j), ss = R_(j + 1, j);
      const double h = std::hypot(cc, ss);
      if (h == 0.0) continue;
      cc /= h;
      ss /= h;
      R_(j + 1, j) = 0.0;
      if (cc < 0.0) {
        R_(j, j) = -h;
        cc = -cc;
        ss = -ss;
      } else {
        R_(j, j) = h;
      }
      const double xny = ss / (1.0 + cc);
      for (int k = j + 1; k < iq; ++k) {
        const double t1 = R_(j, k), t2 = R_(j + 1, k);
        R_(j, k) = t1 * cc + t2 * ss;
        R_(j + 1, k) = xny * (t1 + R_(j, k)) - t2;
      }
      for (int k = 0; k < n; ++k) {
        const double t1 = J_(k, j), t2 = J_(k, j + 1);
        J_(k, j) = t1 * cc + t2 * ss;
        J_(k, j + 1) = xny * (J_(k, j) + t1) - t2;
      }
    }
  }

  QpStatus dual_active_set(VecX& z, VecX& u_out, int& iterations) {
    const int n = static_cast<int>(Hz_.rows());
    const int m = static_cast<int>(C_.rows());
    constexpr double kInf = std::numeric_limits<double>::infinity();

    const MatX L = llt_.matrixL();
    J_ = L.transpose().triangularView<Eigen::Upper>().solve(MatX::Identity(n, n));
    R_.setZero(n, n);
    z = llt_.solve(-gz_);

    std::vector<int> active;
    std::vector<char> is_active(static_cast<std::size_t>(m), 0);
    VecX u = VecX::Zero(n);
    int iq = 0;
    double r_norm = 1.0;
    iterations = 0;

    auto finish = [&](QpStatus s) {
      u_out.setZero(m);
      for (int k = 0; k < iq; ++k) u_out[active[k]] = u[k];
      return s;
    };

    while (true) {
      // Most violated (normalized) inactive row.
      int p = -1;
      double worst = 0.0;
      for (int k = 0; k < m; ++k) {
        if (is_active[k]) continue;
        const double s = C_.row(k).dot(z) - d_[k];
        if (s >= -row_tol(k, z)) continue;
        const double v = s / C_.row(k).norm();
        if (p < 0 || v < worst) p = k, worst = v;
      }
      if (p < 0) return finish(QpStatus::Optimal);

      const VecX np = C_.row(p).transpose();
      double u_plus = 0.0;
      double s_p = np.dot(z) - d_[p];

      while (true) {
        if (++iterations > max_iter_) return finish(QpStatus::MaxIter);
        const VecX d = J_.transpose() * np;
        const VecX step = J_.rightCols(n - iq) * d.tail(n - iq);
        VecX r = VecX::Zero(iq);
        if (iq > 0)
          r = R_.topLeftCorner(iq, iq).triangularView<Eigen::Upper>().solve(d.head(iq));

        double t1 = kInf;
        int l = -1;
        for (int k = 0; k < iq; ++k) {
          if (r[k] > 0.0 && u[k] / r[k] < t1) {
            t1 = u[k] / r[k];
            l = k;
          }
        }
        double t2 = kInf;
        const double curvature = step.dot(np);
        if (step.norm() > 1e-14 * (1.0 + np.norm()) && curvature > 0.0) t2 = -s_p / curvature;

        if (t1 == kInf && t2 == kInf) return finish(QpStatus::Infeasible);

        if (t2 == kInf) {
          // Dual-only step: drop the blocking constraint.
          for (int k = 0; k < iq; ++k) u[k] -= t1 * r[k];
          u_plus += t1;
          is_active[active[l]] = 0;
          delete_constraint(active, u, iq, l);
          continue;
        }

        const double t = std::min(t1, t2);
        z += t * step;
        for (int k = 0; k < iq; ++k) u[k] -= t * r[k];
        u_plus += t;

        if (t2 <= t1) {
          if (!add_constraint(np, iq, r_norm)) {
            // Linearly dependent on the active set: the dependent row cannot be
            // satisfied without violating the others.
            --iq;
            R_.col(iq).setZero();
            return finish(QpStatus::Infeasible);
          }
          active.push_back(p);
          is_active[p] = 1;
          u[iq - 1] = u_plus;
          break;
        }
        is_active[active[l]] = 0;
        delete_constraint(active, u, iq, l);
        s_p = np.dot(z) - d_[p];
      }
    }
  }

  // --- Primal active set (warm start) -------------------------------------

  QpStatus primal_active_set(const VecX& z0, VecX& z, VecX& u_out, int& iterations) {
    const int n = static_cast<int>(Hz_.rows());
    const int m = static_cast<int>(C_.rows());
    z = z0;
    iterations = 0;

    // Working set: rows active at z0, kept linearly independent.
    std::vector<int> work;
    MatX basis(n, 0);
    auto try_add = [&](int k) {
      const VecX a = C_.row(k).transpose();
      if (work.size() >= static_cast<std::size_t>(n)) return false;
      VecX resid = a;
      if (basis.cols() > 0) resid -= basis * (basis.transpose() * a);
      if (resid.norm() <= 1e-9 * a.norm()) return false;
      basis.conservativeResize(n, basis.cols() + 1);
      basis.col(basis.cols() - 1) = resid.normalized();
      work.push_back(k);
      return true;
    };
    auto rebuild_basis = [&]() {
      std::vector<int> old = work;
      work.clear();
      basis.resize(n, 0);
      for (int k : old) try_add(k);
    };
    for (int k = 0; k < m; ++k)
      if (std::abs(C_.row(k).dot(z) - d_[k]) <= 1e3 * row_tol(k, z)) try_add(k);

    VecX lambda;
    while (true) {
      if (++iterations > max_iter_) break;
      const VecX grad = Hz_ * z + gz_;
      const int w = static_cast<int>(work.size());
      MatX Cw(w, n);
      for (int i = 0; i < w; ++i) Cw.row(i) = C_.row(work[i]);
      const VecX hinv_grad = llt_.solve(grad);
      lambda = VecX::Zero(w);
      if (w > 0) {
        const MatX hinv_ct = llt_.solve(Cw.transpose());
        const MatX S = Cw * hinv_ct;
        lambda = S.ldlt().solve(Cw * hinv_grad);
      }
      VecX p = -hinv_grad;
      if (w > 0) p += llt_.solve(Cw.transpose() * lambda);

      if (p.norm() <= 1e-12 * (1.0 + z.norm())) {
        int drop = -1;
        double most_neg = -1e-12 * (1.0 + (w ? lambda.cwiseAbs().maxCoeff() : 0.0));
        for (int i = 0; i < w; ++i)
          if (lambda[i] < most_neg) most_neg = lambda[i], drop = i;
        if (drop < 0) {
          u_out.setZero(m);
          for (int i = 0; i < w; ++i) u_out[work[i]] = std::max(lambda[i], 0.0);
          return QpStatus::Optimal;
        }
        work.erase(work.begin() + drop);
        rebuild_basis();
        continue;
      }

      double alpha = 1.0;
      int blocking = -1;
      for (int k = 0; k < m; ++k) {
        if (std::find(work.begin(), work.end(), k) != work.end()) continue;
        const double cp = C_.row(k).dot(p);
        if (cp >= -1e-14 * C_.row(k).norm() * p.norm()) continue;
        const double a = std::max(0.0, (d_[k] - C_.row(k).dot(z)) / cp);
        if (a < alpha) alpha = a, blocking = k;
      }
      z += alpha * p;
      if (blocking >= 0) try_add(blocking);
    }
    u_out.setZero(m);
    return QpStatus::MaxIter;
  }

  QpOptions opt_;
  int max_iter_ = 0;
  std::vector<int> kept_;
  std::vector<double> rhs_;
  VecX x_particular_;
  MatX Z_;
  MatX C_;
  VecX d_;
  MatX Hz_;
  VecX gz_;
  Eigen::LLT<MatX> llt_;
  MatX J_;
  MatX R_;
};

}  // namespace issf_wbc
