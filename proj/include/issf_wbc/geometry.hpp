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
#include <array>
#include <cmath>
#include <optional>
#include <utility>

#include "issf_wbc/model.hpp"

namespace issf_wbc {

/// Shape expressed in the world frame.
struct WorldShape {
  Vec3 p0;
  Vec3 p1;  // == p0 for spheres
  double radius;
};

inline WorldShape to_world(const Shape& s, const Pose& pose) {
  return {pose * s.p0, pose * s.p1, s.radius};
}

/// Closest points between segments [p0,p1] and [q0,q1] as parameters (s, t).
/// Parallel segments with overlapping projections pick the overlap point
/// nearest the midpoint of the first segment.
inline std::pair<double, double> segment_closest_params(const Vec3& p0, const Vec3& p1, const Vec3& q0,
                                                        const Vec3& q1) {
  constexpr double kTiny = 1e-14;
  const Vec3 d1 = p1 - p0;
  const Vec3 d2 = q1 - q0;
  const Vec3 r = p0 - q0;
  const double a = d1.squaredNorm();
  const double e = d2.squaredNorm();
  const double f = d2.dot(r);
  auto clamp01 = [](double x) { return std::clamp(x, 0.0, 1.0); };

  if (a <= kTiny && e <= kTiny) return {0.0, 0.0};
  if (a <= kTiny) return {0.0, clamp01(f / e)};
  const double c = d1.dot(r);
  if (e <= kTiny) return {clamp01(-c / a), 0.0};

  const double b = d1.dot(d2);
  const double denom = a * e - b * b;
  double s;
  if (denom > 1e-12 * a * e) {
    s = clamp01((b * f - c * e) / denom);
  } else {
    // Parallel: project the second segment onto the first's parameter line.
    const double u0 = (q0 - p0).dot(d1) / a;
    const double u1 = (q1 - p0).dot(d1) / a;
    const double lo = std::max(0.0, std::min(u0, u1));
    const double hi = std::min(1.0, std::max(u0, u1));
    if (lo <= hi) {
      s = std::clamp(0.5, lo, hi);
    } else {
      s = (std::max(u0, u1) < 0.0) ? 0.0 : 1.0;
    }
    const double t = clamp01((p0 + s * d1 - q0).dot(d2) / e);
    return {s, t};
  }
  double t = (b * s + f) / e;
  if (t < 0.0) {
    t = 0.0;
    s = clamp01(-c / a);
  } else if (t > 1.0) {
    t = 1.0;
    s = clamp01((b - c) / a);
  }
  return {s, t};
}

/// Signed distance between two world-frame shapes.
///   h = |p_a - p_b| - (rho_a + rho_b),  normal = (p_a - p_b)/|p_a - p_b|.
struct ProximityResult {
  double h = 0.0;
  Vec3 witness_a = Vec3::Zero();  // centerline point on A
  Vec3 witness_b = Vec3::Zero();  // centerline point on B
  Vec3 normal = Vec3::UnitX();
  int sign = 1;
  bool degenerate = false;  // witness points coincide; normal undefined
};

namespace detail {
inline bool shape_less(const WorldShape& a, const WorldShape& b) {
  const std::array<double, 7> ka{a.p0.x(), a.p0.y(), a.p0.z(), a.p1.x(), a.p1.y(), a.p1.z(), a.radius};
  const std::array<double, 7> kb{b.p0.x(), b.p0.y(), b.p0.z(), b.p1.x(), b.p1.y(), b.p1.z(), b.radius};
  return ka < kb;
}
}  // namespace detail

inline ProximityResult closest_points(const WorldShape& a, const WorldShape& b) {
  // Evaluate in a canonical order so that swapping the arguments is exact.
  if (detail::shape_less(b, a)) {
    ProximityResult r = closest_points(b, a);
    std::swap(r.witness_a, r.witness_b);
    r.normal = -r.normal;
    return r;
  }
  ProximityResult r;
  const auto [s, t] = segment_closest_params(a.p0, a.p1, b.p0, b.p1);
  r.witness_a = a.p0 + s * (a.p1 - a.p0);
  r.witness_b = b.p0 + t * (b.p1 - b.p0);
  const Vec3 diff = r.witness_a - r.witness_b;
  const double dist = diff.norm();
  r.h = dist - (a.radius + b.radius);
  r.sign = r.h >= 0.0 ? 1 : -1;
  if (dist <= 1e-12) {
    r.degenerate = true;
    r.normal = Vec3::Zero();
  } else {
    r.normal = diff / dist;
  }
  return r;
}

/// Barrier value and its configuration gradient (1 x n as a vector).
struct BarrierGradient {
  double h = 0.0;
  VecX grad;
  Vec3 normal = Vec3::Zero();
  int sign = 1;
};

/// Kinematic snapshot reused across many barrier evaluations at one q.
struct KinematicsCache {
  std::vector<Pose> poses;
  JointFrames frames;
  int n = 0;

  KinematicsCache(const RobotModel& model, const VecX& q)
      : poses(forward_kinematics(model, q)), frames(joint_frames(model, poses)), n(model.n_dof()) {}

  WorldShape world_shape(const CollisionBody& body) const {
    return to_world(body.shape, link_pose(poses, body.link));
  }

  MatX jacobian(int link, const Vec3& p_world) const {
    if (link == kBaseLink) return MatX::Zero(3, n);
    return point_jacobian_world(frames, link, p_world, n);
  }
};

/// Distance barrier between two collision bodies. World bodies use their
/// stored world-frame geometry and contribute a zero Jacobian. Returns
/// nullopt when the witness points coincide (gradient unusable).
inline std::optional<BarrierGradient> barrier_jacobian(const KinematicsCache& kin, const CollisionBody& body_a,
                                                       const CollisionBody& body_b) {
  const WorldShape wa = kin.world_shape(body_a);
  const WorldShape wb = kin.world_shape(body_b);
  const ProximityResult pr = closest_points(wa, wb);
  if (pr.degenerate) return std::nullopt;

  BarrierGradient out;
  out.h = pr.h;
  out.normal = pr.normal;
  out.sign = pr.sign;
  if (body_a.link == body_b.link) {
    out.grad = VecX::Zero(kin.n);
    return out;
  }
  // Jacobians at the surface points p = p^r + rho * n; any point along the
  // normal gives the same projected row.
  const Vec3 pa = pr.witness_a + wa.radius * pr.normal;
  const Vec3 pb = pr.witness_b + wb.radius * pr.normal;
  const MatX J = kin.jacobian(body_a.link, pa) - kin.jacobian(body_b.link, pb);
  out.grad = (pr.normal.transpose() * J).transpose();
  return out;
}

inline std::optional<BarrierGradient> barrier_jacobian(const RobotModel& model, const VecX& q,
                                                       const CollisionBody& body_a, const CollisionBody& body_b) {
  return barrier_jacobian(KinematicsCache(model, q), body_a, body_b);
}

/// A point fixed in a link frame (or the base).
struct LinkPoint {
  int link = kBaseLink;
  Vec3 point = Vec3::Zero();
};

/// Reachability barrier h = d_max - |p_a - p_b|. Coincident points return
/// h = d_max with a zero gradient.
inline BarrierGradient workspace_barrier(const KinematicsCache& kin, const LinkPoint& a, const LinkPoint& b,
                                         double d_max) {
  if (!(d_max > 0.0)) throw std::invalid_argument("workspace_barrier: d_max must be > 0");
  const Vec3 pa = link_pose(kin.poses, a.link) * a.point;
  const Vec3 pb = link_pose(kin.poses, b.link) * b.point;
  const Vec3 diff = pa - pb;
  const double dist = diff.norm();
  BarrierGradient out;
  if (dist <= 1e-12) {
    out.h = d_max;
    out.grad = VecX::Zero(kin.n);
    return out;
  }
  out.h = d_max - dist;
  out.normal = diff / dist;
  out.sign = out.h >= 0.0 ? 1 : -1;
  const MatX J = kin.jacobian(a.link, pa) - kin.jacobian(b.link, pb);
  out.grad = -(out.normal.transpose() * J).transpose();
  return out;
}

inline BarrierGradient workspace_barrier(const RobotModel& model, const VecX& q, const LinkPoint& a,
                                         const LinkPoint& b, double d_max) {
  return workspace_barrier(KinematicsCache(model, q), a, b, d_max);
}

}  // namespace issf_wbc
