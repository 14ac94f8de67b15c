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
#include <random>
#include <string>

#include "issf_wbc/model.hpp"

namespace issf_wbc::testing {

/// Planar chain: joint i about z, link i offset `length` along x from its parent.
inline RobotModel planar_chain(int n, double length, double mass = 1.0) {
  RobotModel m;
  m.name = "planar" + std::to_string(n);
  for (int i = 0; i < n; ++i) {
    LinkSpec l;
    l.name = "link" + std::to_string(i);
    l.mass = mass;
    l.com = Vec3(0.5 * length, 0, 0);
    l.inertia = Mat3::Identity() * 1e-3 + Vec3(0, 1, 1).asDiagonal().toDenseMatrix() * mass * length * length / 12.0;
    l.parent = i - 1;
    l.parent_to_joint = Pose::Identity();
    if (i > 0) l.parent_to_joint.translation() = Vec3(length, 0, 0);
    m.links.push_back(l);
    JointSpec j;
    j.name = "joint" + std::to_string(i);
    j.axis = Vec3::UnitZ();
    j.q_min = -2.8;
    j.q_max = 2.8;
    m.joints.push_back(j);
  }
  return m;
}

inline Mat3 random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> N(0.0, 1.0);
  Eigen::Quaterniond q(N(rng), N(rng), N(rng), N(rng));
  q.normalize();
  return q.toRotationMatrix();
}

inline Vec3 random_vec(std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> U(lo, hi);
  return {U(rng), U(rng), U(rng)};
}

/// Random spatial serial chain with physically valid inertias.
inline RobotModel random_chain(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> U(0.0, 1.0);
  RobotModel m;
  m.name = "random";
  for (int i = 0; i < n; ++i) {
    LinkSpec l;
    l.name = "link" + std::to_string(i);
    l.mass = 0.5 + 2.5 * U(rng);
    l.com = random_vec(rng, -0.15, 0.15);
    const Mat3 R = random_rotation(rng);
    const Vec3 principal(0.005 + 0.05 * U(rng), 0.005 + 0.05 * U(rng), 0.005 + 0.05 * U(rng));
    l.inertia = R * principal.asDiagonal() * R.transpose();
    l.inertia = 0.5 * (l.inertia + l.inertia.transpose()).eval();
    l.parent = i - 1;
    l.parent_to_joint = Pose::Identity();
    l.parent_to_joint.linear() = random_rotation(rng);
    if (i > 0) l.parent_to_joint.translation() = random_vec(rng, -0.3, 0.3);
    m.links.push_back(l);
    JointSpec j;
    j.axis = random_vec(rng, -1.0, 1.0).normalized();
    j.q_min = -3.0;
    j.q_max = 3.0;
    m.joints.push_back(j);
  }
  return m;
}

inline VecX random_q(std::mt19937_64& rng, int n, double range = 3.0) {
  std::uniform_real_distribution<double> U(-range, range);
  VecX q(n);
  for (int i = 0; i < n; ++i) q[i] = U(rng);
  return q;
}

}  // namespace issf_wbc::testing
