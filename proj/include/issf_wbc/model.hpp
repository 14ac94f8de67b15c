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

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace issf_wbc {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;
using Pose = Eigen::Isometry3d;

/// Attachment index of the fixed robot base (and of world-fixed bodies).
inline constexpr int kBaseLink = -1;

/// Thrown when vector/matrix dimensions disagree with the model.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Rotation from roll-pitch-yaw (applied as Rz(yaw) * Ry(pitch) * Rx(roll)).
inline Mat3 rpy_to_rotation(const Vec3& rpy) {
  return (Eigen::AngleAxisd(rpy.z(), Vec3::UnitZ()) *
          Eigen::AngleAxisd(rpy.y(), Vec3::UnitY()) *
          Eigen::AngleAxisd(rpy.x(), Vec3::UnitX()))
      .toRotationMatrix();
}

struct LinkSpec {
  std::string name;
  double mass = 1.0;                     // kg
  Vec3 com = Vec3::Zero();               // m, link frame
  Mat3 inertia = Mat3::Identity();       // kg m^2 about the CoM, link frame
  int parent = kBaseLink;
  Pose parent_to_joint = Pose::Identity();  // fixed transform before the joint rotation
};

struct JointSpec {
  std::string name;
  Vec3 axis = Vec3::UnitZ();  // unit, expressed in the link frame
  double q_min = -M_PI;
  double q_max = M_PI;
  double qd_max = 10.0;   // rad/s
  double tau_max = 1e3;   // N m
};

/// Sphere (p0 == p1) or capsule (segment p0-p1 swept by radius).
struct Shape {
  enum class Kind { Sphere, Capsule };
  Kind kind = Kind::Sphere;
  Vec3 p0 = Vec3::Zero();
  Vec3 p1 = Vec3::Zero();
  double radius = 0.05;

  static Shape sphere(const Vec3& center, double radius) {
    return {Kind::Sphere, center, center, radius};
  }
  static Shape capsule(const Vec3& a, const Vec3& b, double radius) {
    return {Kind::Capsule, a, b, radius};
  }
};

/// A collision primitive rigidly attached to a link, or to the base/world
/// when `link == kBaseLink`. World bodies may carry a velocity (obstacles).
struct CollisionBody {
  std::string name;
  int link = kBaseLink;
  Shape shape;
  Vec3 velocity = Vec3::Zero();  // m/s, world bodies only

  bool on_robot() const { return link != kBaseLink; }
};

/// Fixed-base serial chain of revolute joints. Joint i drives link i.
struct RobotModel {
  std::string name;
  std::vector<LinkSpec> links;
  std::vector<JointSpec> joints;
  std::vector<CollisionBody> collision_bodies;

  int n_dof() const { return static_cast<int>(joints.size()); }

  int find_body(const std::string& body_name) const {
    for (std::size_t i = 0; i < collision_bodies.size(); ++i)
      if (collision_bodies[i].name == body_name) return static_cast<int>(i);
    return -1;
  }

  int find_link(const std::string& link_name) const {
    for (std::size_t i = 0; i < links.size(); ++i)
      if (links[i].name == link_name) return static_cast<int>(i);
    return -1;
  }

  /// Throws std::invalid_argument describing the first violated invariant.
  void validate() const {
    if (links.size() != joints.size())
      throw std::invalid_argument("robot model: links and joints must have equal length");
    for (std::size_t i = 0; i < links.size(); ++i) {
      const auto& l = links[i];
      const auto& j = joints[i];
      if (l.parent != static_cast<int>(i) - 1)
        throw std::invalid_argument("robot model: link " + std::to_string(i) +
                                    " must be a child of link " + std::to_string(int(i) - 1) +
                                    " (serial chain)");
      if (!(l.mass > 0.0))
        throw std::invalid_argument("robot model: link " + std::to_string(i) + " mass must be > 0");
      if ((l.inertia - l.inertia.transpose()).cwiseAbs().maxCoeff() > 1e-12 * (1.0 + l.inertia.norm()))
        throw std::invalid_argument("robot model: link " + std::to_string(i) + " inertia not symmetric");
      Eigen::SelfAdjointEigenSolver<Mat3> es(l.inertia);
      if (!(es.eigenvalues().minCoeff() > 0.0))
        throw std::invalid_argument("robot model: link " + std::to_string(i) +
                                    " inertia not positive definite");
      if (!(j.q_min < j.q_max))
        throw std::invalid_argument("robot model: joint " + std::to_string(i) + " requires q_min < q_max");
      if (std::abs(j.axis.norm() - 1.0) > 1e-9)
        throw std::invalid_argument("robot model: joint " + std::to_string(i) + " axis must be unit length");
    }
    for (const auto& b : collision_bodies) {
      if (!(b.shape.radius > 0.0))
        throw std::invalid_argument("robot model: collision body '" + b.name + "' radius must be > 0");
      if (b.link < kBaseLink || b.link >= n_dof())
        throw std::invalid_argument("robot model: collision body '" + b.name + "' has invalid link");
    }
  }
};

/// Copy of `model` with every link mass and inertia multiplied by `scale`.
inline RobotModel scaled_masses(RobotModel model, double scale) {
  for (auto& l : model.links) {
    l.mass *= scale;
    l.inertia *= scale;
  }
  return model;
}

struct JointState {
  VecX q;
  VecX qd;
  double t = 0.0;

  static JointState zero(int n) { return {VecX::Zero(n), VecX::Zero(n), 0.0}; }
};

namespace detail {
inline void check_dim(const RobotModel& model, const VecX& v, const char* what) {
  if (v.size() != model.n_dof())
    throw DimensionError(std::string(what) + ": expected " + std::to_string(model.n_dof()) +
                         " entries, got " + std::to_string(v.size()));
}
}  // namespace detail

/// World poses of every link frame for configuration q.
inline std::vector<Pose> forward_kinematics(const RobotModel& model, const VecX& q) {
  detail::check_dim(model, q, "forward_kinematics");
  std::vector<Pose> poses;
  poses.reserve(model.links.size());
  Pose parent = Pose::Identity();
  for (int i = 0; i < model.n_dof(); ++i) {
    Pose p = parent * model.links[i].parent_to_joint;
    p.rotate(Eigen::AngleAxisd(q[i], model.joints[i].axis));
    poses.push_back(p);
    parent = p;
  }
  return poses;
}

/// Pose of `link` (or identity for the base).
inline Pose link_pose(const std::vector<Pose>& poses, int link) {
  return link == kBaseLink ? Pose::Identity() : poses.at(static_cast<std::size_t>(link));
}

/// World-frame joint axes and joint origins, as used by Jacobians and dynamics.
struct JointFrames {
  std::vector<Vec3> axis;
  std::vector<Vec3> origin;
};

inline JointFrames joint_frames(const RobotModel& model, const std::vector<Pose>& poses) {
  JointFrames f;
  f.axis.reserve(poses.size());
  f.origin.reserve(poses.size());
  for (std::size_t i = 0; i < poses.size(); ++i) {
    f.axis.push_back(poses[i].linear() * model.joints[i].axis);
    f.origin.push_back(poses[i].translation());
  }
  return f;
}

/// Linear Jacobian (3 x n) of a world point rigidly attached to `link`.
inline MatX point_jacobian_world(const JointFrames& frames, int link, const Vec3& p_world, int n) {
  MatX J = MatX::Zero(3, n);
  for (int j = 0; j <= link; ++j) J.col(j) = frames.axis[j].cross(p_world - frames.origin[j]);
  return J;
}

/// Linear Jacobian of the point `point_in_link` (link frame) on `link`.
inline MatX point_jacobian(const RobotModel& model, const VecX& q, int link, const Vec3& point_in_link) {
  if (link < kBaseLink || link >= model.n_dof())
    throw std::out_of_range("point_jacobian: invalid link index " + std::to_string(link));
  const auto poses = forward_kinematics(model, q);
  if (link == kBaseLink) return MatX::Zero(3, model.n_dof());
  const auto frames = joint_frames(model, poses);
  return point_jacobian_world(frames, link, poses[link] * point_in_link, model.n_dof());
}

/// Joint-space inertia matrix via composite rigid bodies.
inline MatX mass_matrix(const RobotModel& model, const VecX& q) {
  detail::check_dim(model, q, "mass_matrix");
  const int n = model.n_dof();
  const auto poses = forward_kinematics(model, q);
  const auto frames = joint_frames(model, poses);

  // Composite body of the subtree rooted at each link: mass, CoM, inertia about CoM.
  std::vector<double> cm(n);
  std::vector<Vec3> cc(n);
  std::vector<Mat3> ci(n);
  for (int i = n - 1; i >= 0; --i) {
    const auto& l = model.links[i];
    const Mat3 R = poses[i].linear();
    double m = l.mass;
    Vec3 c = poses[i] * l.com;
    Mat3 I = R * l.inertia * R.transpose();
    if (i + 1 < n) {
      const double m2 = cm[i + 1];
      const Vec3 c_new = (m * c + m2 * cc[i + 1]) / (m + m2);
      auto shift = [](double mass, const Vec3& r) {
        return Mat3(mass * (r.squaredNorm() * Mat3::Identity() - r * r.transpose()));
      };
      I = I + shift(m, c - c_new) + ci[i + 1] + shift(m2, cc[i + 1] - c_new);
      m += m2;
      c = c_new;
    }
    cm[i] = m;
    cc[i] = c;
    ci[i] = I;
  }

  MatX M(n, n);
  for (int j = 0; j < n; ++j) {
    const Vec3& z = frames.axis[j];
    const Vec3 force = cm[j] * z.cross(cc[j] - frames.origin[j]);
    const Vec3 moment_com = ci[j] * z;
    for (int i = 0; i <= j; ++i) {
      const Vec3 moment = moment_com + (cc[j] - frames.origin[i]).cross(force);
      M(i, j) = frames.axis[i].dot(moment);
      M(j, i) = M(i, j);
    }
  }
  return M;
}

/// Recursive Newton-Euler inverse dynamics: tau = M(q) qdd + h(q, qd).
inline VecX inverse_dynamics(const RobotModel& model, const VecX& q, const VecX& qd, const VecX& qdd,
                             const Vec3& gravity) {
  detail::check_dim(model, q, "inverse_dynamics(q)");
  detail::check_dim(model, qd, "inverse_dynamics(qd)");
  detail::check_dim(model, qdd, "inverse_dynamics(qdd)");
  const int n = model.n_dof();
  const auto poses = forward_kinematics(model, q);
  const auto frames = joint_frames(model, poses);

  std::vector<Vec3> force(n), moment(n), com(n);
  Vec3 w = Vec3::Zero(), wd = Vec3::Zero();
  Vec3 a = -gravity;  // base acceleration absorbs gravity
  Vec3 o_prev = Vec3::Zero();
  for (int i = 0; i < n; ++i) {
    const Vec3& z = frames.axis[i];
    const Vec3& o = frames.origin[i];
    const Vec3 r = o - o_prev;
    a = a + wd.cross(r) + w.cross(w.cross(r));
    const Vec3 w_new = w + z * qd[i];
    wd = wd + z * qdd[i] + w.cross(z * qd[i]);
    w = w_new;

    const auto& l = model.links[i];
    const Mat3 R = poses[i].linear();
    com[i] = poses[i] * l.com;
    const Vec3 rc = com[i] - o;
    const Vec3 ac = a + wd.cross(rc) + w.cross(w.cross(rc));
    const Mat3 I = R * l.inertia * R.transpose();
    force[i] = l.mass * ac;
    moment[i] = I * wd + w.cross(I * w);
    o_prev = o;
  }

  VecX tau(n);
  Vec3 f_child = Vec3::Zero(), n_child = Vec3::Zero();
  for (int i = n - 1; i >= 0; --i) {
    const Vec3& o = frames.origin[i];
    Vec3 f = force[i] + f_child;
    Vec3 m = moment[i] + (com[i] - o).cross(force[i]) + n_child;
    if (i + 1 < n) m += (frames.origin[i + 1] - o).cross(f_child);
    tau[i] = frames.axis[i].dot(m);
    f_child = f;
    n_child = m;
  }
  return tau;
}

inline Vec3 standard_gravity() { return {0.0, 0.0, -9.81}; }

/// Coriolis, centrifugal and gravity torques h(q, qd).
inline VecX bias_forces(const RobotModel& model, const VecX& q, const VecX& qd, const Vec3& gravity) {
  return inverse_dynamics(model, q, qd, VecX::Zero(model.n_dof()), gravity);
}

inline VecX gravity_torque(const RobotModel& model, const VecX& q, const Vec3& gravity) {
  return bias_forces(model, q, VecX::Zero(model.n_dof()), gravity);
}

inline double kinetic_energy(const RobotModel& model, const JointState& s) {
  return 0.5 * s.qd.dot(mass_matrix(model, s.q) * s.qd);
}

inline double potential_energy(const RobotModel& model, const VecX& q, const Vec3& gravity) {
  const auto poses = forward_kinematics(model, q);
  double v = 0.0;
  for (int i = 0; i < model.n_dof(); ++i) v -= model.links[i].mass * gravity.dot(poses[i] * model.links[i].com);
  return v;
}

}  // namespace issf_wbc
