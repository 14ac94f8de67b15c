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

#include <stdexcept>

#include "issf_wbc/model.hpp"

namespace issf_wbc {

struct ObstacleEstimate {
  Vec3 position = Vec3::Zero();
  Vec3 velocity = Vec3::Zero();
  Eigen::Matrix<double, 6, 6> covariance = Eigen::Matrix<double, 6, 6>::Identity();  // [p; v]
  double measurement_std = 0.0;
};

/// Constant-velocity Kalman filter, one independent [p, v] pair per axis.
/// All axes share the same model and noise, so a single 2x2 covariance is kept.
/// Process noise is white acceleration with spectral density q.
class ConstantVelocityKf {
 public:
  ConstantVelocityKf(double process_noise = 1e-2, double measurement_std = 0.0)
      : q_(process_noise), r_std_(measurement_std) {
    if (!(process_noise > 0.0)) throw std::invalid_argument("kalman: process noise must be > 0");
    if (measurement_std < 0.0) throw std::invalid_argument("kalman: measurement std must be >= 0");
  }

  void initialize(const Vec3& position, const Vec3& velocity = Vec3::Zero(), double velocity_var = 1.0) {
    p_ = position;
    v_ = velocity;
    P_ << r_std_ * r_std_, 0.0, 0.0, velocity_var;
    initialized_ = true;
  }

  bool initialized() const { return initialized_; }

  static Eigen::Matrix2d transition(double dt) { return (Eigen::Matrix2d() << 1.0, dt, 0.0, 1.0).finished(); }

  Eigen::Matrix2d process_covariance(double dt) const {
    return q_ * (Eigen::Matrix2d() << dt * dt * dt / 3.0, dt * dt / 2.0, dt * dt / 2.0, dt).finished();
  }

  /// Predict over dt, then fuse a position measurement.
  ObstacleEstimate update(const Vec3& measurement, double dt) {
    if (!initialized_) {
      initialize(measurement);
      return estimate();
    }
    if (!(dt > 0.0)) throw std::invalid_argument("kalman: dt must be > 0");
    const Eigen::Matrix2d F = transition(dt);
    p_ += dt * v_;
    P_ = F * P_ * F.transpose() + process_covariance(dt);
    const double S = P_(0, 0) + r_std_ * r_std_;
    const Eigen::Vector2d K = P_.col(0) / S;
    const Vec3 innovation = measurement - p_;
    p_ += K[0] * innovation;
    v_ += K[1] * innovation;
    const Eigen::Matrix2d IKH = Eigen::Matrix2d::Identity() - K * Eigen::RowVector2d(1.0, 0.0);
    // Joseph form keeps P symmetric PSD.
    P_ = IKH * P_ * IKH.transpose() + (r_std_ * r_std_) * K * K.transpose();
    return estimate();
  }

  ObstacleEstimate estimate() const {
    ObstacleEstimate e;
    e.position = p_;
    e.velocity = v_;
    e.covariance.setZero();
    for (int a = 0; a < 3; ++a) {
      e.covariance(a, a) = P_(0, 0);
      e.covariance(a, 3 + a) = e.covariance(3 + a, a) = P_(0, 1);
      e.covariance(3 + a, 3 + a) = P_(1, 1);
    }
    e.measurement_std = r_std_;
    return e;
  }

  const Eigen::Matrix2d& axis_covariance() const { return P_; }

 private:
  double q_;
  double r_std_;
  bool initialized_ = false;
  Vec3 p_ = Vec3::Zero();
  Vec3 v_ = Vec3::Zero();
  Eigen::Matrix2d P_ = Eigen::Matrix2d::Identity();
};

}  // namespace issf_wbc
