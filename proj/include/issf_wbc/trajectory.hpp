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
#include <limits>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "issf_wbc/model.hpp"

namespace issf_wbc {

struct TrajectorySample {
  VecX position;
  VecX velocity;
};

/// Time-parameterized reference: constant, planar circle in 3D, or quintic
/// waypoint spline (zero velocity and acceleration at every knot, held after
/// the last knot).
class Trajectory {
 public:
  enum class Kind { Constant, Circle, Waypoints };

  static Trajectory constant(const VecX& point) {
    Trajectory t;
    t.kind_ = Kind::Constant;
    t.points_ = {point};
    return t;
  }

  /// center + radius (cos th u + sin th v), th = phase + omega s(t), with the
  /// angular rate ramped linearly from 0 to 2 pi / period over `ramp` seconds.
  static Trajectory circle(const Vec3& center, const Vec3& u, const Vec3& v, double radius, double period,
                           double phase = 0.0, double ramp = 0.0) {
    if (!(period > 0.0)) throw std::invalid_argument("circle: period must be > 0");
    if (!(radius >= 0.0)) throw std::invalid_argument("circle: radius must be >= 0");
    if (ramp < 0.0) throw std::invalid_argument("circle: ramp must be >= 0");
    if (u.norm() < 1e-12 || v.norm() < 1e-12) throw std::invalid_argument("circle: axes must be non-zero");
    Trajectory t;
    t.kind_ = Kind::Circle;
    t.center_ = center;
    t.u_ = u.normalized();
    t.v_ = (v - v.dot(t.u_) * t.u_);
    if (t.v_.norm() < 1e-9) throw std::invalid_argument("circle: axes must not be parallel");
    t.v_.normalize();
    t.radius_ = radius;
    t.omega_ = 2.0 * std::numbers::pi / period;
    t.phase_ = phase;
    t.ramp_ = ramp;
    return t;
  }

  static Trajectory waypoints(std::vector<double> times, std::vector<VecX> points) {
    if (times.empty() || times.size() != points.size())
      throw std::invalid_argument("waypoints: need matching, non-empty times and points");
    for (std::size_t i = 1; i < times.size(); ++i) {
      if (!(times[i] > times[i - 1])) throw std::invalid_argument("waypoints: times must be increasing");
      if (points[i].size() != points[0].size()) throw std::invalid_argument("waypoints: dimension mismatch");
    }
    Trajectory t;
    t.kind_ = Kind::Waypoints;
    t.times_ = std::move(times);
    t.points_ = std::move(points);
    return t;
  }

  Kind kind() const { return kind_; }
  int dim() const { return kind_ == Kind::Circle ? 3 : static_cast<int>(points_[0].size()); }

  /// Time up to which the reference is defined by data; +inf when periodic or constant.
  double coverage() const {
    return kind_ == Kind::Waypoints && times_.size() > 1 ? times_.back() : std::numeric_limits<double>::infinity();
  }

  TrajectorySample sample(double t) const {
    switch (kind_) {
      case Kind::Constant: return {points_[0], VecX::Zero(points_[0].size())};
      case Kind::Circle: {
        double th, thd;
        if (t <= 0.0) {
          th = 0.0, thd = 0.0;
        } else if (t < ramp_) {
          th = 0.5 * omega_ * t * t / ramp_;
          thd = omega_ * t / ramp_;
        } else {
          th = omega_ * (t - 0.5 * ramp_);
          thd = omega_;
        }
        th += phase_;
        const Vec3 p = center_ + radius_ * (std::cos(th) * u_ + std::sin(th) * v_);
        const Vec3 v = radius_ * thd * (-std::sin(th) * u_ + std::cos(th) * v_);
        return {p, v};
      }
      case Kind::Waypoints: {
        const auto n = points_[0].size();
        if (times_.size() == 1 || t <= times_.front()) return {points_.front(), VecX::Zero(n)};
        if (t >= times_.back()) return {points_.back(), VecX::Zero(n)};
        std::size_t i = 1;
        while (times_[i] < t) ++i;
        const double T = times_[i] - times_[i - 1];
        const double s = (t - times_[i - 1]) / T;
        // minimum-jerk blend 10s^3 - 15s^4 + 6s^5
        const double b = s * s * s * (10.0 + s * (-15.0 + 6.0 * s));
        const double bd = 30.0 * s * s * (1.0 - s) * (1.0 - s) / T;
        const VecX delta = points_[i] - points_[i - 1];
        return {points_[i - 1] + b * delta, bd * delta};
      }
    }
    return {};
  }

 private:
  Kind kind_ = Kind::Constant;
  std::vector<double> times_;
  std::vector<VecX> points_;
  Vec3 center_ = Vec3::Zero(), u_ = Vec3::UnitX(), v_ = Vec3::UnitY();
  double radius_ = 0.0, omega_ = 0.0, phase_ = 0.0, ramp_ = 0.0;
};

/// Obstacle motion: p(t) = p0 + velocity t + amplitude sin(2 pi f t + phase).
struct ObstacleMotion {
  Vec3 velocity = Vec3::Zero();
  Vec3 amplitude = Vec3::Zero();
  double frequency = 0.0;  // Hz
  double phase = 0.0;

  Vec3 offset(double t) const {
    return velocity * t + amplitude * std::sin(2.0 * std::numbers::pi * frequency * t + phase);
  }
  Vec3 rate(double t) const {
    const double w = 2.0 * std::numbers::pi * frequency;
    return velocity + amplitude * w * std::cos(w * t + phase);
  }
};

}  // namespace issf_wbc
