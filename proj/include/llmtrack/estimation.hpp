#pragma once

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "llmtrack/core.hpp"
#include "llmtrack/world.hpp"

namespace llmtrack {

/// Kalman belief over (px, py, vx, vy) for one target.
struct TargetBelief {
  TargetId target_id = 0;
  Vec4 mean = Vec4::Zero();
  Mat4 covariance = Mat4::Identity();

  double trace() const { return covariance.trace(); }
  Vec2 position() const { return mean.head<2>(); }
};

/// Position sensor whose isotropic noise grows with range:
/// R(d) = (sigma0^2 + sigma1^2 d^2) I.
struct SensorModel {
  double sigma0 = 0.1;
  double sigma1 = 0.2;
  std::optional<double> max_range = 5.0;

  void validate() const {
    if (!(sigma0 > 0.0)) throw ConfigError("sensor sigma0 must be > 0");
    if (!(sigma1 >= 0.0)) throw ConfigError("sensor sigma1 must be >= 0");
    if (max_range && !(*max_range > 0.0)) throw ConfigError("sensor max_range must be > 0");
  }

  bool in_range(double distance) const { return !max_range || distance <= *max_range; }
};

inline Mat4 cv_transition(double dt) {
  Mat4 f = Mat4::Identity();
  f(0, 2) = dt;
  f(1, 3) = dt;
  return f;
}

/// Discretized white-noise-acceleration process noise for the CV model.
inline Mat4 cv_process_noise(double dt, double q) {
  const double dt2 = dt * dt;
  const double dt3 = dt2 * dt;
  Mat4 m = Mat4::Zero();
  m(0, 0) = m(1, 1) = dt3 / 3.0;
  m(0, 2) = m(2, 0) = m(1, 3) = m(3, 1) = dt2 / 2.0;
  m(2, 2) = m(3, 3) = dt;
  return q * m;
}

inline TargetBelief kf_predict(const TargetBelief& belief, double dt, double q) {
  const Mat4 f = cv_transition(dt);
  TargetBelief out = belief;
  out.mean = f * belief.mean;
  out.covariance = f * belief.covariance * f.transpose() + cv_process_noise(dt, q);
  return out;
}

inline Mat2 measurement_noise(double distance, const SensorModel& s) {
  const double var = s.sigma0 * s.sigma0 + s.sigma1 * s.sigma1 * distance * distance;
  return var * Mat2::Identity();
}

/// Position-only Kalman update in Joseph form.
/// Throws NumericError if the innovation covariance cannot be factorized.
inline TargetBelief kf_update(const TargetBelief& belief, const Vec2& z, const Mat2& r) {
  Eigen::Matrix<double, 2, 4> h = Eigen::Matrix<double, 2, 4>::Zero();
  h(0, 0) = 1.0;
  h(1, 1) = 1.0;

  const Mat4& p = belief.covariance;
  const Mat2 s = h * p * h.transpose() + r;
  Eigen::LLT<Mat2> llt(s);
  if (llt.info() != Eigen::Success || !s.allFinite())
    throw NumericError("kf_update: innovation covariance is not positive definite (target " +
                       std::to_string(belief.target_id) + ")");
  // K = P H^T S^-1, computed as (S^-1 H P)^T since S and P are symmetric.
  const Eigen::Matrix<double, 4, 2> k = llt.solve(h * p).transpose();
  if (!k.allFinite()) throw NumericError("kf_update: non-finite Kalman gain");

  const Mat4 i_kh = Mat4::Identity() - k * h;
  TargetBelief out = belief;
  out.mean = belief.mean + k * (z - h * belief.mean);
  out.covariance = i_kh * p * i_kh.transpose() + k * r * k.transpose();
  return out;
}

struct Measurement {
  RobotId robot = 0;
  TargetId target = 0;
  Vec2 z = Vec2::Zero();
  Mat2 r = Mat2::Identity();
};

/// Noisy position measurements from every robot that is not sensing-attacked
/// at step t, for every target within its sensor range. Ordered by
/// (robot id, target id).
inline std::vector<Measurement> take_measurements(const std::vector<RobotState>& robots,
                                                  const std::vector<TargetTruth>& targets, const SensorModel& sensor,
                                                  Step t, RngStream& rng) {
  std::vector<const RobotState*> rs;
  for (const auto& r : robots) rs.push_back(&r);
  std::sort(rs.begin(), rs.end(), [](auto* a, auto* b) { return a->id < b->id; });
  std::vector<const TargetTruth*> ts;
  for (const auto& tg : targets) ts.push_back(&tg);
  std::sort(ts.begin(), ts.end(), [](auto* a, auto* b) { return a->id < b->id; });

  std::vector<Measurement> out;
  for (const RobotState* r : rs) {
    if (r->sensing_attacked(t)) continue;
    for (const TargetTruth* tg : ts) {
      const double d = (r->position - tg->position).norm();
      if (!sensor.in_range(d)) continue;
      const Mat2 noise = measurement_noise(d, sensor);
      const double sd = std::sqrt(noise(0, 0));
      Vec2 z = tg->position;
      z.x() += sd * rng.normal();
      z.y() += sd * rng.normal();
      out.push_back({r->id, tg->id, z, noise});
    }
  }
  return out;
}

/// Centralized fusion: sequentially applies, in ascending robot id order,
/// every measurement from robots that are neither sensing- nor comm-attacked
/// at step t. `beliefs` are expected to be already predicted.
inline std::vector<TargetBelief> fuse_team(std::vector<TargetBelief> beliefs, std::vector<Measurement> measurements,
                                           const std::vector<RobotState>& robots, Step t) {
  std::stable_sort(measurements.begin(), measurements.end(), [](const Measurement& a, const Measurement& b) {
    return a.robot != b.robot ? a.robot < b.robot : a.target < b.target;
  });
  for (const auto& m : measurements) {
    auto robot = std::find_if(robots.begin(), robots.end(), [&](const RobotState& r) { return r.id == m.robot; });
    if (robot == robots.end() || robot->sensing_attacked(t) || robot->comm_attacked(t)) continue;
    auto belief = std::find_if(beliefs.begin(), beliefs.end(),
                               [&](const TargetBelief& b) { return b.target_id == m.target; });
    if (belief == beliefs.end()) continue;
    *belief = kf_update(*belief, m.z, m.r);
  }
  return beliefs;
}

inline double tracking_cost(const std::vector<TargetBelief>& beliefs) {
  double sum = 0.0;
  for (const auto& b : beliefs) sum += b.trace();
  return sum;
}

/// Trace of the covariance after one predict and a hypothetical measurement
/// taken from `robot_next_position`. Out-of-range targets get the predict-only
/// trace.
inline double predicted_posterior_trace(const TargetBelief& belief, const Vec2& robot_next_position,
                                        const SensorModel& s, double dt, double q) {
  const TargetBelief predicted = kf_predict(belief, dt, q);
  const double d = (robot_next_position - predicted.position()).norm();
  if (!s.in_range(d)) return predicted.trace();
  return kf_update(predicted, predicted.position(), measurement_noise(d, s)).trace();
}

}  // namespace llmtrack
