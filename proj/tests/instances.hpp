#pragma once
// Random small solver instances shared by unit and acceptance tests.

#include <cmath>
#include <vector>

#include "llmtrack/inner_opt.hpp"

namespace testgen {

using namespace llmtrack;

inline DangerZone zone(int id, ZoneKind kind, Vec2 c, double r) { return {id, kind, c, r, 0.5, 10}; }

inline Mat4 random_spd(RngStream& rng) {
  Mat4 a;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) a(i, j) = rng.normal();
  return 0.3 * a * a.transpose() + 0.1 * Mat4::Identity();
}

struct Instance {
  RobotState robot;
  std::vector<TargetBelief> beliefs;
  std::vector<int> row;
  std::vector<DangerZone> zones;
  WeightVector weights;
  PlannerParams params;
  WorldConfig cfg;
  Vec2 previous = Vec2::Zero();
};

// Small random problem: 1 to 3 targets (all assigned), up to two zones of
// each kind placed near the robot, weights log-uniform inside the bounds.
inline Instance random_instance(RngStream& rng) {
  Instance in;
  in.cfg.dt = rng.uniform(0.2, 1.0);
  in.cfg.u_max = rng.uniform(0.5, 2.0);
  in.robot.position = Vec2(rng.uniform(-5, 5), rng.uniform(-5, 5));
  const int nt = 1 + static_cast<int>(rng.uniform_int(0, 2));
  for (int j = 0; j < nt; ++j) {
    TargetBelief b;
    b.target_id = j + 1;
    b.mean << in.robot.position + Vec2(rng.uniform(-4, 4), rng.uniform(-4, 4)), rng.uniform(-0.5, 0.5),
        rng.uniform(-0.5, 0.5);
    b.covariance = random_spd(rng);
    in.beliefs.push_back(b);
    in.row.push_back(1);
  }
  int id = 1;
  for (ZoneKind kind : {ZoneKind::sensing, ZoneKind::communication}) {
    const int nz = static_cast<int>(rng.uniform_int(0, 2));
    for (int k = 0; k < nz; ++k)
      in.zones.push_back(zone(id++, kind, in.robot.position + Vec2(rng.uniform(-2.5, 2.5), rng.uniform(-2.5, 2.5)),
                              rng.uniform(0.5, 1.5)));
  }
  WeightBounds bounds;
  for (std::size_t i = 0; i < 4; ++i)
    in.weights[i] = std::exp(rng.uniform(std::log(bounds.lo[i]), std::log(bounds.hi[i])));
  in.previous = Vec2(rng.uniform(-1, 1), rng.uniform(-1, 1)) * in.cfg.u_max * 0.7;
  return in;
}

inline SolveReport solve(const Instance& in, const WeightVector& w) {
  return solve_step(in.robot, in.row, in.beliefs, in.zones, w, in.params, in.cfg, in.previous);
}

inline SolveReport solve(const Instance& in) { return solve(in, in.weights); }

inline double value(const Instance& in, const Vec2& u) {
  return objective(u, in.robot, in.beliefs, in.zones, in.weights, in.params, in.cfg);
}

}  // namespace testgen
