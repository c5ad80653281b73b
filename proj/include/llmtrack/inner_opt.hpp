#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "llmtrack/core.hpp"
#include "llmtrack/estimation.hpp"
#include "llmtrack/world.hpp"

namespace llmtrack {

/// Priorities of the four objective terms: tracking, control effort,
/// sensing-zone slack, comm-zone slack.
struct WeightVector {
  std::array<double, 4> w{1.0, 1.0, 1.0, 1.0};

  WeightVector() = default;
  WeightVector(double w1, double w2, double w3, double w4) : w{w1, w2, w3, w4} {}
  explicit WeightVector(const std::array<double, 4>& a) : w(a) {}

  double tracking() const { return w[0]; }
  double control() const { return w[1]; }
  double sensing() const { return w[2]; }
  double comm() const { return w[3]; }
  double operator[](std::size_t i) const { return w[i]; }
  double& operator[](std::size_t i) { return w[i]; }

  WeightVector scaled(double lambda) const {
    return {w[0] * lambda, w[1] * lambda, w[2] * lambda, w[3] * lambda};
  }

  friend bool operator==(const WeightVector&, const WeightVector&) = default;
};

struct WeightBounds {
  std::array<double, 4> lo{0.1, 0.01, 0.1, 0.1};
  std::array<double, 4> hi{50.0, 10.0, 100.0, 100.0};

  bool contains(const WeightVector& v) const {
    for (std::size_t i = 0; i < 4; ++i)
      if (!(v[i] >= lo[i] && v[i] <= hi[i])) return false;
    return true;
  }

  WeightVector clip(WeightVector v) const {
    for (std::size_t i = 0; i < 4; ++i) v[i] = std::min(std::max(v[i], lo[i]), hi[i]);
    return v;
  }

  void validate() const {
    for (std::size_t i = 0; i < 4; ++i)
      if (!(lo[i] > 0.0 && lo[i] <= hi[i])) throw ConfigError("weight bounds must satisfy 0 < lo <= hi");
  }
};

/// Planner-side parameters shared by every robot's solve.
struct PlannerParams {
  SensorModel sensor;
  double process_noise = 0.01;  // q of the constant-velocity model
  double safety_margin = 0.2;   // added to zone radii inside the planner only
};

struct ObjectiveTerms {
  double tracking = 0.0;  // sum of predicted posterior traces
  double control = 0.0;   // ||u||
  double sensing = 0.0;   // ||nu||
  double comm = 0.0;      // ||xi||

  double weighted(const WeightVector& w) const {
    return w.tracking() * tracking + w.control() * control + w.sensing() * sensing + w.comm() * comm;
  }
};

struct SolveReport {
  Vec2 control = Vec2::Zero();
  double objective_value = 0.0;
  double objective_at_zero = 0.0;
  int iterations = 0;
  std::vector<double> slacks_sensing;
  std::vector<double> slacks_comm;
  // Objective after each accepted iterate of the winning start.
  std::vector<double> objective_trace;
};

/// Optimal slacks for zones of one kind: max(0, G_k) in ascending zone id order.
inline std::vector<double> eliminate_slacks(const Vec2& next_position, std::vector<const DangerZone*> zones,
                                            double margin) {
  std::sort(zones.begin(), zones.end(), [](auto* a, auto* b) { return a->id < b->id; });
  std::vector<double> out;
  out.reserve(zones.size());
  for (const DangerZone* z : zones) out.push_back(std::max(0.0, zone_excess(next_position, *z, margin)));
  return out;
}

inline std::vector<double> eliminate_slacks(const Vec2& next_position, const std::vector<DangerZone>& zones,
                                            double margin) {
  std::vector<const DangerZone*> ptrs;
  for (const auto& z : zones) ptrs.push_back(&z);
  return eliminate_slacks(next_position, std::move(ptrs), margin);
}

inline double l2(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

/// The one-step problem of a single robot with slacks eliminated. Predicted
/// beliefs and per-kind zone lists are computed once at construction.
class StepProblem {
 public:
  StepProblem(const RobotState& robot, const std::vector<TargetBelief>& assigned, const std::vector<DangerZone>& zones,
              const WeightVector& weights, const PlannerParams& params, const WorldConfig& cfg)
      : robot_(robot), weights_(weights), params_(params), cfg_(cfg) {
    predicted_.reserve(assigned.size());
    for (const auto& b : assigned) predicted_.push_back(kf_predict(b, cfg.dt, params.process_noise));
    for (const auto& z : zones) (z.kind == ZoneKind::sensing ? sensing_ : comm_).push_back(&z);
    std::sort(sensing_.begin(), sensing_.end(), [](auto* a, auto* b) { return a->id < b->id; });
    std::sort(comm_.begin(), comm_.end(), [](auto* a, auto* b) { return a->id < b->id; });
  }

  Vec2 next_position(const Vec2& u) const { return step_dynamics(robot_, u, cfg_).position; }

  ObjectiveTerms terms(const Vec2& u) const {
    const Vec2 x = next_position(u);
    ObjectiveTerms t;
    for (const auto& p : predicted_) {
      const double d = (x - p.position()).norm();
      t.tracking += params_.sensor.in_range(d)
                        ? kf_update(p, p.position(), measurement_noise(d, params_.sensor)).trace()
                        : p.trace();
    }
    t.control = u.norm();
    t.sensing = l2(eliminate_slacks(x, sensing_, params_.safety_margin));
    t.comm = l2(eliminate_slacks(x, comm_, params_.safety_margin));
    return t;
  }

  double value(const Vec2& u) const { return terms(u).weighted(weights_); }

  std::vector<double> sensing_slacks(const Vec2& u) const {
    return eliminate_slacks(next_position(u), sensing_, params_.safety_margin);
  }
  std::vector<double> comm_slacks(const Vec2& u) const {
    return eliminate_slacks(next_position(u), comm_, params_.safety_margin);
  }

  const std::vector<TargetBelief>& predicted() const { return predicted_; }
  const RobotState& robot() const { return robot_; }
  const WorldConfig& config() const { return cfg_; }

 private:
  RobotState robot_;
  WeightVector weights_;
  PlannerParams params_;
  WorldConfig cfg_;
  std::vector<TargetBelief> predicted_;
  std::vector<const DangerZone*> sensing_;
  std::vector<const DangerZone*> comm_;
};

inline double objective(const Vec2& control, const RobotState& robot, const std::vector<TargetBelief>& assigned,
                        const std::vector<DangerZone>& zones, const WeightVector& weights, const PlannerParams& params,
                        const WorldConfig& cfg) {
  return StepProblem(robot, assigned, zones, weights, params, cfg).value(control);
}

/// Zones whose geometry the robot knows.
inline std::vector<DangerZone> known_zones(const RobotState& robot, const std::vector<DangerZone>& zones) {
  std::vector<DangerZone> out;
  for (const auto& z : zones)
    if (robot.known_zones.contains(z.id)) out.push_back(z);
  return out;
}

inline Vec2 project_to_ball(const Vec2& u, double radius) { return clamp_control(u, radius); }

namespace detail {

struct DescentResult {
  Vec2 u;
  double f;
  int iterations;
  std::vector<double> trace;
};

inline void check_finite_terms(const ObjectiveTerms& t, const char* start_name) {
  const auto fail = [&](const char* term) {
    throw NumericError(std::string("solve_step: non-finite ") + term + " term at start point '" + start_name + "'");
  };
  if (!std::isfinite(t.tracking)) fail("tracking");
  if (!std::isfinite(t.control)) fail("control");
  if (!std::isfinite(t.sensing)) fail("sensing-slack");
  if (!std::isfinite(t.comm)) fail("comm-slack");
}

// Projected gradient descent with central differences and Armijo backtracking.
inline DescentResult projected_descent(const StepProblem& problem, Vec2 u, double f, double u_max) {
  constexpr int kMaxIterations = 50;
  constexpr int kMaxHalvings = 60;
  constexpr double kArmijo = 1e-4;
  constexpr double kTolerance = 1e-8;
  const double h = 1e-6 * u_max;

  DescentResult res{u, f, 0, {f}};
  double alpha = -1.0;
  for (int it = 0; it < kMaxIterations; ++it) {
    Vec2 g;
    for (int i = 0; i < 2; ++i) {
      Vec2 e = Vec2::Zero();
      e[i] = h;
      g[i] = (problem.value(u + e) - problem.value(u - e)) / (2.0 * h);
    }
    const double gn = g.norm();
    if (!(gn > 0.0) || !std::isfinite(gn)) break;

    // First trial moves at most 2 u_max; later trials reuse the last accepted step.
    const double cap = 2.0 * u_max / gn;
    alpha = alpha > 0.0 ? std::min(2.0 * alpha, cap) : u_max / gn;

    bool accepted = false;
    for (int k = 0; k < kMaxHalvings; ++k) {
      const Vec2 trial = project_to_ball(u - alpha * g, u_max);
      const Vec2 d = trial - u;
      if (d.norm() <= 1e-15 * u_max) break;
      const double ft = problem.value(trial);
      if (ft <= f + kArmijo * g.dot(d) && ft <= f) {
        u = trial;
        f = ft;
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) break;
    res.iterations = it + 1;
    res.trace.push_back(f);
    if (alpha * gn < kTolerance) break;
  }
  res.u = u;
  res.f = f;
  return res;
}

}  // namespace detail

/// One-step control for `robot` given its assignment row (aligned with
/// `beliefs`). Multi-start projected gradient descent over the control ball;
/// returns the best of the starts {0, toward nearest assigned target,
/// previous control}.
inline SolveReport solve_step(const RobotState& robot, const std::vector<int>& assignment_row,
                              const std::vector<TargetBelief>& beliefs, const std::vector<DangerZone>& zones,
                              const WeightVector& weights, const PlannerParams& params, const WorldConfig& cfg,
                              const Vec2& previous_control = Vec2::Zero()) {
  if (assignment_row.size() != beliefs.size())
    throw DimensionError("solve_step: assignment row length does not match belief count");
  std::vector<TargetBelief> assigned;
  for (std::size_t j = 0; j < beliefs.size(); ++j)
    if (assignment_row[j] != 0) assigned.push_back(beliefs[j]);

  const StepProblem problem(robot, assigned, zones, weights, params, cfg);
  const double u_max = cfg.u_max;

  struct Start {
    const char* name;
    Vec2 u;
  };
  std::vector<Start> starts{{"zero", Vec2::Zero()}};
  {
    double best = std::numeric_limits<double>::infinity();
    Vec2 dir = Vec2::Zero();
    for (const auto& p : problem.predicted()) {
      const Vec2 delta = p.position() - robot.position;
      const double d = delta.norm();
      if (d > 0.0 && d < best) {
        best = d;
        dir = delta / d;
      }
    }
    if (best < std::numeric_limits<double>::infinity()) starts.push_back({"toward-target", u_max * dir});
  }
  starts.push_back({"previous", project_to_ball(previous_control, u_max)});

  SolveReport report;
  std::optional<detail::DescentResult> best;
  for (const auto& s : starts) {
    const ObjectiveTerms t = problem.terms(s.u);
    detail::check_finite_terms(t, s.name);
    const double f0 = t.weighted(weights);
    if (std::string_view(s.name) == "zero") report.objective_at_zero = f0;
    auto r = detail::projected_descent(problem, s.u, f0, u_max);
    if (!best || r.f < best->f) best = std::move(r);
  }

  report.control = best->u;
  report.objective_value = best->f;
  report.iterations = best->iterations;
  report.objective_trace = std::move(best->trace);
  report.slacks_sensing = problem.sensing_slacks(report.control);
  report.slacks_comm = problem.comm_slacks(report.control);
  return report;
}

}  // namespace llmtrack
