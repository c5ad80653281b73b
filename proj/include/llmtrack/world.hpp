#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "llmtrack/core.hpp"

namespace llmtrack {

enum class ZoneKind { sensing, communication };

inline std::string_view to_string(ZoneKind k) {
  return k == ZoneKind::sensing ? "sensing" : "communication";
}

inline ZoneKind zone_kind_from_string(std::string_view s) {
  if (s == "sensing") return ZoneKind::sensing;
  if (s == "communication" || s == "comm") return ZoneKind::communication;
  throw ConfigError("unknown zone kind '" + std::string(s) + "'");
}

/// Disk-shaped hazard. Inside it a robot is attacked with per-step probability
/// p_max * (1 - d / radius), where d is the distance to the center.
struct DangerZone {
  ZoneId id = 0;
  ZoneKind kind = ZoneKind::sensing;
  Vec2 center = Vec2::Zero();
  double radius = 1.0;
  double p_max = 0.0;
  int attack_duration = 10;

  void validate() const {
    if (!(radius > 0.0)) throw ConfigError("zone " + std::to_string(id) + ": radius must be > 0");
    if (!(p_max >= 0.0 && p_max <= 1.0))
      throw ConfigError("zone " + std::to_string(id) + ": p_max must lie in [0,1]");
    if (attack_duration < 1)
      throw ConfigError("zone " + std::to_string(id) + ": attack_duration must be >= 1");
  }
};

struct RobotState {
  RobotId id = 0;
  Vec2 position = Vec2::Zero();
  int capacity = 1;
  // Attack of a kind is active at step t iff t < attacked_until.
  std::optional<Step> sensing_attacked_until;
  std::optional<Step> comm_attacked_until;
  std::set<ZoneId> known_zones;

  bool sensing_attacked(Step t) const { return sensing_attacked_until && t < *sensing_attacked_until; }
  bool comm_attacked(Step t) const { return comm_attacked_until && t < *comm_attacked_until; }
  bool attacked(ZoneKind k, Step t) const {
    return k == ZoneKind::sensing ? sensing_attacked(t) : comm_attacked(t);
  }
};

struct TargetTruth {
  TargetId id = 0;
  Vec2 position = Vec2::Zero();
  Vec2 velocity = Vec2::Zero();
};

struct WorldConfig {
  Rect workspace;
  double dt = 0.1;
  double u_max = 1.0;         // bound on ||control||_2, m/s
  std::uint64_t rng_seed = 0;
  double target_noise_std = 0.0;  // per-axis position noise per step, meters; 0 disables

  void validate() const {
    if (!(dt > 0.0)) throw ConfigError("dt must be > 0");
    if (!(u_max > 0.0)) throw ConfigError("u_max must be > 0");
    if (workspace.degenerate()) throw ConfigError("workspace rectangle is degenerate");
    if (target_noise_std < 0.0) throw ConfigError("target_noise_std must be >= 0");
  }
};

struct AttackEvent {
  Step step = 0;
  RobotId robot = 0;
  ZoneId zone = 0;
  ZoneKind kind = ZoneKind::sensing;
  Step until = 0;

  friend bool operator==(const AttackEvent&, const AttackEvent&) = default;
};

/// Single-integrator step x' = x + u dt, clamped to the workspace.
inline RobotState step_dynamics(const RobotState& state, const Vec2& control, const WorldConfig& cfg) {
  RobotState next = state;
  next.position = cfg.workspace.clamp(state.position + control * cfg.dt);
  return next;
}

inline Vec2 clamp_control(const Vec2& u, double u_max) {
  const double n = u.norm();
  return n > u_max ? Vec2(u * (u_max / n)) : u;
}

namespace detail {

inline void reflect_axis(double& x, double& v, double lo, double hi) {
  if (x > hi) {
    x = 2.0 * hi - x;
    v = -v;
  } else if (x < lo) {
    x = 2.0 * lo - x;
    v = -v;
  }
  // A displacement larger than the workspace width would still be outside.
  x = std::clamp(x, lo, hi);
}

}  // namespace detail

/// Constant-velocity target motion with optional position noise and
/// reflection at the workspace boundary.
inline std::vector<TargetTruth> step_targets(const std::vector<TargetTruth>& targets, const WorldConfig& cfg,
                                             RngStream& rng) {
  std::vector<TargetTruth> out = targets;
  for (auto& t : out) {
    Vec2 p = t.position + t.velocity * cfg.dt;
    if (cfg.target_noise_std > 0.0) {
      p.x() += cfg.target_noise_std * rng.normal();
      p.y() += cfg.target_noise_std * rng.normal();
    }
    detail::reflect_axis(p.x(), t.velocity.x(), cfg.workspace.min.x(), cfg.workspace.max.x());
    detail::reflect_axis(p.y(), t.velocity.y(), cfg.workspace.min.y(), cfg.workspace.max.y());
    t.position = p;
  }
  return out;
}

/// (radius + margin)^2 - |position - center|^2. Positive inside the inflated
/// disk, zero on its boundary, negative outside.
inline double zone_excess(const Vec2& position, const DangerZone& zone, double margin) {
  const double r = zone.radius + margin;
  return r * r - (position - zone.center).squaredNorm();
}

inline double attack_probability(const Vec2& position, const DangerZone& zone) {
  const double d = (position - zone.center).norm();
  if (d >= zone.radius) return 0.0;
  return zone.p_max * (1.0 - d / zone.radius);
}

/// Clears attacks whose deadline has been reached at step t.
inline void clear_expired_attacks(std::vector<RobotState>& robots, Step t) {
  for (auto& r : robots) {
    if (r.sensing_attacked_until && *r.sensing_attacked_until <= t) r.sensing_attacked_until.reset();
    if (r.comm_attacked_until && *r.comm_attacked_until <= t) r.comm_attacked_until.reset();
  }
}

/// Draws one uniform per (robot, zone) pair in ascending (robot id, zone id)
/// order and starts attacks on robots inside zones they are not already
/// attacked by. Mutates the attack deadlines of `robots`.
inline std::vector<AttackEvent> sample_attacks(std::vector<RobotState>& robots, const std::vector<DangerZone>& zones,
                                               Step step, RngStream& rng) {
  std::vector<std::size_t> robot_order(robots.size());
  for (std::size_t i = 0; i < robots.size(); ++i) robot_order[i] = i;
  std::sort(robot_order.begin(), robot_order.end(),
            [&](std::size_t a, std::size_t b) { return robots[a].id < robots[b].id; });
  std::vector<const DangerZone*> zone_order;
  zone_order.reserve(zones.size());
  for (const auto& z : zones) zone_order.push_back(&z);
  std::sort(zone_order.begin(), zone_order.end(), [](auto* a, auto* b) { return a->id < b->id; });

  std::vector<AttackEvent> events;
  for (std::size_t ri : robot_order) {
    RobotState& robot = robots[ri];
    for (const DangerZone* zone : zone_order) {
      const double u = rng.uniform();
      if (robot.attacked(zone->kind, step)) continue;
      const double p = attack_probability(robot.position, *zone);
      if (!(u < p)) continue;
      const Step until = step + zone->attack_duration;
      if (zone->kind == ZoneKind::sensing)
        robot.sensing_attacked_until = until;
      else
        robot.comm_attacked_until = until;
      events.push_back({step, robot.id, zone->id, zone->kind, until});
    }
  }
  return events;
}

/// Ground-truth world. All mutation happens in step().
class World {
 public:
  World(WorldConfig cfg, std::vector<RobotState> robots, std::vector<TargetTruth> targets,
        std::vector<DangerZone> zones)
      : cfg_(std::move(cfg)),
        robots_(std::move(robots)),
        targets_(std::move(targets)),
        zones_(std::move(zones)),
        attack_rng_(RngStream::split(cfg_.rng_seed, kAttackStream)),
        target_rng_(RngStream::split(cfg_.rng_seed, kTargetNoiseStream)) {
    cfg_.validate();
    for (const auto& z : zones_) z.validate();
    for (const auto& r : robots_) {
      if (r.capacity < 1) throw ConfigError("robot " + std::to_string(r.id) + ": capacity must be >= 1");
      if (!cfg_.workspace.contains(r.position))
        throw ConfigError("robot " + std::to_string(r.id) + ": start outside workspace");
    }
    for (const auto& t : targets_)
      if (!cfg_.workspace.contains(t.position))
        throw ConfigError("target " + std::to_string(t.id) + ": start outside workspace");
  }

  /// Applies one control per robot (same order as robots()), advances the
  /// targets, then samples attacks at the new step index.
  std::vector<AttackEvent> step(const std::vector<Vec2>& controls) {
    if (controls.size() != robots_.size()) throw DimensionError("one control per robot required");
    ++step_;
    for (std::size_t i = 0; i < robots_.size(); ++i)
      robots_[i] = step_dynamics(robots_[i], clamp_control(controls[i], cfg_.u_max), cfg_);
    targets_ = step_targets(targets_, cfg_, target_rng_);
    clear_expired_attacks(robots_, step_);
    return sample_attacks(robots_, zones_, step_, attack_rng_);
  }

  Step current_step() const { return step_; }
  const WorldConfig& config() const { return cfg_; }
  const std::vector<RobotState>& robots() const { return robots_; }
  const std::vector<TargetTruth>& targets() const { return targets_; }
  const std::vector<DangerZone>& zones() const { return zones_; }

 private:
  WorldConfig cfg_;
  std::vector<RobotState> robots_;
  std::vector<TargetTruth> targets_;
  std::vector<DangerZone> zones_;
  RngStream attack_rng_;
  RngStream target_rng_;
  Step step_ = 0;
};

}  // namespace llmtrack
