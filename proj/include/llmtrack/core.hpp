#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace llmtrack {

using Vec2 = Eigen::Vector2d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat4 = Eigen::Matrix4d;

using RobotId = int;
using TargetId = int;
using ZoneId = int;
using Step = std::int64_t;

// Error hierarchy. Every failure the library reports derives from Error.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A floating-point computation became non-finite or ill-conditioned.
struct NumericError : Error {
  using Error::Error;
};

// A caller violated a documented precondition.
struct PreconditionError : Error {
  using Error::Error;
};

// Shapes of inputs disagree (e.g. assignment rows vs. capacity vector).
struct DimensionError : Error {
  using Error::Error;
};

// A scenario, script or CLI argument failed validation.
struct ConfigError : Error {
  using Error::Error;
};

// Untrusted text (LLM output) did not match the expected format.
class FormatError : public Error {
 public:
  FormatError(std::string reason, std::string offending_line = {})
      : Error(offending_line.empty() ? reason : reason + ": \"" + offending_line + "\""),
        reason_(std::move(reason)),
        line_(std::move(offending_line)) {}

  const std::string& reason() const noexcept { return reason_; }
  const std::string& offending_line() const noexcept { return line_; }

 private:
  std::string reason_;
  std::string line_;
};

/// Axis-aligned rectangle [min.x, max.x] x [min.y, max.y].
struct Rect {
  Vec2 min{-10.0, -10.0};
  Vec2 max{10.0, 10.0};

  bool contains(const Vec2& p) const {
    return p.x() >= min.x() && p.x() <= max.x() && p.y() >= min.y() && p.y() <= max.y();
  }
  Vec2 clamp(const Vec2& p) const { return p.cwiseMax(min).cwiseMin(max); }
  bool degenerate() const { return !(max.x() > min.x() && max.y() > min.y()); }
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Seeded random stream. Uniform and normal draws are computed here rather
/// than through <random> distributions so sequences do not depend on the
/// standard library implementation.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed = 0) : engine_(seed) {}

  /// Independent child stream for one concern (attacks, target noise, ...).
  static RngStream split(std::uint64_t master_seed, std::uint64_t tag) {
    return RngStream(splitmix64(master_seed ^ splitmix64(tag)));
  }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Integer uniform in [lo, hi].
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<std::int64_t>(engine_() % span);
  }

  /// Standard normal via Box-Muller (one value per call, the pair's twin is cached).
  double normal() {
    if (cached_) {
      double v = *cached_;
      cached_.reset();
      return v;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    cached_ = r * std::sin(theta);
    return r * std::cos(theta);
  }

 private:
  std::mt19937_64 engine_;
  std::optional<double> cached_;
};

// Stream tags for RngStream::split.
inline constexpr std::uint64_t kAttackStream = 1;
inline constexpr std::uint64_t kTargetNoiseStream = 2;
inline constexpr std::uint64_t kMeasurementStream = 3;
inline constexpr std::uint64_t kBackendStream = 4;
inline constexpr std::uint64_t kSchedulerStream = 5;

}  // namespace llmtrack
