#pragma once

#include <algorithm>
#include <numeric>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "llmtrack/core.hpp"
#include "llmtrack/estimation.hpp"
#include "llmtrack/world.hpp"

namespace llmtrack {

/// M x N binary matrix; entry (i, j) = 1 means robot i tracks target j.
/// Rows follow the robot roster order, columns the target roster order.
struct Assignment {
  Eigen::MatrixXi matrix;
  Step epoch = 0;

  Assignment() = default;
  Assignment(Eigen::MatrixXi m, Step e = 0) : matrix(std::move(m)), epoch(e) {}

  static Assignment zeros(int robots, int targets) { return Assignment(Eigen::MatrixXi::Zero(robots, targets)); }

  int robots() const { return static_cast<int>(matrix.rows()); }
  int targets() const { return static_cast<int>(matrix.cols()); }

  std::vector<int> row(int i) const {
    std::vector<int> r(static_cast<std::size_t>(matrix.cols()));
    for (int j = 0; j < matrix.cols(); ++j) r[static_cast<std::size_t>(j)] = matrix(i, j);
    return r;
  }

  friend bool operator==(const Assignment& a, const Assignment& b) {
    return a.matrix.rows() == b.matrix.rows() && a.matrix.cols() == b.matrix.cols() && a.matrix == b.matrix;
  }
};

/// Constraint-violation score: capacity overruns plus uncovered targets.
inline int verify_assignment(const Assignment& a, const std::vector<int>& capacities) {
  if (static_cast<std::size_t>(a.robots()) != capacities.size())
    throw DimensionError("verify_assignment: " + std::to_string(a.robots()) + " rows but " +
                         std::to_string(capacities.size()) + " capacities");
  const Eigen::VectorXi load = a.matrix.rowwise().sum();
  const Eigen::VectorXi cover = a.matrix.colwise().sum().transpose();
  int beta = 0;
  for (int i = 0; i < load.size(); ++i) beta += std::max(0, load[i] - capacities[static_cast<std::size_t>(i)]);
  for (int j = 0; j < cover.size(); ++j) beta += std::max(0, 1 - cover[j]);
  return beta;
}

struct AcceptDecision {
  bool accepted = false;
  int beta = 0;
  std::string reason;

  explicit operator bool() const { return accepted; }
};

/// Accepts iff beta <= max(0, N - sum(c)). When the team cannot cover every
/// target, the unavoidable coverage gap is tolerated.
inline AcceptDecision accept_assignment(const Assignment& a, const std::vector<int>& capacities) {
  const int beta = verify_assignment(a, capacities);
  const int total = std::accumulate(capacities.begin(), capacities.end(), 0);
  const int tolerance = std::max(0, a.targets() - total);
  if (beta <= tolerance) return {true, beta, {}};
  return {false, beta,
          "constraint violation beta=" + std::to_string(beta) + " exceeds tolerance " + std::to_string(tolerance)};
}

/// Line format: "Drone <id> will track Target <id> and Target <id>".
inline std::string render_assignment(const Assignment& a, const std::vector<RobotId>& robot_ids,
                                     const std::vector<TargetId>& target_ids) {
  std::ostringstream os;
  for (int i = 0; i < a.robots(); ++i) {
    os << "Drone " << robot_ids[static_cast<std::size_t>(i)] << " will track ";
    bool first = true;
    for (int j = 0; j < a.targets(); ++j) {
      if (a.matrix(i, j) == 0) continue;
      os << (first ? "" : " and ") << "Target " << target_ids[static_cast<std::size_t>(j)];
      first = false;
    }
    if (first) os << "no targets";
    os << '\n';
  }
  return os.str();
}

/// Lenient parser for assignment text. Every line mentioning "Drone <id>"
/// assigns all "Target <id>" mentions on that line to that drone; other lines
/// are ignored. Throws FormatError on unknown ids or missing drones.
inline Assignment parse_assignment(const std::string& text, const std::vector<RobotId>& robot_ids,
                                   const std::vector<TargetId>& target_ids) {
  static const std::regex drone_re(R"(\bdrone\s*#?\s*(\d+))", std::regex::icase);
  static const std::regex target_re(R"(\btarget\s*#?\s*(\d+))", std::regex::icase);

  const auto index_of = [](const auto& ids, int id) -> int {
    auto it = std::find(ids.begin(), ids.end(), id);
    return it == ids.end() ? -1 : static_cast<int>(it - ids.begin());
  };

  Assignment a = Assignment::zeros(static_cast<int>(robot_ids.size()), static_cast<int>(target_ids.size()));
  std::vector<bool> seen(robot_ids.size(), false);

  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    std::vector<int> drones;
    for (auto it = std::sregex_iterator(line.begin(), line.end(), drone_re); it != std::sregex_iterator(); ++it) {
      const int id = std::stoi((*it)[1].str());
      const int idx = index_of(robot_ids, id);
      if (idx < 0) throw FormatError("unknown drone id " + std::to_string(id), line);
      drones.push_back(idx);
    }
    if (drones.empty()) continue;
    std::vector<int> targets;
    for (auto it = std::sregex_iterator(line.begin(), line.end(), target_re); it != std::sregex_iterator(); ++it) {
      const int id = std::stoi((*it)[1].str());
      const int idx = index_of(target_ids, id);
      if (idx < 0) throw FormatError("unknown target id " + std::to_string(id), line);
      targets.push_back(idx);
    }
    for (int i : drones) {
      seen[static_cast<std::size_t>(i)] = true;
      for (int j : targets) a.matrix(i, j) = 1;
    }
  }

  for (std::size_t i = 0; i < robot_ids.size(); ++i) {
    if (seen[i]) continue;
    std::string first = text.substr(0, text.find('\n'));
    throw FormatError("no assignment line for drone " + std::to_string(robot_ids[i]), first);
  }
  return a;
}

/// Deterministic fallback: targets by descending belief trace (ties by id),
/// each to the nearest robot with spare capacity (ties by id). Target
/// positions are the belief means advanced by `dt`.
inline Assignment greedy_assign(const std::vector<TargetBelief>& beliefs, const std::vector<RobotState>& robots,
                                const std::vector<int>& capacities, double dt = 0.0) {
  if (capacities.size() != robots.size()) throw DimensionError("greedy_assign: one capacity per robot required");
  Assignment a = Assignment::zeros(static_cast<int>(robots.size()), static_cast<int>(beliefs.size()));

  std::vector<std::size_t> order(beliefs.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    const double tx = beliefs[x].trace(), ty = beliefs[y].trace();
    return tx != ty ? tx > ty : beliefs[x].target_id < beliefs[y].target_id;
  });

  std::vector<int> remaining = capacities;
  for (std::size_t j : order) {
    const Vec2 p = beliefs[j].position() + dt * beliefs[j].mean.tail<2>();
    int chosen = -1;
    double best = 0.0;
    for (std::size_t i = 0; i < robots.size(); ++i) {
      if (remaining[i] <= 0) continue;
      const double d = (robots[i].position - p).norm();
      if (chosen < 0 || d < best || (d == best && robots[i].id < robots[static_cast<std::size_t>(chosen)].id)) {
        chosen = static_cast<int>(i);
        best = d;
      }
    }
    if (chosen < 0) break;
    a.matrix(chosen, static_cast<int>(j)) = 1;
    --remaining[static_cast<std::size_t>(chosen)];
  }
  return a;
}

}  // namespace llmtrack
