#ifndef LEARNSAM_ENVS_HPP_
#define LEARNSAM_ENVS_HPP_

#include <cmath>
#include <set>
#include <utility>
#include <vector>

#include "learnsam/mdp.hpp"

namespace learnsam {

/// N x N grid, start (0,0), goal (N-1,N-1), sparse +1 reward on arrival.
/// Actions: 0=right, 1=up, 2=left, 3=down. Moves into walls or off the
/// board leave the state unchanged.
class GridWorld : public Environment {
 public:
  static constexpr int kRight = 0;
  static constexpr int kUp = 1;
  static constexpr int kLeft = 2;
  static constexpr int kDown = 3;

  explicit GridWorld(int n, std::vector<std::pair<int, int>> walls = {},
                     int horizon = -1, double gamma = 0.99)
      : n_(n), walls_(walls.begin(), walls.end()) {
    spec_.id = "gridworld-" + std::to_string(n);
    spec_.state_dim = 2;
    spec_.action_kind = ActionKind::discrete;
    spec_.action_dim_or_count = 4;
    spec_.horizon = horizon > 0 ? horizon : 4 * n;
    spec_.gamma = gamma;
    spec_.state_low = Vec::Zero(2);
    spec_.state_high = Vec::Constant(2, static_cast<double>(n - 1));
  }

  const EnvironmentSpec& spec() const override { return spec_; }

  StateVector reset(Rng&) const override {
    Vec s(2);
    s << 0.0, 0.0;
    return s;
  }

  Transition step(const StateVector& s, const ActionValue& a) const override {
    if (!a.is_discrete() || a.index >= 4)
      throw InvalidActionError("gridworld action index out of range");
    int x = static_cast<int>(std::lround(s[0]));
    int y = static_cast<int>(std::lround(s[1]));
    int nx = x, ny = y;
    switch (a.index) {
      case kRight: ++nx; break;
      case kUp: ++ny; break;
      case kLeft: --nx; break;
      case kDown: --ny; break;
    }
    if (nx < 0 || nx >= n_ || ny < 0 || ny >= n_ || walls_.count({nx, ny})) {
      nx = x;
      ny = y;
    }
    Transition tr;
    tr.state = s;
    tr.action = a;
    tr.next_state = Vec(2);
    tr.next_state << static_cast<double>(nx), static_cast<double>(ny);
    bool goal = (nx == n_ - 1 && ny == n_ - 1);
    tr.reward = goal ? 1.0 : 0.0;
    tr.done = goal;
    return tr;
  }

  int n() const { return n_; }
  bool is_goal(const StateVector& s) const {
    return std::lround(s[0]) == n_ - 1 && std::lround(s[1]) == n_ - 1;
  }

 private:
  int n_;
  std::set<std::pair<int, int>> walls_;
  EnvironmentSpec spec_;
};

/// Point in [-1,1]^2 with first-order dynamics: the command a in [-1,1]^2
/// moves the state by step_size * a (commands outside the box saturate, the
/// way a real actuator would, so any finite vector is a legal input). The
/// goal is a disc of radius 0.1 at (0.8, 0.8); reaching it pays +1 and ends
/// the episode. Start states are uniform on [-0.1, 0.1]^2.
class PointMass : public Environment {
 public:
  explicit PointMass(double step_size = 0.2, int horizon = 100,
                     double gamma = 0.99)
      : step_size_(step_size) {
    spec_.id = "pointmass";
    spec_.state_dim = 2;
    spec_.action_kind = ActionKind::continuous;
    spec_.action_dim_or_count = 2;
    spec_.horizon = horizon;
    spec_.gamma = gamma;
    spec_.state_low = Vec::Constant(2, -1.0);
    spec_.state_high = Vec::Constant(2, 1.0);
  }

  const EnvironmentSpec& spec() const override { return spec_; }

  StateVector reset(Rng& rng) const override {
    Vec s(2);
    s << rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1);
    return s;
  }

  Transition step(const StateVector& s, const ActionValue& a) const override {
    if (a.is_discrete() || a.vector.size() != 2 || !all_finite(a.vector))
      throw InvalidActionError("pointmass expects a finite 2-d command");
    Vec cmd = a.vector.cwiseMax(-1.0).cwiseMin(1.0);
    Transition tr;
    tr.state = s;
    tr.action = a;
    tr.next_state = (s + step_size_ * cmd).cwiseMax(-1.0).cwiseMin(1.0);
    bool goal = (tr.next_state - goal_center()).norm() <= goal_radius_;
    tr.reward = goal ? 1.0 : 0.0;
    tr.done = goal;
    return tr;
  }

  static Vec goal_center() {
    Vec g(2);
    g << 0.8, 0.8;
    return g;
  }
  double goal_radius() const { return goal_radius_; }
  double step_size() const { return step_size_; }

 private:
  double step_size_;
  double goal_radius_ = 0.1;
  EnvironmentSpec spec_;
};

}  // namespace learnsam

#endif  // LEARNSAM_ENVS_HPP_
