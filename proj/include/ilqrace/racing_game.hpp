#pragma once

#include "ilqrace/ilq_core.hpp"
#include "ilqrace/racing.hpp"

#include <array>
#include <cstddef>
#include <stdexcept>
#include <utility>
#include <vector>

namespace ilqrace::racing {

struct RacingPlayer {
  CostParams cost;
  GGDiamond gg;
};

/// Positions of a vehicle that is not part of the game state, one entry per
/// stage 0..K.
struct PredictedPath {
  std::vector<double> s;
  std::vector<double> n;
};

/// Racing game over the players carried in the state. Vehicles given as
/// predicted paths enter the collision term as time-varying parameters and
/// their terminal progress as a constant.
class RacingGame {
 public:
  RacingGame(Track track, std::vector<RacingPlayer> players, std::size_t horizon, double dt,
             std::vector<PredictedPath> exogenous = {})
      : track_(std::move(track)),
        players_(std::move(players)),
        exogenous_(std::move(exogenous)),
        horizon_(horizon),
        dt_(dt) {
    if (players_.empty()) throw std::invalid_argument("RacingGame: no players");
    if (horizon_ == 0) throw std::invalid_argument("RacingGame: empty horizon");
    if (!(dt_ > 0.0)) throw std::invalid_argument("RacingGame: dt must be positive");
    for (const auto& p : exogenous_) {
      if (p.s.size() != horizon_ + 1 || p.n.size() != horizon_ + 1)
        throw std::invalid_argument("RacingGame: predicted path length must be horizon + 1");
    }
    const std::size_t N = players_.size();
    opponents_.resize(N);
    opponent_offsets_.resize(N);
    for (std::size_t i = 0; i < N; ++i) {
      for (std::size_t j = 0; j < N; ++j) {
        if (j == i) continue;
        OpponentRef ref;
        ref.in_state = true;
        ref.offset = offset(j);
        opponents_[i].push_back(ref);
        opponent_offsets_[i].push_back(offset(j));
      }
    }
  }

  std::size_t num_players() const { return players_.size(); }
  std::size_t horizon() const { return horizon_; }
  Eigen::Index state_dim() const { return static_cast<Eigen::Index>(players_.size()) * kStateDim; }
  Eigen::Index input_dim() const { return kInputDim; }
  double time_step() const { return dt_; }

  static Eigen::Index offset(std::size_t player) {
    return static_cast<Eigen::Index>(player) * kStateDim;
  }

  const Track& track() const { return track_; }
  const std::vector<RacingPlayer>& players() const { return players_; }
  const std::vector<PredictedPath>& exogenous() const { return exogenous_; }

  Vector vector_field(const Vector& x, const PlayerVectors& us) const {
    return joint_dynamics(x, us, track_);
  }

  DynamicsJacobians vector_field_jacobians(const Vector& x, const PlayerVectors& us) const {
    JointJacobians J = joint_jacobians(x, us, track_);
    return {std::move(J.dfdx), std::move(J.dfdu)};
  }

  CostExpansion stage_cost(std::size_t i, std::size_t k, const Vector& x, const Vector& u) const {
    if (exogenous_.empty()) {
      return racing::stage_cost(x, offset(i), u, opponents_[i], track_, players_[i].cost,
                                players_[i].gg);
    }
    std::vector<OpponentRef> opps = opponents_[i];
    for (const auto& p : exogenous_) {
      OpponentRef ref;
      ref.in_state = false;
      ref.s = p.s[k];
      ref.n = p.n[k];
      opps.push_back(ref);
    }
    return racing::stage_cost(x, offset(i), u, opps, track_, players_[i].cost, players_[i].gg);
  }

  CostExpansion terminal_cost(std::size_t i, const Vector& x) const {
    double fixed = 0.0;
    for (const auto& p : exogenous_) fixed += p.s.back();
    return racing::terminal_cost(x, offset(i), opponent_offsets_[i], fixed, players_[i].cost);
  }

  std::array<Eigen::Index, 2> position_indices(std::size_t i) const {
    return {offset(i) + kS, offset(i) + kN};
  }

 private:
  Track track_;
  std::vector<RacingPlayer> players_;
  std::vector<PredictedPath> exogenous_;
  std::size_t horizon_;
  double dt_;
  std::vector<std::vector<OpponentRef>> opponents_;
  std::vector<std::vector<Eigen::Index>> opponent_offsets_;
};

static_assert(DifferentiableGame<RacingGame>);

}  // namespace ilqrace::racing
