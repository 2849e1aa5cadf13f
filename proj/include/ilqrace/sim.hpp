#pragma once

// Moving-horizon closed-loop simulation of racing planners.
//
// Every planner re-solves its own problem from the current joint state at the
// replan cadence; nothing is shared between planners. All players then apply
// the first replan interval of their plans through the forward-Euler model.

#include "ilqrace/ilq_core.hpp"
#include "ilqrace/racing.hpp"
#include "ilqrace/racing_game.hpp"

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace ilqrace::sim {

using racing::CostParams;
using racing::GGDiamond;
using racing::PredictedPath;
using racing::RacingGame;
using racing::RacingPlayer;
using racing::Track;
using racing::VehicleState;

enum class PlannerKind { Sequential, GameOpenLoop, GameFeedback };

inline const char* to_string(PlannerKind k) {
  switch (k) {
    case PlannerKind::Sequential: return "sequential";
    case PlannerKind::GameOpenLoop: return "game-open-loop";
    case PlannerKind::GameFeedback: return "game-feedback";
  }
  return "?";
}

inline std::optional<PlannerKind> planner_from_string(const std::string& s) {
  if (s == "sequential") return PlannerKind::Sequential;
  if (s == "game-open-loop") return PlannerKind::GameOpenLoop;
  if (s == "game-feedback") return PlannerKind::GameFeedback;
  return std::nullopt;
}

struct PlannerSpec {
  PlannerKind kind = PlannerKind::Sequential;
  SolverParams solver;

  /// Equilibrium concept the planner's solver runs with. The sequential
  /// baseline is single-player, where both concepts share one trajectory; it
  /// runs the open-loop update.
  EquilibriumConcept mode() const {
    switch (kind) {
      case PlannerKind::GameFeedback: return EquilibriumConcept::Feedback;
      case PlannerKind::GameOpenLoop:
      case PlannerKind::Sequential: return EquilibriumConcept::OpenLoop;
    }
    return EquilibriumConcept::OpenLoop;
  }
};

struct ScenarioPlayer {
  VehicleState initial;
  PlannerSpec planner;
  CostParams cost;
  GGDiamond gg;
};

struct ScenarioConfig {
  Track track = Track::straight();
  std::vector<ScenarioPlayer> players;
  std::size_t horizon = 40;
  double dt = 0.1;
  double replan_interval = 0.1;
  double duration = 20.0;
  double overtake_gap = 20.0;
  double overtake_margin = 5.0;
  std::size_t target = 0;     // leading vehicle (ego)
  std::size_t overtaker = 1;  // trailing vehicle (opponent)

  std::size_t replan_steps() const {
    return static_cast<std::size_t>(std::llround(replan_interval / dt));
  }

  void validate() const {
    track.validate();
    if (players.empty()) throw ConfigError("scenario: no players");
    if (!(dt > 0.0)) throw ConfigError("scenario: dt must be positive");
    if (horizon == 0) throw ConfigError("scenario: horizon must be positive");
    const double ratio = replan_interval / dt;
    if (!(replan_interval > 0.0) || std::abs(ratio - std::round(ratio)) > 1e-9 || ratio < 1.0)
      throw ConfigError("scenario: replan interval must be a positive integer multiple of dt");
    if (replan_steps() > horizon) throw ConfigError("scenario: replan interval exceeds horizon");
    if (!(duration > 0.0)) throw ConfigError("scenario: duration must be positive");
    if (overtake_margin < 0.0) throw ConfigError("scenario: overtake margin must be >= 0");
    if (players.size() >= 2 && (target >= players.size() || overtaker >= players.size() ||
                                target == overtaker))
      throw ConfigError("scenario: invalid overtake pair");
    for (const auto& p : players) {
      p.cost.validate();
      p.gg.validate();
      p.planner.solver.validate();
      if (!(p.initial.V > racing::kMinSpeed)) throw ConfigError("scenario: initial speed too low");
      if (!(1.0 - p.initial.n * track.curvature.value(p.initial.s) > racing::kMinChartScale))
        throw ConfigError("scenario: initial position outside chart");
    }
  }

  Vector initial_state() const {
    Vector x(static_cast<Eigen::Index>(players.size()) * racing::kStateDim);
    for (std::size_t i = 0; i < players.size(); ++i)
      x.segment(RacingGame::offset(i), racing::kStateDim) = players[i].initial.to_vector();
    return x;
  }

  std::vector<RacingPlayer> racing_players() const {
    std::vector<RacingPlayer> out;
    for (const auto& p : players) out.push_back({p.cost, p.gg});
    return out;
  }
};

struct ReplanRecord {
  double t = 0.0;
  std::size_t player = 0;
  int iterations = 0;
  bool converged = false;
  bool failed = false;
  std::string error;
};

struct CollisionEvent {
  double t = 0.0;
  std::size_t first = 0;
  std::size_t second = 0;
};

struct OvertakeEvent {
  double t = 0.0;
  std::size_t overtaker = 0;
  std::size_t target = 0;
};

enum class Outcome { Completed, Collision, EvaluationFailure };

inline const char* to_string(Outcome o) {
  switch (o) {
    case Outcome::Completed: return "completed";
    case Outcome::Collision: return "collision";
    case Outcome::EvaluationFailure: return "evaluation-failure";
  }
  return "?";
}

struct SimLog {
  std::size_t num_players = 0;
  double dt = 0.1;
  std::uint64_t seed = 0;
  std::vector<double> times;           // t_0..t_T
  std::vector<Vector> states;          // joint states at times
  std::vector<PlayerVectors> inputs;   // applied on [t_k, t_{k+1}), size T
  std::vector<ReplanRecord> replans;
  std::vector<CollisionEvent> collisions;
  std::vector<OvertakeEvent> overtakes;
  Outcome outcome = Outcome::Completed;
  std::string note;

  double player_value(std::size_t k, std::size_t player, Eigen::Index field) const {
    return states[k](RacingGame::offset(player) + field);
  }
};

/// Constant-speed, constant-heading straight-line prediction of another
/// vehicle's position over stages 0..K. Accelerations are ignored.
inline PredictedPath predict_constant_velocity(const VehicleState& state, std::size_t horizon,
                                               double dt) {
  PredictedPath p;
  p.s.resize(horizon + 1);
  p.n.resize(horizon + 1);
  const double vs = state.V * std::cos(state.chi);
  const double vn = state.V * std::sin(state.chi);
  for (std::size_t k = 0; k <= horizon; ++k) {
    const double t = static_cast<double>(k) * dt;
    p.s[k] = state.s + vs * t;
    p.n[k] = state.n + vn * t;
  }
  return p;
}

/// Footprint used for collision checks: axis-aligned in track coordinates.
struct Footprint {
  double length = 5.0;
  double width = 2.0;
};

/// First colliding pair (i < j) whose footprints overlap, if any. Two
/// footprints overlap iff |ds| < (l_i + l_j)/2 and |dn| < (w_i + w_j)/2.
inline std::optional<std::pair<std::size_t, std::size_t>> detect_collision(
    const Vector& x, const std::vector<Footprint>& geometry) {
  for (std::size_t i = 0; i < geometry.size(); ++i) {
    for (std::size_t j = i + 1; j < geometry.size(); ++j) {
      const double ds = x(RacingGame::offset(i) + racing::kS) - x(RacingGame::offset(j) + racing::kS);
      const double dn = x(RacingGame::offset(i) + racing::kN) - x(RacingGame::offset(j) + racing::kN);
      const double lim_s = 0.5 * (geometry[i].length + geometry[j].length);
      const double lim_n = 0.5 * (geometry[i].width + geometry[j].width);
      if (std::abs(ds) < lim_s && std::abs(dn) < lim_n) return std::make_pair(i, j);
    }
  }
  return std::nullopt;
}

inline std::vector<Footprint> footprints(const ScenarioConfig& sc) {
  std::vector<Footprint> g;
  for (const auto& p : sc.players) g.push_back({p.cost.l_veh, p.cost.w_veh});
  return g;
}

/// First time the overtaker leads the target by at least `gap`, linearly
/// interpolated between logged samples. Zero if it already holds at t_0.
inline std::optional<double> overtaking_time(const SimLog& log, std::size_t overtaker,
                                             std::size_t target, double gap) {
  double prev_t = 0.0;
  double prev_lead = 0.0;
  for (std::size_t k = 0; k < log.states.size(); ++k) {
    const double lead =
        log.player_value(k, overtaker, racing::kS) - log.player_value(k, target, racing::kS);
    const double t = log.times[k];
    if (lead >= gap) {
      if (k == 0) return t;
      const double frac = (gap - prev_lead) / (lead - prev_lead);
      return prev_t + frac * (t - prev_t);
    }
    prev_t = t;
    prev_lead = lead;
  }
  return std::nullopt;
}

struct PlanOutput {
  std::vector<Vector> inputs;                 // planning player's inputs, K entries
  std::vector<PlayerVectors> warm_start;      // full solution for the next warm start
  std::vector<Vector> planned_states;         // planning player's predicted own states
  int iterations = 0;
  bool converged = false;
};

/// Shifts a stored solution forward by `steps` stages and pads the tail with
/// zero jerk.
inline std::vector<PlayerVectors> shift_warm_start(const std::vector<PlayerVectors>& prev,
                                                   std::size_t steps, Eigen::Index m) {
  std::vector<PlayerVectors> out(prev.size());
  for (std::size_t k = 0; k < prev.size(); ++k) {
    if (k + steps < prev.size()) {
      out[k] = prev[k + steps];
    } else {
      out[k] = PlayerVectors(prev.empty() ? 0 : prev[0].size(), Vector::Zero(m));
    }
  }
  return out;
}

/// Builds the problem the given player's planner solves at joint state x.
inline RacingGame planner_game(std::size_t player, const Vector& x, const PlannerSpec& spec,
                               const ScenarioConfig& sc) {
  if (spec.kind == PlannerKind::Sequential) {
    std::vector<PredictedPath> preds;
    for (std::size_t j = 0; j < sc.players.size(); ++j) {
      if (j == player) continue;
      const auto st = VehicleState::from_vector(x.segment(RacingGame::offset(j), racing::kStateDim));
      preds.push_back(predict_constant_velocity(st, sc.horizon, sc.dt));
    }
    return RacingGame(sc.track, {{sc.players[player].cost, sc.players[player].gg}}, sc.horizon,
                      sc.dt, std::move(preds));
  }
  return RacingGame(sc.track, sc.racing_players(), sc.horizon, sc.dt);
}

/// The planner's initial state: only its own block for the sequential
/// baseline, the full joint state for game planners.
inline Vector planner_state(std::size_t player, const Vector& x, const PlannerSpec& spec) {
  if (spec.kind == PlannerKind::Sequential)
    return x.segment(RacingGame::offset(player), racing::kStateDim);
  return x;
}

/// One planning step of `player`. Solver exceptions propagate; run_scenario
/// decides how to recover.
inline PlanOutput plan_step(std::size_t player, const Vector& x,
                            const std::optional<std::vector<PlayerVectors>>& warm_start,
                            const PlannerSpec& spec, const ScenarioConfig& sc) {
  const RacingGame game = planner_game(player, x, spec, sc);
  const Vector x0 = planner_state(player, x, spec);
  SolverParams params = spec.solver;
  params.mode = spec.mode();
  std::optional<std::vector<PlayerVectors>> ws;
  if (warm_start && warm_start->size() == game.horizon() && !warm_start->empty() &&
      (*warm_start)[0].size() == game.num_players())
    ws = warm_start;
  SolveResult res = solve(game, x0, ws, params);

  const std::size_t own = spec.kind == PlannerKind::Sequential ? 0 : player;
  PlanOutput out;
  out.iterations = res.iterations;
  out.converged = res.converged;
  out.inputs.reserve(game.horizon());
  for (std::size_t k = 0; k < game.horizon(); ++k) out.inputs.push_back(res.op.inputs[k][own]);
  for (const auto& s : res.op.states)
    out.planned_states.push_back(s.segment(RacingGame::offset(own), racing::kStateDim));
  out.warm_start = std::move(res.op.inputs);
  return out;
}

/// Closed-loop run. Ends at the duration limit, on collision, or
/// overtake_margin seconds after the overtake completes.
inline SimLog run_scenario(const ScenarioConfig& sc, std::uint64_t seed = 0) {
  sc.validate();
  const std::size_t N = sc.players.size();
  const std::size_t replan = sc.replan_steps();
  const auto geometry = footprints(sc);
  const std::size_t max_steps = static_cast<std::size_t>(std::llround(sc.duration / sc.dt));

  SimLog log;
  log.num_players = N;
  log.dt = sc.dt;
  log.seed = seed;
  Vector x = sc.initial_state();
  log.times.push_back(0.0);
  log.states.push_back(x);

  struct PlannerState {
    std::vector<Vector> plan;  // own inputs, valid from plan_start
    std::size_t plan_start = 0;
    std::optional<std::vector<PlayerVectors>> warm;
  };
  std::vector<PlannerState> planners(N);
  std::optional<double> stop_time;
  bool overtaken = false;
  if (auto c = detect_collision(x, geometry)) {
    log.collisions.push_back({0.0, c->first, c->second});
    log.outcome = Outcome::Collision;
    return log;
  }

  for (std::size_t step = 0; step < max_steps; ++step) {
    const double t = static_cast<double>(step) * sc.dt;
    if (step % replan == 0) {
      for (std::size_t i = 0; i < N; ++i) {
        auto& ps = planners[i];
        const PlannerSpec& spec = sc.players[i].planner;
        ReplanRecord rec;
        rec.t = t;
        rec.player = i;
        try {
          std::optional<std::vector<PlayerVectors>> ws;
          if (ps.warm) ws = shift_warm_start(*ps.warm, replan, racing::kInputDim);
          PlanOutput out = plan_step(i, x, ws, spec, sc);
          rec.iterations = out.iterations;
          rec.converged = out.converged;
          ps.plan = std::move(out.inputs);
          ps.plan_start = step;
          ps.warm = std::move(out.warm_start);
        } catch (const std::exception& e) {
          // Keep executing the remainder of the previous plan.
          rec.failed = true;
          rec.error = e.what();
          if (ps.warm) ps.warm = shift_warm_start(*ps.warm, replan, racing::kInputDim);
        }
        log.replans.push_back(std::move(rec));
      }
    }

    PlayerVectors us(N);
    for (std::size_t i = 0; i < N; ++i) {
      const auto& ps = planners[i];
      const std::size_t idx = step - ps.plan_start;
      us[i] = idx < ps.plan.size() ? ps.plan[idx] : Vector::Zero(racing::kInputDim);
    }

    Vector next;
    try {
      next = x + sc.dt * racing::joint_dynamics(x, us, sc.track);
      for (std::size_t i = 0; i < N; ++i) {
        const double V = next(RacingGame::offset(i) + racing::kV);
        const double chart = 1.0 - next(RacingGame::offset(i) + racing::kN) *
                                       sc.track.curvature.value(next(RacingGame::offset(i) + racing::kS));
        if (!(V > racing::kMinSpeed) || !(chart > racing::kMinChartScale))
          throw EvaluationFailure("state left the model domain");
      }
    } catch (const EvaluationFailure& e) {
      log.outcome = Outcome::EvaluationFailure;
      log.note = e.what();
      break;
    }
    x = std::move(next);
    const double t_next = static_cast<double>(step + 1) * sc.dt;
    log.inputs.push_back(std::move(us));
    log.times.push_back(t_next);
    log.states.push_back(x);

    if (auto c = detect_collision(x, geometry)) {
      log.collisions.push_back({t_next, c->first, c->second});
      log.outcome = Outcome::Collision;
      break;
    }
    if (N >= 2 && !overtaken) {
      const double lead = x(RacingGame::offset(sc.overtaker) + racing::kS) -
                          x(RacingGame::offset(sc.target) + racing::kS);
      if (lead >= sc.overtake_gap) {
        overtaken = true;
        log.overtakes.push_back({t_next, sc.overtaker, sc.target});
        stop_time = t_next + sc.overtake_margin;
      }
    }
    if (stop_time && t_next >= *stop_time - 1e-9) break;
  }
  return log;
}

/// Re-integrates a log's inputs from its first state and returns the largest
/// absolute state deviation from the logged trajectory.
inline double replay_deviation(const SimLog& log, const Track& track) {
  if (log.states.empty()) return 0.0;
  Vector x = log.states.front();
  double worst = 0.0;
  for (std::size_t k = 0; k < log.inputs.size(); ++k) {
    x = x + log.dt * racing::joint_dynamics(x, log.inputs[k], track);
    worst = std::max(worst, (x - log.states[k + 1]).cwiseAbs().maxCoeff());
  }
  return worst;
}

}  // namespace ilqrace::sim
