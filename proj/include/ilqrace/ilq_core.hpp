#pragma once

// Iterative LQ approximation of N-player nonlinear games.
//
// Each iteration linearizes the (forward-Euler discretized) dynamics and
// quadratizes every player's costs about the current operating point, solves
// the resulting LQ game for the requested equilibrium concept, and rolls the
// damped strategy update out through the exact nonlinear dynamics.

#include "ilqrace/lq_solver.hpp"
#include "ilqrace/types.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <array>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <functional>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

namespace ilqrace {

struct DynamicsJacobians {
  Matrix dfdx;
  PlayerMatrices dfdu;
};

/// What the solver needs from a game. Dynamics are continuous-time vector
/// fields; the solver discretizes with forward Euler at time_step().
template <class G>
concept DifferentiableGame =
    requires(const G& g, std::size_t i, std::size_t k, const Vector& x, const PlayerVectors& us) {
      { g.num_players() } -> std::convertible_to<std::size_t>;
      { g.horizon() } -> std::convertible_to<std::size_t>;
      { g.state_dim() } -> std::convertible_to<Eigen::Index>;
      { g.input_dim() } -> std::convertible_to<Eigen::Index>;
      { g.time_step() } -> std::convertible_to<double>;
      { g.vector_field(x, us) } -> std::convertible_to<Vector>;
      { g.vector_field_jacobians(x, us) } -> std::convertible_to<DynamicsJacobians>;
      { g.stage_cost(i, k, x, us[i]) } -> std::convertible_to<CostExpansion>;
      { g.terminal_cost(i, x) } -> std::convertible_to<CostExpansion>;
      { g.position_indices(i) } -> std::convertible_to<std::array<Eigen::Index, 2>>;
    };

/// Callback-backed game; the general-purpose way to pose a game without
/// writing a class.
struct GameDefinition {
  std::size_t players = 1;
  std::size_t stages = 1;
  Eigen::Index n = 1;
  Eigen::Index m = 1;
  double dt = 0.1;
  std::function<Vector(const Vector&, const PlayerVectors&)> dynamics;
  std::function<DynamicsJacobians(const Vector&, const PlayerVectors&)> jacobians;
  std::function<CostExpansion(std::size_t, std::size_t, const Vector&, const Vector&)> stage;
  std::function<CostExpansion(std::size_t, const Vector&)> terminal;
  std::function<std::array<Eigen::Index, 2>(std::size_t)> positions;

  std::size_t num_players() const { return players; }
  std::size_t horizon() const { return stages; }
  Eigen::Index state_dim() const { return n; }
  Eigen::Index input_dim() const { return m; }
  double time_step() const { return dt; }
  Vector vector_field(const Vector& x, const PlayerVectors& us) const { return dynamics(x, us); }
  DynamicsJacobians vector_field_jacobians(const Vector& x, const PlayerVectors& us) const {
    return jacobians(x, us);
  }
  CostExpansion stage_cost(std::size_t i, std::size_t k, const Vector& x, const Vector& u) const {
    return stage(i, k, x, u);
  }
  CostExpansion terminal_cost(std::size_t i, const Vector& x) const { return terminal(i, x); }
  std::array<Eigen::Index, 2> position_indices(std::size_t i) const {
    if (positions) return positions(i);
    return {0, std::min<Eigen::Index>(1, n - 1)};
  }
};

static_assert(DifferentiableGame<GameDefinition>);

/// Nominal joint-state trajectory and every player's input sequence.
struct OperatingPoint {
  std::vector<Vector> states;              // x_0..x_K
  std::vector<PlayerVectors> inputs;       // [k][i], k = 0..K-1

  std::size_t horizon() const { return inputs.size(); }
};

enum class EquilibriumConcept { OpenLoop, Feedback };

struct SolverParams {
  EquilibriumConcept mode = EquilibriumConcept::Feedback;
  double step_size = 0.1;
  int max_iters = 50;
  double conv_tol = 0.01;        // meters
  double regularization = 0.0;   // eigenvalue floor for state Hessians

  void validate() const {
    if (!(step_size > 0.0 && step_size <= 1.0)) throw ConfigError("solver: step size must be in (0, 1]");
    if (max_iters < 1) throw ConfigError("solver: max_iters must be >= 1");
    if (!(conv_tol > 0.0)) throw ConfigError("solver: conv_tol must be positive");
    if (regularization < 0.0) throw ConfigError("solver: regularization must be >= 0");
  }
};

struct SolveResult {
  OperatingPoint op;
  AffineStrategy strategy;
  bool converged = false;
  int iterations = 0;
  std::vector<double> changes;  // trajectory change per iteration
  std::vector<double> costs;    // J^i at op
};

/// Minimum eigenvalue kept in input Hessians.
inline constexpr double kMinInputCurvature = 1e-6;

/// Dynamics step x_{k+1} = x_k + dt f(x_k, u_k).
template <DifferentiableGame G>
Vector discrete_step(const G& game, const Vector& x, const PlayerVectors& us) {
  return x + game.time_step() * game.vector_field(x, us);
}

/// Rolls `inputs` out from x0 through the exact discretized dynamics.
template <DifferentiableGame G>
OperatingPoint rollout(const G& game, const Vector& x0, std::vector<PlayerVectors> inputs) {
  OperatingPoint op;
  op.states.reserve(inputs.size() + 1);
  op.states.push_back(x0);
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    op.states.push_back(discrete_step(game, op.states[k], inputs[k]));
  }
  op.inputs = std::move(inputs);
  return op;
}

template <DifferentiableGame G>
OperatingPoint zero_input_rollout(const G& game, const Vector& x0) {
  return rollout(game, x0,
                 std::vector<PlayerVectors>(game.horizon(),
                                            PlayerVectors(game.num_players(),
                                                          Vector::Zero(game.input_dim()))));
}

/// Per-stage A_k = I + dt df/dx, B_k^i = dt df/du^i. Writes into `problem`
/// stages, which must already be sized.
template <DifferentiableGame G>
void linearize_into(const G& game, const OperatingPoint& op, LQGameProblem& problem) {
  const double dt = game.time_step();
  const Eigen::Index n = game.state_dim();
  for (std::size_t k = 0; k < op.horizon(); ++k) {
    DynamicsJacobians J = game.vector_field_jacobians(op.states[k], op.inputs[k]);
    LQGameStage& st = problem.stages[k];
    st.A = Matrix::Identity(n, n) + dt * J.dfdx;
    for (std::size_t i = 0; i < game.num_players(); ++i) st.B[i] = dt * J.dfdu[i];
  }
}

struct Linearization {
  std::vector<Matrix> A;
  std::vector<PlayerMatrices> B;  // [k][i]
};

template <DifferentiableGame G>
Linearization linearize(const G& game, const OperatingPoint& op) {
  LQGameProblem tmp;
  tmp.stages.assign(op.horizon(), LQGameStage{});
  for (auto& st : tmp.stages) st.B.resize(game.num_players());
  linearize_into(game, op, tmp);
  Linearization out;
  for (auto& st : tmp.stages) {
    out.A.push_back(std::move(st.A));
    out.B.push_back(std::move(st.B));
  }
  return out;
}

/// Projects a symmetric matrix onto {M : M >= floor I}. Rows and columns
/// that are identically zero are handled without decomposing them.
inline Matrix project_psd(const Matrix& M, double floor) {
  const Eigen::Index n = M.rows();
  Matrix sym = 0.5 * (M + M.transpose());
  std::vector<Eigen::Index> active;
  active.reserve(static_cast<std::size_t>(n));
  for (Eigen::Index r = 0; r < n; ++r) {
    if (sym.row(r).cwiseAbs().maxCoeff() > 0.0) active.push_back(r);
  }
  Matrix out = Matrix::Zero(n, n);
  const Eigen::Index na = static_cast<Eigen::Index>(active.size());
  if (na > 0) {
    Matrix sub(na, na);
    for (Eigen::Index a = 0; a < na; ++a)
      for (Eigen::Index b = 0; b < na; ++b) sub(a, b) = sym(active[a], active[b]);
    // Cheap accept when already above the floor.
    Matrix shifted = sub;
    shifted.diagonal().array() -= floor;
    if (Eigen::LLT<Matrix>(shifted).info() != Eigen::Success) {
      Eigen::SelfAdjointEigenSolver<Matrix> eig(sub);
      const Vector clipped = eig.eigenvalues().cwiseMax(floor);
      sub = eig.eigenvectors() * clipped.asDiagonal() * eig.eigenvectors().transpose();
    }
    for (Eigen::Index a = 0; a < na; ++a)
      for (Eigen::Index b = 0; b < na; ++b) out(active[a], active[b]) = sub(a, b);
  }
  if (floor > 0.0) {
    for (Eigen::Index r = 0; r < n; ++r) {
      if (std::find(active.begin(), active.end(), r) == active.end()) out(r, r) = floor;
    }
  }
  return out;
}

/// Quadratic cost pieces for every stage and player plus the terminal terms,
/// written into `problem` (which must be sized). Returns the total cost of
/// each player at the operating point as a by-product.
template <DifferentiableGame G>
std::vector<double> quadratize_into(const G& game, const OperatingPoint& op, double regularization,
                                    LQGameProblem& problem) {
  const std::size_t N = game.num_players();
  std::vector<double> totals(N, 0.0);
  for (std::size_t k = 0; k < op.horizon(); ++k) {
    LQGameStage& st = problem.stages[k];
    for (std::size_t i = 0; i < N; ++i) {
      CostExpansion e = game.stage_cost(i, k, op.states[k], op.inputs[k][i]);
      totals[i] += e.value;
      st.Q[i] = project_psd(e.hess_x, regularization);
      st.q[i] = std::move(e.grad_x);
      st.R[i][i] = project_psd(e.hess_u, kMinInputCurvature);
      st.r[i][i] = std::move(e.grad_u);
    }
  }
  for (std::size_t i = 0; i < N; ++i) {
    CostExpansion e = game.terminal_cost(i, op.states.back());
    totals[i] += e.value;
    problem.terminal_Q[i] = project_psd(e.hess_x, regularization);
    problem.terminal_q[i] = std::move(e.grad_x);
  }
  return totals;
}

/// Allocates an LQ problem shaped for `game`.
template <DifferentiableGame G>
LQGameProblem make_lq_problem(const G& game) {
  LQGameProblem p;
  const std::size_t N = game.num_players();
  p.stages.assign(game.horizon(), LQGameStage::zeros(N, game.state_dim(), game.input_dim()));
  p.terminal_Q.assign(N, Matrix::Zero(game.state_dim(), game.state_dim()));
  p.terminal_q.assign(N, Vector::Zero(game.state_dim()));
  return p;
}

template <DifferentiableGame G>
LQGameProblem quadratize(const G& game, const OperatingPoint& op, double regularization = 0.0) {
  LQGameProblem p = make_lq_problem(game);
  quadratize_into(game, op, regularization, p);
  return p;
}

/// Per-player total cost J^i of an operating point.
template <DifferentiableGame G>
std::vector<double> total_costs(const G& game, const OperatingPoint& op) {
  std::vector<double> totals(game.num_players(), 0.0);
  for (std::size_t k = 0; k < op.horizon(); ++k)
    for (std::size_t i = 0; i < game.num_players(); ++i)
      totals[i] += game.stage_cost(i, k, op.states[k], op.inputs[k][i]).value;
  for (std::size_t i = 0; i < game.num_players(); ++i)
    totals[i] += game.terminal_cost(i, op.states.back()).value;
  return totals;
}

/// u_new = u - K (x_new - x) - step k, rolled through the nonlinear dynamics.
template <DifferentiableGame G>
OperatingPoint forward_pass(const G& game, const OperatingPoint& op, const AffineStrategy& strategy,
                            double step_size) {
  if (!(step_size > 0.0 && step_size <= 1.0))
    throw std::invalid_argument("forward_pass: step size must be in (0, 1]");
  if (strategy.horizon() != op.horizon() || strategy.num_players() != game.num_players())
    throw std::invalid_argument("forward_pass: strategy dimensions");
  OperatingPoint out;
  out.states.reserve(op.states.size());
  out.inputs.reserve(op.inputs.size());
  out.states.push_back(op.states.front());
  for (std::size_t k = 0; k < op.horizon(); ++k) {
    const Vector dx = out.states[k] - op.states[k];
    PlayerVectors us(game.num_players());
    for (std::size_t i = 0; i < game.num_players(); ++i) {
      us[i] = op.inputs[k][i] - strategy.gains[k][i] * dx - step_size * strategy.feedforward[k][i];
    }
    out.states.push_back(discrete_step(game, out.states[k], us));
    out.inputs.push_back(std::move(us));
  }
  return out;
}

/// Largest per-player planar (s, n) distance between two trajectories.
template <DifferentiableGame G>
double trajectory_change(const G& game, const OperatingPoint& a, const OperatingPoint& b) {
  if (a.states.size() != b.states.size())
    throw std::invalid_argument("trajectory_change: horizon mismatch");
  double worst = 0.0;
  for (std::size_t k = 0; k < a.states.size(); ++k) {
    for (std::size_t i = 0; i < game.num_players(); ++i) {
      const auto idx = game.position_indices(i);
      const double d0 = a.states[k](idx[0]) - b.states[k](idx[0]);
      const double d1 = a.states[k](idx[1]) - b.states[k](idx[1]);
      worst = std::max(worst, std::hypot(d0, d1));
    }
  }
  return worst;
}

/// The iterative LQ game loop. Returns the last operating point whether or not
/// the change metric dropped below conv_tol within max_iters.
template <DifferentiableGame G>
SolveResult solve(const G& game, const Vector& x0,
                  const std::optional<std::vector<PlayerVectors>>& warm_start,
                  const SolverParams& params) {
  params.validate();
  if (x0.size() != game.state_dim()) throw std::invalid_argument("solve: x0 dimension");
  SolveResult result;
  if (warm_start) {
    if (warm_start->size() != game.horizon()) throw std::invalid_argument("solve: warm start horizon");
    result.op = rollout(game, x0, *warm_start);
  } else {
    result.op = zero_input_rollout(game, x0);
  }

  LQGameProblem lq = make_lq_problem(game);
  const Vector dx0 = Vector::Zero(game.state_dim());
  for (int it = 0; it < params.max_iters; ++it) {
    linearize_into(game, result.op, lq);
    quadratize_into(game, result.op, params.regularization, lq);
    if (params.mode == EquilibriumConcept::Feedback) {
      result.strategy = solve_feedback(lq).strategy;
    } else {
      result.strategy = solve_open_loop(lq, dx0).strategy;
    }
    OperatingPoint next = forward_pass(game, result.op, result.strategy, params.step_size);
    const double change = trajectory_change(game, result.op, next);
    result.op = std::move(next);
    result.changes.push_back(change);
    result.iterations = it + 1;
    if (change <= params.conv_tol) {
      result.converged = true;
      break;
    }
  }
  result.costs = total_costs(game, result.op);
  return result;
}

}  // namespace ilqrace
