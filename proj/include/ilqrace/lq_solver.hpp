#pragma once

// Finite-horizon N-player linear-quadratic dynamic games.
//
// Dynamics (deviation coordinates):
//     dx_{k+1} = A_k dx_k + sum_i B_k^i du_k^i
// Cost of player i:
//     sum_k [ 1/2 dx' Q^i dx + q^i' dx + sum_j (1/2 du^j' R^ij du^j + r^ij' du^j) ]
//     + 1/2 dx_K' Q_K^i dx_K + q_K^i' dx_K
//
// Strategies are affine, du_k^i = -K_k^i dx_k - k_k^i. Everything is stored
// stage-major, player-minor: gains[k][i].

#include "ilqrace/types.hpp"

#include <Eigen/Cholesky>
#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace ilqrace {

/// Above this estimated condition number a stage factorization is rejected.
inline constexpr double kMaxConditionNumber = 1e12;

struct LQGameStage {
  Matrix A;
  PlayerMatrices B;
  PlayerMatrices Q;
  PlayerVectors q;
  // R[i][j], r[i][j]: cost of player i w.r.t. input of player j. Cross terms
  // (i != j) may be left empty, which means zero.
  std::vector<PlayerMatrices> R;
  std::vector<PlayerVectors> r;

  static LQGameStage zeros(std::size_t players, Eigen::Index n, Eigen::Index m) {
    LQGameStage st;
    st.A = Matrix::Zero(n, n);
    st.B.assign(players, Matrix::Zero(n, m));
    st.Q.assign(players, Matrix::Zero(n, n));
    st.q.assign(players, Vector::Zero(n));
    st.R.assign(players, PlayerMatrices(players));
    st.r.assign(players, PlayerVectors(players));
    for (std::size_t i = 0; i < players; ++i) {
      st.R[i][i] = Matrix::Zero(m, m);
      st.r[i][i] = Vector::Zero(m);
    }
    return st;
  }

  bool has_cross_hessian(std::size_t i, std::size_t j) const {
    return R[i][j].size() != 0;
  }
  bool has_cross_gradient(std::size_t i, std::size_t j) const {
    return r[i][j].size() != 0;
  }
};

struct LQGameProblem {
  std::vector<LQGameStage> stages;
  PlayerMatrices terminal_Q;
  PlayerVectors terminal_q;

  std::size_t num_players() const { return terminal_Q.size(); }
  std::size_t horizon() const { return stages.size(); }
  Eigen::Index state_dim() const { return terminal_Q.empty() ? 0 : terminal_Q[0].rows(); }
  Eigen::Index input_dim() const {
    return stages.empty() || stages[0].B.empty() ? 0 : stages[0].B[0].cols();
  }

  /// Checks dimensional consistency; throws std::invalid_argument.
  void validate() const {
    const std::size_t N = num_players();
    const Eigen::Index n = state_dim();
    const Eigen::Index m = input_dim();
    auto fail = [](const std::string& what) { throw std::invalid_argument("LQGameProblem: " + what); };
    if (N == 0) fail("no players");
    if (terminal_q.size() != N) fail("terminal gradient count");
    for (std::size_t i = 0; i < N; ++i) {
      if (terminal_Q[i].rows() != n || terminal_Q[i].cols() != n) fail("terminal Hessian shape");
      if (terminal_q[i].size() != n) fail("terminal gradient shape");
    }
    for (const auto& st : stages) {
      if (st.A.rows() != n || st.A.cols() != n) fail("A shape");
      if (st.B.size() != N || st.Q.size() != N || st.q.size() != N || st.R.size() != N ||
          st.r.size() != N)
        fail("per-player list length");
      for (std::size_t i = 0; i < N; ++i) {
        if (st.B[i].rows() != n || st.B[i].cols() != m) fail("B shape");
        if (st.Q[i].rows() != n || st.Q[i].cols() != n) fail("Q shape");
        if (st.q[i].size() != n) fail("q shape");
        if (st.R[i].size() != N || st.r[i].size() != N) fail("R/r list length");
        for (std::size_t j = 0; j < N; ++j) {
          const bool own = i == j;
          if ((own || st.has_cross_hessian(i, j)) &&
              (st.R[i][j].rows() != m || st.R[i][j].cols() != m))
            fail("R shape");
          if ((own || st.has_cross_gradient(i, j)) && st.r[i][j].size() != m) fail("r shape");
        }
      }
    }
  }
};

struct AffineStrategy {
  std::vector<PlayerMatrices> gains;       // [k][i], m x n
  std::vector<PlayerVectors> feedforward;  // [k][i], m

  static AffineStrategy zeros(std::size_t players, std::size_t horizon, Eigen::Index n,
                              Eigen::Index m) {
    AffineStrategy s;
    s.gains.assign(horizon, PlayerMatrices(players, Matrix::Zero(m, n)));
    s.feedforward.assign(horizon, PlayerVectors(players, Vector::Zero(m)));
    return s;
  }

  std::size_t horizon() const { return gains.size(); }
  std::size_t num_players() const { return gains.empty() ? 0 : gains[0].size(); }

  const Matrix& gain(std::size_t player, std::size_t stage) const { return gains[stage][player]; }
  const Vector& offset(std::size_t player, std::size_t stage) const {
    return feedforward[stage][player];
  }

  /// du = -K dx - k
  Vector control(std::size_t player, std::size_t stage, const Vector& dx) const {
    return -gains[stage][player] * dx - feedforward[stage][player];
  }
};

struct FeedbackValueRecursion {
  std::vector<PlayerMatrices> P;  // [k][i], k = 0..K
  std::vector<PlayerVectors> p;
  std::vector<Matrix> F;          // [k], k = 0..K-1
  std::vector<Vector> beta;
};

struct OpenLoopValueRecursion {
  std::vector<PlayerMatrices> M;  // [k][i], k = 0..K
  std::vector<PlayerVectors> m;
  std::vector<Matrix> Lambda;     // [k], k = 0..K-1
};

struct FeedbackSolution {
  AffineStrategy strategy;
  FeedbackValueRecursion values;
};

struct OpenLoopSolution {
  AffineStrategy strategy;
  OpenLoopValueRecursion values;
  std::vector<Vector> state_deviation;  // dx_0..dx_K
};

namespace detail {

inline Eigen::PartialPivLU<Matrix> factor_checked(const Matrix& mat, std::size_t stage,
                                                  const char* what) {
  Eigen::PartialPivLU<Matrix> lu(mat);
  const double rcond = lu.rcond();
  if (!std::isfinite(rcond) || rcond < 1.0 / kMaxConditionNumber) {
    throw SingularSystem(stage, std::string(what) + " (rcond " + std::to_string(rcond) + ")");
  }
  return lu;
}

inline Eigen::LLT<Matrix> cholesky_checked(const Matrix& mat, std::size_t stage,
                                           const char* what) {
  Eigen::LLT<Matrix> llt(mat);
  if (llt.info() != Eigen::Success) {
    throw SingularSystem(stage, std::string(what) + " is not positive definite");
  }
  return llt;
}

}  // namespace detail

/// Feedback Nash equilibrium of the LQ game via the coupled Riccati recursion.
///
/// At every stage the N first-order conditions are stacked into one
/// (N m) x (N m) system
///     [R^ii + B^i' P^i B^i   B^i' P^i B^j ] [K^j] = [B^i' P^i A       ]
///                                           [k^j]   [B^i' p^i + r^ii ]
/// which is LU-factored once and solved for both right-hand sides.
inline FeedbackSolution solve_feedback(const LQGameProblem& problem) {
  problem.validate();
  const std::size_t N = problem.num_players();
  const std::size_t K = problem.horizon();
  const Eigen::Index n = problem.state_dim();
  const Eigen::Index m = problem.input_dim();
  const Eigen::Index Nm = static_cast<Eigen::Index>(N) * m;

  FeedbackSolution sol;
  sol.strategy = AffineStrategy::zeros(N, K, n, m);
  auto& vals = sol.values;
  vals.P.assign(K + 1, PlayerMatrices(N));
  vals.p.assign(K + 1, PlayerVectors(N));
  vals.F.assign(K, Matrix());
  vals.beta.assign(K, Vector());
  vals.P[K] = problem.terminal_Q;
  vals.p[K] = problem.terminal_q;

  Matrix S(Nm, Nm);
  Matrix rhs_gain(Nm, n);
  Vector rhs_ff(Nm);
  PlayerMatrices BtP(N);

  for (std::size_t kk = K; kk-- > 0;) {
    const LQGameStage& st = problem.stages[kk];
    const auto& P_next = vals.P[kk + 1];
    const auto& p_next = vals.p[kk + 1];

    for (std::size_t i = 0; i < N; ++i) {
      BtP[i].noalias() = st.B[i].transpose() * P_next[i];
      const Eigen::Index row = static_cast<Eigen::Index>(i) * m;
      for (std::size_t j = 0; j < N; ++j) {
        const Eigen::Index col = static_cast<Eigen::Index>(j) * m;
        S.block(row, col, m, m).noalias() = BtP[i] * st.B[j];
      }
      S.block(row, row, m, m) += st.R[i][i];
      rhs_gain.middleRows(row, m).noalias() = BtP[i] * st.A;
      rhs_ff.segment(row, m).noalias() = st.B[i].transpose() * p_next[i];
      rhs_ff.segment(row, m) += st.r[i][i];
    }

    const auto lu = detail::factor_checked(S, kk, "stacked feedback system");
    const Matrix gains = lu.solve(rhs_gain);
    const Vector ffs = lu.solve(rhs_ff);

    Matrix& F = vals.F[kk];
    Vector& beta = vals.beta[kk];
    F = st.A;
    beta = Vector::Zero(n);
    for (std::size_t j = 0; j < N; ++j) {
      const Eigen::Index row = static_cast<Eigen::Index>(j) * m;
      sol.strategy.gains[kk][j] = gains.middleRows(row, m);
      sol.strategy.feedforward[kk][j] = ffs.segment(row, m);
      F.noalias() -= st.B[j] * sol.strategy.gains[kk][j];
      beta.noalias() -= st.B[j] * sol.strategy.feedforward[kk][j];
    }

    for (std::size_t i = 0; i < N; ++i) {
      const Matrix PF = P_next[i] * F;
      Matrix P = st.Q[i];
      P.noalias() += F.transpose() * PF;
      Vector p = st.q[i];
      p.noalias() += F.transpose() * (p_next[i] + P_next[i] * beta);
      for (std::size_t j = 0; j < N; ++j) {
        const Matrix& Kj = sol.strategy.gains[kk][j];
        const Vector& kj = sol.strategy.feedforward[kk][j];
        if (i == j || st.has_cross_hessian(i, j)) {
          const Matrix RK = st.R[i][j] * Kj;
          P.noalias() += Kj.transpose() * RK;
          p.noalias() += Kj.transpose() * (st.R[i][j] * kj);
        }
        if (i == j || st.has_cross_gradient(i, j)) {
          p.noalias() -= Kj.transpose() * st.r[i][j];
        }
      }
      vals.P[kk][i] = 0.5 * (P + P.transpose());
      vals.p[kk][i] = std::move(p);
    }
  }
  return sol;
}

/// Open-loop Nash equilibrium. Gains are identically zero; the returned
/// feedforward terms are the (negated) input deviations along the equilibrium
/// deviation trajectory started at dx0.
inline OpenLoopSolution solve_open_loop(const LQGameProblem& problem, const Vector& dx0) {
  problem.validate();
  const std::size_t N = problem.num_players();
  const std::size_t K = problem.horizon();
  const Eigen::Index n = problem.state_dim();
  const Eigen::Index m = problem.input_dim();
  if (dx0.size() != n) throw std::invalid_argument("solve_open_loop: dx0 dimension");

  OpenLoopSolution sol;
  sol.strategy = AffineStrategy::zeros(N, K, n, m);
  auto& vals = sol.values;
  vals.M.assign(K + 1, PlayerMatrices(N));
  vals.m.assign(K + 1, PlayerVectors(N));
  vals.Lambda.assign(K, Matrix());
  vals.M[K] = problem.terminal_Q;
  vals.m[K] = problem.terminal_q;

  // Per-stage cached pieces reused by the forward sweep.
  std::vector<PlayerMatrices> warped_B(K, PlayerMatrices(N));  // R^jj^-1 B^j'
  std::vector<PlayerVectors> warped_r(K, PlayerVectors(N));    // R^jj^-1 r^jj
  std::vector<Eigen::PartialPivLU<Matrix>> lambda_lu(K);
  std::vector<Vector> drift(K);  // -sum_j B^j R^jj^-1 (B^j' m^j + r^jj)

  for (std::size_t kk = K; kk-- > 0;) {
    const LQGameStage& st = problem.stages[kk];
    Matrix& Lambda = vals.Lambda[kk];
    Lambda = Matrix::Identity(n, n);
    drift[kk] = Vector::Zero(n);
    for (std::size_t j = 0; j < N; ++j) {
      const auto llt = detail::cholesky_checked(st.R[j][j], kk, "input Hessian");
      warped_B[kk][j] = llt.solve(st.B[j].transpose());
      warped_r[kk][j] = llt.solve(st.r[j][j]);
      Lambda.noalias() += st.B[j] * (warped_B[kk][j] * vals.M[kk + 1][j]);
      drift[kk].noalias() -= st.B[j] * (warped_B[kk][j] * vals.m[kk + 1][j] + warped_r[kk][j]);
    }
    lambda_lu[kk] = detail::factor_checked(Lambda, kk, "Lambda");
    const Matrix LinvA = lambda_lu[kk].solve(st.A);
    const Vector Linv_drift = lambda_lu[kk].solve(drift[kk]);
    for (std::size_t i = 0; i < N; ++i) {
      Matrix M = st.Q[i];
      M.noalias() += st.A.transpose() * (vals.M[kk + 1][i] * LinvA);
      vals.M[kk][i] = std::move(M);
      Vector mv = st.q[i];
      mv.noalias() += st.A.transpose() * (vals.m[kk + 1][i] + vals.M[kk + 1][i] * Linv_drift);
      vals.m[kk][i] = std::move(mv);
    }
  }

  sol.state_deviation.assign(K + 1, Vector());
  sol.state_deviation[0] = dx0;
  for (std::size_t kk = 0; kk < K; ++kk) {
    const LQGameStage& st = problem.stages[kk];
    Vector next = lambda_lu[kk].solve(st.A * sol.state_deviation[kk] + drift[kk]);
    for (std::size_t i = 0; i < N; ++i) {
      // du^i = -R^ii^-1 [B^i' (M^i dx_{k+1} + m^i) + r^ii] = -k^i
      const Vector costate = vals.M[kk + 1][i] * next + vals.m[kk + 1][i];
      sol.strategy.feedforward[kk][i] = warped_B[kk][i] * costate + warped_r[kk][i];
    }
    sol.state_deviation[kk + 1] = std::move(next);
  }
  return sol;
}

/// Single-player difference Riccati recursion with linear terms. Kept as a
/// separate code path from solve_feedback so the two can check each other.
inline AffineStrategy solve_lqr(const LQGameProblem& problem) {
  problem.validate();
  if (problem.num_players() != 1) throw std::invalid_argument("solve_lqr: requires one player");
  const std::size_t K = problem.horizon();
  const Eigen::Index n = problem.state_dim();
  const Eigen::Index m = problem.input_dim();

  AffineStrategy strat = AffineStrategy::zeros(1, K, n, m);
  Matrix P = problem.terminal_Q[0];
  Vector p = problem.terminal_q[0];
  for (std::size_t kk = K; kk-- > 0;) {
    const LQGameStage& st = problem.stages[kk];
    const Matrix& A = st.A;
    const Matrix& B = st.B[0];
    const Matrix BtP = B.transpose() * P;
    const Matrix H = st.R[0][0] + BtP * B;
    const Eigen::PartialPivLU<Matrix> lu = detail::factor_checked(H, kk, "R + B'PB");
    const Matrix BtPA = BtP * A;
    const Vector g = B.transpose() * p + st.r[0][0];
    Matrix& Kg = strat.gains[kk][0];
    Vector& kf = strat.feedforward[kk][0];
    Kg = lu.solve(BtPA);
    kf = lu.solve(g);
    // P = Q + A'PA - (A'PB) H^-1 (B'PA)
    Matrix Pn = st.Q[0] + A.transpose() * P * A - BtPA.transpose() * Kg;
    Vector pn = st.q[0] + A.transpose() * p - Kg.transpose() * g;
    P = 0.5 * (Pn + Pn.transpose());
    p = std::move(pn);
  }
  return strat;
}

/// Largest relative residual of the feedback gain equations over all stages
/// and players, measured as
///   ||(R^ii + B^i'P^i B^i) K^i + B^i'P^i sum_{j!=i} B^j K^j - B^i'P^i A||_F
///   / (1 + ||B^i'P^i A||_F).
inline double feedback_residual(const LQGameProblem& problem, const FeedbackSolution& sol) {
  const std::size_t N = problem.num_players();
  double worst = 0.0;
  for (std::size_t kk = 0; kk < problem.horizon(); ++kk) {
    const LQGameStage& st = problem.stages[kk];
    for (std::size_t i = 0; i < N; ++i) {
      const Matrix& P = sol.values.P[kk + 1][i];
      const Matrix BtP = st.B[i].transpose() * P;
      Matrix lhs = (st.R[i][i] + BtP * st.B[i]) * sol.strategy.gains[kk][i];
      for (std::size_t j = 0; j < N; ++j) {
        if (j != i) lhs += BtP * st.B[j] * sol.strategy.gains[kk][j];
      }
      const Matrix rhs = BtP * st.A;
      worst = std::max(worst, (lhs - rhs).norm() / (1.0 + rhs.norm()));
    }
  }
  return worst;
}

}  // namespace ilqrace
