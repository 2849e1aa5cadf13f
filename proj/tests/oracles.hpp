#pragma once

// Independent reference computations used by the unit and acceptance tests.
// None of these share code with the library's solvers.

#include "ilqrace/lq_solver.hpp"
#include "ilqrace/types.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

namespace oracle {

using ilqrace::AffineStrategy;
using ilqrace::LQGameProblem;
using ilqrace::LQGameStage;
using ilqrace::Matrix;
using ilqrace::Vector;

inline Matrix random_matrix(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  Matrix M(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) M(i, j) = g(rng);
  return M;
}

inline Vector random_vector(std::mt19937_64& rng, Eigen::Index n, double scale = 1.0) {
  return random_matrix(rng, n, 1, scale);
}

inline Matrix random_psd(std::mt19937_64& rng, Eigen::Index n, double shift = 0.0) {
  const Matrix L = random_matrix(rng, n, n, 0.7);
  return L * L.transpose() + shift * Matrix::Identity(n, n);
}

struct ProblemShape {
  std::size_t players = 1;
  Eigen::Index n = 2;
  Eigen::Index m = 1;
  std::size_t horizon = 3;
  bool linear_terms = true;
  bool cross_terms = false;
};

/// Random LQ game: A near identity, PSD state costs, PD input costs.
inline LQGameProblem random_problem(std::mt19937_64& rng, const ProblemShape& s) {
  LQGameProblem p;
  const std::size_t N = s.players;
  for (std::size_t k = 0; k < s.horizon; ++k) {
    LQGameStage st = LQGameStage::zeros(N, s.n, s.m);
    st.A = Matrix::Identity(s.n, s.n) + random_matrix(rng, s.n, s.n, 0.3);
    for (std::size_t i = 0; i < N; ++i) {
      st.B[i] = random_matrix(rng, s.n, s.m, 0.5);
      st.Q[i] = random_psd(rng, s.n);
      st.R[i][i] = random_psd(rng, s.m, 1.0);
      if (s.linear_terms) {
        st.q[i] = random_vector(rng, s.n);
        st.r[i][i] = random_vector(rng, s.m);
      }
      if (s.cross_terms) {
        for (std::size_t j = 0; j < N; ++j) {
          if (j == i) continue;
          st.R[i][j] = random_psd(rng, s.m, 0.1);
          st.r[i][j] = s.linear_terms ? random_vector(rng, s.m) : Vector::Zero(s.m);
        }
      }
    }
    p.stages.push_back(std::move(st));
  }
  for (std::size_t i = 0; i < N; ++i) {
    p.terminal_Q.push_back(random_psd(rng, s.n));
    p.terminal_q.push_back(s.linear_terms ? random_vector(rng, s.n) : Vector::Zero(s.n));
  }
  return p;
}

/// Textbook single-player dynamic programming in closed-loop ("Joseph") form:
/// with u = -K x - k substituted, the value update is
///   P = Q + K'RK + (A-BK)'P'(A-BK),
///   p = q + K'(Rk - r) + (A-BK)'(p' - P'Bk),
/// where K = (R + B'P'B)^-1 B'P'A and k = (R + B'P'B)^-1 (B'p' + r).
inline AffineStrategy riccati(const LQGameProblem& prob) {
  const std::size_t K = prob.horizon();
  AffineStrategy out = AffineStrategy::zeros(1, K, prob.state_dim(), prob.input_dim());
  Matrix P = prob.terminal_Q[0];
  Vector p = prob.terminal_q[0];
  for (std::size_t kk = K; kk-- > 0;) {
    const auto& st = prob.stages[kk];
    const Matrix& A = st.A;
    const Matrix& B = st.B[0];
    const Matrix& R = st.R[0][0];
    const Matrix H = R + B.transpose() * P * B;
    const Matrix Hinv = H.inverse();
    const Matrix Kg = Hinv * B.transpose() * P * A;
    const Vector kf = Hinv * (B.transpose() * p + st.r[0][0]);
    const Matrix F = A - B * Kg;
    const Matrix Pn = st.Q[0] + Kg.transpose() * R * Kg + F.transpose() * P * F;
    const Vector pn = st.q[0] + Kg.transpose() * (R * kf - st.r[0][0]) + F.transpose() * (p - P * B * kf);
    out.gains[kk][0] = Kg;
    out.feedforward[kk][0] = kf;
    P = Pn;
    p = pn;
  }
  return out;
}

/// Open-loop Nash equilibrium by brute force: write every state as an affine
/// function of all stacked inputs, form each player's gradient with respect
/// to its own input sequence, and solve the joint stationarity system densely.
/// Only own-input costs R^ii, r^ii enter. Returns u[k][i].
struct OpenLoopOracle {
  std::vector<std::vector<Vector>> inputs;  // [k][i]
  Matrix system;                            // stacked stationarity matrix
  Vector rhs;
};

inline OpenLoopOracle open_loop_stationarity(const LQGameProblem& prob, const Vector& x0) {
  const std::size_t N = prob.num_players();
  const std::size_t K = prob.horizon();
  const Eigen::Index n = prob.state_dim();
  const Eigen::Index m = prob.input_dim();
  const Eigen::Index nu = static_cast<Eigen::Index>(N * K) * m;
  auto col = [&](std::size_t i, std::size_t k) {
    return static_cast<Eigen::Index>((i * K + k)) * m;
  };
  // x_k = G_k U + h_k
  std::vector<Matrix> G(K + 1, Matrix::Zero(n, nu));
  std::vector<Vector> h(K + 1, Vector::Zero(n));
  h[0] = x0;
  for (std::size_t k = 0; k < K; ++k) {
    const auto& st = prob.stages[k];
    G[k + 1] = st.A * G[k];
    h[k + 1] = st.A * h[k];
    for (std::size_t i = 0; i < N; ++i) G[k + 1].middleCols(col(i, k), m) += st.B[i];
  }
  Matrix S = Matrix::Zero(nu, nu);
  Vector b = Vector::Zero(nu);
  for (std::size_t i = 0; i < N; ++i) {
    for (std::size_t k = 0; k <= K; ++k) {
      const Matrix& Q = k < K ? prob.stages[k].Q[i] : prob.terminal_Q[i];
      const Vector& q = k < K ? prob.stages[k].q[i] : prob.terminal_q[i];
      for (std::size_t kk = 0; kk < K; ++kk) {
        // d/du_kk^i of (1/2 x'Qx + q'x) = G_k(:, col)' (Q x + q)
        const Matrix Gi = G[k].middleCols(col(i, kk), m);
        S.middleRows(col(i, kk), m) += Gi.transpose() * Q * G[k];
        b.segment(col(i, kk), m) -= Gi.transpose() * (Q * h[k] + q);
      }
    }
    for (std::size_t k = 0; k < K; ++k) {
      S.block(col(i, k), col(i, k), m, m) += prob.stages[k].R[i][i];
      b.segment(col(i, k), m) -= prob.stages[k].r[i][i];
    }
  }
  OpenLoopOracle out;
  out.system = S;
  out.rhs = b;
  const Vector U = S.fullPivLu().solve(b);
  out.inputs.assign(K, std::vector<Vector>(N));
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t i = 0; i < N; ++i) out.inputs[k][i] = U.segment(col(i, k), m);
  return out;
}

/// Gradient of player i's open-loop cost with respect to its own stacked
/// inputs, all players' inputs given. Zero at an open-loop Nash equilibrium.
inline Vector own_input_gradient(const LQGameProblem& prob, const Vector& x0,
                                 const std::vector<std::vector<Vector>>& u, std::size_t i) {
  const std::size_t N = prob.num_players();
  const std::size_t K = prob.horizon();
  const Eigen::Index m = prob.input_dim();
  std::vector<Vector> x(K + 1);
  x[0] = x0;
  for (std::size_t k = 0; k < K; ++k) {
    x[k + 1] = prob.stages[k].A * x[k];
    for (std::size_t j = 0; j < N; ++j) x[k + 1] += prob.stages[k].B[j] * u[k][j];
  }
  // Adjoint sweep: lambda_k = dJ/dx_k.
  Vector lambda = prob.terminal_Q[i] * x[K] + prob.terminal_q[i];
  Vector grad(static_cast<Eigen::Index>(K) * m);
  for (std::size_t k = K; k-- > 0;) {
    const auto& st = prob.stages[k];
    grad.segment(static_cast<Eigen::Index>(k) * m, m) =
        st.R[i][i] * u[k][i] + st.r[i][i] + st.B[i].transpose() * lambda;
    lambda = st.Q[i] * x[k] + st.q[i] + st.A.transpose() * lambda;
  }
  return grad;
}

/// Single-player problem faced by player i when every other player follows
/// its affine strategy. The closed-loop offset is carried by an appended
/// constant state equal to one, so the result is again an offset-free LQ
/// problem of dimension n + 1. A strategy [K | c], k for it corresponds to
/// gain K and feedforward k + c in the original coordinates.
inline LQGameProblem induced_problem(const LQGameProblem& prob, const AffineStrategy& strat,
                                     std::size_t i) {
  const std::size_t N = prob.num_players();
  const Eigen::Index n = prob.state_dim();
  const Eigen::Index m = prob.input_dim();
  LQGameProblem out;
  for (std::size_t k = 0; k < prob.horizon(); ++k) {
    const auto& st = prob.stages[k];
    LQGameStage s = LQGameStage::zeros(1, n + 1, m);
    Matrix Acl = st.A;
    Vector c = Vector::Zero(n);
    Matrix Q = st.Q[i];
    Vector q = st.q[i];
    for (std::size_t j = 0; j < N; ++j) {
      if (j == i) continue;
      const Matrix& Kj = strat.gains[k][j];
      const Vector& kj = strat.feedforward[k][j];
      Acl -= st.B[j] * Kj;
      c -= st.B[j] * kj;
      // Player i's cost of player j's input u_j = -Kj x - kj.
      if (st.has_cross_hessian(i, j)) {
        Q += Kj.transpose() * st.R[i][j] * Kj;
        q += Kj.transpose() * st.R[i][j] * kj;
      }
      if (st.has_cross_gradient(i, j)) q -= Kj.transpose() * st.r[i][j];
    }
    s.A.topLeftCorner(n, n) = Acl;
    s.A.topRightCorner(n, 1) = c;
    s.A(n, n) = 1.0;
    s.B[0].topRows(n) = st.B[i];
    s.Q[0].topLeftCorner(n, n) = Q;
    s.q[0].head(n) = q;
    s.R[0][0] = st.R[i][i];
    s.r[0][0] = st.r[i][i];
    out.stages.push_back(std::move(s));
  }
  Matrix QK = Matrix::Zero(n + 1, n + 1);
  QK.topLeftCorner(n, n) = prob.terminal_Q[i];
  Vector qK = Vector::Zero(n + 1);
  qK.head(n) = prob.terminal_q[i];
  out.terminal_Q.push_back(QK);
  out.terminal_q.push_back(qK);
  return out;
}

inline double rel_err(const Matrix& a, const Matrix& b) {
  return (a - b).norm() / std::max(1.0, b.norm());
}

// ---- finite differences ------------------------------------------------------

/// Central-difference Jacobian of a vector function.
inline Matrix fd_jacobian(const std::function<Vector(const Vector&)>& f, const Vector& x,
                          double h = 1e-6) {
  const Vector f0 = f(x);
  Matrix J(f0.size(), x.size());
  for (Eigen::Index c = 0; c < x.size(); ++c) {
    Vector xp = x, xm = x;
    xp(c) += h;
    xm(c) -= h;
    J.col(c) = (f(xp) - f(xm)) / (2.0 * h);
  }
  return J;
}

inline Vector fd_gradient(const std::function<double(const Vector&)>& f, const Vector& x,
                          double h = 1e-6) {
  Vector g(x.size());
  for (Eigen::Index c = 0; c < x.size(); ++c) {
    Vector xp = x, xm = x;
    xp(c) += h;
    xm(c) -= h;
    g(c) = (f(xp) - f(xm)) / (2.0 * h);
  }
  return g;
}

/// Norm-relative error with an absolute floor for (near-)zero references.
inline double fd_error(const Matrix& analytic, const Matrix& numeric) {
  return (analytic - numeric).norm() / std::max(numeric.norm(), 1e-2);
}

}  // namespace oracle
