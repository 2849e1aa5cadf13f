#pragma once

// Point-mass racing model in curvilinear track coordinates.
//
// Per-player state  x = [s, V, n, chi, a_x, a_y]
// Per-player input  u = [j_x, j_y]
//
//   s'   = V cos(chi) / (1 - n kappa(s))
//   V'   = a_x
//   n'   = V sin(chi)
//   chi' = a_y / V - kappa(s) V cos(chi) / (1 - n kappa(s))
//   a_x' = j_x
//   a_y' = j_y

#include "ilqrace/types.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace ilqrace::racing {

inline constexpr Eigen::Index kStateDim = 6;
inline constexpr Eigen::Index kInputDim = 2;

enum StateIndex : Eigen::Index { kS = 0, kV = 1, kN = 2, kChi = 3, kAx = 4, kAy = 5 };
enum InputIndex : Eigen::Index { kJx = 0, kJy = 1 };

/// Speed floor below which the curvilinear model is not evaluated.
inline constexpr double kMinSpeed = 0.1;
/// Smallest admissible 1 - n kappa(s).
inline constexpr double kMinChartScale = 1e-6;

struct VehicleState {
  double s = 0.0;
  double V = 0.0;
  double n = 0.0;
  double chi = 0.0;
  double ax = 0.0;
  double ay = 0.0;

  Vector to_vector() const {
    Vector x(kStateDim);
    x << s, V, n, chi, ax, ay;
    return x;
  }
  static VehicleState from_vector(const Eigen::Ref<const Vector>& x) {
    return {x(kS), x(kV), x(kN), x(kChi), x(kAx), x(kAy)};
  }
};

struct ControlInput {
  double jx = 0.0;
  double jy = 0.0;
};

/// Value and slope of a piecewise-linear table.
struct Sample {
  double value = 0.0;
  double slope = 0.0;
};

/// Piecewise-linear interpolant over sorted knots, held constant outside the
/// sampled range. Between two knots the slope is the segment slope; on a knot
/// the right-hand segment is used.
class PiecewiseLinear {
 public:
  PiecewiseLinear() : PiecewiseLinear(0.0) {}
  explicit PiecewiseLinear(double constant) : xs_{0.0}, ys_{constant} {}
  PiecewiseLinear(std::vector<double> xs, std::vector<double> ys)
      : xs_(std::move(xs)), ys_(std::move(ys)) {
    if (xs_.empty() || xs_.size() != ys_.size())
      throw ConfigError("piecewise-linear table needs matching, non-empty knots and values");
    for (std::size_t i = 1; i < xs_.size(); ++i) {
      if (!(xs_[i] > xs_[i - 1])) throw ConfigError("piecewise-linear knots must increase");
    }
  }

  Sample operator()(double x) const {
    if (xs_.size() == 1 || x < xs_.front()) return {ys_.front(), 0.0};
    if (x >= xs_.back()) return {ys_.back(), 0.0};
    const auto it = std::upper_bound(xs_.begin(), xs_.end(), x);
    const std::size_t hi = static_cast<std::size_t>(it - xs_.begin());
    const std::size_t lo = hi - 1;
    const double slope = (ys_[hi] - ys_[lo]) / (xs_[hi] - xs_[lo]);
    return {ys_[lo] + slope * (x - xs_[lo]), slope};
  }

  double value(double x) const { return (*this)(x).value; }

  const std::vector<double>& knots() const { return xs_; }
  const std::vector<double>& values() const { return ys_; }

  bool operator==(const PiecewiseLinear&) const = default;

 private:
  std::vector<double> xs_;
  std::vector<double> ys_;
};

struct Track {
  PiecewiseLinear curvature{0.0};
  PiecewiseLinear width_left{6.0};
  PiecewiseLinear width_right{6.0};
  double length = 600.0;

  static Track straight(double length = 600.0, double width_left = 6.0,
                        double width_right = 6.0) {
    Track t;
    t.length = length;
    t.width_left = PiecewiseLinear(width_left);
    t.width_right = PiecewiseLinear(width_right);
    return t;
  }

  void validate() const {
    for (double w : width_left.values())
      if (!(w > 0.0)) throw ConfigError("track: left width must be positive");
    for (double w : width_right.values())
      if (!(w > 0.0)) throw ConfigError("track: right width must be positive");
    if (!(length > 0.0)) throw ConfigError("track: length must be positive");
  }
};

struct GGLimits {
  double ax_max = 0.0;
  double ax_min = 0.0;  // magnitude of the braking limit
  double ay_max = 0.0;
  double d_ax_max = 0.0;  // slopes w.r.t. V
  double d_ax_min = 0.0;
  double d_ay_max = 0.0;
};

/// Velocity-dependent acceleration envelope. a_x,min is stored as the
/// (positive) braking magnitude; only its square enters the cost.
struct GGDiamond {
  PiecewiseLinear ax_max;
  PiecewiseLinear ax_min;
  PiecewiseLinear ay_max;
  double v_max = 30.0;

  /// a_y,max = 12 constant, |a_x,min| = 15 constant, a_x,max falling
  /// linearly from 6 at standstill to 0 at v_max.
  static GGDiamond with_defaults(double v_max) {
    return {PiecewiseLinear({0.0, v_max}, {6.0, 0.0}), PiecewiseLinear(15.0),
            PiecewiseLinear(12.0), v_max};
  }

  void validate() const {
    if (!(v_max > 0.0)) throw ConfigError("gg: v_max must be positive");
    for (double a : ax_max.values())
      if (a < 0.0) throw ConfigError("gg: a_x,max must be non-negative");
    for (double a : ax_min.values())
      if (!(a > 0.0)) throw ConfigError("gg: |a_x,min| must be positive");
    for (double a : ay_max.values())
      if (!(a > 0.0)) throw ConfigError("gg: a_y,max must be positive");
  }
};

inline GGLimits gg_limits(double V, const GGDiamond& gg) {
  GGLimits out;
  if (V >= gg.v_max) {
    out.ax_max = 0.0;
  } else {
    const Sample s = gg.ax_max(V);
    out.ax_max = std::max(0.0, s.value);
    out.d_ax_max = s.value > 0.0 ? s.slope : 0.0;
  }
  const Sample lo = gg.ax_min(V);
  const Sample lat = gg.ay_max(V);
  out.ax_min = lo.value;
  out.d_ax_min = lo.slope;
  out.ay_max = lat.value;
  out.d_ay_max = lat.slope;
  return out;
}

struct CostParams {
  Matrix R = Matrix::Identity(2, 2) * 1e-3;
  double c_c = 1.0;
  double c_w = 10.0;
  double c_ax = 10.0;
  double c_a = 10.0;
  double c_g = 0.2;
  double l_veh = 5.0;
  double w_veh = 2.0;

  void validate() const {
    if (R.rows() != 2 || R.cols() != 2) throw ConfigError("cost: R must be 2x2");
    if ((R - R.transpose()).norm() > 1e-12 * (1.0 + R.norm()))
      throw ConfigError("cost: R must be symmetric");
    Eigen::LLT<Matrix> llt(R);
    if (llt.info() != Eigen::Success) throw ConfigError("cost: R must be positive definite");
    if (c_c < 0 || c_w < 0 || c_ax < 0 || c_a < 0 || c_g < 0)
      throw ConfigError("cost: weights must be non-negative");
    if (!(l_veh > 0.0) || !(w_veh > 0.0)) throw ConfigError("cost: vehicle size must be positive");
  }
};

namespace detail {

inline void check_domain(double V, double chart) {
  if (!(V > kMinSpeed)) {
    throw EvaluationFailure("speed " + std::to_string(V) + " at or below model floor");
  }
  if (!(chart > kMinChartScale)) {
    throw EvaluationFailure("curvilinear chart singular (1 - n kappa = " +
                            std::to_string(chart) + ")");
  }
}

}  // namespace detail

/// Time derivative of one vehicle's state.
inline Vector continuous_dynamics(const Eigen::Ref<const Vector>& x,
                                  const Eigen::Ref<const Vector>& u, const Track& track) {
  const double kappa = track.curvature.value(x(kS));
  const double chart = 1.0 - x(kN) * kappa;
  detail::check_domain(x(kV), chart);
  const double V = x(kV);
  const double s_dot = V * std::cos(x(kChi)) / chart;
  Vector dx(kStateDim);
  dx(kS) = s_dot;
  dx(kV) = x(kAx);
  dx(kN) = V * std::sin(x(kChi));
  dx(kChi) = x(kAy) / V - kappa * s_dot;
  dx(kAx) = u(kJx);
  dx(kAy) = u(kJy);
  return dx;
}

struct VehicleJacobians {
  Matrix dfdx;  // 6 x 6
  Matrix dfdu;  // 6 x 2
};

inline VehicleJacobians dynamics_jacobians(const Eigen::Ref<const Vector>& x,
                                           const Eigen::Ref<const Vector>& /*u*/,
                                           const Track& track) {
  const Sample curv = track.curvature(x(kS));
  const double kappa = curv.value;
  const double n = x(kN);
  const double chart = 1.0 - n * kappa;
  detail::check_domain(x(kV), chart);
  const double V = x(kV);
  const double c = std::cos(x(kChi));
  const double sn = std::sin(x(kChi));
  const double s_dot = V * c / chart;

  // Partials of s' = V c / (1 - n kappa(s)).
  const double ds_ds = s_dot * n * curv.slope / chart;
  const double ds_dV = c / chart;
  const double ds_dn = s_dot * kappa / chart;
  const double ds_dchi = -V * sn / chart;

  VehicleJacobians J{Matrix::Zero(kStateDim, kStateDim), Matrix::Zero(kStateDim, kInputDim)};
  auto& A = J.dfdx;
  A(kS, kS) = ds_ds;
  A(kS, kV) = ds_dV;
  A(kS, kN) = ds_dn;
  A(kS, kChi) = ds_dchi;
  A(kV, kAx) = 1.0;
  A(kN, kV) = sn;
  A(kN, kChi) = V * c;
  A(kChi, kS) = -curv.slope * s_dot - kappa * ds_ds;
  A(kChi, kV) = -x(kAy) / (V * V) - kappa * ds_dV;
  A(kChi, kN) = -kappa * ds_dn;
  A(kChi, kChi) = -kappa * ds_dchi;
  A(kChi, kAy) = 1.0 / V;
  J.dfdu(kAx, kJx) = 1.0;
  J.dfdu(kAy, kJy) = 1.0;
  return J;
}

/// Blockwise concatenation of the per-vehicle vector fields.
inline Vector joint_dynamics(const Vector& x, const PlayerVectors& us, const Track& track) {
  const Eigen::Index N = static_cast<Eigen::Index>(us.size());
  if (x.size() != N * kStateDim) throw std::invalid_argument("joint_dynamics: state size");
  Vector dx(x.size());
  for (Eigen::Index i = 0; i < N; ++i) {
    dx.segment(i * kStateDim, kStateDim) =
        continuous_dynamics(x.segment(i * kStateDim, kStateDim), us[static_cast<std::size_t>(i)],
                            track);
  }
  return dx;
}

struct JointJacobians {
  Matrix dfdx;         // Nn x Nn, block diagonal
  PlayerMatrices dfdu;  // per player Nn x m, nonzero only in the player's block
};

inline JointJacobians joint_jacobians(const Vector& x, const PlayerVectors& us,
                                      const Track& track) {
  const Eigen::Index N = static_cast<Eigen::Index>(us.size());
  const Eigen::Index n = N * kStateDim;
  JointJacobians J{Matrix::Zero(n, n), PlayerMatrices(us.size(), Matrix::Zero(n, kInputDim))};
  for (Eigen::Index i = 0; i < N; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    const auto block = dynamics_jacobians(x.segment(i * kStateDim, kStateDim), us[idx], track);
    J.dfdx.block(i * kStateDim, i * kStateDim, kStateDim, kStateDim) = block.dfdx;
    J.dfdu[idx].middleRows(i * kStateDim, kStateDim) = block.dfdu;
  }
  return J;
}

/// Another vehicle as seen by a player's collision term: either a block of the
/// game state (derivatives flow to it) or a fixed, predicted position.
struct OpponentRef {
  bool in_state = true;
  Eigen::Index offset = 0;  // state offset when in_state
  double s = 0.0;           // fixed position otherwise
  double n = 0.0;
};

/// Stage cost of one player and its expansion in (x, u_own).
///
/// `offset` locates the player's six states in `x`. Indicator terms use the
/// branch active at the evaluation point; a term sitting exactly on its
/// boundary counts as inactive.
inline CostExpansion stage_cost(const Vector& x, Eigen::Index offset,
                                const Eigen::Ref<const Vector>& u,
                                const std::vector<OpponentRef>& opponents, const Track& track,
                                const CostParams& cp, const GGDiamond& gg) {
  const Eigen::Index nx = x.size();
  CostExpansion e = CostExpansion::zeros(nx, kInputDim);
  const Eigen::Index is = offset + kS;
  const Eigen::Index iV = offset + kV;
  const Eigen::Index in = offset + kN;
  const Eigen::Index iax = offset + kAx;
  const Eigen::Index iay = offset + kAy;
  const double s = x(is);
  const double V = x(iV);
  const double n = x(in);
  const double ax = x(iax);
  const double ay = x(iay);

  // Jerk regularization u' R u.
  const Vector Ru = cp.R * u;
  e.value += u.dot(Ru);
  e.grad_u += Ru + cp.R.transpose() * u;
  e.hess_u += cp.R + cp.R.transpose();

  // Collision: c_c exp(1 - (ds/l)^2 - (dn/w)^2).
  const double il2 = 1.0 / (cp.l_veh * cp.l_veh);
  const double iw2 = 1.0 / (cp.w_veh * cp.w_veh);
  for (const OpponentRef& opp : opponents) {
    const double so = opp.in_state ? x(opp.offset + kS) : opp.s;
    const double no = opp.in_state ? x(opp.offset + kN) : opp.n;
    const double ds = s - so;
    const double dn = n - no;
    const double E = cp.c_c * std::exp(1.0 - ds * ds * il2 - dn * dn * iw2);
    e.value += E;
    const double gs = -2.0 * ds * il2;  // d(exponent)/d(ds)
    const double gn = -2.0 * dn * iw2;
    const double hss = E * (gs * gs - 2.0 * il2);
    const double hnn = E * (gn * gn - 2.0 * iw2);
    const double hsn = E * gs * gn;
    // Chain through ds = s - so, dn = n - no.
    std::array<Eigen::Index, 4> idx{is, in, 0, 0};
    std::array<double, 4> sign{1.0, 1.0, -1.0, -1.0};
    const int count = opp.in_state ? 4 : 2;
    if (opp.in_state) {
      idx[2] = opp.offset + kS;
      idx[3] = opp.offset + kN;
    }
    const std::array<double, 4> grad_d{E * gs, E * gn, E * gs, E * gn};
    // Hessian in (ds, dn) indexed by variable kind: 0 -> s, 1 -> n.
    auto h = [&](int a, int b) {
      const int ka = a % 2;
      const int kb = b % 2;
      if (ka == 0 && kb == 0) return hss;
      if (ka == 1 && kb == 1) return hnn;
      return hsn;
    };
    for (int a = 0; a < count; ++a) {
      e.grad_x(idx[a]) += sign[a] * grad_d[a];
      for (int b = 0; b < count; ++b) {
        e.hess_x(idx[a], idx[b]) += sign[a] * sign[b] * h(a, b);
      }
    }
  }

  // Track boundaries, one side each.
  {
    const Sample wl = track.width_left(s);
    const double viol = n - wl.value;
    if (viol > 0.0) {
      // c_w (n - w(s))^2
      e.value += cp.c_w * viol * viol;
      e.grad_x(in) += 2.0 * cp.c_w * viol;
      e.grad_x(is) += -2.0 * cp.c_w * viol * wl.slope;
      e.hess_x(in, in) += 2.0 * cp.c_w;
      e.hess_x(is, is) += 2.0 * cp.c_w * wl.slope * wl.slope;
      e.hess_x(is, in) += -2.0 * cp.c_w * wl.slope;
      e.hess_x(in, is) += -2.0 * cp.c_w * wl.slope;
    }
    const Sample wr = track.width_right(s);
    const double viol_r = -n - wr.value;
    if (viol_r > 0.0) {
      // c_w (-n - w(s))^2
      e.value += cp.c_w * viol_r * viol_r;
      e.grad_x(in) += -2.0 * cp.c_w * viol_r;
      e.grad_x(is) += -2.0 * cp.c_w * viol_r * wr.slope;
      e.hess_x(in, in) += 2.0 * cp.c_w;
      e.hess_x(is, is) += 2.0 * cp.c_w * wr.slope * wr.slope;
      e.hess_x(is, in) += 2.0 * cp.c_w * wr.slope;
      e.hess_x(in, is) += 2.0 * cp.c_w * wr.slope;
    }
  }

  const GGLimits lim = gg_limits(V, gg);

  // a_x <= a_x,max(V).
  {
    const double viol = ax - lim.ax_max;
    if (viol > 0.0) {
      e.value += cp.c_ax * viol * viol;
      e.grad_x(iax) += 2.0 * cp.c_ax * viol;
      e.grad_x(iV) += -2.0 * cp.c_ax * viol * lim.d_ax_max;
      e.hess_x(iax, iax) += 2.0 * cp.c_ax;
      e.hess_x(iV, iV) += 2.0 * cp.c_ax * lim.d_ax_max * lim.d_ax_max;
      e.hess_x(iax, iV) += -2.0 * cp.c_ax * lim.d_ax_max;
      e.hess_x(iV, iax) += -2.0 * cp.c_ax * lim.d_ax_max;
    }
  }

  // Combined acceleration (a_x / a_x,min)^2 + (a_y / a_y,max)^2 <= 1.
  {
    const double bx = lim.ax_min;
    const double by = lim.ay_max;
    const double h = ax * ax / (bx * bx) + ay * ay / (by * by) - 1.0;
    if (h > 0.0) {
      // Gradient and Hessian of h in (a_x, a_y, V).
      const double hx = 2.0 * ax / (bx * bx);
      const double hy = 2.0 * ay / (by * by);
      const double hV = -2.0 * ax * ax * lim.d_ax_min / (bx * bx * bx) -
                        2.0 * ay * ay * lim.d_ay_max / (by * by * by);
      const double hxx = 2.0 / (bx * bx);
      const double hyy = 2.0 / (by * by);
      const double hxV = -4.0 * ax * lim.d_ax_min / (bx * bx * bx);
      const double hyV = -4.0 * ay * lim.d_ay_max / (by * by * by);
      const double hVV = 6.0 * ax * ax * lim.d_ax_min * lim.d_ax_min / (bx * bx * bx * bx) +
                         6.0 * ay * ay * lim.d_ay_max * lim.d_ay_max / (by * by * by * by);
      const std::array<Eigen::Index, 3> idx{iax, iay, iV};
      const std::array<double, 3> g{hx, hy, hV};
      const double H[3][3] = {{hxx, 0.0, hxV}, {0.0, hyy, hyV}, {hxV, hyV, hVV}};
      e.value += cp.c_a * h * h;
      for (int a = 0; a < 3; ++a) {
        e.grad_x(idx[a]) += 2.0 * cp.c_a * h * g[a];
        for (int b = 0; b < 3; ++b) {
          e.hess_x(idx[a], idx[b]) += 2.0 * cp.c_a * (g[a] * g[b] + h * H[a][b]);
        }
      }
    }
  }
  return e;
}

/// Competitive terminal cost -s_i + c_g sum_{j != i} s_j. `others_fixed_s`
/// carries progress of opponents that are not part of the state.
inline CostExpansion terminal_cost(const Vector& x, Eigen::Index offset,
                                   const std::vector<Eigen::Index>& opponent_offsets,
                                   double others_fixed_s, const CostParams& cp) {
  CostExpansion e = CostExpansion::zeros(x.size(), 0);
  e.value = -x(offset + kS);
  e.grad_x(offset + kS) = -1.0;
  for (Eigen::Index off : opponent_offsets) {
    e.value += cp.c_g * x(off + kS);
    e.grad_x(off + kS) += cp.c_g;
  }
  e.value += cp.c_g * others_fixed_s;
  return e;
}

}  // namespace ilqrace::racing
