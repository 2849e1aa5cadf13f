#include "ilqrace/racing.hpp"
#include "ilqrace/racing_game.hpp"
#include "oracles.hpp"
#include "racing_audit.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace ilqrace;
using namespace ilqrace::racing;

TEST(Dynamics, StraightSteadyMotion) {
  const Vector dx = continuous_dynamics(VehicleState{0, 30, 0, 0, 0, 0}.to_vector(), Vector::Zero(2),
                                        Track::straight());
  Vector expected = Vector::Zero(6);
  expected(kS) = 30.0;
  EXPECT_EQ(dx, expected);
}

TEST(Dynamics, LateralAccelerationTurnsHeading) {
  const Vector dx = continuous_dynamics(VehicleState{0, 30, 0, 0, 0, 3}.to_vector(), Vector::Zero(2),
                                        Track::straight());
  EXPECT_DOUBLE_EQ(dx(kChi), 0.1);
}

// Re-derivation of the curvilinear point-mass model written out by hand.
TEST(Dynamics, MatchesHandDerivedModel) {
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  Track track = Track::straight();
  track.curvature = PiecewiseLinear({0.0, 300.0}, {0.002, -0.004});
  for (int t = 0; t < 50; ++t) {
    const double s = 150 + 140 * U(rng), V = 20 + 10 * U(rng), n = 3 * U(rng), chi = 0.3 * U(rng),
                 ax = 4 * U(rng), ay = 8 * U(rng), jx = U(rng), jy = U(rng);
    const double kappa = 0.002 + (-0.006) * s / 300.0;
    const double sdot = V * std::cos(chi) / (1 - n * kappa);
    Vector x(6), u(2);
    x << s, V, n, chi, ax, ay;
    u << jx, jy;
    const Vector f = continuous_dynamics(x, u, track);
    EXPECT_NEAR(f(0), sdot, 1e-12);
    EXPECT_NEAR(f(1), ax, 1e-12);
    EXPECT_NEAR(f(2), V * std::sin(chi), 1e-12);
    EXPECT_NEAR(f(3), ay / V - kappa * sdot, 1e-12);
    EXPECT_NEAR(f(4), jx, 1e-12);
    EXPECT_NEAR(f(5), jy, 1e-12);
  }
}

TEST(Dynamics, DomainErrors) {
  EXPECT_THROW(continuous_dynamics(VehicleState{0, 0.05, 0, 0, 0, 0}.to_vector(), Vector::Zero(2),
                                   Track::straight()),
               EvaluationFailure);
  Track curved = Track::straight();
  curved.curvature = PiecewiseLinear(0.5);
  EXPECT_THROW(continuous_dynamics(VehicleState{0, 10, 2.0, 0, 0, 0}.to_vector(), Vector::Zero(2), curved),
               EvaluationFailure);
}

TEST(Dynamics, JointIsBlockwise) {
  std::mt19937_64 rng(42);
  const Track track = Track::straight();
  Vector x(18);
  PlayerVectors us;
  for (int i = 0; i < 3; ++i) {
    x.segment(6 * i, 6) << 10.0 * i, 20 + i, 0.5 * i, 0.05 * i, 1.0, -1.0;
    us.push_back(oracle::random_vector(rng, 2));
  }
  const Vector f = joint_dynamics(x, us, track);
  for (int i = 0; i < 3; ++i)
    EXPECT_EQ(f.segment(6 * i, 6), continuous_dynamics(x.segment(6 * i, 6), us[i], track));
  const auto J = joint_jacobians(x, us, track);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      if (i != j) EXPECT_EQ(J.dfdx.block(6 * i, 6 * j, 6, 6).norm(), 0.0);
  for (int i = 0; i < 3; ++i)
    for (int r = 0; r < 18; ++r)
      if (r / 6 != i) EXPECT_EQ(J.dfdu[i].row(r).norm(), 0.0);
}

TEST(Dynamics, JacobianSpecialEntries) {
  const auto J = dynamics_jacobians(VehicleState{0, 25, 1.0, 0.1, 0, 2}.to_vector(), Vector::Zero(2),
                                    Track::straight());
  EXPECT_EQ(J.dfdx(kS, kN), 0.0);
  EXPECT_DOUBLE_EQ(J.dfdx(kChi, kAy), 1.0 / 25.0);
}

TEST(Dynamics, JacobiansMatchFiniteDifferences) {
  std::mt19937_64 rng(43);
  for (int t = 0; t < 100; ++t) EXPECT_LT(audit::check_dynamics(audit::random_point(rng, true)), 1e-6);
}

TEST(GG, Limits) {
  const auto gg = GGDiamond::with_defaults(30.0);
  EXPECT_EQ(gg_limits(30.0, gg).ax_max, 0.0);
  EXPECT_EQ(gg_limits(35.0, gg).ax_max, 0.0);
  EXPECT_DOUBLE_EQ(gg_limits(15.0, gg).ax_max, 3.0);
  EXPECT_DOUBLE_EQ(gg_limits(0.0, gg).ax_max, 6.0);
  EXPECT_DOUBLE_EQ(gg_limits(20.0, gg).ax_min, 15.0);
  EXPECT_DOUBLE_EQ(gg_limits(20.0, gg).ay_max, 12.0);

  GGDiamond tab = gg;
  tab.ay_max = PiecewiseLinear({10.0, 20.0}, {8.0, 12.0});
  EXPECT_DOUBLE_EQ(gg_limits(5.0, tab).ay_max, 8.0);   // below the first sample
  EXPECT_DOUBLE_EQ(gg_limits(15.0, tab).ay_max, 10.0);  // midpoint
}

TEST(StageCost, CoincidentPlayers) {
  const Track track = Track::straight();
  const CostParams cp;
  const auto gg = GGDiamond::with_defaults(30.0);
  Vector x(12);
  x << VehicleState{10, 20, 0.5, 0, 0, 0}.to_vector(), VehicleState{10, 20, 0.5, 0, 0, 0}.to_vector();
  const auto e = stage_cost(x, 0, Vector::Zero(2), {OpponentRef{true, 6}}, track, cp, gg);
  EXPECT_NEAR(e.value, cp.c_c * std::exp(1.0), 1e-14);
}

TEST(StageCost, OneCarLengthApart) {
  const Track track = Track::straight();
  const CostParams cp;
  const auto gg = GGDiamond::with_defaults(30.0);
  Vector x(12);
  x << VehicleState{10 + cp.l_veh, 20, 0.5, 0, 0, 0}.to_vector(),
      VehicleState{10, 20, 0.5, 0, 0, 0}.to_vector();
  const auto e = stage_cost(x, 0, Vector::Zero(2), {OpponentRef{true, 6}}, track, cp, gg);
  EXPECT_NEAR(e.value, cp.c_c, 1e-14);
}

TEST(StageCost, CenteredCruiseIsFree) {
  const Track track = Track::straight();
  const CostParams cp;
  const auto gg = GGDiamond::with_defaults(30.0);
  RacingGame game(track, {{cp, gg}}, 40, 0.1);
  const auto op = zero_input_rollout(game, VehicleState{0, 30, 0, 0, 0, 0}.to_vector());
  for (std::size_t k = 0; k < 40; ++k) EXPECT_EQ(game.stage_cost(0, k, op.states[k], op.inputs[k][0]).value, 0.0);
}

TEST(StageCost, CollisionTermProperties) {
  const Track track = Track::straight();
  const CostParams cp;
  const auto gg = GGDiamond::with_defaults(30.0);
  auto collision = [&](double ds, double dn) {
    Vector x(12);
    x << VehicleState{100 + ds, 20, dn, 0, 0, 0}.to_vector(), VehicleState{100, 20, 0, 0, 0, 0}.to_vector();
    return stage_cost(x, 0, Vector::Zero(2), {OpponentRef{true, 6}}, track, cp, gg).value;
  };
  double prev = collision(0.0, 0.0);
  for (double d = 0.5; d < 20.0; d += 0.5) {
    const double c = collision(d, 0.0);
    EXPECT_GT(c, 0.0);
    EXPECT_LT(c, prev);
    prev = c;
  }
  prev = collision(0.0, 0.0);
  for (double d = 0.25; d < 3.5; d += 0.25) {
    const double c = collision(0.0, d);
    EXPECT_LT(c, prev);
    prev = c;
  }
  // Symmetric in the sign of the offsets, i.e. in exchanging the two roles.
  EXPECT_DOUBLE_EQ(collision(3.0, 1.0), collision(-3.0, -1.0));
}

TEST(StageCost, WallPenaltyOneSidedAndC1) {
  const Track track = Track::straight(600, 6, 4);
  CostParams cp;
  const auto gg = GGDiamond::with_defaults(30.0);
  auto at = [&](double n) {
    return stage_cost(VehicleState{0, 20, n, 0, 0, 0}.to_vector(), 0, Vector::Zero(2), {}, track, cp, gg);
  };
  EXPECT_EQ(at(5.999).value, 0.0);
  EXPECT_EQ(at(-3.999).value, 0.0);
  EXPECT_EQ(at(6.0).value, 0.0);  // boundary counts as inactive
  EXPECT_NEAR(at(6.5).value, cp.c_w * 0.25, 1e-12);
  EXPECT_NEAR(at(-4.5).value, cp.c_w * 0.25, 1e-12);
  EXPECT_NEAR(at(6.0 + 1e-9).grad_x(kN), 0.0, 1e-6);
  EXPECT_GT(at(6.5).grad_x(kN), 0.0);
  EXPECT_LT(at(-4.5).grad_x(kN), 0.0);
}

TEST(StageCost, DerivativesMatchFiniteDifferences) {
  std::mt19937_64 rng(44);
  int wall = 0, ellipse = 0;
  for (int t = 0; t < 100; ++t) {
    const auto pt = audit::random_point(rng, t % 2 == 0);
    EXPECT_LT(audit::check_stage_cost(pt).worst(), 1e-4) << "point " << t;
    EXPECT_LT(audit::check_terminal_cost(pt).worst(), 1e-4) << "point " << t;
    const double n = pt.x(kN), s = pt.x(kS);
    wall += n > pt.track.width_left.value(s) || -n > pt.track.width_right.value(s);
    const auto lim = gg_limits(pt.x(kV), pt.gg);
    ellipse += std::pow(pt.x(kAx) / lim.ax_min, 2) + std::pow(pt.x(kAy) / lim.ay_max, 2) > 1.0;
  }
  // The audit must exercise the one-sided penalties, not only their inactive side.
  EXPECT_GT(wall, 5);
  EXPECT_GT(ellipse, 5);
}

TEST(TerminalCost, Values) {
  CostParams cp;
  cp.c_g = 0.5;
  Vector x = Vector::Zero(12);
  x(0) = 100;
  x(6) = 90;
  const auto e = terminal_cost(x, 0, {6}, 0.0, cp);
  EXPECT_DOUBLE_EQ(e.value, -55.0);
  EXPECT_EQ(e.grad_x(0), -1.0);
  EXPECT_EQ(e.grad_x(6), 0.5);
  EXPECT_EQ(e.hess_x.norm(), 0.0);
  cp.c_g = 0.0;
  EXPECT_DOUBLE_EQ(terminal_cost(x, 0, {6}, 0.0, cp).value, -100.0);
}

TEST(TerminalCost, ThreePlayers) {
  std::mt19937_64 rng(45);
  std::uniform_real_distribution<double> U(0.0, 300.0);
  CostParams cp;
  cp.c_g = 0.3;
  Vector x = Vector::Zero(18);
  for (int i = 0; i < 3; ++i) x(6 * i) = U(rng);
  for (int i = 0; i < 3; ++i) {
    std::vector<Eigen::Index> others;
    double expected = -x(6 * i);
    for (int j = 0; j < 3; ++j)
      if (j != i) {
        others.push_back(6 * j);
        expected += 0.3 * x(6 * j);
      }
    EXPECT_NEAR(terminal_cost(x, 6 * i, others, 0.0, cp).value, expected, 1e-12);
  }
}

TEST(PiecewiseLinear, RejectsBadTables) {
  EXPECT_THROW(PiecewiseLinear({0.0, 0.0}, {1.0, 2.0}), ConfigError);
  EXPECT_THROW(PiecewiseLinear({0.0}, {1.0, 2.0}), ConfigError);
}
