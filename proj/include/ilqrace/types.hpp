#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace ilqrace {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Player-indexed list of per-player vectors (inputs, gradients, ...).
using PlayerVectors = std::vector<Vector>;
using PlayerMatrices = std::vector<Matrix>;

/// Value, gradient and Hessian of one cost term at an evaluation point. The
/// input blocks are w.r.t. the owning player's input only; mixed state/input
/// terms are not represented.
struct CostExpansion {
  double value = 0.0;
  Vector grad_x;
  Matrix hess_x;
  Vector grad_u;
  Matrix hess_u;

  static CostExpansion zeros(Eigen::Index n, Eigen::Index m) {
    return {0.0, Vector::Zero(n), Matrix::Zero(n, n), Vector::Zero(m), Matrix::Zero(m, m)};
  }
};

/// Raised when a stage of an LQ game has no unique equilibrium: the stacked
/// stationarity system (feedback) or Lambda (open loop) is numerically singular.
class SingularSystem : public std::runtime_error {
 public:
  SingularSystem(std::size_t stage, const std::string& what)
      : std::runtime_error("singular system at stage " + std::to_string(stage) +
                           ": " + what),
        stage_(stage) {}

  std::size_t stage() const noexcept { return stage_; }

 private:
  std::size_t stage_;
};

/// Raised when dynamics or costs are evaluated outside their domain
/// (e.g. speed at or below the chart floor, curvilinear singularity).
class EvaluationFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised for invalid configuration files or parameter sets.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace ilqrace
