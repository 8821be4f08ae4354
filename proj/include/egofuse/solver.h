#pragma once

#include <Eigen/Core>

#include <any>
#include <map>
#include <vector>

namespace egofuse {

/// One group of residual rows sharing a column set.
///
/// Columns are global variable indices: frame f, local index i maps to
/// f * frameDim + i; global variables follow all frames. The widest frame span
/// of any block sets the band width of the normal equations.
struct ResidualBlock {
  Eigen::VectorXd residual;
  Eigen::MatrixXd jacobian; // rows x cols.size(); empty for cost-only evaluation
  std::vector<int> cols;
  double huberDelta = 0.0;  // > 0 applies a Huber loss on ||residual||
  int term = 0;             // bucket for per-term loss reporting
  double pseudoHuberDelta = 0.0; // > 0 applies 2 delta (sqrt(s + delta^2) - delta) instead
};

/// rho(s) for s = ||r||^2: s in the quadratic zone, 2 delta sqrt(s) - delta^2 beyond.
double huberCost(double squaredNorm, double delta);
/// 2 delta (sqrt(s + delta^2) - delta): quadratic near zero, linear far out.
double pseudoHuberCost(double squaredNorm, double delta);
double blockCost(const ResidualBlock& block);

/// Nonlinear least-squares problem with a frame-banded sparsity pattern.
class StructuredProblem {
 public:
  virtual ~StructuredProblem() = default;

  [[nodiscard]] virtual int frameCount() const = 0;
  [[nodiscard]] virtual int frameDim() const = 0;
  [[nodiscard]] virtual int globalDim() const {
    return 0;
  }

  virtual void evaluate(std::vector<ResidualBlock>& blocks, bool withJacobians) const = 0;
  /// state <- state [+] delta (manifold update for rotations).
  virtual void applyIncrement(const Eigen::VectorXd& delta) = 0;
  [[nodiscard]] virtual std::any saveState() const = 0;
  virtual void restoreState(const std::any& state) = 0;
};

struct LmOptions {
  int maxIterations = 50;
  double initialDamping = 1e-4;
  double stepTolerance = 1e-10;
  double relativeCostTolerance = 1e-12;
  double gradientTolerance = 1e-12;
  double minDiagonal = 1e-6;
};

struct LmSummary {
  bool converged = false;
  int iterations = 0;
  int rejectedSteps = 0;
  double initialCost = 0.0;
  double finalCost = 0.0;
  std::vector<double> acceptedCosts; // initial cost followed by every accepted step
  std::map<int, double> termCosts;   // final cost per ResidualBlock::term
};

/// Levenberg-Marquardt damped Gauss-Newton. Huber blocks are handled by
/// iteratively reweighted linearization; steps are accepted only when the
/// true robust cost decreases.
LmSummary solveLevenbergMarquardt(StructuredProblem& problem, const LmOptions& options);

/// Total cost and per-term breakdown at the current state.
double evaluateCost(const StructuredProblem& problem, std::map<int, double>* perTerm = nullptr);

/// Solves the block-banded-plus-arrow system
///   [A C; C^T G] [x; y] = [a; b]
/// where A has diagonal blocks `diag` and super-diagonal blocks `upper`
/// (upper[b][f] couples frame f to f+b+1), and `coupling[f]` is frame f's block
/// of C. Returns false when a pivot block is not positive definite.
bool solveBandedArrow(
    const std::vector<Eigen::MatrixXd>& diag,
    const std::vector<std::vector<Eigen::MatrixXd>>& upper,
    const std::vector<Eigen::MatrixXd>& coupling,
    const Eigen::MatrixXd& global,
    const Eigen::VectorXd& rhs,
    Eigen::VectorXd& solution);

/// Same system, with each frame's variables outside `interface` (frame-local
/// indices) eliminated first. Valid when `upper` is zero outside the
/// interface rows and columns; the banded factorization then runs on the
/// interface variables only.
bool solveBandedArrowReduced(
    const std::vector<Eigen::MatrixXd>& diag,
    const std::vector<std::vector<Eigen::MatrixXd>>& upper,
    const std::vector<Eigen::MatrixXd>& coupling,
    const Eigen::MatrixXd& global,
    const Eigen::VectorXd& rhs,
    const std::vector<int>& interface,
    Eigen::VectorXd& solution);

} // namespace egofuse
