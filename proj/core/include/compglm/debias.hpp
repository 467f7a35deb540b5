#pragma once

#include <vector>

#include "compglm/constraints.hpp"
#include "compglm/glm.hpp"
#include "compglm/prox_solver.hpp"

namespace compglm {

struct DebiasOptions {
  /// Constraint level of the row programs; typically gamma_rule(lambda_opt).
  double gamma = 0.0;
  /// Initial ADMM penalty. Rebalanced during the solve from the residuals;
  /// rebalancing is free because the linear system is diagonal in the
  /// eigenbasis of sigma.
  double admm_rho = 1.0;
  double qp_tol = 1e-7;
  int qp_max_iters = 5000;
  double gamma_growth = 2.0;
  int max_escalations = 5;
  /// Row programs run concurrently on this many threads.
  int threads = 1;

  void validate() const;
};

/// Solution of one de-biasing row program
///   minimize m' S m  subject to |S m - target|_inf <= gamma.
struct RowSolution {
  VectorXd m;
  double gamma = 0.0;      ///< level actually used after escalations
  int escalations = 0;
  int iterations = 0;      ///< ADMM iterations summed over all attempts
  bool feasible = false;   ///< |S m - target|_inf <= gamma + qp_tol
  double objective = 0.0;  ///< m' S m
  double violation = 0.0;  ///< max(|S m - target|_inf - gamma, 0)
};

/// The row programs for one sigma share a single symmetric
/// eigendecomposition; each ADMM m-update is then diagonal.
class DebiasProgram {
 public:
  explicit DebiasProgram(const MatrixXd& sigma);

  Index dim() const { return sigma_.rows(); }
  const MatrixXd& sigma() const { return sigma_; }

  /// Single attempt at a fixed gamma (no escalation).
  RowSolution solve_fixed(const VectorXd& target, double gamma, const DebiasOptions& opts) const;

  /// Solves at opts-level gamma, doubling it (up to max_escalations times)
  /// while the program looks infeasible. Escalations are logged as warnings.
  RowSolution solve(const VectorXd& target, double gamma, const DebiasOptions& opts) const;

 private:
  MatrixXd sigma_;
  MatrixXd eigvecs_;
  VectorXd eigvals_;  ///< negative / negligible eigenvalues zeroed
};

/// Sigma-hat = Z~' V(beta) Z~ / n at the fitted coefficients. When the fit
/// has an intercept the design is first centred with weights V, which
/// profiles the unpenalized intercept out of the information.
MatrixXd sigma_hat(const FitResult& fit, const Dataset& data, GlmFamily family,
                   const ConstraintSet& cs);

RowSolution solve_debias_row(const MatrixXd& sigma, const VectorXd& target, double gamma,
                             const DebiasOptions& opts = {});

/// M~ = (I - P_C) M.
MatrixXd build_m_tilde(const MatrixXd& m, const ConstraintSet& cs);

/// beta_u = beta_n + (1/n) M~ Z~' (y - mu(beta_n)).
VectorXd debias(const FitResult& fit, const MatrixXd& m_tilde, const Dataset& data,
                GlmFamily family, const ConstraintSet& cs);

struct InferenceResult {
  VectorXd beta_n;
  VectorXd beta_u;
  MatrixXd m_tilde;
  MatrixXd sigma_hat;
  VectorXd std_errors;
  VectorXd ci_lower;
  VectorXd ci_upper;
  double alpha = 0.05;
  double z_multiplier = 0.0;
  Index n = 0;

  // Row-program diagnostics, one entry per coordinate.
  double gamma = 0.0;
  std::vector<bool> valid;  ///< false: QP failed, CI missing (NaN bounds)
  std::vector<double> gamma_used;
  std::vector<int> escalations;
  std::vector<int> qp_iterations;

  Index p() const { return beta_u.size(); }
  Index failed_count() const;
  /// The interval exists and excludes zero.
  bool selected(Index j) const;
};

/// z_{1 - alpha/2}.
double normal_quantile_two_sided(double alpha);

/// Wald intervals beta_u +- z * sqrt([M~ S M~']_jj / n). Negative diagonal
/// entries (round-off) are clamped to 0 with a warning.
InferenceResult confidence_intervals(const VectorXd& beta_u, const MatrixXd& m_tilde,
                                     const MatrixXd& sigma, Index n, double alpha);

/// Full de-biasing: sigma-hat, the p row programs, M~, beta_u, intervals.
InferenceResult infer(const FitResult& fit, const Dataset& data, GlmFamily family,
                      const ConstraintSet& cs, const DebiasOptions& opts, double alpha = 0.05);

}  // namespace compglm
