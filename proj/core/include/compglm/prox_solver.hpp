#pragma once

#include <functional>
#include <limits>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "compglm/constraints.hpp"
#include "compglm/glm.hpp"

namespace compglm {

/// How the constrained l1 proximal map is evaluated.
///
/// kExact solves argmin_{C'b = 0} { thr * |b|_1 + 0.5 |v - b|^2 } through its
/// r-dimensional dual (semismooth Newton on the multiplier). The result is
/// sparse and feasible.
///
/// kThresholdThenProject returns P_C(S_thr(v)). This coincides with the exact
/// map when no constraint is active (r = 0, thr = 0, or when the thresholded
/// vector is already feasible) but otherwise spreads mass over whole groups;
/// the resulting fixed point is not a minimizer of the penalized problem.
enum class ProxMode { kExact, kThresholdThenProject };

struct SolverOptions {
  int max_iters = 10000;
  /// Relative change of the penalized objective, required on 5 consecutive
  /// iterations.
  double tol = 1e-8;
  /// Momentum friction r in (k - 1) / (k + r - 1).
  double friction = 10.0;
  double initial_step = 1.0;
  bool line_search = true;
  double kkt_tol = 1e-4;
  ProxMode prox = ProxMode::kExact;

  void validate() const;
};

struct FitResult {
  VectorXd beta;
  double intercept = 0.0;
  double lambda = 0.0;
  int iters = 0;
  std::vector<double> objective_trace;  ///< g + lambda |beta|_1 per iteration
  bool converged = false;
  double kkt_residual = std::numeric_limits<double>::infinity();
  double step = 1.0;  ///< last accepted step size

  Index support_size() const;
};

/// Optional starting point for warm starts along a lambda path.
struct FitStart {
  VectorXd beta;
  double intercept = 0.0;
  std::optional<double> step;
};

/// Elementwise sign(x) max(|x| - t, 0). Throws DomainError for t < 0.
VectorXd soft_threshold(const VectorXd& x, double t);

struct ProxResult {
  VectorXd beta;
  VectorXd multiplier;  ///< eta with beta = S_thr(v - C eta); empty when r = 0
};

/// Exact constrained soft-threshold, see ProxMode::kExact.
ProxResult constrained_prox(const VectorXd& v, double threshold, const ConstraintSet& cs);

/// One proximal step: the constrained prox of t * lambda * |.|_1 at v.
VectorXd prox_step(const VectorXd& v, double t, double lambda, const ConstraintSet& cs,
                   ProxMode mode = ProxMode::kExact);

/// Smooth part g of a composite objective.
struct SmoothObjective {
  std::function<double(const VectorXd&)> value;
  std::function<VectorXd(const VectorXd&)> gradient;
};

/// x -> prox of the nonsmooth part at x with step t.
using ProxOperator = std::function<VectorXd(const VectorXd& x, double t)>;

/// True when the backtracking condition
///   g(y - t G) <= g(y) - t grad(y)'G + (t/2) |G|^2,  G = (y - prox(y - t grad, t)) / t
/// holds, up to `slack`.
bool sufficient_decrease(const SmoothObjective& g, const VectorXd& y, double t,
                         const ProxOperator& prox, double slack = 0.0);

/// Largest t in {t_prev, t_prev/2, ...} satisfying sufficient_decrease.
/// Throws SolverError when t drops below 1e-15.
double line_search(const SmoothObjective& g, const VectorXd& y, double t_prev,
                   const ProxOperator& prox);

/// KKT violation of the constrained lasso at beta, given the gradient of the
/// smooth part. The constraint multiplier is recovered from the exact prox
/// at (beta - grad) and q = grad + C eta is tested:
///   beta_j != 0:  |q_j + lambda sign(beta_j)|
///   beta_j == 0:  max(|q_j| - lambda, 0)
/// plus |grad_intercept| when an intercept is fitted.
double kkt_residual(const VectorXd& beta, const VectorXd& grad_beta, double grad_intercept,
                    double lambda, const ConstraintSet& cs);

/// Same test with the multiplier fixed at zero (q = P_C grad). Only a valid
/// optimality certificate when the optimal multiplier vanishes, e.g. r = 0.
double kkt_residual_projected_gradient(const VectorXd& beta, const VectorXd& grad_beta,
                                       double grad_intercept, double lambda,
                                       const ConstraintSet& cs);

/// Constrained l1-penalized GLM fit by accelerated proximal gradient with
/// backtracking. The intercept (when enabled) is unpenalized and
/// unconstrained and takes plain gradient steps jointly with beta.
FitResult fit(const Dataset& data, GlmFamily family, const ConstraintSet& cs, double lambda,
              const SolverOptions& opts = {}, const FitStart* start = nullptr);

/// Gradient of g = neg_loglik at (beta, intercept) on the reduced design.
struct Gradient {
  VectorXd beta;
  double intercept = 0.0;
};
Gradient loss_gradient(GlmFamily family, const VectorXd& beta, double intercept,
                       const VectorXd& y, const MatrixXd& reduced_z);

/// Recomputes the KKT residual of a finished fit from scratch.
double fit_kkt_residual(const FitResult& fit, const Dataset& data, GlmFamily family,
                        const ConstraintSet& cs);

/// Intercept starting value: the canonical link of the response mean.
double initial_intercept(const Dataset& data, GlmFamily family);

}  // namespace compglm
