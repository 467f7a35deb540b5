#pragma once

#include <cstddef>
#include <vector>

#include "compglm/constraints.hpp"
#include "compglm/glm.hpp"
#include "compglm/prox_solver.hpp"

namespace compglm {

struct PathOptions {
  int grid_size = 50;
  /// Smallest lambda as a fraction of lambda_max.
  double min_ratio = 0.01;
  SolverOptions solver;
  /// Warm starts run the grid sequentially; cold starts may use `threads`.
  bool warm_start = true;
  int threads = 1;
};

struct PathResult {
  std::vector<double> lambdas;  ///< strictly decreasing
  std::vector<FitResult> fits;
  std::vector<double> ebic_values;
  std::vector<bool> candidate;  ///< entered the argmin (first per support size)
  std::size_t selected_index = 0;
  double xi = 0.0;

  const FitResult& selected() const { return fits.at(selected_index); }
  double lambda_opt() const { return lambdas.at(selected_index); }
};

/// |P_C (1/n) Z~'(y - mu(0, b0))|_inf with b0 the link of mean(y). Any
/// lambda at or above this value gives beta = 0.
double lambda_max(const Dataset& data, GlmFamily family, const ConstraintSet& cs);

/// Log-spaced grid from lambda_max down to min_ratio * lambda_max.
std::vector<double> lambda_grid(double lambda_max, int grid_size, double min_ratio);

/// xi = 1 - 1/(2 delta) with delta = log p / log n clamped to >= 0.5.
double ebic_xi(Index n, Index p);

/// -2 loglik + nu log n + 2 nu xi log p, nu = nonzero coefficients
/// (intercept excluded), loglik without h(y).
double ebic(const FitResult& fit, const Dataset& data, GlmFamily family, const ConstraintSet& cs,
            double xi);

/// Fits the grid, scores each fit by EBIC and picks the minimizer among the
/// first (largest-lambda) fit of each support size; ties go to larger lambda.
PathResult select_lambda(const Dataset& data, GlmFamily family, const ConstraintSet& cs,
                         const PathOptions& opts = {});

/// Fits an explicit decreasing grid (no selection).
std::vector<FitResult> fit_path(const Dataset& data, GlmFamily family, const ConstraintSet& cs,
                                const std::vector<double>& lambdas, const PathOptions& opts);

/// Constraint level for the de-biasing program: 0.01 * lambda_opt.
double gamma_rule(double lambda_opt);

}  // namespace compglm
