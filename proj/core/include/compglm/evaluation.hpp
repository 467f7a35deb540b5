#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "compglm/compositional.hpp"
#include "compglm/debias.hpp"
#include "compglm/model_select.hpp"
#include "compglm/stats.hpp"

namespace compglm {

/// Which constraints the analysis imposes on simulated data:
///   multi  the eight true zero-sum groups
///   one    a single sum-to-zero constraint
///   none   unconstrained
///   wrong  the five misspecified groups
enum class ConstraintMode { kMulti, kOne, kNone, kWrong };

std::string_view to_string(ConstraintMode mode);
ConstraintMode parse_constraint_mode(std::string_view name);
ConstraintSet constraints_for_mode(ConstraintMode mode, Index p);

struct ExperimentConfig {
  /// Template for every replicate; its seed is replaced by base_seed + i.
  SimulationConfig simulation;
  ConstraintMode mode = ConstraintMode::kMulti;
  int replicates = 100;
  std::uint64_t base_seed = 1;
  double alpha = 0.05;
  PathOptions path;
  /// gamma is ignored; each replicate uses gamma_rule(lambda_opt).
  DebiasOptions debias;
  int threads = 1;
  /// Replicates failing beyond this fraction abort the experiment.
  double max_failed_fraction = 0.05;
  /// A replicate counts as failed when more than this fraction of its
  /// coordinates lack a confidence interval.
  double max_missing_ci_fraction = 0.10;
};

struct ReplicateResult {
  std::uint64_t seed = 0;
  bool failed = false;
  std::string failure;
  double lambda_opt = 0.0;
  double gamma = 0.0;
  Index support_size = 0;
  VectorXd beta_n;
  VectorXd beta_u;
  VectorXd std_errors;
  VectorXd ci_lower;
  VectorXd ci_upper;
  std::vector<bool> valid;
  double constraint_residual = 0.0;  ///< |C' beta_u|_inf
  int escalations = 0;
};

struct ExperimentReport {
  ConstraintMode mode = ConstraintMode::kMulti;
  Index n = 0;
  Index p = 0;
  int n_replicates = 0;
  int n_failed = 0;
  double alpha = 0.05;
  std::uint64_t base_seed = 0;
  VectorXd beta_true;

  VectorXd coverage;        ///< per coordinate, over replicates with a CI
  VectorXd mean_length;     ///< per coordinate mean CI length
  double mean_coverage = 0.0;
  double mean_ci_length = 0.0;
  double tp_rate = 0.0;
  double fp_rate = 0.0;
  double max_constraint_residual = 0.0;
  /// beta_u_j / se_j at truly-zero coordinates, pooled over replicates.
  std::vector<double> null_z;

  std::vector<ReplicateResult> replicates;
  /// Wall-clock time; reported on the console, never written to files.
  double seconds = 0.0;
};

/// One replicate: simulate, EBIC path, de-bias at gamma = 0.01 lambda_opt,
/// Wald intervals.
ReplicateResult run_replicate(const ExperimentConfig& config, std::uint64_t seed);

/// Replicates run on `threads` workers; aggregation is order-independent.
/// Throws ExperimentError when more than max_failed_fraction fail.
ExperimentReport run_coverage_experiment(const ExperimentConfig& config);

struct StabilityOptions {
  int n_subsamples = 50;
  double fraction = 2.0 / 3.0;
  std::uint64_t seed = 1;
  SolverOptions solver;
  int threads = 1;
  int max_resamples = 100;
};

struct StabilityReport {
  MatrixXd selection_probability;  ///< taxa x lambda grid
  std::vector<double> lambdas;
  int n_subsamples = 0;
  double fraction = 0.0;
  int resamples = 0;  ///< degenerate subsamples redrawn
  std::uint64_t seed = 0;
};

/// Refits the lambda grid on random subsamples drawn without replacement
/// (stratified by class for the logistic family) and records how often each
/// coefficient is nonzero.
StabilityReport stability_selection(const Dataset& data, GlmFamily family,
                                    const ConstraintSet& cs, const std::vector<double>& lambdas,
                                    const StabilityOptions& opts);

struct PredictionOptions {
  /// Fraction of each class placed in the training set.
  double train_fraction = 2.0 / 3.0;
  int replicates = 50;
  std::uint64_t seed = 1;
  PathOptions path;
  DebiasOptions debias;
  double alpha = 0.05;
  int threads = 1;
};

struct PredictionReport {
  std::vector<double> auc_penalized;
  std::vector<double> auc_debiased;
  std::vector<double> auc_debiased_selected;
  MeanSd penalized;
  MeanSd debiased;
  MeanSd debiased_selected;
  int replicates = 0;
};

/// Repeated stratified train/test splits of a binary-outcome dataset. On
/// each split: EBIC-tuned fit on the training part, then test AUC of the
/// penalized estimate, the de-biased estimate, and the de-biased estimate
/// restricted to coordinates whose interval excludes zero.
PredictionReport train_test_evaluate(const Dataset& data, GlmFamily family,
                                     const ConstraintSet& cs, const PredictionOptions& opts);

/// Rows of `data` at the given indices.
Dataset subset(const Dataset& data, const std::vector<Index>& rows);

}  // namespace compglm
