#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "compglm/constraints.hpp"
#include "compglm/glm.hpp"

namespace compglm {

/// Identifier of the pseudo-random generator behind every simulation; written
/// into all outputs.
inline constexpr std::string_view kGeneratorId = "mt19937_64+std::normal_distribution(libstdc++)";

/// Nonnegative abundances, one row per sample.
struct AbundanceTable {
  MatrixXd w;
  std::vector<std::string> taxa;
  std::vector<std::string> samples;

  Index n() const { return w.rows(); }
  Index p() const { return w.cols(); }
  /// Entries >= 0, finite, at least one positive entry per row, labels sized.
  void validate() const;
};

/// Header row of taxon names; first column holds sample ids; numeric body.
AbundanceTable load_abundance_csv(const std::filesystem::path& path);
AbundanceTable parse_abundance_csv(std::string_view text, std::string_view source = "<memory>");
void write_abundance_csv(const std::filesystem::path& path, const AbundanceTable& table);

/// Keeps taxa positive in at least `min_fraction` of samples.
AbundanceTable filter_prevalence(const AbundanceTable& table, double min_fraction);

enum class ZeroReplacement {
  kGlobalMinimum,    ///< 0.5 x smallest positive entry of the whole table
  kPerTaxonMinimum,  ///< 0.5 x smallest positive entry of the zero's column
};

AbundanceTable replace_zeros(const AbundanceTable& table,
                             ZeroReplacement rule = ZeroReplacement::kGlobalMinimum);

/// Z_ij = log(W_ij / sum_k W_ik). Requires strictly positive entries.
MatrixXd to_log_composition(const MatrixXd& w);
MatrixXd to_log_composition(const AbundanceTable& table);

/// The coefficient vector used by the synthetic design: a fixed 16-entry
/// prefix followed by zeros.
VectorXd simulation_beta(Index p);
/// Eight zero-sum groups 1-10, 11-16, 17-20, 21-23, 24-30, 31-32, 33-40, 41-p.
GroupConstraints simulation_groups(Index p);
/// Misspecified groups 1-4, 5-12, 13-23, 24-30, 31-p.
GroupConstraints misspecified_groups(Index p);

struct SimulationConfig {
  Index n = 500;
  Index p = 50;
  /// Log-scale covariance zeta^|i-j|.
  double zeta = 0.2;
  /// Log-scale location of the first `n_major` taxa; defaults to p / 2.
  std::optional<double> major_location;
  Index n_major = 5;
  double minor_location = 1.0;
  /// Empty means simulation_beta(p).
  VectorXd beta_true;
  double intercept_true = -1.0;
  /// Cases make up exactly this fraction of the sample.
  double case_fraction = 0.4;
  std::uint64_t seed = 1;

  void validate() const;
  double resolved_major_location() const;
  VectorXd resolved_beta() const;
  Index case_count() const;
};

struct SimulatedData {
  Dataset dataset;  ///< y in {0,1}, z = log-composition, intercept on
  MatrixXd w;
  VectorXd beta_true;
  double intercept_true = 0.0;
  GroupConstraints groups;
  ConstraintSet constraints;
  std::uint64_t seed = 0;
  /// Subjects generated before both class quotas filled.
  std::uint64_t subjects_drawn = 0;
};

/// Draws subjects (log-normal abundance row, then a Bernoulli outcome) one at
/// a time and keeps each one while its class quota (case_count() cases,
/// n - case_count() controls) is still open, so the class split is exact.
/// Deterministic given the seed. Throws SimulationError if 10,000 * n
/// subjects do not fill both quotas.
SimulatedData simulate_dataset(const SimulationConfig& config);

}  // namespace compglm
