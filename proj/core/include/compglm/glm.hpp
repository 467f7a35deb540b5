#pragma once

#include <string_view>

#include <Eigen/Dense>

namespace compglm {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Canonical exponential family of the response.
///
///   logistic:  A(eta) = log(1 + e^eta)
///   gaussian:  A(eta) = eta^2 / 2   (unit dispersion)
///   poisson:   A(eta) = e^eta
enum class GlmFamily { kLogistic, kGaussian, kPoisson };

std::string_view to_string(GlmFamily family);
/// Accepts "logistic" / "binomial", "gaussian", "poisson".
GlmFamily parse_family(std::string_view name);

/// Linear predictors above this are clamped (with a warning) before
/// exponentiation in the poisson family.
inline constexpr double kMaxPoissonEta = 700.0;

double log_partition(GlmFamily family, double eta);
double mean(GlmFamily family, double eta);
double variance(GlmFamily family, double eta);
/// Canonical link g = (A')^{-1}. For the logistic family mu is clamped into
/// [1e-10, 1 - 1e-10]; for poisson mu is floored at 1e-10.
double link(GlmFamily family, double mu);

/// Response vector and design. `z` holds the (log-compositional) covariates,
/// one row per sample.
struct Dataset {
  VectorXd y;
  MatrixXd z;
  bool has_intercept = true;

  Index n() const { return z.rows(); }
  Index p() const { return z.cols(); }

  /// Throws ValidationError / ShapeError when sizes disagree, entries are
  /// non-finite, or responses fall outside the family's support.
  void validate(GlmFamily family) const;
};

/// eta = z * beta + intercept.
VectorXd linear_predictor(const MatrixXd& z, const VectorXd& beta, double intercept);

/// Per-sample negative log-likelihood scaled by 1/n, without the h(y) base
/// measure terms:  -(1/n) [ y'eta - sum A(eta_i) ].
double neg_loglik(GlmFamily family, const VectorXd& beta, double intercept,
                  const VectorXd& y, const MatrixXd& z);

/// Same quantity computed from a precomputed linear predictor.
double neg_loglik_from_eta(GlmFamily family, const VectorXd& eta, const VectorXd& y);

struct Score {
  VectorXd beta;     ///< z'(y - mu)
  double intercept;  ///< 1'(y - mu)
};

/// Gradient of the (unscaled) log-likelihood, i.e. of -n * neg_loglik.
Score score(GlmFamily family, const VectorXd& beta, double intercept,
            const VectorXd& y, const MatrixXd& z);

/// Unnormalized information z' V(beta) z with V = diag(variance(eta_i)).
MatrixXd information(GlmFamily family, const VectorXd& beta, const MatrixXd& z,
                     double intercept = 0.0);

}  // namespace compglm
