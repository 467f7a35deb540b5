#include "compglm/glm.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>

#include "compglm/errors.hpp"
#include "compglm/log.hpp"

namespace compglm {
namespace {

void require_finite(double eta, const char* op) {
  if (!std::isfinite(eta)) {
    throw DomainError(std::string(op) + ": non-finite linear predictor");
  }
}

double clamp_poisson(double eta) {
  if (eta > kMaxPoissonEta) {
    warn("poisson linear predictor clamped to 700 before exponentiation");
    return kMaxPoissonEta;
  }
  return eta;
}

double expit(double eta) {
  if (eta >= 0.0) return 1.0 / (1.0 + std::exp(-eta));
  const double e = std::exp(eta);
  return e / (1.0 + e);
}

void require_same_rows(const VectorXd& y, const MatrixXd& z, const char* op) {
  if (y.size() != z.rows()) {
    std::ostringstream os;
    os << op << ": response length " << y.size() << " != design rows " << z.rows();
    throw ShapeError(os.str());
  }
}

void require_beta(const VectorXd& beta, const MatrixXd& z, const char* op) {
  if (beta.size() != z.cols()) {
    std::ostringstream os;
    os << op << ": beta length " << beta.size() << " != design columns " << z.cols();
    throw ShapeError(os.str());
  }
}

}  // namespace

std::string_view to_string(GlmFamily family) {
  switch (family) {
    case GlmFamily::kLogistic: return "logistic";
    case GlmFamily::kGaussian: return "gaussian";
    case GlmFamily::kPoisson: return "poisson";
  }
  return "unknown";
}

GlmFamily parse_family(std::string_view name) {
  if (name == "logistic" || name == "binomial") return GlmFamily::kLogistic;
  if (name == "gaussian") return GlmFamily::kGaussian;
  if (name == "poisson") return GlmFamily::kPoisson;
  throw ValidationError("unknown family '" + std::string(name) + "'");
}

double log_partition(GlmFamily family, double eta) {
  require_finite(eta, "log_partition");
  switch (family) {
    case GlmFamily::kLogistic:
      // log(1 + e^eta) without overflow for large eta.
      return eta > 35.0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta));
    case GlmFamily::kGaussian:
      return 0.5 * eta * eta;
    case GlmFamily::kPoisson:
      return std::exp(clamp_poisson(eta));
  }
  return 0.0;
}

double mean(GlmFamily family, double eta) {
  require_finite(eta, "mean");
  switch (family) {
    case GlmFamily::kLogistic: return expit(eta);
    case GlmFamily::kGaussian: return eta;
    case GlmFamily::kPoisson: return std::exp(clamp_poisson(eta));
  }
  return 0.0;
}

double variance(GlmFamily family, double eta) {
  require_finite(eta, "variance");
  switch (family) {
    case GlmFamily::kLogistic: {
      // e^{-|eta|} / (1 + e^{-|eta|})^2 avoids cancellation in mu(1 - mu).
      const double e = std::exp(-std::abs(eta));
      return e / ((1.0 + e) * (1.0 + e));
    }
    case GlmFamily::kGaussian: return 1.0;
    case GlmFamily::kPoisson: return std::exp(clamp_poisson(eta));
  }
  return 0.0;
}

double link(GlmFamily family, double mu) {
  if (!std::isfinite(mu)) throw DomainError("link: non-finite mean");
  switch (family) {
    case GlmFamily::kLogistic: {
      const double m = std::clamp(mu, 1e-10, 1.0 - 1e-10);
      return std::log(m / (1.0 - m));
    }
    case GlmFamily::kGaussian: return mu;
    case GlmFamily::kPoisson: return std::log(std::max(mu, 1e-10));
  }
  return 0.0;
}

void Dataset::validate(GlmFamily family) const {
  if (n() < 1 || p() < 1) throw ValidationError("dataset must have n >= 1 and p >= 1");
  require_same_rows(y, z, "dataset");
  if (!y.allFinite() || !z.allFinite()) {
    throw ValidationError("dataset contains non-finite entries");
  }
  for (Index i = 0; i < y.size(); ++i) {
    const double v = y[i];
    if (family == GlmFamily::kLogistic && v != 0.0 && v != 1.0) {
      throw ValidationError("logistic response must be 0/1 (row " + std::to_string(i + 1) + ")");
    }
    if (family == GlmFamily::kPoisson && (v < 0.0 || v != std::floor(v))) {
      throw ValidationError("poisson response must be a nonnegative integer (row " +
                            std::to_string(i + 1) + ")");
    }
  }
}

VectorXd linear_predictor(const MatrixXd& z, const VectorXd& beta, double intercept) {
  require_beta(beta, z, "linear_predictor");
  VectorXd eta = z * beta;
  eta.array() += intercept;
  return eta;
}

double neg_loglik_from_eta(GlmFamily family, const VectorXd& eta, const VectorXd& y) {
  if (eta.size() != y.size()) throw ShapeError("neg_loglik: eta and y lengths differ");
  // Compensated summation keeps the value reproducible at ~1e-15 relative.
  double sum = 0.0;
  double carry = 0.0;
  for (Index i = 0; i < eta.size(); ++i) {
    const double term = y[i] * eta[i] - log_partition(family, eta[i]);
    const double adj = term - carry;
    const double next = sum + adj;
    carry = (next - sum) - adj;
    sum = next;
  }
  return -sum / static_cast<double>(eta.size());
}

double neg_loglik(GlmFamily family, const VectorXd& beta, double intercept,
                  const VectorXd& y, const MatrixXd& z) {
  require_same_rows(y, z, "neg_loglik");
  return neg_loglik_from_eta(family, linear_predictor(z, beta, intercept), y);
}

Score score(GlmFamily family, const VectorXd& beta, double intercept, const VectorXd& y,
            const MatrixXd& z) {
  require_same_rows(y, z, "score");
  const VectorXd eta = linear_predictor(z, beta, intercept);
  VectorXd resid(eta.size());
  for (Index i = 0; i < eta.size(); ++i) resid[i] = y[i] - mean(family, eta[i]);
  return Score{z.transpose() * resid, resid.sum()};
}

MatrixXd information(GlmFamily family, const VectorXd& beta, const MatrixXd& z,
                     double intercept) {
  const VectorXd eta = linear_predictor(z, beta, intercept);
  VectorXd w(eta.size());
  for (Index i = 0; i < eta.size(); ++i) w[i] = variance(family, eta[i]);
  MatrixXd info = z.transpose() * w.asDiagonal() * z;
  // Exact symmetry regardless of the product's summation order.
  return 0.5 * (info + info.transpose());
}

}  // namespace compglm
