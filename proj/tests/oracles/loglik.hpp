#pragma once

// Extended-precision log-likelihood gradient by Richardson-extrapolated
// central differences. Independent of the library's own evaluation.

#include <cmath>
#include <vector>

#include "compglm/glm.hpp"

namespace oracle {

using compglm::GlmFamily;
using compglm::Index;
using compglm::MatrixXd;
using compglm::VectorXd;

inline long double loglik_term(GlmFamily f, long double y, long double eta) {
  switch (f) {
    case GlmFamily::kGaussian: return y * eta - 0.5L * eta * eta;
    case GlmFamily::kLogistic:
      return y * eta - (eta > 0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta)));
    case GlmFamily::kPoisson: return y * eta - std::exp(eta);
  }
  return 0.0L;
}

// Gradient of the unscaled log-likelihood; entry p is the intercept.
inline VectorXd loglik_gradient(GlmFamily f, const VectorXd& beta, double b, const VectorXd& y,
                                const MatrixXd& z, long double h = 1e-4L) {
  const Index n = z.rows(), p = z.cols();
  std::vector<long double> eta(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    long double e = b;
    for (Index k = 0; k < p; ++k) e += static_cast<long double>(z(i, k)) * beta[k];
    eta[static_cast<std::size_t>(i)] = e;
  }
  VectorXd g(p + 1);
  for (Index j = 0; j <= p; ++j) {
    // The likelihood depends on the coordinate only through eta_i + x_ij * s.
    const auto central = [&](long double s) {
      long double diff = 0.0L;
      for (Index i = 0; i < n; ++i) {
        const long double e = eta[static_cast<std::size_t>(i)];
        const long double x = j < p ? static_cast<long double>(z(i, j)) : 1.0L;
        diff += loglik_term(f, y[i], e + x * s) - loglik_term(f, y[i], e - x * s);
      }
      return diff / (2.0L * s);
    };
    g[j] = static_cast<double>((4.0L * central(h / 2) - central(h)) / 3.0L);
  }
  return g;
}

}  // namespace oracle
