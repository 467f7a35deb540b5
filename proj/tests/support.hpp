#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "compglm/constraints.hpp"
#include "compglm/glm.hpp"
#include "compglm/log.hpp"

namespace testing {

using compglm::Index;
using compglm::MatrixXd;
using compglm::VectorXd;

inline MatrixXd random_matrix(Index rows, Index cols, std::mt19937_64& rng, double sd = 1.0) {
  std::normal_distribution<double> nd(0.0, sd);
  MatrixXd m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = nd(rng);
  return m;
}

inline VectorXd random_vector(Index n, std::mt19937_64& rng, double sd = 1.0) {
  return random_matrix(n, 1, rng, sd).col(0);
}

// Log-compositions of log-normal rows.
inline MatrixXd random_log_composition(Index n, Index p, std::mt19937_64& rng) {
  MatrixXd z = random_matrix(n, p, rng);
  for (Index i = 0; i < n; ++i) {
    const double top = z.row(i).maxCoeff();
    const double lse = top + std::log((z.row(i).array() - top).exp().sum());
    z.row(i).array() -= lse;
  }
  return z;
}

inline compglm::Dataset random_dataset(compglm::GlmFamily family, Index n, Index p,
                                       std::mt19937_64& rng, const VectorXd& beta,
                                       double intercept = 0.0, bool has_intercept = true) {
  compglm::Dataset d;
  d.z = random_log_composition(n, p, rng);
  d.has_intercept = has_intercept;
  d.y.resize(n);
  const VectorXd eta = compglm::linear_predictor(d.z, beta, intercept);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> nd(0.0, 1.0);
  for (Index i = 0; i < n; ++i) {
    const double mu = compglm::mean(family, eta[i]);
    switch (family) {
      case compglm::GlmFamily::kLogistic: d.y[i] = unif(rng) < mu ? 1.0 : 0.0; break;
      case compglm::GlmFamily::kGaussian: d.y[i] = mu + nd(rng); break;
      case compglm::GlmFamily::kPoisson: {
        std::poisson_distribution<int> pd(mu);
        d.y[i] = pd(rng);
        break;
      }
    }
  }
  return d;
}

// Random disjoint zero-sum groups covering 1..p.
inline compglm::GroupConstraints random_groups(Index p, Index groups, std::mt19937_64& rng) {
  std::vector<Index> cuts;
  std::uniform_int_distribution<Index> pick(1, p - 1);
  while (static_cast<Index>(cuts.size()) < groups - 1) {
    const Index c = pick(rng);
    if (std::find(cuts.begin(), cuts.end(), c) == cuts.end()) cuts.push_back(c);
  }
  std::sort(cuts.begin(), cuts.end());
  cuts.push_back(p);
  compglm::GroupConstraints gc;
  Index start = 0;
  for (Index c : cuts) {
    std::vector<Index> g;
    for (Index j = start; j < c; ++j) g.push_back(j);
    gc.groups.push_back(g);
    start = c;
  }
  return gc;
}

// Collects warnings for the lifetime of the object.
struct WarningSink {
  std::vector<std::string> messages;
  compglm::ScopedWarningHandler guard{
      [this](std::string_view m) { messages.emplace_back(m); }};
};

}  // namespace testing
