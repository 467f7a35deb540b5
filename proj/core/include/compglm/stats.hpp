#pragma once

#include <vector>

#include <Eigen/Dense>

namespace compglm {

/// Mann-Whitney area under the ROC curve: P(score of a random positive >
/// score of a random negative), ties counted 1/2. O(n log n).
/// Throws DomainError unless both classes (labels 0/1) are present.
double auc(const Eigen::VectorXd& scores, const Eigen::VectorXd& labels);

struct KsResult {
  double statistic = 0.0;  ///< sup |F_n - Phi|
  double p_value = 1.0;
  std::size_t n = 0;
};

/// One-sample Kolmogorov-Smirnov test against the standard normal. The
/// p-value uses the asymptotic Kolmogorov distribution with Stephens'
/// small-sample correction.
KsResult ks_test_standard_normal(std::vector<double> sample);

/// Survival function of the Kolmogorov distribution, P(K > x).
double kolmogorov_survival(double x);

struct MeanSd {
  double mean = 0.0;
  double sd = 0.0;  ///< sample standard deviation (n - 1)
};
MeanSd mean_sd(const std::vector<double>& values);

}  // namespace compglm
