#pragma once

#include <cmath>
#include <limits>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

struct QpOracle {
  double objective = std::numeric_limits<double>::infinity();
  VectorXd w;  // sigma * m at the optimum
};

// Exhaustive active-set search for min m'Sm s.t. |Sm - e|_inf <= gamma, in the
// variable w = Sm (w restricted to range(S), objective w' S^+ w). Every
// coordinate is at its lower bound, upper bound, or free: 3^p patterns, each an
// equality-constrained QP solved through its KKT system.
inline QpOracle enumerate_qp(const MatrixXd& s, const VectorXd& e, double gamma) {
  const Index p = s.rows();
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(s);
  const double cut = 1e-10 * eig.eigenvalues().cwiseAbs().maxCoeff();
  MatrixXd pinv = MatrixXd::Zero(p, p);
  std::vector<VectorXd> null_vectors;
  for (Index k = 0; k < p; ++k) {
    const VectorXd u = eig.eigenvectors().col(k);
    if (eig.eigenvalues()[k] > cut) pinv += u * u.transpose() / eig.eigenvalues()[k];
    else null_vectors.push_back(u);
  }
  QpOracle best;
  int patterns = 1;
  for (Index k = 0; k < p; ++k) patterns *= 3;
  for (int code = 0; code < patterns; ++code) {
    std::vector<int> state(static_cast<std::size_t>(p));
    int c = code;
    for (Index k = 0; k < p; ++k) {
      state[static_cast<std::size_t>(k)] = c % 3 - 1;  // -1 lower, 0 free, +1 upper
      c /= 3;
    }
    std::vector<std::pair<VectorXd, double>> eq;
    for (Index k = 0; k < p; ++k) {
      const int st = state[static_cast<std::size_t>(k)];
      if (st == 0) continue;
      eq.emplace_back(VectorXd::Unit(p, k), e[k] + st * gamma);
    }
    for (const VectorXd& u : null_vectors) eq.emplace_back(u, 0.0);
    const Index q = static_cast<Index>(eq.size());
    MatrixXd kkt = MatrixXd::Zero(p + q, p + q);
    VectorXd rhs = VectorXd::Zero(p + q);
    kkt.topLeftCorner(p, p) = 2.0 * pinv;
    for (Index r = 0; r < q; ++r) {
      kkt.block(0, p + r, p, 1) = eq[static_cast<std::size_t>(r)].first;
      kkt.block(p + r, 0, 1, p) = eq[static_cast<std::size_t>(r)].first.transpose();
      rhs[p + r] = eq[static_cast<std::size_t>(r)].second;
    }
    const VectorXd sol = kkt.completeOrthogonalDecomposition().solve(rhs);
    if ((kkt * sol - rhs).lpNorm<Eigen::Infinity>() > 1e-9) continue;
    const VectorXd w = sol.head(p);
    if ((w - e).lpNorm<Eigen::Infinity>() > gamma + 1e-9) continue;
    const double obj = w.dot(pinv * w);
    if (obj < best.objective) best = {obj, w};
  }
  return best;
}

}  // namespace oracle
