#include "compglm/debias.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <boost/math/distributions/normal.hpp>

#include "compglm/errors.hpp"
#include "compglm/log.hpp"
#include "compglm/parallel.hpp"

namespace compglm {
namespace {

constexpr int kCheckEvery = 10;
constexpr int kRebalanceEvery = 50;
constexpr double kRelaxation = 1.6;
constexpr int kPolishRounds = 4;

double clamp(double x, double lo, double hi) { return x < lo ? lo : (x > hi ? hi : x); }

}  // namespace

void DebiasOptions::validate() const {
  if (!(gamma > 0.0)) throw ValidationError("debias: gamma must be > 0");
  if (!(admm_rho > 0.0)) throw ValidationError("debias: admm_rho must be > 0");
  if (!(qp_tol > 0.0)) throw ValidationError("debias: qp_tol must be > 0");
  if (qp_max_iters < 1) throw ValidationError("debias: qp_max_iters must be >= 1");
  if (!(gamma_growth > 1.0)) throw ValidationError("debias: gamma_growth must be > 1");
  if (max_escalations < 0) throw ValidationError("debias: max_escalations must be >= 0");
}

DebiasProgram::DebiasProgram(const MatrixXd& sigma) : sigma_(sigma) {
  if (sigma.rows() != sigma.cols()) throw ShapeError("debias: sigma must be square");
  sigma_ = 0.5 * (sigma + sigma.transpose());
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(sigma_);
  if (eig.info() != Eigen::Success) throw SolverError("debias: eigendecomposition failed");
  eigvecs_ = eig.eigenvectors();
  eigvals_ = eig.eigenvalues();
  const double top = eigvals_.size() ? std::max(eigvals_.maxCoeff(), 0.0) : 0.0;
  const double cutoff = 1e-12 * std::max(top, std::numeric_limits<double>::min());
  for (Index k = 0; k < eigvals_.size(); ++k) {
    if (eigvals_[k] <= cutoff) eigvals_[k] = 0.0;
  }
}

RowSolution DebiasProgram::solve_fixed(const VectorXd& target, double gamma,
                                       const DebiasOptions& opts) const {
  const Index p = dim();
  if (target.size() != p) throw ShapeError("debias row: target length != dim");
  if (!(gamma > 0.0)) throw DomainError("debias row: gamma must be > 0");

  const VectorXd lo = target.array() - gamma;
  const VectorXd hi = target.array() + gamma;

  // ADMM on  min m'Sm + I_box(w)  s.t.  S m = w  (scaled dual u).
  // In the eigenbasis S = V diag(l) V', the m-update is
  //   a_k = rho b_k / (2 + rho l_k),  b = V'(w - u),  and S m = V (l .* a).
  double rho = opts.admm_rho;
  VectorXd w = lo.cwiseMax(VectorXd::Zero(p)).cwiseMin(hi);
  VectorXd u = VectorXd::Zero(p);
  VectorXd coef(p), sm(p), sm_hat(p), w_prev(p), y_prev = VectorXd::Zero(p), diff(p);
  int infeasible_streak = 0;
  bool certified_infeasible = false;

  RowSolution out;
  int it = 1;
  for (; it <= opts.qp_max_iters; ++it) {
    coef.noalias() = eigvecs_.transpose() * (w - u);
    for (Index k = 0; k < p; ++k) {
      const double l = eigvals_[k];
      coef[k] = l > 0.0 ? rho * l * coef[k] / (2.0 + rho * l) : 0.0;
    }
    sm.noalias() = eigvecs_ * coef;

    w_prev = w;
    sm_hat = kRelaxation * sm + (1.0 - kRelaxation) * w_prev;
    for (Index i = 0; i < p; ++i) w[i] = clamp(sm_hat[i] + u[i], lo[i], hi[i]);
    u += sm_hat - w;

    if (it % kCheckEvery != 0) continue;

    const double r_prim = (sm - w).lpNorm<Eigen::Infinity>();
    diff.noalias() = sigma_ * (w - w_prev);
    const double r_dual = rho * diff.lpNorm<Eigen::Infinity>();
    if (r_prim <= opts.qp_tol && r_dual <= opts.qp_tol) {
      break;
    }

    // Primal infeasibility: dy = rho (u - u_prev) with S dy ~ 0 separating
    // range(S) from the box.
    const VectorXd y_now = rho * u;
    const VectorXd dy = y_now - y_prev;
    y_prev = y_now;
    const double dy_inf = dy.lpNorm<Eigen::Infinity>();
    if (it >= 200 && dy_inf > 0.0) {
      const double s_dy = (sigma_ * dy).lpNorm<Eigen::Infinity>();
      const double box_max = dy.dot(target) + gamma * dy.lpNorm<1>();
      const double box_min = dy.dot(target) - gamma * dy.lpNorm<1>();
      const double margin = 1e-3 * gamma * dy.lpNorm<1>();
      const bool separated = box_max < -margin || box_min > margin;
      const double s_scale = std::max(eigvals_.maxCoeff(), 1e-300);
      infeasible_streak =
          (separated && s_dy <= 1e-6 * s_scale * dy_inf) ? infeasible_streak + 1 : 0;
      if (infeasible_streak >= 3) {
        certified_infeasible = true;
        break;
      }
    }

    if (it % kRebalanceEvery == 0) {
      if (r_prim > 10.0 * r_dual) {
        rho *= 2.0;
        u *= 0.5;
      } else if (r_dual > 10.0 * r_prim) {
        rho *= 0.5;
        u *= 2.0;
      }
    }
  }
  out.iterations = std::min(it, opts.qp_max_iters);

  VectorXd a = eigvecs_.transpose() * (w - u);
  for (Index k = 0; k < p; ++k) {
    const double l = eigvals_[k];
    a[k] = l > 0.0 ? rho * a[k] / (2.0 + rho * l) : 0.0;
  }
  out.m = eigvecs_ * a;
  out.gamma = gamma;
  VectorXd s_m = sigma_ * out.m;
  out.objective = out.m.dot(s_m);
  out.violation = std::max((s_m - target).lpNorm<Eigen::Infinity>() - gamma, 0.0);
  out.feasible = !certified_infeasible && out.violation <= opts.qp_tol;

  // Polish: fix the active set guessed by ADMM and solve the equality
  // constrained problem exactly. Its minimizer is m = P_range (sum_A lam_i e_i)
  // with S_AA lam = bound_A. Coordinates the polished point violates join the
  // active set for another round.
  std::vector<Index> active;
  VectorXd bound(p);
  for (Index i = 0; i < p; ++i) {
    if (w[i] == lo[i] || w[i] == hi[i]) {
      active.push_back(i);
      bound[i] = w[i];
    }
  }
  for (int round = 0; round < kPolishRounds && !active.empty(); ++round) {
    const auto na = static_cast<Index>(active.size());
    MatrixXd s_aa(na, na);
    VectorXd b_a(na);
    for (Index r = 0; r < na; ++r) {
      b_a[r] = bound[active[r]];
      for (Index c = 0; c < na; ++c) s_aa(r, c) = sigma_(active[r], active[c]);
    }
    const VectorXd lam = s_aa.completeOrthogonalDecomposition().solve(b_a);
    VectorXd e = VectorXd::Zero(p);
    for (Index r = 0; r < na; ++r) e[active[r]] = lam[r];
    VectorXd c = eigvecs_.transpose() * e;
    for (Index k = 0; k < p; ++k) {
      if (eigvals_[k] <= 0.0) c[k] = 0.0;
    }
    const VectorXd m_pol = eigvecs_ * c;
    const VectorXd s_pol = sigma_ * m_pol;
    if (!s_pol.allFinite()) break;
    const double viol = std::max((s_pol - target).lpNorm<Eigen::Infinity>() - gamma, 0.0);
    const double obj = m_pol.dot(s_pol);
    if (viol <= opts.qp_tol) {
      // Multipliers of the right sign make the polished point a KKT point,
      // hence optimal; ADMM's point may undercut it only through its slack.
      bool kkt = true;
      const double lam_tol = 1e-12 * std::max(1.0, lam.lpNorm<Eigen::Infinity>());
      for (Index r = 0; r < na; ++r) {
        const bool upper = bound[active[r]] == hi[active[r]];
        if (upper ? lam[r] > lam_tol : lam[r] < -lam_tol) kkt = false;
      }
      if (kkt || !out.feasible || obj <= out.objective) {
        out.m = m_pol;
        out.objective = obj;
        out.violation = viol;
        out.feasible = true;
      }
      break;
    }
    bool grew = false;
    for (Index i = 0; i < p; ++i) {
      const bool over = s_pol[i] > hi[i] + opts.qp_tol;
      const bool under = s_pol[i] < lo[i] - opts.qp_tol;
      if ((over || under) && std::find(active.begin(), active.end(), i) == active.end()) {
        active.push_back(i);
        bound[i] = over ? hi[i] : lo[i];
        grew = true;
      }
    }
    if (!grew) break;
  }
  return out;
}

RowSolution DebiasProgram::solve(const VectorXd& target, double gamma,
                                 const DebiasOptions& opts) const {
  RowSolution sol = solve_fixed(target, gamma, opts);
  int escalations = 0;
  int iterations = sol.iterations;
  while (!sol.feasible && escalations < opts.max_escalations) {
    ++escalations;
    gamma *= opts.gamma_growth;
    std::ostringstream os;
    os << "de-biasing program infeasible; escalating gamma to " << gamma << " (escalation "
       << escalations << ")";
    warn(os.str());
    sol = solve_fixed(target, gamma, opts);
    iterations += sol.iterations;
  }
  sol.escalations = escalations;
  sol.iterations = iterations;
  return sol;
}

MatrixXd sigma_hat(const FitResult& fit, const Dataset& data, GlmFamily family,
                   const ConstraintSet& cs) {
  if (fit.beta.size() != data.p()) throw ShapeError("sigma_hat: fit and data disagree on p");
  const MatrixXd zt = cs.reduce_design(data.z);
  const VectorXd eta = linear_predictor(zt, fit.beta, fit.intercept);
  VectorXd v(eta.size());
  for (Index i = 0; i < eta.size(); ++i) v[i] = variance(family, eta[i]);
  const double n = static_cast<double>(data.n());

  MatrixXd s;
  if (data.has_intercept && v.sum() > 0.0) {
    const Eigen::RowVectorXd centre = (v.transpose() * zt) / v.sum();
    const MatrixXd zc = zt.rowwise() - centre;
    s = zc.transpose() * v.asDiagonal() * zc / n;
  } else {
    s = zt.transpose() * v.asDiagonal() * zt / n;
  }
  return 0.5 * (s + s.transpose());
}

RowSolution solve_debias_row(const MatrixXd& sigma, const VectorXd& target, double gamma,
                             const DebiasOptions& opts) {
  return DebiasProgram(sigma).solve(target, gamma, opts);
}

MatrixXd build_m_tilde(const MatrixXd& m, const ConstraintSet& cs) {
  if (m.rows() != cs.dim() || m.cols() != cs.dim()) {
    throw ShapeError("build_m_tilde: M must be p x p");
  }
  return cs.project_columns(m);
}

VectorXd debias(const FitResult& fit, const MatrixXd& m_tilde, const Dataset& data,
                GlmFamily family, const ConstraintSet& cs) {
  if (m_tilde.rows() != data.p() || m_tilde.cols() != data.p() || fit.beta.size() != data.p()) {
    throw ShapeError("debias: dimension mismatch");
  }
  const MatrixXd zt = cs.reduce_design(data.z);
  const VectorXd eta = linear_predictor(zt, fit.beta, fit.intercept);
  VectorXd resid(eta.size());
  for (Index i = 0; i < eta.size(); ++i) resid[i] = data.y[i] - mean(family, eta[i]);
  return fit.beta + m_tilde * (zt.transpose() * resid) / static_cast<double>(data.n());
}

Index InferenceResult::failed_count() const {
  Index c = 0;
  for (bool ok : valid) c += ok ? 0 : 1;
  return c;
}

bool InferenceResult::selected(Index j) const {
  if (!valid.empty() && !valid[static_cast<std::size_t>(j)]) return false;
  return ci_lower[j] > 0.0 || ci_upper[j] < 0.0;
}

double normal_quantile_two_sided(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("alpha must be in (0, 1)");
  return boost::math::quantile(boost::math::normal_distribution<double>(), 1.0 - alpha / 2.0);
}

InferenceResult confidence_intervals(const VectorXd& beta_u, const MatrixXd& m_tilde,
                                     const MatrixXd& sigma, Index n, double alpha) {
  const Index p = beta_u.size();
  if (m_tilde.rows() != p || m_tilde.cols() != p || sigma.rows() != p || sigma.cols() != p) {
    throw ShapeError("confidence_intervals: dimension mismatch");
  }
  if (n < 1) throw DomainError("confidence_intervals: n must be >= 1");

  InferenceResult out;
  out.alpha = alpha;
  out.z_multiplier = normal_quantile_two_sided(alpha);
  out.beta_u = beta_u;
  out.m_tilde = m_tilde;
  out.sigma_hat = sigma;
  out.n = n;
  out.std_errors.resize(p);
  out.ci_lower.resize(p);
  out.ci_upper.resize(p);
  out.valid.assign(static_cast<std::size_t>(p), true);

  const MatrixXd cov = m_tilde * sigma * m_tilde.transpose();
  for (Index j = 0; j < p; ++j) {
    double d = cov(j, j);
    if (d < 0.0) {
      warn("negative variance " + std::to_string(d) + " at coordinate " + std::to_string(j + 1) +
           " clamped to 0");
      d = 0.0;
    }
    const double se = std::sqrt(d / static_cast<double>(n));
    out.std_errors[j] = se;
    out.ci_lower[j] = beta_u[j] - out.z_multiplier * se;
    out.ci_upper[j] = beta_u[j] + out.z_multiplier * se;
  }
  return out;
}

InferenceResult infer(const FitResult& fit, const Dataset& data, GlmFamily family,
                      const ConstraintSet& cs, const DebiasOptions& opts, double alpha) {
  opts.validate();
  const Index p = data.p();
  const MatrixXd sigma = sigma_hat(fit, data, family, cs);
  const DebiasProgram program(sigma);

  MatrixXd m(p, p);
  std::vector<RowSolution> rows(static_cast<std::size_t>(p));
  const MatrixXd comp = cs.complement_projector();
  parallel_for(static_cast<std::size_t>(p), opts.threads, [&](std::size_t i) {
    rows[i] = program.solve(comp.col(static_cast<Index>(i)), opts.gamma, opts);
  });
  for (Index i = 0; i < p; ++i) m.row(i) = rows[static_cast<std::size_t>(i)].m.transpose();

  const MatrixXd m_tilde = build_m_tilde(m, cs);
  const VectorXd beta_u = debias(fit, m_tilde, data, family, cs);
  InferenceResult out = confidence_intervals(beta_u, m_tilde, sigma, data.n(), alpha);
  out.beta_n = fit.beta;
  out.gamma = opts.gamma;
  out.gamma_used.resize(static_cast<std::size_t>(p));
  out.escalations.resize(static_cast<std::size_t>(p));
  out.qp_iterations.resize(static_cast<std::size_t>(p));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.valid[i] = rows[i].feasible;
    out.gamma_used[i] = rows[i].gamma;
    out.escalations[i] = rows[i].escalations;
    out.qp_iterations[i] = rows[i].iterations;
    if (!rows[i].feasible) {
      out.ci_lower[static_cast<Index>(i)] = std::numeric_limits<double>::quiet_NaN();
      out.ci_upper[static_cast<Index>(i)] = std::numeric_limits<double>::quiet_NaN();
    }
  }
  return out;
}

}  // namespace compglm
