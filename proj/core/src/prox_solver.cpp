#include "compglm/prox_solver.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "compglm/errors.hpp"
#include "compglm/log.hpp"

namespace compglm {
namespace {

constexpr double kMinStep = 1e-15;
constexpr int kStallWindow = 5;

double soft(double x, double t) {
  if (x > t) return x - t;
  if (x < -t) return x + t;
  return 0.0;
}

void soft_threshold_into(const VectorXd& x, double t, VectorXd& out) {
  out.resize(x.size());
  for (Index i = 0; i < x.size(); ++i) out[i] = soft(x[i], t);
}

// Dual of the constrained prox: q(eta) = min_b thr|b|_1 + 0.5|v - b|^2 + eta'C'b,
// maximized at the multiplier. grad q = C'b(eta), hess q = -C'DC with D the
// active (above-threshold) coordinates.
double prox_dual_value(const VectorXd& v, const VectorXd& b, const VectorXd& eta,
                       const VectorXd& cb, double thr) {
  return thr * b.lpNorm<1>() + 0.5 * (v - b).squaredNorm() + eta.dot(cb);
}

double sign(double x) { return (x > 0.0) - (x < 0.0); }

double kkt_violation(const VectorXd& beta, const VectorXd& q, double grad_intercept,
                     double lambda) {
  double worst = std::abs(grad_intercept);
  for (Index j = 0; j < beta.size(); ++j) {
    const double v = beta[j] != 0.0 ? std::abs(q[j] + lambda * sign(beta[j]))
                                    : std::max(std::abs(q[j]) - lambda, 0.0);
    worst = std::max(worst, v);
  }
  return worst;
}

}  // namespace

void SolverOptions::validate() const {
  if (max_iters < 1) throw ValidationError("max_iters must be >= 1");
  if (!(tol > 0.0)) throw ValidationError("tol must be > 0");
  if (!(friction > 1.0)) throw ValidationError("friction r must be > 1");
  if (!(initial_step > 0.0)) throw ValidationError("initial step must be > 0");
  if (!(kkt_tol > 0.0)) throw ValidationError("kkt_tol must be > 0");
}

Index FitResult::support_size() const { return (beta.array() != 0.0).count(); }

VectorXd soft_threshold(const VectorXd& x, double t) {
  if (!(t >= 0.0)) throw DomainError("soft_threshold: negative threshold");
  VectorXd out;
  soft_threshold_into(x, t, out);
  return out;
}

ProxResult constrained_prox(const VectorXd& v, double threshold, const ConstraintSet& cs) {
  if (!(threshold >= 0.0)) throw DomainError("constrained_prox: negative threshold");
  if (v.size() != cs.dim()) throw ShapeError("constrained_prox: dimension mismatch");
  if (cs.empty()) return {soft_threshold(v, threshold), VectorXd()};

  const MatrixXd& c = cs.basis();
  const Index r = c.cols();
  const double scale = std::max(1.0, v.lpNorm<Eigen::Infinity>());
  const double feas_tol = 1e-13 * scale;

  // Starting at the unpenalized multiplier C'v makes thr = 0 exact in one pass.
  VectorXd eta = c.transpose() * v;
  VectorXd w(v.size()), b(v.size()), cb(r);
  auto evaluate = [&](const VectorXd& e) {
    w.noalias() = v - c * e;
    soft_threshold_into(w, threshold, b);
    cb.noalias() = c.transpose() * b;
  };

  evaluate(eta);
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig;
  for (int it = 0; it < 200 && cb.lpNorm<Eigen::Infinity>() > feas_tol; ++it) {
    MatrixXd h = MatrixXd::Zero(r, r);
    for (Index j = 0; j < v.size(); ++j) {
      if (std::abs(w[j]) > threshold) h.noalias() += c.row(j).transpose() * c.row(j);
    }
    eig.compute(h);
    const VectorXd& ev = eig.eigenvalues();
    const double cutoff = 1e-12 * std::max(1.0, ev.maxCoeff());
    VectorXd proj = eig.eigenvectors().transpose() * cb;
    for (Index k = 0; k < r; ++k) proj[k] = ev[k] > cutoff ? proj[k] / ev[k] : 0.0;
    VectorXd dir = eig.eigenvectors() * proj;
    if (dir.squaredNorm() == 0.0) dir = cb;

    const VectorXd g0 = cb;
    const double q0 = prox_dual_value(v, b, eta, cb, threshold);
    const double slope = g0.dot(dir);
    const double g0_norm = g0.lpNorm<Eigen::Infinity>();
    double alpha = 1.0;
    bool accepted = false;
    for (int ls = 0; ls < 40; ++ls) {
      const VectorXd trial = eta + alpha * dir;
      evaluate(trial);
      const double q1 = prox_dual_value(v, b, trial, cb, threshold);
      if (q1 >= q0 + 1e-4 * alpha * slope ||
          (alpha == 1.0 && cb.lpNorm<Eigen::Infinity>() < 0.5 * g0_norm)) {
        eta = trial;
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) {
      // The dual gradient is 1-Lipschitz, so a unit gradient step ascends.
      eta += g0;
      evaluate(eta);
    }
  }

  // Entries at round-off level come from multipliers sitting exactly on the
  // threshold (e.g. at lambda_max); they are zeros, not support.
  for (Index j = 0; j < b.size(); ++j) {
    if (std::abs(b[j]) <= feas_tol) b[j] = 0.0;
  }
  cb.noalias() = c.transpose() * b;
  if (cb.lpNorm<Eigen::Infinity>() > 1e-10 * scale) {
    // Not expected; keep the iterate feasible even if slightly denser.
    cs.project_in_place(b);
  }
  return {b, eta};
}

VectorXd prox_step(const VectorXd& v, double t, double lambda, const ConstraintSet& cs,
                   ProxMode mode) {
  if (!(t >= 0.0) || !(lambda >= 0.0)) throw DomainError("prox_step: t and lambda must be >= 0");
  if (mode == ProxMode::kThresholdThenProject) {
    VectorXd out = soft_threshold(v, t * lambda);
    cs.project_in_place(out);
    return out;
  }
  return constrained_prox(v, t * lambda, cs).beta;
}

bool sufficient_decrease(const SmoothObjective& g, const VectorXd& y, double t,
                         const ProxOperator& prox, double slack) {
  const double gy = g.value(y);
  const VectorXd grad = g.gradient(y);
  const VectorXd x = prox(y - t * grad, t);
  const VectorXd gmap = (y - x) / t;
  const double lhs = g.value(x);
  const double rhs = gy - t * grad.dot(gmap) + 0.5 * t * gmap.squaredNorm();
  return lhs <= rhs + slack;
}

double line_search(const SmoothObjective& g, const VectorXd& y, double t_prev,
                   const ProxOperator& prox) {
  if (!(t_prev > 0.0)) throw DomainError("line_search: t_prev must be > 0");
  const double gy = g.value(y);
  const VectorXd grad = g.gradient(y);
  for (double t = t_prev; t >= kMinStep; t *= 0.5) {
    const VectorXd x = prox(y - t * grad, t);
    const VectorXd gmap = (y - x) / t;
    if (g.value(x) <= gy - t * grad.dot(gmap) + 0.5 * t * gmap.squaredNorm()) return t;
  }
  throw SolverError("line search: step size fell below 1e-15 without sufficient decrease");
}

double kkt_residual(const VectorXd& beta, const VectorXd& grad_beta, double grad_intercept,
                    double lambda, const ConstraintSet& cs) {
  VectorXd q = cs.project(grad_beta);
  if (!cs.empty()) {
    const ProxResult pr = constrained_prox(beta - grad_beta, lambda, cs);
    q = grad_beta + cs.basis() * pr.multiplier;
  }
  return kkt_violation(beta, q, grad_intercept, lambda);
}

double kkt_residual_projected_gradient(const VectorXd& beta, const VectorXd& grad_beta,
                                       double grad_intercept, double lambda,
                                       const ConstraintSet& cs) {
  return kkt_violation(beta, cs.project(grad_beta), grad_intercept, lambda);
}

Gradient loss_gradient(GlmFamily family, const VectorXd& beta, double intercept,
                       const VectorXd& y, const MatrixXd& reduced_z) {
  const VectorXd eta = linear_predictor(reduced_z, beta, intercept);
  VectorXd resid(eta.size());
  for (Index i = 0; i < eta.size(); ++i) resid[i] = mean(family, eta[i]) - y[i];
  const double n = static_cast<double>(y.size());
  return {reduced_z.transpose() * resid / n, resid.sum() / n};
}

double initial_intercept(const Dataset& data, GlmFamily family) {
  return data.has_intercept ? link(family, data.y.mean()) : 0.0;
}

double fit_kkt_residual(const FitResult& f, const Dataset& data, GlmFamily family,
                        const ConstraintSet& cs) {
  const MatrixXd zt = cs.reduce_design(data.z);
  const Gradient grad = loss_gradient(family, f.beta, f.intercept, data.y, zt);
  return kkt_residual(f.beta, grad.beta, data.has_intercept ? grad.intercept : 0.0, f.lambda,
                      cs);
}

FitResult fit(const Dataset& data, GlmFamily family, const ConstraintSet& cs, double lambda,
              const SolverOptions& opts, const FitStart* start) {
  opts.validate();
  data.validate(family);
  if (!(lambda >= 0.0)) throw DomainError("fit: lambda must be >= 0");
  if (cs.dim() != data.p()) throw ShapeError("fit: constraint dimension != number of covariates");

  const Index n = data.n();
  const Index p = data.p();
  const double inv_n = 1.0 / static_cast<double>(n);
  const bool use_b = data.has_intercept;

  // With an intercept the iterations run on the column-centred design and
  // the centred intercept bc = b + zbar'beta; eta is unchanged.
  MatrixXd zt = cs.reduce_design(data.z);
  VectorXd zbar = VectorXd::Zero(p);
  if (use_b) {
    zbar = zt.colwise().mean().transpose();
    zt.rowwise() -= zbar.transpose();
  }

  auto prox = [&](const VectorXd& v, double t) { return prox_step(v, t, lambda, cs, opts.prox); };

  // Current iterate x = (beta, b) and its linear predictor.
  VectorXd beta = VectorXd::Zero(p);
  double b = initial_intercept(data, family);
  double t = opts.initial_step;
  if (start != nullptr) {
    if (start->beta.size() != p) throw ShapeError("fit: warm start has wrong length");
    beta = cs.project(start->beta);
    b = use_b ? start->intercept : 0.0;
    if (start->step) t = *start->step;
  }
  if (use_b) b += zbar.dot(beta);
  VectorXd eta = zt * beta;
  eta.array() += b;

  VectorXd beta_prev = beta;
  double b_prev = b;
  VectorXd eta_prev = eta;

  VectorXd y_beta = beta;
  double y_b = b;
  VectorXd eta_y = eta;

  VectorXd resid(n), grad(p), cand_beta(p), cand_eta(n), diff(p);
  FitResult out;
  out.lambda = lambda;
  out.objective_trace.reserve(static_cast<std::size_t>(std::min(opts.max_iters, 4096)));

  auto gradient_at = [&](const VectorXd& e, VectorXd& g_beta, double& g_b) {
    for (Index i = 0; i < n; ++i) resid[i] = mean(family, e[i]) - data.y[i];
    g_beta.noalias() = zt.transpose() * resid;
    g_beta *= inv_n;
    g_b = use_b ? resid.sum() * inv_n : 0.0;
  };
  // Gradient in the original (uncentred) parametrization.
  auto original_kkt = [&](const VectorXd& e) {
    VectorXd g_beta(p);
    double g_b = 0.0;
    gradient_at(e, g_beta, g_b);
    if (use_b) g_beta += zbar * g_b;
    return kkt_residual(beta, g_beta, g_b, lambda, cs);
  };

  double prev_obj = neg_loglik_from_eta(family, eta, data.y) + lambda * beta.lpNorm<1>();
  int stall = 0;
  int k = 1;
  for (; k <= opts.max_iters; ++k) {
    double grad_b = 0.0;
    gradient_at(eta_y, grad, grad_b);
    const double g_y = neg_loglik_from_eta(family, eta_y, data.y);

    double cand_b = 0.0;
    double g_cand = 0.0;
    for (;;) {
      cand_beta = prox(y_beta - t * grad, t);
      cand_b = use_b ? y_b - t * grad_b : 0.0;
      cand_eta.noalias() = zt * cand_beta;
      cand_eta.array() += cand_b;
      g_cand = neg_loglik_from_eta(family, cand_eta, data.y);
      if (!opts.line_search) break;
      // g(x) <= g(y) + grad'(x - y) + |x - y|^2 / (2t); identical to the
      // gradient-mapping form of the backtracking test.
      diff = cand_beta - y_beta;
      const double db = cand_b - y_b;
      const double rhs = g_y + grad.dot(diff) + grad_b * db +
                         (diff.squaredNorm() + db * db) / (2.0 * t);
      if (g_cand <= rhs + 1e-13 * std::max(1.0, std::abs(g_y))) break;
      t *= 0.5;
      if (t < kMinStep) {
        std::ostringstream os;
        os << "line search failed at iteration " << k << " (lambda = " << lambda
           << ", objective = " << g_y << ")";
        throw SolverError(os.str());
      }
    }

    beta_prev.swap(beta);
    beta = cand_beta;
    b_prev = b;
    b = cand_b;
    eta_prev.swap(eta);
    eta = cand_eta;

    const double obj = g_cand + lambda * beta.lpNorm<1>();
    out.objective_trace.push_back(obj);

    const double m = static_cast<double>(k - 1) / (static_cast<double>(k) + opts.friction - 1.0);
    y_beta = beta + m * (beta - beta_prev);
    y_b = b + m * (b - b_prev);
    eta_y = eta + m * (eta - eta_prev);

    const double rel = std::abs(obj - prev_obj) / std::max(1.0, std::abs(obj));
    prev_obj = obj;
    stall = rel < opts.tol ? stall + 1 : 0;
    if (stall >= kStallWindow) {
      out.kkt_residual = original_kkt(eta);
      if (out.kkt_residual <= opts.kkt_tol) {
        out.converged = true;
        break;
      }
      stall = 0;
    }
  }

  if (!out.converged) out.kkt_residual = original_kkt(eta);
  out.intercept = use_b ? b - zbar.dot(beta) : 0.0;
  out.beta = std::move(beta);
  out.iters = std::min(k, opts.max_iters);
  out.step = t;
  if (!out.converged) {
    std::ostringstream os;
    os << "fit did not converge in " << opts.max_iters << " iterations (lambda = " << lambda
       << ", kkt residual = " << out.kkt_residual << ")";
    warn(os.str());
  }
  return out;
}

}  // namespace compglm
