#include "compglm/model_select.hpp"

#include <cmath>
#include <map>

#include "compglm/errors.hpp"
#include "compglm/parallel.hpp"

namespace compglm {

double lambda_max(const Dataset& data, GlmFamily family, const ConstraintSet& cs) {
  data.validate(family);
  const MatrixXd zt = cs.reduce_design(data.z);
  const Gradient g =
      loss_gradient(family, VectorXd::Zero(data.p()), initial_intercept(data, family), data.y, zt);
  return cs.project(g.beta).lpNorm<Eigen::Infinity>();
}

std::vector<double> lambda_grid(double lmax, int grid_size, double min_ratio) {
  if (grid_size < 2) throw ValidationError("lambda grid needs at least 2 points");
  if (!(min_ratio > 0.0 && min_ratio < 1.0)) {
    throw ValidationError("lambda grid min_ratio must be in (0, 1)");
  }
  if (!(lmax > 0.0)) throw DomainError("lambda_max must be > 0 to build a grid");
  std::vector<double> grid(static_cast<std::size_t>(grid_size));
  const double hi = std::log(lmax);
  const double lo = std::log(lmax * min_ratio);
  for (int i = 0; i < grid_size; ++i) {
    grid[static_cast<std::size_t>(i)] =
        std::exp(hi + (lo - hi) * static_cast<double>(i) / static_cast<double>(grid_size - 1));
  }
  grid.front() = lmax;
  return grid;
}

double ebic_xi(Index n, Index p) {
  if (n < 2 || p < 1) return 0.0;
  const double delta = std::max(0.5, std::log(static_cast<double>(p)) /
                                         std::log(static_cast<double>(n)));
  return 1.0 - 1.0 / (2.0 * delta);
}

double ebic(const FitResult& f, const Dataset& data, GlmFamily family, const ConstraintSet& cs,
            double xi) {
  if (!(xi >= 0.0 && xi <= 1.0)) throw DomainError("ebic: xi must be in [0, 1]");
  const MatrixXd zt = cs.reduce_design(data.z);
  const double n = static_cast<double>(data.n());
  const double p = static_cast<double>(data.p());
  const double nu = static_cast<double>(f.support_size());
  const double minus_two_loglik = 2.0 * n * neg_loglik(family, f.beta, f.intercept, data.y, zt);
  return minus_two_loglik + nu * std::log(n) + 2.0 * nu * xi * std::log(p);
}

std::vector<FitResult> fit_path(const Dataset& data, GlmFamily family, const ConstraintSet& cs,
                                const std::vector<double>& lambdas, const PathOptions& opts) {
  std::vector<FitResult> fits(lambdas.size());
  if (opts.warm_start) {
    for (std::size_t i = 0; i < lambdas.size(); ++i) {
      if (i == 0) {
        fits[i] = fit(data, family, cs, lambdas[i], opts.solver);
      } else {
        const FitStart start{fits[i - 1].beta, fits[i - 1].intercept, fits[i - 1].step};
        fits[i] = fit(data, family, cs, lambdas[i], opts.solver, &start);
      }
    }
  } else {
    parallel_for(lambdas.size(), opts.threads, [&](std::size_t i) {
      fits[i] = fit(data, family, cs, lambdas[i], opts.solver);
    });
  }
  return fits;
}

PathResult select_lambda(const Dataset& data, GlmFamily family, const ConstraintSet& cs,
                         const PathOptions& opts) {
  PathResult out;
  const double lmax = lambda_max(data, family, cs);
  if (!(lmax > 0.0)) {
    // Zero residual at the null model: the null fit is the only candidate.
    out.lambdas = {0.0};
    out.fits = {fit(data, family, cs, 0.0, opts.solver)};
  } else {
    out.lambdas = lambda_grid(lmax, opts.grid_size, opts.min_ratio);
    out.fits = fit_path(data, family, cs, out.lambdas, opts);
  }
  out.xi = ebic_xi(data.n(), data.p());
  out.ebic_values.resize(out.fits.size());
  out.candidate.assign(out.fits.size(), false);

  std::map<Index, std::size_t> first_of_size;
  bool any_converged = false;
  bool have_best = false;
  double best = 0.0;
  for (std::size_t i = 0; i < out.fits.size(); ++i) {
    const FitResult& f = out.fits[i];
    out.ebic_values[i] = ebic(f, data, family, cs, out.xi);
    if (!f.converged) continue;
    any_converged = true;
    if (!first_of_size.emplace(f.support_size(), i).second) continue;
    out.candidate[i] = true;
    // Strict comparison keeps the larger lambda on ties.
    if (!have_best || out.ebic_values[i] < best) {
      best = out.ebic_values[i];
      out.selected_index = i;
      have_best = true;
    }
  }
  if (!any_converged) throw SolverError("select_lambda: no fit on the lambda grid converged");
  return out;
}

double gamma_rule(double lambda_opt) {
  if (!(lambda_opt > 0.0)) throw DomainError("gamma_rule: lambda_opt must be > 0");
  return 0.01 * lambda_opt;
}

}  // namespace compglm
