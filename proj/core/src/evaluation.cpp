#include "compglm/evaluation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "compglm/errors.hpp"
#include "compglm/log.hpp"
#include "compglm/parallel.hpp"

namespace compglm {
namespace {

std::vector<Index> shuffled(std::vector<Index> v, std::mt19937_64& rng) {
  // Explicit Fisher-Yates so the draw only depends on uniform_int_distribution.
  for (std::size_t i = v.size(); i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(v[i - 1], v[pick(rng)]);
  }
  return v;
}

// Splits rows into (first, rest) with round(fraction * size) of each stratum
// in `first`. Non-binary responses form a single stratum.
std::pair<std::vector<Index>, std::vector<Index>> stratified_split(const VectorXd& y,
                                                                   bool by_class, double fraction,
                                                                   std::mt19937_64& rng) {
  std::vector<std::vector<Index>> strata(by_class ? 2 : 1);
  for (Index i = 0; i < y.size(); ++i) {
    strata[by_class && y[i] == 1.0 ? 1 : 0].push_back(i);
  }
  std::vector<Index> first;
  std::vector<Index> rest;
  for (auto& s : strata) {
    const auto take = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(s.size())));
    const auto order = shuffled(s, rng);
    first.insert(first.end(), order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take));
    rest.insert(rest.end(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end());
  }
  std::sort(first.begin(), first.end());
  std::sort(rest.begin(), rest.end());
  return {std::move(first), std::move(rest)};
}

bool both_classes(const VectorXd& y) {
  const double pos = y.sum();
  return pos > 0.0 && pos < static_cast<double>(y.size());
}

bool is_binary(const VectorXd& y) {
  return (y.array() == 0.0 || y.array() == 1.0).all();
}

}  // namespace

std::string_view to_string(ConstraintMode mode) {
  switch (mode) {
    case ConstraintMode::kMulti: return "multi";
    case ConstraintMode::kOne: return "one";
    case ConstraintMode::kNone: return "none";
    case ConstraintMode::kWrong: return "wrong";
  }
  return "unknown";
}

ConstraintMode parse_constraint_mode(std::string_view name) {
  if (name == "multi") return ConstraintMode::kMulti;
  if (name == "one") return ConstraintMode::kOne;
  if (name == "none") return ConstraintMode::kNone;
  if (name == "wrong") return ConstraintMode::kWrong;
  throw ValidationError("unknown constraint mode '" + std::string(name) +
                        "' (expected multi, one, none or wrong)");
}

ConstraintSet constraints_for_mode(ConstraintMode mode, Index p) {
  switch (mode) {
    case ConstraintMode::kMulti: return build_group_constraints(simulation_groups(p), p);
    case ConstraintMode::kOne: return build_group_constraints(sum_to_zero_groups(p), p);
    case ConstraintMode::kNone: return ConstraintSet(p);
    case ConstraintMode::kWrong: return build_group_constraints(misspecified_groups(p), p);
  }
  throw ValidationError("unknown constraint mode");
}

Dataset subset(const Dataset& data, const std::vector<Index>& rows) {
  Dataset out;
  out.has_intercept = data.has_intercept;
  out.y.resize(static_cast<Index>(rows.size()));
  out.z.resize(static_cast<Index>(rows.size()), data.p());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const Index r = rows[k];
    if (r < 0 || r >= data.n()) throw ShapeError("subset: row index out of range");
    out.y[static_cast<Index>(k)] = data.y[r];
    out.z.row(static_cast<Index>(k)) = data.z.row(r);
  }
  return out;
}

ReplicateResult run_replicate(const ExperimentConfig& config, std::uint64_t seed) {
  ReplicateResult out;
  out.seed = seed;
  try {
    SimulationConfig sim = config.simulation;
    sim.seed = seed;
    const SimulatedData data = simulate_dataset(sim);
    const ConstraintSet cs = constraints_for_mode(config.mode, sim.p);

    const PathResult path = select_lambda(data.dataset, GlmFamily::kLogistic, cs, config.path);
    const FitResult& fit = path.selected();
    out.lambda_opt = path.lambda_opt();
    out.support_size = fit.support_size();

    DebiasOptions dopts = config.debias;
    dopts.gamma = gamma_rule(out.lambda_opt);
    out.gamma = dopts.gamma;
    const InferenceResult inf =
        infer(fit, data.dataset, GlmFamily::kLogistic, cs, dopts, config.alpha);

    out.beta_n = inf.beta_n;
    out.beta_u = inf.beta_u;
    out.std_errors = inf.std_errors;
    out.ci_lower = inf.ci_lower;
    out.ci_upper = inf.ci_upper;
    out.valid = inf.valid;
    out.escalations = std::accumulate(inf.escalations.begin(), inf.escalations.end(), 0);
    out.constraint_residual =
        cs.empty() ? 0.0 : cs.residual(inf.beta_u).lpNorm<Eigen::Infinity>();

    const double missing = static_cast<double>(inf.failed_count()) / static_cast<double>(sim.p);
    if (missing > config.max_missing_ci_fraction) {
      out.failed = true;
      std::ostringstream os;
      os << inf.failed_count() << " of " << sim.p << " de-biasing programs failed";
      out.failure = os.str();
    }
  } catch (const Error& e) {
    out.failed = true;
    out.failure = std::string(e.kind()) + ": " + e.what();
  }
  return out;
}

ExperimentReport run_coverage_experiment(const ExperimentConfig& config) {
  if (config.replicates < 1) throw ValidationError("experiment: replicates must be >= 1");
  if (!(config.alpha > 0.0 && config.alpha < 1.0)) {
    throw ValidationError("experiment: alpha must be in (0, 1)");
  }
  config.simulation.validate();
  DebiasOptions check = config.debias;
  check.gamma = 1.0;  // replaced per replicate
  check.validate();

  const auto start = std::chrono::steady_clock::now();
  ExperimentReport rep;
  rep.mode = config.mode;
  rep.n = config.simulation.n;
  rep.p = config.simulation.p;
  rep.alpha = config.alpha;
  rep.base_seed = config.base_seed;
  rep.n_replicates = config.replicates;
  rep.beta_true = config.simulation.resolved_beta();
  rep.replicates.resize(static_cast<std::size_t>(config.replicates));

  // Parallelism is across replicates; each replicate runs single-threaded.
  ExperimentConfig inner = config;
  inner.path.threads = 1;
  inner.debias.threads = 1;
  parallel_for(rep.replicates.size(), config.threads, [&](std::size_t i) {
    rep.replicates[i] = run_replicate(inner, config.base_seed + i);
  });

  const Index p = rep.p;
  VectorXd covered = VectorXd::Zero(p);
  VectorXd counted = VectorXd::Zero(p);
  VectorXd length = VectorXd::Zero(p);
  double tp_sum = 0.0;
  double fp_sum = 0.0;
  int tp_reps = 0;
  int fp_reps = 0;
  for (const auto& r : rep.replicates) {
    if (r.failed) {
      ++rep.n_failed;
      warn("replicate with seed " + std::to_string(r.seed) + " failed: " + r.failure);
      continue;
    }
    rep.max_constraint_residual = std::max(rep.max_constraint_residual, r.constraint_residual);
    double tp = 0.0, tp_n = 0.0, fp = 0.0, fp_n = 0.0;
    for (Index j = 0; j < p; ++j) {
      if (!r.valid[static_cast<std::size_t>(j)]) continue;
      const double lo = r.ci_lower[j];
      const double hi = r.ci_upper[j];
      counted[j] += 1.0;
      length[j] += hi - lo;
      if (lo <= rep.beta_true[j] && rep.beta_true[j] <= hi) covered[j] += 1.0;
      const bool excludes_zero = lo > 0.0 || hi < 0.0;
      if (rep.beta_true[j] != 0.0) {
        tp_n += 1.0;
        tp += excludes_zero ? 1.0 : 0.0;
      } else {
        fp_n += 1.0;
        fp += excludes_zero ? 1.0 : 0.0;
        if (r.std_errors[j] > 0.0) rep.null_z.push_back(r.beta_u[j] / r.std_errors[j]);
      }
    }
    if (tp_n > 0.0) {
      tp_sum += tp / tp_n;
      ++tp_reps;
    }
    if (fp_n > 0.0) {
      fp_sum += fp / fp_n;
      ++fp_reps;
    }
  }

  const double failed_fraction =
      static_cast<double>(rep.n_failed) / static_cast<double>(rep.n_replicates);
  if (failed_fraction > config.max_failed_fraction) {
    std::ostringstream os;
    os << "experiment (" << to_string(config.mode) << ", n=" << rep.n << "): " << rep.n_failed
       << " of " << rep.n_replicates << " replicates failed";
    for (const auto& r : rep.replicates) {
      if (r.failed) {
        os << "; first failure (seed " << r.seed << "): " << r.failure;
        break;
      }
    }
    throw ExperimentError(os.str());
  }

  rep.coverage = VectorXd::Constant(p, std::numeric_limits<double>::quiet_NaN());
  rep.mean_length = VectorXd::Constant(p, std::numeric_limits<double>::quiet_NaN());
  double cov_sum = 0.0, len_sum = 0.0;
  int cov_n = 0;
  for (Index j = 0; j < p; ++j) {
    if (counted[j] == 0.0) continue;
    rep.coverage[j] = covered[j] / counted[j];
    rep.mean_length[j] = length[j] / counted[j];
    cov_sum += rep.coverage[j];
    len_sum += rep.mean_length[j];
    ++cov_n;
  }
  if (cov_n > 0) {
    rep.mean_coverage = cov_sum / cov_n;
    rep.mean_ci_length = len_sum / cov_n;
  }
  rep.tp_rate = tp_reps > 0 ? tp_sum / tp_reps : 0.0;
  rep.fp_rate = fp_reps > 0 ? fp_sum / fp_reps : 0.0;
  rep.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rep;
}

StabilityReport stability_selection(const Dataset& data, GlmFamily family,
                                    const ConstraintSet& cs, const std::vector<double>& lambdas,
                                    const StabilityOptions& opts) {
  data.validate(family);
  if (opts.n_subsamples < 1) throw ValidationError("stability: n_subsamples must be >= 1");
  if (!(opts.fraction > 0.0 && opts.fraction <= 1.0)) {
    throw ValidationError("stability: fraction must be in (0, 1]");
  }
  if (lambdas.empty()) throw ValidationError("stability: empty lambda grid");
  for (std::size_t k = 1; k < lambdas.size(); ++k) {
    if (!(lambdas[k] < lambdas[k - 1])) {
      throw ValidationError("stability: lambda grid must be strictly decreasing");
    }
  }
  const bool stratify = family == GlmFamily::kLogistic;

  StabilityReport rep;
  rep.lambdas = lambdas;
  rep.n_subsamples = opts.n_subsamples;
  rep.fraction = opts.fraction;
  rep.seed = opts.seed;
  const Index p = data.p();
  const auto grid = static_cast<Index>(lambdas.size());

  PathOptions popts;
  popts.solver = opts.solver;
  popts.warm_start = true;
  popts.threads = 1;

  std::vector<MatrixXd> hits(static_cast<std::size_t>(opts.n_subsamples));
  std::vector<int> redraws(static_cast<std::size_t>(opts.n_subsamples), 0);
  parallel_for(hits.size(), opts.threads, [&](std::size_t s) {
    std::mt19937_64 rng(opts.seed + s);
    std::vector<Index> rows;
    for (int attempt = 0;; ++attempt) {
      if (attempt > opts.max_resamples) {
        throw ValidationError("stability: could not draw a subsample containing both classes");
      }
      rows = stratified_split(data.y, stratify, opts.fraction, rng).first;
      if (rows.size() < 2) {
        throw ValidationError("stability: subsample has fewer than 2 rows");
      }
      if (!stratify || both_classes(subset(data, rows).y)) break;
      ++redraws[s];
    }
    const Dataset sub = subset(data, rows);
    const auto fits = fit_path(sub, family, cs, lambdas, popts);
    MatrixXd h = MatrixXd::Zero(p, grid);
    for (Index k = 0; k < grid; ++k) {
      h.col(k) = (fits[static_cast<std::size_t>(k)].beta.array() != 0.0).cast<double>().matrix();
    }
    hits[s] = std::move(h);
  });

  rep.selection_probability = MatrixXd::Zero(p, grid);
  for (const auto& h : hits) rep.selection_probability += h;
  rep.selection_probability /= static_cast<double>(opts.n_subsamples);
  rep.resamples = std::accumulate(redraws.begin(), redraws.end(), 0);
  return rep;
}

PredictionReport train_test_evaluate(const Dataset& data, GlmFamily family,
                                     const ConstraintSet& cs, const PredictionOptions& opts) {
  data.validate(family);
  if (family != GlmFamily::kLogistic || !is_binary(data.y)) {
    throw ValidationError("train/test evaluation needs a binary (logistic) response");
  }
  if (!(opts.train_fraction > 0.0 && opts.train_fraction < 1.0)) {
    throw ValidationError("train_fraction must be in (0, 1)");
  }
  if (opts.replicates < 1) throw ValidationError("prediction: replicates must be >= 1");
  const double pos = data.y.sum();
  const double neg = static_cast<double>(data.n()) - pos;
  for (double c : {pos, neg}) {
    const double train = std::round(opts.train_fraction * c);
    if (train < 1.0 || c - train < 1.0) {
      throw ValidationError(
          "train/test split leaves a class empty in the training or test part");
    }
  }

  PredictionReport rep;
  rep.replicates = opts.replicates;
  const auto reps = static_cast<std::size_t>(opts.replicates);
  rep.auc_penalized.resize(reps);
  rep.auc_debiased.resize(reps);
  rep.auc_debiased_selected.resize(reps);

  PathOptions popts = opts.path;
  popts.threads = 1;
  parallel_for(reps, opts.threads, [&](std::size_t r) {
    std::mt19937_64 rng(opts.seed + r);
    const auto [train_rows, test_rows] = stratified_split(data.y, true, opts.train_fraction, rng);
    const Dataset train = subset(data, train_rows);
    const Dataset test = subset(data, test_rows);

    const PathResult path = select_lambda(train, family, cs, popts);
    const FitResult& fit = path.selected();
    DebiasOptions dopts = opts.debias;
    dopts.gamma = gamma_rule(path.lambda_opt());
    dopts.threads = 1;
    const InferenceResult inf = infer(fit, train, family, cs, dopts, opts.alpha);

    // AUC ignores the intercept, so all three scores share the fitted one.
    const VectorXd s_pen = linear_predictor(test.z, fit.beta, fit.intercept);
    const VectorXd s_deb = linear_predictor(test.z, inf.beta_u, fit.intercept);
    VectorXd b_sel = VectorXd::Zero(inf.p());
    for (Index j = 0; j < inf.p(); ++j) {
      if (inf.selected(j)) b_sel[j] = inf.beta_u[j];
    }
    const VectorXd s_sel = linear_predictor(test.z, b_sel, fit.intercept);
    rep.auc_penalized[r] = auc(s_pen, test.y);
    rep.auc_debiased[r] = auc(s_deb, test.y);
    rep.auc_debiased_selected[r] = auc(s_sel, test.y);
  });

  rep.penalized = mean_sd(rep.auc_penalized);
  rep.debiased = mean_sd(rep.auc_debiased);
  rep.debiased_selected = mean_sd(rep.auc_debiased_selected);
  return rep;
}

}  // namespace compglm
