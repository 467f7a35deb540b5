#include "cli.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "compglm/compositional.hpp"
#include "compglm/csv.hpp"
#include "compglm/debias.hpp"
#include "compglm/errors.hpp"
#include "compglm/evaluation.hpp"
#include "compglm/log.hpp"
#include "compglm/model_select.hpp"
#include "compglm/parallel.hpp"

namespace compglm::cli {
namespace {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

// ---- options ---------------------------------------------------------------

struct DataOptions {
  std::string data;
  std::string response;
  std::string family = "logistic";
  std::string constraints = "sum-to-zero";
  double min_prevalence = 0.0;
  std::string zero_replacement = "global";
  bool no_intercept = false;
};

struct TuneOptions {
  std::string lambda = "ebic";
  int grid_size = 50;
  double min_ratio = 0.01;
  int max_iters = 10000;
  double tol = 1e-8;
};

struct InferOptions {
  std::string gamma = "auto";
  double alpha = 0.05;
};

struct Common {
  std::string out = ".";
  int threads = 0;
  std::uint64_t seed = 1;
};

int resolved_threads(const Common& c) { return c.threads > 0 ? c.threads : default_thread_count(); }

// ---- input -----------------------------------------------------------------

struct Prepared {
  Dataset data;
  GlmFamily family = GlmFamily::kLogistic;
  ConstraintSet cs;
  std::vector<std::string> taxa;
  std::vector<std::string> samples;
  Index dropped_taxa = 0;
  std::string constraint_desc;
};

VectorXd load_response(const fs::path& path, const std::vector<std::string>& samples) {
  const auto rows = csv::parse(csv::read_file(path));
  if (rows.size() < 2) throw ParseError(path.string() + ": need a header and data rows");
  std::map<std::string, double> by_id;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].size() != 2) {
      throw ParseError(path.string() + ": row " + std::to_string(r + 1) +
                       " must have 2 cells (sample_id,y)");
    }
    double v = 0.0;
    if (!csv::parse_double(rows[r][1], v)) {
      throw ParseError("malformed number '" + rows[r][1] + "' at " + path.string() + ": row " +
                       std::to_string(r + 1) + ", column 2");
    }
    if (!by_id.emplace(rows[r][0], v).second) {
      throw ValidationError(path.string() + ": duplicate sample id '" + rows[r][0] + "'");
    }
  }
  VectorXd y(static_cast<Index>(samples.size()));
  for (std::size_t i = 0; i < samples.size(); ++i) {
    auto it = by_id.find(samples[i]);
    if (it == by_id.end()) {
      throw ValidationError(path.string() + ": no response for sample '" + samples[i] + "'");
    }
    y[static_cast<Index>(i)] = it->second;
  }
  return y;
}

// Groups refer to columns of the unfiltered table, by 1-based index or by
// taxon name. Members removed by the prevalence filter are dropped.
GroupConstraints resolve_groups(const fs::path& path, const std::vector<std::string>& all_taxa,
                                const std::vector<std::string>& kept_taxa) {
  Json doc;
  try {
    doc = Json::parse(csv::read_file(path));
  } catch (const Json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  if (!doc.is_array()) throw ParseError(path.string() + ": expected a list of groups");
  std::map<std::string, Index> kept;
  for (std::size_t j = 0; j < kept_taxa.size(); ++j) kept[kept_taxa[j]] = static_cast<Index>(j);

  GroupConstraints gc;
  for (std::size_t g = 0; g < doc.size(); ++g) {
    if (!doc[g].is_array()) {
      throw ParseError(path.string() + ": group " + std::to_string(g + 1) + " is not an array");
    }
    std::vector<Index> members;
    for (const auto& v : doc[g]) {
      std::string name;
      if (v.is_number_integer()) {
        const auto idx = v.get<long long>();
        if (idx < 1 || idx > static_cast<long long>(all_taxa.size())) {
          throw ValidationError(path.string() + ": group " + std::to_string(g + 1) +
                                " index " + std::to_string(idx) + " out of range");
        }
        name = all_taxa[static_cast<std::size_t>(idx - 1)];
      } else if (v.is_string()) {
        name = v.get<std::string>();
        if (std::find(all_taxa.begin(), all_taxa.end(), name) == all_taxa.end()) {
          throw ValidationError(path.string() + ": unknown taxon '" + name + "'");
        }
      } else {
        throw ParseError(path.string() + ": group " + std::to_string(g + 1) +
                         " entries must be 1-based indices or taxon names");
      }
      auto it = kept.find(name);
      if (it == kept.end()) {
        warn("constraint member '" + name + "' removed by the prevalence filter");
        continue;
      }
      members.push_back(it->second);
    }
    if (members.empty()) {
      warn("constraint group " + std::to_string(g + 1) + " is empty after filtering; ignored");
      continue;
    }
    gc.groups.push_back(std::move(members));
  }
  return gc;
}

Prepared prepare(const DataOptions& o) {
  if (!fs::exists(o.data)) throw IoError("cannot open " + o.data);
  if (!fs::exists(o.response)) throw IoError("cannot open " + o.response);
  Prepared p;
  p.family = parse_family(o.family);
  const AbundanceTable raw = load_abundance_csv(o.data);
  AbundanceTable table = filter_prevalence(raw, o.min_prevalence);
  p.dropped_taxa = raw.p() - table.p();
  ZeroReplacement rule = ZeroReplacement::kGlobalMinimum;
  if (o.zero_replacement == "per-taxon") {
    rule = ZeroReplacement::kPerTaxonMinimum;
  } else if (o.zero_replacement != "global") {
    throw ValidationError("--zero-replacement must be 'global' or 'per-taxon'");
  }
  table = replace_zeros(table, rule);
  p.data.z = to_log_composition(table);
  p.data.y = load_response(o.response, table.samples);
  p.data.has_intercept = !o.no_intercept;
  p.data.validate(p.family);
  p.taxa = table.taxa;
  p.samples = table.samples;

  const Index dim = table.p();
  if (o.constraints == "sum-to-zero") {
    p.cs = build_group_constraints(sum_to_zero_groups(dim), dim);
  } else if (o.constraints == "none") {
    p.cs = ConstraintSet(dim);
  } else {
    if (!fs::exists(o.constraints)) throw IoError("cannot open constraint file " + o.constraints);
    p.cs = build_group_constraints(resolve_groups(o.constraints, raw.taxa, table.taxa), dim);
  }
  p.constraint_desc = o.constraints;
  return p;
}

// ---- output ----------------------------------------------------------------

Json number(double v) {
  if (std::isfinite(v)) return v;
  return nullptr;
}

Json vector_json(const VectorXd& v) {
  Json a = Json::array();
  for (Index i = 0; i < v.size(); ++i) a.push_back(number(v[i]));
  return a;
}

Json envelope(std::string_view command, Json config) {
  Json j;
  j["schema_version"] = kSchemaVersion;
  j["command"] = command;
  j["generator"] = kGeneratorId;
  j["config"] = std::move(config);
  return j;
}

void write_json(const fs::path& path, const Json& j) { csv::write_file(path, j.dump(2) + "\n"); }

fs::path ensure_out(const std::string& out) {
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw IoError("cannot create output directory " + out + ": " + ec.message());
  return fs::path(out);
}

Json data_config(const DataOptions& d) {
  Json j;
  j["data"] = d.data;
  j["response"] = d.response;
  j["family"] = d.family;
  j["constraints"] = d.constraints;
  j["min_prevalence"] = d.min_prevalence;
  j["zero_replacement"] = d.zero_replacement;
  j["intercept"] = !d.no_intercept;
  return j;
}

Json tune_config(const TuneOptions& t) {
  Json j;
  j["lambda"] = t.lambda;
  j["grid_size"] = t.grid_size;
  j["min_ratio"] = t.min_ratio;
  j["max_iters"] = t.max_iters;
  j["tol"] = t.tol;
  return j;
}

Json solver_json(const SolverOptions& s) {
  Json j;
  j["max_iters"] = s.max_iters;
  j["tol"] = s.tol;
  j["friction"] = s.friction;
  j["kkt_tol"] = s.kkt_tol;
  j["prox"] = s.prox == ProxMode::kExact ? "exact" : "threshold-then-project";
  return j;
}

Json debias_json(const DebiasOptions& d) {
  Json j;
  j["admm_rho"] = d.admm_rho;
  j["qp_tol"] = d.qp_tol;
  j["qp_max_iters"] = d.qp_max_iters;
  j["gamma_growth"] = d.gamma_growth;
  j["max_escalations"] = d.max_escalations;
  return j;
}

PathOptions path_options(const TuneOptions& t, int threads) {
  PathOptions po;
  po.grid_size = t.grid_size;
  po.min_ratio = t.min_ratio;
  po.solver.max_iters = t.max_iters;
  po.solver.tol = t.tol;
  po.threads = threads;
  return po;
}

std::vector<std::string> default_names(Index p) {
  std::vector<std::string> names;
  for (Index j = 0; j < p; ++j) names.push_back("z" + std::to_string(j + 1));
  return names;
}

// ---- fitting shared by fit / infer -----------------------------------------

struct Tuned {
  FitResult fit;
  PathResult path;  // empty lambdas when lambda was given
  bool from_path = false;
};

Tuned tune(const Prepared& p, const TuneOptions& t, int threads) {
  Tuned out;
  const PathOptions po = path_options(t, threads);
  if (t.lambda == "ebic") {
    out.path = select_lambda(p.data, p.family, p.cs, po);
    out.fit = out.path.selected();
    out.from_path = true;
    return out;
  }
  double lam = 0.0;
  if (!csv::parse_double(t.lambda, lam) || lam < 0.0) {
    throw ValidationError("--lambda must be a nonnegative number or 'ebic'");
  }
  out.fit = fit(p.data, p.family, p.cs, lam, po.solver);
  out.path.lambdas = {lam};
  out.path.fits = {out.fit};
  out.path.xi = ebic_xi(p.data.n(), p.data.p());
  out.path.ebic_values = {ebic(out.fit, p.data, p.family, p.cs, out.path.xi)};
  out.path.candidate = {true};
  out.path.selected_index = 0;
  return out;
}

std::string path_csv(const PathResult& path) {
  std::string s = "index,lambda,ebic,support_size,candidate,selected,converged,iterations,kkt_residual\n";
  for (std::size_t k = 0; k < path.lambdas.size(); ++k) {
    const auto& f = path.fits[k];
    s += std::to_string(k + 1) + "," + csv::format_double(path.lambdas[k]) + "," +
         csv::format_double(path.ebic_values[k]) + "," + std::to_string(f.support_size()) + "," +
         (path.candidate[k] ? "true" : "false") + "," +
         (k == path.selected_index ? "true" : "false") + "," + (f.converged ? "true" : "false") +
         "," + std::to_string(f.iters) + "," + csv::format_double(f.kkt_residual) + "\n";
  }
  return s;
}

Json fit_json(const Prepared& p, const Tuned& t, Json config) {
  Json j = envelope("fit", std::move(config));
  const FitResult& f = t.fit;
  Json res;
  res["n"] = p.data.n();
  res["p"] = p.data.p();
  res["dropped_taxa"] = p.dropped_taxa;
  res["constraint_rank"] = p.cs.rank();
  res["lambda"] = f.lambda;
  res["lambda_selection"] = t.from_path ? "ebic" : "fixed";
  res["ebic"] = number(t.path.ebic_values.at(t.path.selected_index));
  res["xi"] = t.path.xi;
  res["intercept"] = f.intercept;
  res["converged"] = f.converged;
  res["iterations"] = f.iters;
  res["kkt_residual"] = f.kkt_residual;
  res["support_size"] = f.support_size();
  res["constraint_residual"] = p.cs.empty() ? 0.0 : p.cs.residual(f.beta).lpNorm<Eigen::Infinity>();
  Json coef = Json::array();
  for (Index k = 0; k < f.beta.size(); ++k) {
    Json c;
    c["taxon"] = p.taxa[static_cast<std::size_t>(k)];
    c["estimate"] = f.beta[k];
    coef.push_back(std::move(c));
  }
  res["coefficients"] = std::move(coef);
  j["result"] = std::move(res);
  return j;
}

// ---- subcommands -----------------------------------------------------------

int cmd_fit(const Common& c, const DataOptions& d, const TuneOptions& t) {
  const Prepared p = prepare(d);
  const Tuned tuned = tune(p, t, resolved_threads(c));
  const fs::path out = ensure_out(c.out);
  Json config;
  config["data"] = data_config(d);
  config["tuning"] = tune_config(t);
  write_json(out / "fit.json", fit_json(p, tuned, config));
  csv::write_file(out / "path.csv", path_csv(tuned.path));
  if (!tuned.fit.converged) {
    warn("selected fit did not converge");
    return kExitNumerical;
  }
  return kExitOk;
}

int cmd_infer(const Common& c, const DataOptions& d, const TuneOptions& t, const InferOptions& io) {
  if (!(io.alpha > 0.0 && io.alpha < 1.0)) throw ValidationError("--alpha must be in (0, 1)");
  const Prepared p = prepare(d);
  const int threads = resolved_threads(c);
  const Tuned tuned = tune(p, t, threads);

  DebiasOptions dopts;
  dopts.threads = threads;
  if (io.gamma == "auto") {
    dopts.gamma = gamma_rule(tuned.fit.lambda);
  } else if (!csv::parse_double(io.gamma, dopts.gamma) || !(dopts.gamma > 0.0)) {
    throw ValidationError("--gamma must be a positive number or 'auto'");
  }
  const InferenceResult inf = infer(tuned.fit, p.data, p.family, p.cs, dopts, io.alpha);

  const fs::path out = ensure_out(c.out);
  Json config;
  config["data"] = data_config(d);
  config["tuning"] = tune_config(t);
  config["gamma"] = io.gamma;
  config["alpha"] = io.alpha;
  config["debias"] = debias_json(dopts);
  write_json(out / "fit.json", fit_json(p, tuned, config));
  csv::write_file(out / "path.csv", path_csv(tuned.path));

  std::string s = "coordinate,name,estimate,se,lower,upper,selected\n";
  for (Index j = 0; j < inf.p(); ++j) {
    s += std::to_string(j + 1) + "," + csv::escape(p.taxa[static_cast<std::size_t>(j)]) + "," +
         csv::format_double(inf.beta_u[j]) + "," + csv::format_double(inf.std_errors[j]) + "," +
         csv::format_double(inf.ci_lower[j]) + "," + csv::format_double(inf.ci_upper[j]) + "," +
         (inf.selected(j) ? "true" : "false") + "\n";
  }
  csv::write_file(out / "intervals.csv", s);

  Json j = envelope("infer", config);
  Json res;
  res["n"] = inf.n;
  res["p"] = inf.p();
  res["lambda"] = tuned.fit.lambda;
  res["gamma"] = inf.gamma;
  res["alpha"] = inf.alpha;
  res["z_multiplier"] = inf.z_multiplier;
  res["failed_coordinates"] = inf.failed_count();
  res["constraint_residual"] =
      p.cs.empty() ? 0.0 : p.cs.residual(inf.beta_u).lpNorm<Eigen::Infinity>();
  Json coords = Json::array();
  for (Index k = 0; k < inf.p(); ++k) {
    const auto u = static_cast<std::size_t>(k);
    Json e;
    e["coordinate"] = k + 1;
    e["name"] = p.taxa[u];
    e["penalized"] = inf.beta_n[k];
    e["debiased"] = inf.beta_u[k];
    e["se"] = inf.std_errors[k];
    e["lower"] = number(inf.ci_lower[k]);
    e["upper"] = number(inf.ci_upper[k]);
    e["selected"] = inf.selected(k);
    e["valid"] = static_cast<bool>(inf.valid[u]);
    e["gamma_used"] = inf.gamma_used[u];
    e["escalations"] = inf.escalations[u];
    e["qp_iterations"] = inf.qp_iterations[u];
    coords.push_back(std::move(e));
  }
  res["coordinates"] = std::move(coords);
  j["result"] = std::move(res);
  write_json(out / "inference.json", j);

  const double failed = static_cast<double>(inf.failed_count()) / static_cast<double>(inf.p());
  if (inf.failed_count() > 0) {
    warn(std::to_string(inf.failed_count()) + " coordinate(s) have no confidence interval");
  }
  return failed > 0.10 ? kExitNumerical : kExitOk;
}

struct SimOptions {
  Index n = 500;
  Index p = 50;
  double zeta = 0.2;
  double case_fraction = 0.4;
  double major_location = std::nan("");
};

SimulationConfig sim_config(const SimOptions& s, std::uint64_t seed) {
  SimulationConfig sc;
  sc.n = s.n;
  sc.p = s.p;
  sc.zeta = s.zeta;
  sc.case_fraction = s.case_fraction;
  if (!std::isnan(s.major_location)) sc.major_location = s.major_location;
  sc.seed = seed;
  return sc;
}

Json sim_json(const SimulationConfig& sc) {
  Json j;
  j["n"] = sc.n;
  j["p"] = sc.p;
  j["zeta"] = sc.zeta;
  j["major_location"] = sc.resolved_major_location();
  j["n_major"] = sc.n_major;
  j["minor_location"] = sc.minor_location;
  j["intercept_true"] = sc.intercept_true;
  j["case_fraction"] = sc.case_fraction;
  j["seed"] = sc.seed;
  return j;
}

int cmd_simulate(const Common& c, const SimOptions& s) {
  const SimulationConfig sc = sim_config(s, c.seed);
  const SimulatedData sim = simulate_dataset(sc);
  const fs::path out = ensure_out(c.out);
  const auto names = default_names(sc.p);
  std::vector<std::string> samples;
  for (Index i = 0; i < sc.n; ++i) samples.push_back("s" + std::to_string(i + 1));

  AbundanceTable table{sim.w, names, samples};
  write_abundance_csv(out / "abundance.csv", table);

  std::string z = "sample_id";
  for (const auto& nm : names) z += "," + nm;
  z += "\n";
  std::string y = "sample_id,y\n";
  for (Index i = 0; i < sc.n; ++i) {
    z += samples[static_cast<std::size_t>(i)];
    for (Index j = 0; j < sc.p; ++j) z += "," + csv::format_double(sim.dataset.z(i, j));
    z += "\n";
    y += samples[static_cast<std::size_t>(i)] + "," + csv::format_double(sim.dataset.y[i]) + "\n";
  }
  csv::write_file(out / "design.csv", z);
  csv::write_file(out / "response.csv", y);

  std::string b = "coordinate,name,beta\n";
  for (Index j = 0; j < sc.p; ++j) {
    b += std::to_string(j + 1) + "," + names[static_cast<std::size_t>(j)] + "," +
         csv::format_double(sim.beta_true[j]) + "\n";
  }
  csv::write_file(out / "beta_true.csv", b);
  csv::write_file(out / "groups.json", groups_to_json(sim.groups) + "\n");

  Json j = envelope("simulate", sim_json(sc));
  Json res;
  res["cases"] = static_cast<Index>(sim.dataset.y.sum());
  res["controls"] = sc.n - static_cast<Index>(sim.dataset.y.sum());
  res["subjects_drawn"] = sim.subjects_drawn;
  res["intercept_true"] = sim.intercept_true;
  res["beta_true"] = vector_json(sim.beta_true);
  j["result"] = std::move(res);
  write_json(out / "config.json", j);
  return kExitOk;
}

struct EvalOptions {
  std::vector<std::string> modes{"multi"};
  std::vector<Index> ns{500};
  int reps = 100;
  double alpha = 0.05;
  bool figure_data = false;
};

Json report_json(const ExperimentReport& r) {
  Json j;
  j["mode"] = to_string(r.mode);
  j["n"] = r.n;
  j["p"] = r.p;
  j["n_replicates"] = r.n_replicates;
  j["n_failed"] = r.n_failed;
  j["tp_rate"] = r.tp_rate;
  j["fp_rate"] = r.fp_rate;
  j["mean_coverage"] = r.mean_coverage;
  j["mean_ci_length"] = r.mean_ci_length;
  j["max_constraint_residual"] = r.max_constraint_residual;
  const KsResult ks = ks_test_standard_normal(r.null_z);
  j["null_z_ks"] = {{"statistic", ks.statistic}, {"p_value", ks.p_value}, {"count", ks.n}};
  j["coverage"] = vector_json(r.coverage);
  j["mean_length"] = vector_json(r.mean_length);
  Json seeds = Json::array();
  Json failed = Json::array();
  for (const auto& rep : r.replicates) {
    seeds.push_back(rep.seed);
    if (rep.failed) failed.push_back({{"seed", rep.seed}, {"reason", rep.failure}});
  }
  j["seeds"] = std::move(seeds);
  j["failures"] = std::move(failed);
  return j;
}

int cmd_evaluate(const Common& c, const SimOptions& s, const EvalOptions& e, std::ostream& err) {
  if (e.reps < 1) throw ValidationError("--reps must be >= 1");
  const int threads = resolved_threads(c);
  std::vector<ConstraintMode> modes;
  for (const auto& m : e.modes) modes.push_back(parse_constraint_mode(m));
  const fs::path out = ensure_out(c.out);

  std::vector<ExperimentReport> reports;
  for (Index n : e.ns) {
    for (ConstraintMode m : modes) {
      ExperimentConfig ec;
      SimOptions sn = s;
      sn.n = n;
      ec.simulation = sim_config(sn, c.seed);
      ec.mode = m;
      ec.replicates = e.reps;
      ec.base_seed = c.seed;
      ec.alpha = e.alpha;
      ec.threads = threads;
      reports.push_back(run_coverage_experiment(ec));
      const auto& r = reports.back();
      err << "evaluate: mode=" << to_string(m) << " n=" << n << " tp=" << r.tp_rate
          << " fp=" << r.fp_rate << " coverage=" << r.mean_coverage
          << " length=" << r.mean_ci_length << " failed=" << r.n_failed << " (" << r.seconds
          << " s)\n";
    }
  }

  Json config;
  config["simulation"] = sim_json(sim_config(s, c.seed));
  Json ns = Json::array();
  for (Index n : e.ns) ns.push_back(n);
  config["n"] = std::move(ns);
  config["modes"] = e.modes;
  config["replicates"] = e.reps;
  config["base_seed"] = c.seed;
  config["alpha"] = e.alpha;
  config["solver"] = solver_json(SolverOptions{});
  config["debias"] = debias_json(DebiasOptions{});
  config["gamma_rule"] = "0.01 * lambda_opt";
  Json j = envelope("evaluate", config);
  Json res = Json::array();
  for (const auto& r : reports) res.push_back(report_json(r));
  j["result"] = std::move(res);
  write_json(out / "report.json", j);

  std::string tidy = "mode,n,coordinate,beta_true,coverage,mean_ci_length\n";
  std::string fig = "mode,n,coordinate,beta_true,signal,coverage,ci_length\n";
  for (const auto& r : reports) {
    for (Index k = 0; k < r.p; ++k) {
      const std::string head = std::string(to_string(r.mode)) + "," + std::to_string(r.n) + "," +
                               std::to_string(k + 1) + "," + csv::format_double(r.beta_true[k]) + ",";
      tidy += head + csv::format_double(r.coverage[k]) + "," + csv::format_double(r.mean_length[k]) + "\n";
      fig += head + (r.beta_true[k] != 0.0 ? "nonzero" : "zero") + "," +
             csv::format_double(r.coverage[k]) + "," + csv::format_double(r.mean_length[k]) + "\n";
    }
  }
  csv::write_file(out / "coverage.csv", tidy);
  if (e.figure_data) csv::write_file(out / "figure_data.csv", fig);
  return kExitOk;
}

struct StabOptions {
  int subsamples = 50;
  double fraction = 2.0 / 3.0;
};

int cmd_stability(const Common& c, const DataOptions& d, const TuneOptions& t,
                  const StabOptions& so) {
  const Prepared p = prepare(d);
  const std::vector<double> grid =
      lambda_grid(lambda_max(p.data, p.family, p.cs), t.grid_size, t.min_ratio);
  StabilityOptions opts;
  opts.n_subsamples = so.subsamples;
  opts.fraction = so.fraction;
  opts.seed = c.seed;
  opts.solver = path_options(t, 1).solver;
  opts.threads = resolved_threads(c);
  const StabilityReport rep = stability_selection(p.data, p.family, p.cs, grid, opts);

  const fs::path out = ensure_out(c.out);
  std::string s = "taxon";
  for (std::size_t k = 0; k < grid.size(); ++k) s += ",lambda_" + std::to_string(k + 1);
  s += "\n";
  for (Index j = 0; j < rep.selection_probability.rows(); ++j) {
    s += csv::escape(p.taxa[static_cast<std::size_t>(j)]);
    for (Index k = 0; k < rep.selection_probability.cols(); ++k) {
      s += "," + csv::format_double(rep.selection_probability(j, k));
    }
    s += "\n";
  }
  csv::write_file(out / "stability.csv", s);

  Json config;
  config["data"] = data_config(d);
  config["tuning"] = tune_config(t);
  config["subsamples"] = so.subsamples;
  config["fraction"] = so.fraction;
  config["seed"] = c.seed;
  Json j = envelope("stability", config);
  Json res;
  res["lambdas"] = grid;
  res["n_subsamples"] = rep.n_subsamples;
  res["subsample_fraction"] = rep.fraction;
  res["resamples"] = rep.resamples;
  res["taxa"] = p.taxa;
  Json max_prob = Json::array();
  for (Index k = 0; k < rep.selection_probability.rows(); ++k) {
    max_prob.push_back(rep.selection_probability.row(k).maxCoeff());
  }
  res["max_selection_probability"] = std::move(max_prob);
  j["result"] = std::move(res);
  write_json(out / "stability.json", j);
  return kExitOk;
}

struct PredictOptions {
  double train_fraction = 2.0 / 3.0;
  int reps = 50;
  double alpha = 0.05;
};

int cmd_predict(const Common& c, const DataOptions& d, const TuneOptions& t,
                const PredictOptions& po) {
  const Prepared p = prepare(d);
  PredictionOptions opts;
  opts.train_fraction = po.train_fraction;
  opts.replicates = po.reps;
  opts.seed = c.seed;
  opts.path = path_options(t, 1);
  opts.alpha = po.alpha;
  opts.threads = resolved_threads(c);
  const PredictionReport rep = train_test_evaluate(p.data, p.family, p.cs, opts);

  const fs::path out = ensure_out(c.out);
  std::string s = "replicate,seed,auc_penalized,auc_debiased,auc_debiased_selected\n";
  for (int r = 0; r < rep.replicates; ++r) {
    const auto u = static_cast<std::size_t>(r);
    s += std::to_string(r + 1) + "," + std::to_string(c.seed + u) + "," +
         csv::format_double(rep.auc_penalized[u]) + "," + csv::format_double(rep.auc_debiased[u]) +
         "," + csv::format_double(rep.auc_debiased_selected[u]) + "\n";
  }
  csv::write_file(out / "prediction.csv", s);

  Json config;
  config["data"] = data_config(d);
  config["tuning"] = tune_config(t);
  config["train_fraction"] = po.train_fraction;
  config["replicates"] = po.reps;
  config["alpha"] = po.alpha;
  config["seed"] = c.seed;
  Json j = envelope("predict", config);
  Json res;
  auto ms = [](const MeanSd& m) { return Json{{"mean", m.mean}, {"sd", m.sd}}; };
  res["penalized"] = ms(rep.penalized);
  res["debiased"] = ms(rep.debiased);
  res["debiased_selected"] = ms(rep.debiased_selected);
  res["replicates"] = rep.replicates;
  j["result"] = std::move(res);
  write_json(out / "prediction.json", j);
  return kExitOk;
}

// ---- wiring ----------------------------------------------------------------

void add_common(CLI::App* app, Common& c) {
  app->add_option("--out", c.out, "Output directory")->capture_default_str();
  app->add_option("--threads", c.threads,
                  "Worker threads (0: COMPGLM_THREADS or hardware concurrency)")
      ->capture_default_str();
  app->add_option("--seed", c.seed, "Random seed")->capture_default_str();
}

void add_data(CLI::App* app, DataOptions& d) {
  app->add_option("--data", d.data, "Abundance CSV (sample_id, taxa...)")->required();
  app->add_option("--response", d.response, "Response CSV (sample_id, y)")->required();
  app->add_option("--family", d.family, "logistic | gaussian | poisson")->capture_default_str();
  app->add_option("--constraints", d.constraints, "Groups JSON path | sum-to-zero | none")
      ->capture_default_str();
  app->add_option("--min-prevalence", d.min_prevalence,
                  "Drop taxa present in fewer than this fraction of samples")
      ->capture_default_str();
  app->add_option("--zero-replacement", d.zero_replacement, "global | per-taxon")
      ->capture_default_str();
  app->add_flag("--no-intercept", d.no_intercept, "Fit without an intercept");
}

void add_tune(CLI::App* app, TuneOptions& t) {
  app->add_option("--lambda", t.lambda, "Penalty level or 'ebic'")->capture_default_str();
  app->add_option("--grid-size", t.grid_size, "Lambda grid size")->capture_default_str();
  app->add_option("--min-ratio", t.min_ratio, "Smallest lambda / lambda_max")->capture_default_str();
  app->add_option("--max-iters", t.max_iters, "Solver iteration cap")->capture_default_str();
  app->add_option("--tol", t.tol, "Relative objective tolerance")->capture_default_str();
}

void add_sim(CLI::App* app, SimOptions& s, bool with_n) {
  if (with_n) app->add_option("--n", s.n, "Sample size (multiple of 5)")->capture_default_str();
  app->add_option("--p", s.p, "Number of taxa (>= 41)")->capture_default_str();
  app->add_option("--zeta", s.zeta, "Log-scale correlation")->capture_default_str();
  app->add_option("--case-fraction", s.case_fraction, "Fraction of cases")->capture_default_str();
  app->add_option("--major-location", s.major_location,
                  "Log-scale location of the first five taxa (default p/2)");
}

std::string error_json(std::string_view kind, std::string_view message) {
  Json j;
  j["schema_version"] = kSchemaVersion;
  j["error"] = {{"kind", kind}, {"message", message}};
  return j.dump();
}

int exit_code_for(const Error& e) {
  return (e.kind() == "solver" || e.kind() == "experiment") ? kExitNumerical : kExitUserError;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Penalized and de-biased inference for GLMs with compositional covariates",
               "compglm"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string("compglm ") + kSchemaVersion);

  Common common;
  DataOptions data;
  TuneOptions tuning;
  InferOptions inference;
  SimOptions sim;
  EvalOptions eval;
  StabOptions stab;
  PredictOptions pred;

  auto* fit_cmd = app.add_subcommand("fit", "EBIC-tuned constrained penalized fit");
  add_common(fit_cmd, common);
  add_data(fit_cmd, data);
  add_tune(fit_cmd, tuning);

  auto* infer_cmd = app.add_subcommand("infer", "De-biased estimates and confidence intervals");
  add_common(infer_cmd, common);
  add_data(infer_cmd, data);
  add_tune(infer_cmd, tuning);
  infer_cmd->add_option("--gamma", inference.gamma, "QP constraint level or 'auto'")
      ->capture_default_str();
  infer_cmd->add_option("--alpha", inference.alpha, "Interval level is 1 - alpha")
      ->capture_default_str();

  auto* sim_cmd = app.add_subcommand("simulate", "Draw a synthetic case-control dataset");
  add_common(sim_cmd, common);
  add_sim(sim_cmd, sim, true);

  auto* eval_cmd = app.add_subcommand("evaluate", "Monte-Carlo coverage experiment");
  add_common(eval_cmd, common);
  add_sim(eval_cmd, sim, false);
  eval_cmd->add_option("--mode", eval.modes, "multi | one | none | wrong (repeatable)")
      ->capture_default_str();
  eval_cmd->add_option("--n", eval.ns, "Sample sizes (repeatable)")->capture_default_str();
  eval_cmd->add_option("--reps", eval.reps, "Replicates per setting")->capture_default_str();
  eval_cmd->add_option("--alpha", eval.alpha, "Interval level is 1 - alpha")->capture_default_str();
  eval_cmd->add_flag("--figure-data", eval.figure_data, "Also write figure_data.csv");

  auto* stab_cmd = app.add_subcommand("stability", "Stability selection over the lambda grid");
  add_common(stab_cmd, common);
  add_data(stab_cmd, data);
  add_tune(stab_cmd, tuning);
  stab_cmd->add_option("--subsamples", stab.subsamples, "Number of subsamples")
      ->capture_default_str();
  stab_cmd->add_option("--fraction", stab.fraction, "Subsample fraction")->capture_default_str();

  auto* pred_cmd = app.add_subcommand("predict", "Train/test AUC of fitted scores");
  add_common(pred_cmd, common);
  add_data(pred_cmd, data);
  add_tune(pred_cmd, tuning);
  pred_cmd->add_option("--train-fraction", pred.train_fraction, "Per-class training fraction")
      ->capture_default_str();
  pred_cmd->add_option("--reps", pred.reps, "Number of splits")->capture_default_str();
  pred_cmd->add_option("--alpha", pred.alpha, "Interval level for CI selection")
      ->capture_default_str();

  ScopedWarningHandler warnings([&err](std::string_view msg) {
    err << "compglm warning: " << msg << "\n";
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << app.version() << "\n";
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    out << error_json("usage", e.what()) << "\n";
    return kExitUserError;
  }

  try {
    const auto t0 = std::chrono::steady_clock::now();
    int code = kExitOk;
    if (*fit_cmd) code = cmd_fit(common, data, tuning);
    else if (*infer_cmd) code = cmd_infer(common, data, tuning, inference);
    else if (*sim_cmd) code = cmd_simulate(common, sim);
    else if (*eval_cmd) code = cmd_evaluate(common, sim, eval, err);
    else if (*stab_cmd) code = cmd_stability(common, data, tuning, stab);
    else if (*pred_cmd) code = cmd_predict(common, data, tuning, pred);
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    err << "compglm: done in " << secs << " s\n";
    return code;
  } catch (const Error& e) {
    out << error_json(e.kind(), e.what()) << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    out << error_json("internal", e.what()) << "\n";
    return kExitNumerical;
  }
}

}  // namespace compglm::cli
