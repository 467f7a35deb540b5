#include "compglm/compositional.hpp"

#include <limits>
#include <cmath>
#include <random>
#include <sstream>

#include "compglm/csv.hpp"
#include "compglm/errors.hpp"

namespace compglm {
namespace {

std::string location(std::string_view source, std::size_t row, std::size_t col) {
  std::ostringstream os;
  os << source << ": row " << row << ", column " << col;
  return os.str();
}

GroupConstraints ranges_to_groups(const std::vector<std::pair<Index, Index>>& ranges) {
  GroupConstraints gc;
  for (auto [first, last] : ranges) {
    std::vector<Index> g;
    for (Index i = first; i <= last; ++i) g.push_back(i - 1);
    gc.groups.push_back(std::move(g));
  }
  return gc;
}

}  // namespace

void AbundanceTable::validate() const {
  if (static_cast<Index>(taxa.size()) != p() || static_cast<Index>(samples.size()) != n()) {
    throw ValidationError("abundance table labels do not match its shape");
  }
  if (n() < 1 || p() < 1) throw ValidationError("abundance table is empty");
  for (Index i = 0; i < n(); ++i) {
    bool positive = false;
    for (Index j = 0; j < p(); ++j) {
      const double v = w(i, j);
      if (!std::isfinite(v)) {
        throw ValidationError("non-finite abundance at sample '" + samples[i] + "'");
      }
      if (v < 0.0) {
        throw ValidationError("negative abundance at sample '" + samples[i] + "', taxon '" +
                              taxa[j] + "'");
      }
      positive = positive || v > 0.0;
    }
    if (!positive) throw ValidationError("sample '" + samples[i] + "' has all-zero abundances");
  }
}

AbundanceTable parse_abundance_csv(std::string_view text, std::string_view source) {
  const auto rows = csv::parse(text);
  if (rows.size() < 2) throw ParseError(std::string(source) + ": need a header and data rows");
  const auto& header = rows[0];
  if (header.size() < 2) throw ParseError(std::string(source) + ": header needs taxon columns");

  AbundanceTable t;
  t.taxa.assign(header.begin() + 1, header.end());
  const Index p = static_cast<Index>(t.taxa.size());
  const Index n = static_cast<Index>(rows.size() - 1);
  t.w.resize(n, p);
  for (Index i = 0; i < n; ++i) {
    const auto& r = rows[static_cast<std::size_t>(i + 1)];
    if (static_cast<Index>(r.size()) != p + 1) {
      throw ParseError(std::string(source) + ": row " + std::to_string(i + 2) + " has " +
                       std::to_string(r.size()) + " cells, expected " + std::to_string(p + 1));
    }
    t.samples.push_back(r[0]);
    for (Index j = 0; j < p; ++j) {
      double v = 0.0;
      if (!csv::parse_double(r[static_cast<std::size_t>(j + 1)], v)) {
        throw ParseError("malformed number '" + r[static_cast<std::size_t>(j + 1)] + "' at " +
                         location(source, static_cast<std::size_t>(i + 2),
                                  static_cast<std::size_t>(j + 2)));
      }
      t.w(i, j) = v;
    }
  }
  t.validate();
  return t;
}

AbundanceTable load_abundance_csv(const std::filesystem::path& path) {
  return parse_abundance_csv(csv::read_file(path), path.string());
}

void write_abundance_csv(const std::filesystem::path& path, const AbundanceTable& table) {
  std::string out = "sample_id";
  for (const auto& t : table.taxa) out += "," + csv::escape(t);
  out += "\n";
  for (Index i = 0; i < table.n(); ++i) {
    out += csv::escape(table.samples[static_cast<std::size_t>(i)]);
    for (Index j = 0; j < table.p(); ++j) out += "," + csv::format_double(table.w(i, j));
    out += "\n";
  }
  csv::write_file(path, out);
}

AbundanceTable filter_prevalence(const AbundanceTable& table, double min_fraction) {
  if (!(min_fraction >= 0.0 && min_fraction <= 1.0)) {
    throw DomainError("filter_prevalence: min_fraction must be in [0, 1]");
  }
  std::vector<Index> keep;
  for (Index j = 0; j < table.p(); ++j) {
    const double frac = static_cast<double>((table.w.col(j).array() > 0.0).count()) /
                        static_cast<double>(table.n());
    if (frac >= min_fraction) keep.push_back(j);
  }
  if (keep.empty()) throw ValidationError("filter_prevalence: every taxon was filtered out");

  AbundanceTable out;
  out.samples = table.samples;
  out.w.resize(table.n(), static_cast<Index>(keep.size()));
  for (std::size_t k = 0; k < keep.size(); ++k) {
    out.w.col(static_cast<Index>(k)) = table.w.col(keep[k]);
    out.taxa.push_back(table.taxa[static_cast<std::size_t>(keep[k])]);
  }
  // Dropping taxa can leave a sample with no positive abundance.
  out.validate();
  return out;
}

AbundanceTable replace_zeros(const AbundanceTable& table, ZeroReplacement rule) {
  AbundanceTable out = table;
  auto min_positive = [](const auto& block) {
    double m = std::numeric_limits<double>::infinity();
    for (Index i = 0; i < block.rows(); ++i) {
      for (Index j = 0; j < block.cols(); ++j) {
        if (block(i, j) > 0.0) m = std::min(m, block(i, j));
      }
    }
    return m;
  };
  const double global = min_positive(table.w);
  if (!std::isfinite(global)) throw ValidationError("replace_zeros: table has no positive entry");

  for (Index j = 0; j < out.p(); ++j) {
    double fill = 0.5 * global;
    if (rule == ZeroReplacement::kPerTaxonMinimum) {
      const double col_min = min_positive(table.w.col(j));
      // A column of zeros has no minimum of its own; fall back to the table's.
      fill = 0.5 * (std::isfinite(col_min) ? col_min : global);
    }
    for (Index i = 0; i < out.n(); ++i) {
      if (out.w(i, j) == 0.0) out.w(i, j) = fill;
    }
  }
  return out;
}

MatrixXd to_log_composition(const MatrixXd& w) {
  if ((w.array() <= 0.0).any() || !w.allFinite()) {
    throw DomainError(
        "to_log_composition: abundances must be finite and strictly positive; "
        "run replace_zeros first");
  }
  MatrixXd z = w.array().log().matrix();
  for (Index i = 0; i < z.rows(); ++i) {
    const double top = z.row(i).maxCoeff();
    const double lse = top + std::log((z.row(i).array() - top).exp().sum());
    z.row(i).array() -= lse;
  }
  return z;
}

MatrixXd to_log_composition(const AbundanceTable& table) { return to_log_composition(table.w); }

VectorXd simulation_beta(Index p) {
  static constexpr double kPrefix[16] = {0.45, -0.4, 0.45, 0.0, -0.5, 0.0, 0.0, 0.0,
                                         0.0,  0.0,  -0.6, 0.0, 0.3,  0.0, 0.0, 0.3};
  if (p < 16) throw ValidationError("simulation_beta: p must be >= 16");
  VectorXd beta = VectorXd::Zero(p);
  for (Index i = 0; i < 16; ++i) beta[i] = kPrefix[i];
  return beta;
}

GroupConstraints simulation_groups(Index p) {
  if (p < 41) throw ValidationError("simulation groups need p >= 41");
  return ranges_to_groups(
      {{1, 10}, {11, 16}, {17, 20}, {21, 23}, {24, 30}, {31, 32}, {33, 40}, {41, p}});
}

GroupConstraints misspecified_groups(Index p) {
  if (p < 31) throw ValidationError("misspecified groups need p >= 31");
  return ranges_to_groups({{1, 4}, {5, 12}, {13, 23}, {24, 30}, {31, p}});
}

void SimulationConfig::validate() const {
  if (n < 5 || n % 5 != 0) throw ValidationError("simulation: n must be a positive multiple of 5");
  if (p < 41) throw ValidationError("simulation: p must be >= 41");
  if (!(zeta > -1.0 && zeta < 1.0)) throw ValidationError("simulation: zeta must be in (-1, 1)");
  if (n_major < 0 || n_major > p) throw ValidationError("simulation: n_major out of range");
  if (beta_true.size() != 0 && beta_true.size() != p) {
    throw ValidationError("simulation: beta_true must have length p");
  }
  if (!(case_fraction > 0.0 && case_fraction < 1.0)) {
    throw ValidationError("simulation: case_fraction must be in (0, 1)");
  }
  const double cases = case_fraction * static_cast<double>(n);
  if (std::abs(cases - std::round(cases)) > 1e-9) {
    throw ValidationError("simulation: case_fraction * n must be an integer");
  }
}

double SimulationConfig::resolved_major_location() const {
  return major_location ? *major_location : static_cast<double>(p) / 2.0;
}

VectorXd SimulationConfig::resolved_beta() const {
  return beta_true.size() == 0 ? simulation_beta(p) : beta_true;
}

Index SimulationConfig::case_count() const {
  return static_cast<Index>(std::llround(case_fraction * static_cast<double>(n)));
}

SimulatedData simulate_dataset(const SimulationConfig& config) {
  config.validate();
  const Index n = config.n;
  const Index p = config.p;

  MatrixXd cov(p, p);
  for (Index i = 0; i < p; ++i) {
    for (Index j = 0; j < p; ++j) cov(i, j) = std::pow(config.zeta, std::abs(i - j));
  }
  const Eigen::LLT<MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) throw SimulationError("simulation: covariance not PD");
  const MatrixXd chol = llt.matrixL();

  VectorXd loc = VectorXd::Constant(p, config.minor_location);
  loc.head(config.n_major).setConstant(config.resolved_major_location());

  SimulatedData out;
  out.beta_true = config.resolved_beta();
  out.intercept_true = config.intercept_true;
  out.seed = config.seed;
  out.groups = simulation_groups(p);
  out.constraints = build_group_constraints(out.groups, p);
  out.w.resize(n, p);
  out.dataset.z.resize(n, p);
  out.dataset.y.resize(n);
  out.dataset.has_intercept = true;

  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);

  const Index want_cases = config.case_count();
  const Index want_controls = n - want_cases;
  Index cases = 0;
  Index controls = 0;
  const std::uint64_t cap = 10000ULL * static_cast<std::uint64_t>(n);
  VectorXd eps(p), logw(p), zrow(p);
  while (cases < want_cases || controls < want_controls) {
    if (out.subjects_drawn >= cap) {
      std::ostringstream os;
      os << "simulation: " << cap << " subjects drawn without reaching " << want_cases
         << " cases and " << want_controls << " controls; try a different n or case_fraction";
      throw SimulationError(os.str());
    }
    ++out.subjects_drawn;
    for (Index j = 0; j < p; ++j) eps[j] = normal(rng);
    logw.noalias() = loc + chol * eps;
    const double top = logw.maxCoeff();
    const double lse = top + std::log((logw.array() - top).exp().sum());
    zrow = logw.array() - lse;
    const double eta = zrow.dot(out.beta_true) + config.intercept_true;
    const double prob = mean(GlmFamily::kLogistic, eta);
    const bool is_case = uniform(rng) < prob;

    if (is_case ? cases >= want_cases : controls >= want_controls) continue;
    const Index row = cases + controls;
    out.w.row(row) = logw.array().exp().matrix().transpose();
    out.dataset.z.row(row) = zrow.transpose();
    out.dataset.y[row] = is_case ? 1.0 : 0.0;
    (is_case ? cases : controls) += 1;
  }
  return out;
}

}  // namespace compglm
