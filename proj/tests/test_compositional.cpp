#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <functional>

#include "compglm/compositional.hpp"
#include "compglm/errors.hpp"
#include "support.hpp"

using namespace compglm;

namespace {

AbundanceTable make_table(const MatrixXd& w) {
  AbundanceTable t;
  t.w = w;
  for (Index j = 0; j < w.cols(); ++j) t.taxa.push_back("t" + std::to_string(j + 1));
  for (Index i = 0; i < w.rows(); ++i) t.samples.push_back("s" + std::to_string(i + 1));
  return t;
}

std::string error_message(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_CASE("abundance CSV parsing") {
  const AbundanceTable t = parse_abundance_csv("id,a,b\nx,1,2\ny,0,3.5\nz,4,0\n");
  CHECK(t.n() == 3);
  CHECK(t.p() == 2);
  CHECK(t.taxa == std::vector<std::string>{"a", "b"});
  CHECK(t.samples == std::vector<std::string>{"x", "y", "z"});
  CHECK(t.w(1, 1) == 3.5);

  const std::string msg = error_message([] { parse_abundance_csv("id,a,b\nx,1,2\ny,abc,3\n"); });
  CHECK(msg.find("abc") != std::string::npos);
  CHECK(msg.find("row 3") != std::string::npos);
  CHECK_THROWS_AS(parse_abundance_csv("id,a,b\nx,1,2\ny,abc,3\n"), ParseError);
  CHECK_THROWS_AS(parse_abundance_csv("id,a,b\nx,1\n"), ParseError);
  CHECK_THROWS_AS(parse_abundance_csv("id,a,b\nx,0,0\n"), ValidationError);
  CHECK_THROWS_AS(parse_abundance_csv("id,a,b\nx,-1,2\n"), ValidationError);
  CHECK_THROWS_AS(load_abundance_csv("/nonexistent/table.csv"), IoError);
}

TEST_CASE("abundance CSV round trip") {
  std::mt19937_64 rng(51);
  MatrixXd w = testing::random_matrix(5, 4, rng).array().exp();
  w(2, 1) = 0.0;
  const AbundanceTable t = make_table(w);
  const auto path = std::filesystem::temp_directory_path() / "compglm_roundtrip.csv";
  write_abundance_csv(path, t);
  const AbundanceTable back = load_abundance_csv(path);
  std::filesystem::remove(path);
  CHECK(back.w == t.w);
  CHECK(back.taxa == t.taxa);
  CHECK(back.samples == t.samples);
}

TEST_CASE("prevalence filtering") {
  MatrixXd w = MatrixXd::Ones(10, 4);
  w.col(1).setZero();
  w(0, 1) = 1.0;                  // positive in 1 of 10
  w.col(2).tail(8).setZero();     // positive in 2 of 10
  const AbundanceTable t = make_table(w);
  CHECK(filter_prevalence(t, 0.0).w == t.w);
  const AbundanceTable f = filter_prevalence(t, 0.2);
  CHECK(f.taxa == std::vector<std::string>{"t1", "t3", "t4"});
  CHECK(filter_prevalence(t, 0.25).taxa == std::vector<std::string>{"t1", "t4"});

  // Known prevalences k / 20 for taxon k.
  MatrixXd big = MatrixXd::Zero(20, 20);
  for (Index k = 0; k < 20; ++k) big.col(k).head(k + 1).setOnes();
  const AbundanceTable g = filter_prevalence(make_table(big), 0.2);
  REQUIRE(g.p() == 17);
  CHECK(g.taxa.front() == "t4");

  MatrixXd sparse = MatrixXd::Zero(10, 2);
  sparse(0, 0) = sparse(1, 1) = 1.0;
  CHECK_THROWS_AS(filter_prevalence(make_table(sparse), 0.5), ValidationError);
  CHECK_THROWS_AS(filter_prevalence(t, 1.5), DomainError);
}

TEST_CASE("zero replacement") {
  MatrixXd w(2, 3);
  w << 0.004, 0.0, 1.0, 0.5, 0.2, 0.0;
  const AbundanceTable t = make_table(w);
  const AbundanceTable r = replace_zeros(t);
  CHECK(r.w(0, 1) == 0.002);
  CHECK(r.w(1, 2) == 0.002);
  CHECK(r.w(0, 0) == 0.004);
  CHECK(replace_zeros(r).w == r.w);

  const AbundanceTable per = replace_zeros(t, ZeroReplacement::kPerTaxonMinimum);
  CHECK(per.w(0, 1) == 0.1);
  CHECK(per.w(1, 2) == 0.5);

  const AbundanceTable none = make_table(MatrixXd::Constant(3, 3, 2.0));
  CHECK(replace_zeros(none).w == none.w);
}

TEST_CASE("log-composition") {
  const MatrixXd z = to_log_composition(MatrixXd::Ones(1, 4));
  CHECK((z.array() - std::log(0.25)).abs().maxCoeff() <= 1e-15);

  std::mt19937_64 rng(53);
  const MatrixXd w = testing::random_matrix(8, 6, rng).array().exp();
  const MatrixXd zw = to_log_composition(w);
  for (Index i = 0; i < 8; ++i) CHECK(zw.row(i).array().exp().sum() == doctest::Approx(1.0).epsilon(1e-14));
  MatrixXd scaled = w;
  scaled.row(3) *= 10.0;
  CHECK((to_log_composition(scaled) - zw).lpNorm<Eigen::Infinity>() <= 1e-13);

  MatrixXd bad = w;
  bad(2, 2) = 0.0;
  const std::string msg = error_message([&] { to_log_composition(bad); });
  CHECK(msg.find("replace_zeros") != std::string::npos);
  CHECK_THROWS_AS(to_log_composition(bad), DomainError);
}

TEST_CASE("simulation coefficients and groups") {
  const VectorXd beta = simulation_beta(50);
  VectorXd head(16);
  head << 0.45, -0.4, 0.45, 0, -0.5, 0, 0, 0, 0, 0, -0.6, 0, 0.3, 0, 0, 0.3;
  CHECK(beta.head(16) == head);
  CHECK(beta.tail(34).isZero(0.0));

  const GroupConstraints g = simulation_groups(50);
  REQUIRE(g.groups.size() == 8);
  CHECK(g.groups.back().front() == 40);
  CHECK(g.groups.back().back() == 49);
  for (const auto& grp : g.groups) {
    double s = 0.0;
    for (Index j : grp) s += beta[j];
    CHECK(std::abs(s) <= 1e-15);
  }
  CHECK(misspecified_groups(50).groups.size() == 5);
  CHECK_THROWS_AS(simulation_groups(40), ValidationError);
}

TEST_CASE("simulated datasets have the exact class split") {
  for (std::uint64_t seed = 1; seed <= 200; ++seed) {
    SimulationConfig sc;
    sc.n = 500;
    sc.seed = seed;
    const SimulatedData sim = simulate_dataset(sc);
    CHECK(sim.dataset.y.sum() == 200.0);
    CHECK(sim.dataset.n() == 500);
    CHECK(sim.constraints.rank() == 8);
    CHECK(sim.constraints.residual(sim.beta_true).lpNorm<Eigen::Infinity>() <= 1e-14);
  }
}

TEST_CASE("simulation validation") {
  SimulationConfig sc;
  sc.n = 501;
  CHECK_THROWS_AS(simulate_dataset(sc), ValidationError);
  sc = {};
  sc.p = 30;
  CHECK_THROWS_AS(simulate_dataset(sc), ValidationError);
  sc = {};
  sc.zeta = 1.0;
  CHECK_THROWS_AS(simulate_dataset(sc), ValidationError);
  sc = {};
  sc.beta_true = VectorXd::Zero(10);
  CHECK_THROWS_AS(simulate_dataset(sc), ValidationError);
}

TEST_CASE("unreachable class quota raises a simulation error") {
  SimulationConfig sc;
  sc.n = 5;
  sc.intercept_true = -60.0;
  sc.beta_true = VectorXd::Zero(50);
  CHECK_THROWS_AS(simulate_dataset(sc), SimulationError);
}

TEST_CASE("log-scale covariance of the abundances") {
  SimulationConfig sc;
  sc.n = 10000;
  sc.p = 41;
  sc.seed = 7;
  sc.beta_true = VectorXd::Zero(41);
  const SimulatedData sim = simulate_dataset(sc);
  const MatrixXd logw = sim.w.leftCols(10).array().log();
  const MatrixXd centred = logw.rowwise() - logw.colwise().mean();
  const MatrixXd cov = centred.transpose() * centred / static_cast<double>(sc.n - 1);
  for (Index i = 0; i < 10; ++i)
    for (Index j = 0; j < 10; ++j)
      CHECK(std::abs(cov(i, j) - std::pow(0.2, std::abs(static_cast<double>(i - j)))) <= 0.05);
  CHECK(logw.col(0).mean() == doctest::Approx(41.0 / 2.0).epsilon(0.01));
  CHECK(logw.col(7).mean() == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("simulation is deterministic") {
  SimulationConfig sc;
  sc.n = 100;
  sc.seed = 99;
  const SimulatedData a = simulate_dataset(sc);
  const SimulatedData b = simulate_dataset(sc);
  CHECK(a.w == b.w);
  CHECK(a.dataset.y == b.dataset.y);
  CHECK(a.dataset.z == b.dataset.z);
  CHECK(a.subjects_drawn == b.subjects_drawn);
  sc.seed = 100;
  CHECK(simulate_dataset(sc).w != a.w);
}
