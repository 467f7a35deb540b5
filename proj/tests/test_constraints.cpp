#include <doctest.h>

#include <cmath>

#include "compglm/constraints.hpp"
#include "compglm/errors.hpp"
#include "support.hpp"

using namespace compglm;
using testing::random_matrix;
using testing::random_vector;

TEST_CASE("orthonormalize the all-ones vector") {
  const ConstraintSet cs = orthonormalize(MatrixXd::Ones(5, 1));
  CHECK(cs.rank() == 1);
  CHECK((cs.basis().cwiseAbs() - MatrixXd::Constant(5, 1, 1.0 / std::sqrt(5.0))).norm() <= 1e-14);
}

TEST_CASE("orthonormal input is returned up to sign") {
  std::mt19937_64 rng(1);
  const MatrixXd q = random_matrix(8, 3, rng).householderQr().householderQ() * MatrixXd::Identity(8, 3);
  const ConstraintSet cs = orthonormalize(q);
  CHECK(cs.rank() == 3);
  CHECK((cs.basis().transpose() * cs.basis() - MatrixXd::Identity(3, 3)).norm() <= 1e-12);
  for (Index k = 0; k < 3; ++k) {
    CHECK(std::abs(std::abs(cs.basis().col(k).dot(q.col(k))) - 1.0) <= 1e-12);
  }
}

TEST_CASE("duplicated column is dropped with a warning") {
  testing::WarningSink sink;
  MatrixXd raw(4, 3);
  raw << 1, 0, 1, 1, 0, 1, 0, 1, 0, 0, 1, 0;
  const ConstraintSet cs = orthonormalize(raw);
  CHECK(cs.rank() == 2);
  CHECK(sink.messages.size() == 1);
}

TEST_CASE("project examples and properties") {
  const ConstraintSet ones = build_group_constraints(sum_to_zero_groups(3), 3);
  VectorXd u(3);
  u << 1, 2, 3;
  const VectorXd w = ones.project(u);
  CHECK(w[0] == doctest::Approx(-1.0));
  CHECK(std::abs(w[1]) <= 1e-15);
  CHECK(w[2] == doctest::Approx(1.0));

  const ConstraintSet none(3);
  CHECK(none.project(u) == u);
  CHECK(none.empty());

  std::mt19937_64 rng(2);
  const ConstraintSet cs = build_group_constraints(testing::random_groups(20, 4, rng), 20);
  for (int rep = 0; rep < 50; ++rep) {
    const VectorXd a = random_vector(20, rng), b = random_vector(20, rng);
    const VectorXd pa = cs.project(a);
    CHECK(std::abs(a.squaredNorm() - pa.squaredNorm() - (a - pa).squaredNorm()) <= 1e-10);
    CHECK((cs.project(pa) - pa).lpNorm<Eigen::Infinity>() <= 1e-12);
    CHECK(cs.residual(pa).lpNorm<Eigen::Infinity>() <= 1e-10);
    CHECK(std::abs(pa.dot(b) - a.dot(cs.project(b))) <= 1e-10);
  }
  CHECK_THROWS_AS(cs.project(VectorXd::Zero(3)), ShapeError);
}

TEST_CASE("projection subtracts group means for disjoint groups") {
  GroupConstraints gc;
  gc.groups = {{0, 1, 2}, {3, 4}, {5, 6, 7, 8}};
  const ConstraintSet cs = build_group_constraints(gc, 10);
  std::mt19937_64 rng(3);
  const VectorXd u = random_vector(10, rng);
  const VectorXd w = cs.project(u);
  for (const auto& g : gc.groups) {
    double m = 0.0;
    for (Index j : g) m += u[j];
    m /= static_cast<double>(g.size());
    for (Index j : g) CHECK(w[j] == doctest::Approx(u[j] - m).epsilon(1e-12));
  }
  CHECK(w[9] == u[9]);
}

TEST_CASE("reduce_design") {
  std::mt19937_64 rng(4);
  const MatrixXd z = random_matrix(12, 6, rng);
  CHECK(ConstraintSet(6).reduce_design(z) == z);

  const ConstraintSet ones = build_group_constraints(sum_to_zero_groups(6), 6);
  const MatrixXd centred = ones.reduce_design(z);
  for (Index i = 0; i < 12; ++i) {
    CHECK(std::abs(centred.row(i).sum()) <= 1e-12);
    CHECK((centred.row(i).array() - (z.row(i).array() - z.row(i).mean())).abs().maxCoeff() <= 1e-12);
  }

  const ConstraintSet cs = build_group_constraints(testing::random_groups(6, 2, rng), 6);
  const MatrixXd zt = cs.reduce_design(z);
  for (int rep = 0; rep < 20; ++rep) {
    const VectorXd beta = cs.project(random_vector(6, rng));
    CHECK((zt * beta - z * beta).lpNorm<Eigen::Infinity>() <= 1e-10);
  }
  CHECK_THROWS_AS(cs.reduce_design(MatrixXd::Zero(3, 5)), ShapeError);
}

TEST_CASE("group constraints") {
  GroupConstraints two;
  two.groups = {{0, 1}, {2, 3}};
  const ConstraintSet cs = build_group_constraints(two, 4);
  MatrixXd expected(4, 2);
  const double s = 1.0 / std::sqrt(2.0);
  expected << s, 0, s, 0, 0, s, 0, s;
  CHECK((cs.basis().cwiseAbs() - expected).norm() <= 1e-14);

  GroupConstraints empty;
  empty.groups = {{0, 1}, {}};
  CHECK_THROWS_AS(build_group_constraints(empty, 4), ValidationError);

  GroupConstraints out_of_range;
  out_of_range.groups = {{0, 7}};
  CHECK_THROWS_AS(build_group_constraints(out_of_range, 4), ValidationError);

  const ConstraintSet all = build_group_constraints(sum_to_zero_groups(7), 7);
  CHECK(all.rank() == 1);
  CHECK((all.basis().cwiseAbs().array() - 1.0 / std::sqrt(7.0)).abs().maxCoeff() <= 1e-14);
}

TEST_CASE("overlapping groups are allowed") {
  GroupConstraints gc;
  gc.groups = {{0, 1, 2}, {2, 3}, {0, 1, 3}};
  const ConstraintSet cs = build_group_constraints(gc, 5);
  CHECK(cs.rank() == 3);
  CHECK((cs.basis().transpose() * cs.basis() - MatrixXd::Identity(3, 3)).norm() <= 1e-12);
}

TEST_CASE("groups JSON round trip and errors") {
  const GroupConstraints gc = parse_groups_json("[[1,2,3],[4,5]]");
  REQUIRE(gc.groups.size() == 2);
  CHECK(gc.groups[0] == std::vector<Index>{0, 1, 2});
  CHECK(gc.groups[1] == std::vector<Index>{3, 4});
  CHECK(groups_to_json(gc) == "[[1,2,3],[4,5]]");
  CHECK_THROWS_AS(parse_groups_json("[[1,2"), ParseError);
  CHECK_THROWS_AS(parse_groups_json("{\"a\":1}"), ParseError);
  CHECK_THROWS_AS(parse_groups_json("[[1,\"x\"]]"), ParseError);
  CHECK_THROWS_AS(load_groups_json("/nonexistent/groups.json"), IoError);
}

TEST_CASE("complement projector matches project") {
  std::mt19937_64 rng(5);
  const ConstraintSet cs = build_group_constraints(testing::random_groups(9, 3, rng), 9);
  const MatrixXd proj = cs.complement_projector();
  const VectorXd u = random_vector(9, rng);
  CHECK((proj * u - cs.project(u)).norm() <= 1e-12);
  const MatrixXd m = random_matrix(9, 9, rng);
  CHECK((cs.project_columns(m) - proj * m).norm() <= 1e-12);
}
