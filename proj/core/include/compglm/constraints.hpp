#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace compglm {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

/// The constraint subspace S_C = { beta : C' beta = 0 } for a p x r matrix C
/// with orthonormal columns. r = 0 means unconstrained. Immutable.
///
/// The projector P_C = C C' is never formed; projections use u - C (C' u).
class ConstraintSet {
 public:
  /// Unconstrained set in dimension p.
  explicit ConstraintSet(Index p = 0);

  /// Wraps a basis that is already orthonormal (checked to 1e-10).
  static ConstraintSet from_orthonormal(MatrixXd basis);

  Index dim() const { return basis_.rows(); }
  Index rank() const { return basis_.cols(); }
  bool empty() const { return basis_.cols() == 0; }
  const MatrixXd& basis() const { return basis_; }

  /// Orthogonal projection onto S_C.
  VectorXd project(const VectorXd& u) const;
  void project_in_place(Eigen::Ref<VectorXd> u) const;

  /// C' u, the constraint residual.
  VectorXd residual(const VectorXd& u) const;

  /// Z (I - P_C): every row of z projected onto S_C.
  MatrixXd reduce_design(const MatrixXd& z) const;

  /// (I - P_C) M: every column of m projected onto S_C.
  MatrixXd project_columns(const MatrixXd& m) const;

  /// Dense I - P_C. Only for tests and small diagnostics.
  MatrixXd complement_projector() const;

 private:
  MatrixXd basis_;
};

/// Orthonormalizes the columns of `raw` (modified Gram-Schmidt with one
/// re-orthogonalization pass, column order preserved). Columns whose residual
/// falls below 1e-10 * (largest singular value of raw) are dropped with a
/// warning.
ConstraintSet orthonormalize(const MatrixXd& raw);

/// Zero-sum constraints, one per group. Indices are 0-based here; the JSON
/// representation is 1-based.
struct GroupConstraints {
  std::vector<std::vector<Index>> groups;

  void validate(Index p) const;
  /// Indicator matrix, one column per group.
  MatrixXd raw_matrix(Index p) const;
};

ConstraintSet build_group_constraints(const GroupConstraints& gc, Index p);

/// JSON: a list of integer arrays of 1-based indices, e.g. [[1,2,3],[4,5]].
GroupConstraints parse_groups_json(const std::string& text);
GroupConstraints load_groups_json(const std::filesystem::path& path);
std::string groups_to_json(const GroupConstraints& gc);

/// The single all-ones constraint (sum of coefficients is zero).
GroupConstraints sum_to_zero_groups(Index p);

}  // namespace compglm
