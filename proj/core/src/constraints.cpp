#include "compglm/constraints.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "compglm/errors.hpp"
#include "compglm/log.hpp"

namespace compglm {

ConstraintSet::ConstraintSet(Index p) : basis_(p, 0) {}

ConstraintSet ConstraintSet::from_orthonormal(MatrixXd basis) {
  const Index r = basis.cols();
  if (r > 0) {
    const MatrixXd gram = basis.transpose() * basis;
    const double err = (gram - MatrixXd::Identity(r, r)).cwiseAbs().maxCoeff();
    if (err > 1e-10) {
      throw ValidationError("constraint basis is not orthonormal (max |C'C - I| = " +
                            std::to_string(err) + ")");
    }
  }
  ConstraintSet cs;
  cs.basis_ = std::move(basis);
  return cs;
}

VectorXd ConstraintSet::project(const VectorXd& u) const {
  VectorXd out = u;
  project_in_place(out);
  return out;
}

void ConstraintSet::project_in_place(Eigen::Ref<VectorXd> u) const {
  if (u.size() != dim()) {
    throw ShapeError("project: vector length " + std::to_string(u.size()) +
                     " != constraint dimension " + std::to_string(dim()));
  }
  if (empty()) return;
  const VectorXd coef = basis_.transpose() * u;
  u.noalias() -= basis_ * coef;
}

VectorXd ConstraintSet::residual(const VectorXd& u) const {
  if (u.size() != dim()) throw ShapeError("residual: dimension mismatch");
  return basis_.transpose() * u;
}

MatrixXd ConstraintSet::reduce_design(const MatrixXd& z) const {
  if (z.cols() != dim()) {
    throw ShapeError("reduce_design: design has " + std::to_string(z.cols()) +
                     " columns, constraints expect " + std::to_string(dim()));
  }
  if (empty()) return z;
  MatrixXd out = z;
  out.noalias() -= (z * basis_) * basis_.transpose();
  return out;
}

MatrixXd ConstraintSet::project_columns(const MatrixXd& m) const {
  if (m.rows() != dim()) throw ShapeError("project_columns: dimension mismatch");
  if (empty()) return m;
  MatrixXd out = m;
  out.noalias() -= basis_ * (basis_.transpose() * m);
  return out;
}

MatrixXd ConstraintSet::complement_projector() const {
  return MatrixXd::Identity(dim(), dim()) - basis_ * basis_.transpose();
}

ConstraintSet orthonormalize(const MatrixXd& raw) {
  const Index p = raw.rows();
  if (raw.cols() == 0) return ConstraintSet(p);
  if (!raw.allFinite()) throw ValidationError("constraint matrix has non-finite entries");

  Eigen::JacobiSVD<MatrixXd> svd(raw);
  const double sigma_max = svd.singularValues().size() ? svd.singularValues()[0] : 0.0;
  if (sigma_max == 0.0) {
    warn("constraint matrix is zero; treating as unconstrained");
    return ConstraintSet(p);
  }
  const double tol = 1e-10 * sigma_max;

  MatrixXd basis(p, raw.cols());
  Index kept = 0;
  for (Index j = 0; j < raw.cols(); ++j) {
    VectorXd v = raw.col(j);
    for (int pass = 0; pass < 2; ++pass) {
      for (Index k = 0; k < kept; ++k) v -= basis.col(k).dot(v) * basis.col(k);
    }
    const double norm = v.norm();
    if (norm <= tol) {
      warn("constraint column " + std::to_string(j + 1) +
           " is linearly dependent on earlier columns and was dropped");
      continue;
    }
    basis.col(kept++) = v / norm;
  }
  return ConstraintSet::from_orthonormal(basis.leftCols(kept));
}

void GroupConstraints::validate(Index p) const {
  for (std::size_t g = 0; g < groups.size(); ++g) {
    if (groups[g].empty()) {
      throw ValidationError("constraint group " + std::to_string(g + 1) + " is empty");
    }
    for (Index idx : groups[g]) {
      if (idx < 0 || idx >= p) {
        throw ValidationError("constraint group " + std::to_string(g + 1) +
                              " has index " + std::to_string(idx + 1) +
                              " outside 1.." + std::to_string(p));
      }
    }
  }
}

MatrixXd GroupConstraints::raw_matrix(Index p) const {
  validate(p);
  MatrixXd raw = MatrixXd::Zero(p, static_cast<Index>(groups.size()));
  for (std::size_t g = 0; g < groups.size(); ++g) {
    for (Index idx : groups[g]) raw(idx, static_cast<Index>(g)) = 1.0;
  }
  return raw;
}

ConstraintSet build_group_constraints(const GroupConstraints& gc, Index p) {
  return orthonormalize(gc.raw_matrix(p));
}

GroupConstraints parse_groups_json(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("constraint groups JSON: ") + e.what());
  }
  if (!doc.is_array()) throw ParseError("constraint groups JSON must be a list of integer arrays");
  GroupConstraints gc;
  for (std::size_t g = 0; g < doc.size(); ++g) {
    const auto& group = doc[g];
    if (!group.is_array()) {
      throw ParseError("constraint group " + std::to_string(g + 1) + " is not an array");
    }
    std::vector<Index> members;
    for (const auto& v : group) {
      if (!v.is_number_integer()) {
        throw ParseError("constraint group " + std::to_string(g + 1) +
                         " contains a non-integer entry");
      }
      members.push_back(v.get<Index>() - 1);
    }
    gc.groups.push_back(std::move(members));
  }
  return gc;
}

GroupConstraints load_groups_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open constraint file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_groups_json(ss.str());
}

std::string groups_to_json(const GroupConstraints& gc) {
  nlohmann::json doc = nlohmann::json::array();
  for (const auto& group : gc.groups) {
    nlohmann::json g = nlohmann::json::array();
    for (Index idx : group) g.push_back(idx + 1);
    doc.push_back(std::move(g));
  }
  return doc.dump();
}

GroupConstraints sum_to_zero_groups(Index p) {
  GroupConstraints gc;
  gc.groups.emplace_back(static_cast<std::size_t>(p));
  std::iota(gc.groups[0].begin(), gc.groups[0].end(), Index{0});
  return gc;
}

}  // namespace compglm
