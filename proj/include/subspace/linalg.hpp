#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "subspace/projection.hpp"
#include "subspace/types.hpp"

namespace subspace {

/// d x k matrix with orthonormal columns. rank() may be zero (empty span),
/// which shows up as the nullspace of a square full-rank operator.
struct OrthonormalBasis {
  Eigen::MatrixXd columns;

  Eigen::Index ambient_dim() const { return columns.rows(); }
  Eigen::Index rank() const { return columns.cols(); }

  bool is_orthonormal(double tol = 1e-10) const {
    if (rank() == 0) return true;
    const Eigen::MatrixXd gram = columns.transpose() * columns;
    return (gram - Eigen::MatrixXd::Identity(rank(), rank())).cwiseAbs().maxCoeff() <= tol;
  }
};

/// SVD of B_a^T B_b between two orthonormal bases: values are the cosines of
/// the principal angles, directions are coefficient vectors in each basis.
struct SingularAlignment {
  Eigen::MatrixXd left_directions;   // u_1 .. u_r as columns (k_a x r)
  Eigen::MatrixXd right_directions;  // v_1 .. v_r as columns (k_b x r)
  Eigen::VectorXd values;            // nonincreasing, in [0, 1] for orthonormal inputs
};

namespace detail {

// Householder QR over the columns of `input`, in original column order.
// Columns whose residual against the already-accepted span is <= tol are
// skipped. Returns the accepted reflectors; Q assembly is the caller's job.
struct HouseholderFactors {
  Eigen::MatrixXd reflectors;  // column r holds v_r in rows r..d-1
  std::vector<double> betas;
  std::vector<double> diag_signs;  // sign of R(r, r) produced by reflector r
  Eigen::Index rank = 0;
};

inline HouseholderFactors householder_factor(const Eigen::MatrixXd& input, double tol) {
  const Eigen::Index d = input.rows();
  const Eigen::Index k = input.cols();
  HouseholderFactors f;
  f.reflectors = Eigen::MatrixXd::Zero(d, std::min(d, k));
  Eigen::VectorXd x(d);
  for (Eigen::Index c = 0; c < k && f.rank < d; ++c) {
    x = input.col(c);
    for (Eigen::Index j = 0; j < f.rank; ++j) {
      const auto v = f.reflectors.col(j).tail(d - j);
      const double s = f.betas[static_cast<std::size_t>(j)] * v.dot(x.tail(d - j));
      x.tail(d - j) -= s * v;
    }
    const Eigen::Index r = f.rank;
    const double residual = x.tail(d - r).norm();
    if (residual <= tol) continue;  // dependent on accepted columns
    Eigen::VectorXd v = x.tail(d - r);
    const double alpha = v(0) >= 0.0 ? -residual : residual;
    v(0) -= alpha;
    const double vnorm2 = v.squaredNorm();
    f.reflectors.col(r).tail(d - r) = v;
    f.betas.push_back(2.0 / vnorm2);
    f.diag_signs.push_back(alpha >= 0.0 ? 1.0 : -1.0);
    ++f.rank;
  }
  return f;
}

// Q's first `rank` columns, with signs fixed so the triangular factor has a
// nonnegative diagonal (already-orthonormal input reproduces itself).
inline Eigen::MatrixXd assemble_q(const HouseholderFactors& f, Eigen::Index d) {
  Eigen::MatrixXd q = Eigen::MatrixXd::Identity(d, f.rank);
  for (Eigen::Index j = f.rank - 1; j >= 0; --j) {
    const auto v = f.reflectors.col(j).tail(d - j);
    const Eigen::RowVectorXd proj =
        f.betas[static_cast<std::size_t>(j)] * (v.transpose() * q.bottomRows(d - j));
    q.bottomRows(d - j).noalias() -= v * proj;
  }
  for (Eigen::Index j = 0; j < f.rank; ++j) {
    if (f.diag_signs[static_cast<std::size_t>(j)] < 0.0) q.col(j) = -q.col(j);
  }
  return q;
}

}  // namespace detail

/// Orthonormal basis of the column span, via Householder QR in original
/// column order. Columns whose residual after projection onto previously
/// accepted columns is at most `tol` are dropped, so the output rank can be
/// below the input column count. Negative tol selects the default
/// 1e-10 * (largest input column norm).
inline OrthonormalBasis orthonormalize(const Eigen::MatrixXd& input, double tol = -1.0) {
  if (input.cols() < 1) {
    throw UsageError("orthonormalize: need at least one column");
  }
  double max_norm = 0.0;
  for (Eigen::Index c = 0; c < input.cols(); ++c) {
    max_norm = std::max(max_norm, input.col(c).norm());
  }
  if (max_norm == 0.0) {
    throw DegeneracyError("orthonormalize: all columns are zero (empty span)");
  }
  if (tol < 0.0) tol = 1e-10 * max_norm;

  const auto factors = detail::householder_factor(input, tol);
  if (factors.rank == 0) {
    throw DegeneracyError("orthonormalize: every column fell below tolerance");
  }
  return OrthonormalBasis{detail::assemble_q(factors, input.rows())};
}

/// Least-squares reverse projection P_R = P^T (P P^T)^{-1}, computed with a
/// Cholesky solve of the SPD Gram matrix. P P_R = I for full-row-rank P and
/// P_R y is the minimum-norm preimage of y.
inline Eigen::MatrixXd reverse_projection(const ProjectionMatrix& p) {
  const Eigen::Index rows = p.entries.rows();
  const Eigen::Index cols = p.entries.cols();
  if (rows > cols) {
    throw DimensionError("reverse_projection: P has more rows than columns");
  }
  Eigen::BDCSVD<Eigen::MatrixXd> values_only(p.entries);
  const Eigen::VectorXd& sv = values_only.singularValues();
  const double tol = rank_tolerance(rows, cols, sv(0));
  if (sv(sv.size() - 1) <= tol) {
    throw DegeneracyError("reverse_projection: P is rank-deficient at tolerance");
  }
  const Eigen::MatrixXd gram = p.entries * p.entries.transpose();
  Eigen::LLT<Eigen::MatrixXd> llt(gram);
  if (llt.info() != Eigen::Success) {
    throw DegeneracyError("reverse_projection: P P^T is not positive definite");
  }
  return llt.solve(p.entries).transpose();
}

/// Orthonormal basis of the nullspace of P, from the full SVD of P (right
/// singular vectors past the numerical rank). A square full-rank P yields an
/// empty basis.
inline OrthonormalBasis nullspace_basis(const ProjectionMatrix& p) {
  const Eigen::Index cols = p.entries.cols();
  // BDCSVD: the full V of a wide operator is far too slow under one-sided
  // Jacobi, whose rotations sweep all d_h columns.
  Eigen::BDCSVD<Eigen::MatrixXd> svd(p.entries, Eigen::ComputeFullV);
  const Eigen::VectorXd& sv = svd.singularValues();
  const double sigma_max = sv.size() > 0 ? sv(0) : 0.0;
  const double tol = rank_tolerance(p.entries.rows(), cols, sigma_max);
  Eigen::Index rank = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i) {
    if (sv(i) > tol) ++rank;
  }
  OrthonormalBasis basis;
  basis.columns = svd.matrixV().rightCols(cols - rank);
  return basis;
}

/// Principal correlations between two orthonormal bases: the SVD of
/// B_a^T B_b. The leading value is the similarity score used throughout.
inline SingularAlignment paired_alignment(const OrthonormalBasis& basis_a,
                                          const OrthonormalBasis& basis_b) {
  if (basis_a.ambient_dim() != basis_b.ambient_dim()) {
    throw DimensionError("paired_alignment: ambient dimensions differ (" +
                         std::to_string(basis_a.ambient_dim()) + " vs " +
                         std::to_string(basis_b.ambient_dim()) + ")");
  }
  SingularAlignment out;
  if (basis_a.rank() == 0 || basis_b.rank() == 0) {
    out.left_directions.resize(basis_a.rank(), 0);
    out.right_directions.resize(basis_b.rank(), 0);
    out.values.resize(0);
    return out;
  }
  const Eigen::MatrixXd cross = basis_a.columns.transpose() * basis_b.columns;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(cross, Eigen::ComputeThinU | Eigen::ComputeThinV);
  out.left_directions = svd.matrixU();
  out.right_directions = svd.matrixV();
  out.values = svd.singularValues();
  return out;
}

/// Principal angles (radians, nondecreasing) between two spans. Small angles
/// go through the sine route (singular values of (I - A A^T) B) because
/// acos of a near-1 cosine loses half the significant digits.
inline std::vector<double> principal_angles(const OrthonormalBasis& basis_a,
                                            const OrthonormalBasis& basis_b) {
  const SingularAlignment a = paired_alignment(basis_a, basis_b);
  const Eigen::Index count = a.values.size();
  std::vector<double> angles(static_cast<std::size_t>(count));
  if (count == 0) return angles;
  const Eigen::MatrixXd residual =
      basis_b.columns - basis_a.columns * (basis_a.columns.transpose() * basis_b.columns);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(residual);
  const Eigen::VectorXd& sines = svd.singularValues();  // descending
  for (Eigen::Index i = 0; i < count; ++i) {
    const double cosine = std::clamp(a.values(i), -1.0, 1.0);
    if (cosine * cosine >= 0.5) {
      const double sine = std::clamp(sines(sines.size() - 1 - i), 0.0, 1.0);
      angles[static_cast<std::size_t>(i)] = std::asin(sine);
    } else {
      angles[static_cast<std::size_t>(i)] = std::acos(cosine);
    }
  }
  return angles;
}

/// Largest principal angle; the usual span-equality measure in tests.
inline double max_principal_angle(const OrthonormalBasis& basis_a,
                                  const OrthonormalBasis& basis_b) {
  const auto angles = principal_angles(basis_a, basis_b);
  double worst = 0.0;
  for (double a : angles) worst = std::max(worst, a);
  return worst;
}

}  // namespace subspace
