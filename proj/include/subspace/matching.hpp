#pragma once

#include <Eigen/Dense>
#include <list>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "subspace/learning.hpp"
#include "subspace/linalg.hpp"
#include "subspace/projection.hpp"
#include "subspace/types.hpp"

namespace subspace {

/// Everything about a geometry pair that can be precomputed once: the
/// downsampling operator, its least-squares reverse, and the ambiguity
/// constraint subspace (the nullspace of P).
struct CorrectionModel {
  ProjectionMatrix projection;
  Eigen::MatrixXd reverse;          // P_R, d_h x d_l
  OrthonormalBasis ambiguity_basis; // B_c, d_h x (d_h - rank P)
};

inline CorrectionModel prepare_correction_model(const ProjectionMatrix& p) {
  const Eigen::Index rows = p.entries.rows();
  const Eigen::Index cols = p.entries.cols();
  if (rows > cols) {
    throw DimensionError("prepare_correction_model: P has more rows than columns");
  }
  CorrectionModel cm;
  cm.projection = p;

  // One full SVD serves both the rank gate and the nullspace extraction.
  Eigen::BDCSVD<Eigen::MatrixXd> svd(p.entries, Eigen::ComputeFullV);
  const Eigen::VectorXd& sv = svd.singularValues();
  const double tol = rank_tolerance(rows, cols, sv(0));
  if (sv(sv.size() - 1) <= tol) {
    throw DegeneracyError("prepare_correction_model: P is rank-deficient at tolerance");
  }
  cm.ambiguity_basis.columns = svd.matrixV().rightCols(cols - rows);

  const Eigen::MatrixXd gram = p.entries * p.entries.transpose();
  Eigen::LLT<Eigen::MatrixXd> llt(gram);
  if (llt.info() != Eigen::Success) {
    throw DegeneracyError("prepare_correction_model: P P^T is not positive definite");
  }
  cm.reverse = llt.solve(p.entries).transpose();
  return cm;
}

/// Outcome of matching a low-resolution subspace against a high-resolution
/// reference. spectrum holds the principal correlations (similarity is the
/// first); reconstructed_basis is B*_X for the naive method and B'_X for the
/// constrained one; rotation is the constrained method's T; mode_pairs are
/// (reference mode, reconstructed mode) image vectors.
struct MatchResult {
  double similarity = 0.0;
  Eigen::VectorXd spectrum;
  OrthonormalBasis reconstructed_basis;
  Eigen::MatrixXd rotation;
  std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>> mode_pairs;
  MatchMethod method = MatchMethod::naive;
};

struct MatchOptions {
  /// Downgrade the D >= d_l degeneracy error to a warning. When the joint
  /// basis can fill the ambient space, sigma_1 = 1 for any reference and the
  /// score is vacuous.
  bool allow_degenerate = false;
  /// Skip the reconstructed basis, rotation and mode pairs; similarity and
  /// spectrum only. Bulk scoring (similarity matrices, sweeps) uses this.
  bool score_only = false;
};

/// Naive reconstruction: orthonormalized pseudo-inverse re-projection of the
/// low-resolution basis into the high-resolution image space.
inline OrthonormalBasis naive_reconstruct(const OrthonormalBasis& basis_low,
                                          const CorrectionModel& cm) {
  if (basis_low.ambient_dim() != cm.projection.low_dim()) {
    throw DimensionError("naive_reconstruct: basis ambient dim " +
                         std::to_string(basis_low.ambient_dim()) +
                         " does not match projection d_l " +
                         std::to_string(cm.projection.low_dim()));
  }
  return orthonormalize(cm.reverse * basis_low.columns);
}

/// Constrained reconstruction and scoring (the proposed method): rotate the
/// naive reconstruction within the span of the joint basis [B*_X | B_c] so
/// that it best aligns with the reference basis. The optimal rotation is the
/// leading right singular vectors of B_Y^T B_Xc.
///
/// B*_X lies in range(P^T) and B_c spans null(P) = range(P^T)-perp, so the
/// concatenation [B*_X | B_c] is already orthonormal to roundoff and serves
/// as B_Xc directly; it is never materialized as one matrix.
inline MatchResult constrained_reconstruct(const OrthonormalBasis& basis_low,
                                           const OrthonormalBasis& basis_high,
                                           const CorrectionModel& cm,
                                           const MatchOptions& options = {}) {
  const Eigen::Index d_low = cm.projection.low_dim();
  const Eigen::Index d_high = cm.projection.high_dim();
  const Eigen::Index dim = basis_low.rank();
  if (basis_high.ambient_dim() != d_high) {
    throw DimensionError("constrained_reconstruct: reference ambient dim " +
                         std::to_string(basis_high.ambient_dim()) +
                         " does not match projection d_h " + std::to_string(d_high));
  }
  if (dim >= d_low && cm.ambiguity_basis.rank() > 0) {
    const std::string msg =
        "constrained match is vacuous: D = " + std::to_string(dim) +
        " >= d_l = " + std::to_string(d_low) +
        " lets the joint basis reach any reference (sigma_1 = 1)";
    if (!options.allow_degenerate) throw DegeneracyError(msg);
    warn(msg);
  }

  const OrthonormalBasis naive_basis = naive_reconstruct(basis_low, cm);
  const OrthonormalBasis& ambiguity = cm.ambiguity_basis;
  const Eigen::Index joint_rank = naive_basis.rank() + ambiguity.rank();

  // B_Y^T B_Xc, with B_Xc = [B*_X | B_c].
  Eigen::MatrixXd cross(basis_high.rank(), joint_rank);
  cross.leftCols(naive_basis.rank()).noalias() =
      basis_high.columns.transpose() * naive_basis.columns;
  if (ambiguity.rank() > 0) {
    cross.rightCols(ambiguity.rank()).noalias() =
        basis_high.columns.transpose() * ambiguity.columns;
  }

  const unsigned svd_flags =
      options.score_only ? 0u : static_cast<unsigned>(Eigen::ComputeThinU | Eigen::ComputeThinV);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(cross, svd_flags);
  const Eigen::Index pairs = std::min<Eigen::Index>(dim, svd.singularValues().size());

  MatchResult result;
  result.method = MatchMethod::constrained;
  result.spectrum = svd.singularValues().head(pairs);
  result.similarity = result.spectrum(0);
  if (options.score_only) {
    return result;
  }
  result.rotation = svd.matrixV().leftCols(pairs);

  // B'_X = B_Xc T, assembled blockwise.
  Eigen::MatrixXd refined = naive_basis.columns * result.rotation.topRows(naive_basis.rank());
  if (ambiguity.rank() > 0) {
    refined.noalias() += ambiguity.columns * result.rotation.bottomRows(ambiguity.rank());
  }
  result.reconstructed_basis = OrthonormalBasis{std::move(refined)};

  result.mode_pairs.reserve(static_cast<std::size_t>(pairs));
  for (Eigen::Index i = 0; i < pairs; ++i) {
    result.mode_pairs.emplace_back(basis_high.columns * svd.matrixU().col(i),
                                   result.reconstructed_basis.columns.col(i));
  }
  return result;
}

/// Naive matching: principal correlations between the reference and the
/// orthonormalized re-projection.
inline MatchResult naive_match(const OrthonormalBasis& basis_low,
                               const OrthonormalBasis& basis_high, const CorrectionModel& cm,
                               const MatchOptions& options = {}) {
  if (basis_high.ambient_dim() != cm.projection.high_dim()) {
    throw DimensionError("naive_match: reference ambient dim does not match projection d_h");
  }
  OrthonormalBasis naive_basis = naive_reconstruct(basis_low, cm);
  const SingularAlignment alignment = paired_alignment(basis_high, naive_basis);

  MatchResult result;
  result.method = MatchMethod::naive;
  result.spectrum = alignment.values;
  result.similarity = alignment.values(0);
  if (options.score_only) {
    return result;
  }
  result.mode_pairs.reserve(static_cast<std::size_t>(alignment.values.size()));
  for (Eigen::Index i = 0; i < alignment.values.size(); ++i) {
    result.mode_pairs.emplace_back(basis_high.columns * alignment.left_directions.col(i),
                                   naive_basis.columns * alignment.right_directions.col(i));
  }
  result.reconstructed_basis = std::move(naive_basis);
  return result;
}

/// Bounded cache of correction models keyed by (src, dst, kernel). Safe for
/// concurrent lookup; entries are built under the lock, evicted LRU.
class CorrectionCache {
 public:
  explicit CorrectionCache(std::size_t capacity = 4) : capacity_(capacity) {}

  std::shared_ptr<const CorrectionModel> get_or_build(const ImageGeometry& src,
                                                      const ImageGeometry& dst,
                                                      KernelKind kernel) {
    const Key key{src.height, src.width, dst.height, dst.width, kernel};
    std::lock_guard<std::mutex> lock(mutex_);
    if (auto it = entries_.find(key); it != entries_.end()) {
      order_.splice(order_.begin(), order_, it->second.position);
      return it->second.model;
    }
    auto model = std::make_shared<const CorrectionModel>(
        prepare_correction_model(build_projection(src, dst, kernel)));
    order_.push_front(key);
    entries_[key] = Entry{model, order_.begin()};
    while (entries_.size() > capacity_) {
      entries_.erase(order_.back());
      order_.pop_back();
    }
    return model;
  }

 private:
  using Key = std::tuple<int, int, int, int, KernelKind>;
  struct Entry {
    std::shared_ptr<const CorrectionModel> model;
    std::list<Key>::iterator position;
  };
  std::size_t capacity_;
  std::mutex mutex_;
  std::list<Key> order_;
  std::map<Key, Entry> entries_;
};

/// Match a low-resolution subspace model against a high-resolution
/// reference. Builds (or fetches) the correction model for the geometry pair
/// and dispatches to the requested method. Equal geometries degenerate to a
/// direct subspace comparison.
inline MatchResult match(const SubspaceModel& model_low, const SubspaceModel& model_high,
                         KernelKind kernel, MatchMethod method, const MatchOptions& options = {},
                         CorrectionCache* cache = nullptr) {
  std::shared_ptr<const CorrectionModel> cached;
  const CorrectionModel* cm = nullptr;
  CorrectionModel local;
  if (cache != nullptr) {
    cached = cache->get_or_build(model_high.geometry, model_low.geometry, kernel);
    cm = cached.get();
  } else {
    local = prepare_correction_model(
        build_projection(model_high.geometry, model_low.geometry, kernel));
    cm = &local;
  }
  if (model_low.dim() != model_high.dim()) {
    warn("match: subspace dimensions differ (" + std::to_string(model_low.dim()) + " vs " +
         std::to_string(model_high.dim()) + "); comparing the leading " +
         std::to_string(std::min(model_low.dim(), model_high.dim())) + " directions");
  }
  if (method == MatchMethod::naive) {
    return naive_match(model_low.basis, model_high.basis, *cm, options);
  }
  return constrained_reconstruct(model_low.basis, model_high.basis, *cm, options);
}

}  // namespace subspace
