#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "subspace/linalg.hpp"
#include "subspace/types.hpp"

namespace subspace {

/// A set of rasterized greyscale images of one class under one acquisition
/// condition. Samples are column vectors of length geometry.pixel_count().
struct ImageSet {
  ImageGeometry geometry;
  std::vector<Eigen::VectorXd> samples;
  std::string class_label;
  std::string condition_label;
};

inline void validate_image_set(const ImageSet& set) {
  validate_geometry(set.geometry);
  if (set.samples.size() < 2) {
    throw UsageError("image set '" + set.class_label + "' needs at least 2 samples, has " +
                     std::to_string(set.samples.size()));
  }
  for (const auto& s : set.samples) {
    if (s.size() != set.geometry.pixel_count()) {
      throw DimensionError("image set '" + set.class_label + "': sample length " +
                           std::to_string(s.size()) + " does not match geometry " +
                           format_geometry(set.geometry));
    }
  }
}

/// Mean plus D-dimensional orthonormal basis of an image set's variation.
struct SubspaceModel {
  ImageGeometry geometry;
  Eigen::VectorXd mean;
  OrthonormalBasis basis;
  double energy_captured = 0.0;
  std::string class_label;
  std::string condition_label;

  Eigen::Index dim() const { return basis.rank(); }
};

namespace detail {

// Thin SVD of the centered data matrix scaled by 1/sqrt(N-1); left singular
// vectors are the eigenvectors of the sample covariance.
struct CenteredSpectrum {
  Eigen::VectorXd mean;
  Eigen::MatrixXd directions;      // d x r, orthonormal
  Eigen::VectorXd singular_values; // covariance eigenvalues are these squared
};

inline CenteredSpectrum centered_spectrum(const ImageSet& set) {
  validate_image_set(set);
  const auto n = static_cast<Eigen::Index>(set.samples.size());
  const Eigen::Index d = set.geometry.pixel_count();
  CenteredSpectrum out;
  out.mean = Eigen::VectorXd::Zero(d);
  for (const auto& s : set.samples) out.mean += s;
  out.mean /= static_cast<double>(n);

  Eigen::MatrixXd centered(d, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    centered.col(i) = set.samples[static_cast<std::size_t>(i)] - out.mean;
  }
  centered /= std::sqrt(static_cast<double>(n - 1));

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinU);
  out.directions = svd.matrixU();
  out.singular_values = svd.singularValues();
  return out;
}

}  // namespace detail

/// Estimate the D-dimensional subspace model of an image set: sample mean
/// plus the top-D covariance eigenvectors, computed through the thin SVD of
/// the centered data matrix (the covariance itself is never materialized).
inline SubspaceModel estimate_subspace(const ImageSet& set, int dim) {
  const auto n = static_cast<Eigen::Index>(set.samples.size());
  const Eigen::Index d = set.geometry.pixel_count();
  if (dim < 1) {
    throw UsageError("estimate_subspace: D must be positive");
  }
  if (dim > std::min<Eigen::Index>(n - 1, d)) {
    throw UsageError("estimate_subspace: D = " + std::to_string(dim) +
                     " exceeds min(N-1, d) = " +
                     std::to_string(std::min<Eigen::Index>(n - 1, d)));
  }
  const auto spectrum = detail::centered_spectrum(set);
  const Eigen::VectorXd& sv = spectrum.singular_values;
  const double sigma_max = sv(0);
  if (sigma_max <= 1e-12 * std::max(1.0, spectrum.mean.cwiseAbs().maxCoeff())) {
    throw DegeneracyError("estimate_subspace: zero-variance data (all samples identical)");
  }
  if (dim < sv.size() && std::abs(sv(dim - 1) - sv(dim)) <= 1e-12 * sigma_max) {
    warn("estimate_subspace: singular values " + std::to_string(dim) + " and " +
         std::to_string(dim + 1) + " coincide; the model span is not unique (class '" +
         set.class_label + "')");
  }

  SubspaceModel model;
  model.geometry = set.geometry;
  model.mean = spectrum.mean;
  model.basis.columns = spectrum.directions.leftCols(dim);
  model.class_label = set.class_label;
  model.condition_label = set.condition_label;

  const double total = sv.squaredNorm();
  model.energy_captured = sv.head(dim).squaredNorm() / total;
  return model;
}

/// Smallest D whose captured energy fraction reaches `energy_fraction`.
inline int choose_dimension(const ImageSet& set, double energy_fraction) {
  if (!(energy_fraction > 0.0) || energy_fraction > 1.0) {
    throw UsageError("choose_dimension: energy fraction must lie in (0, 1]");
  }
  const auto spectrum = detail::centered_spectrum(set);
  const Eigen::VectorXd& sv = spectrum.singular_values;
  if (sv(0) <= 1e-12 * std::max(1.0, spectrum.mean.cwiseAbs().maxCoeff())) {
    throw DegeneracyError("choose_dimension: zero-variance data");
  }
  const double total = sv.squaredNorm();
  double cumulative = 0.0;
  for (Eigen::Index i = 0; i < sv.size(); ++i) {
    cumulative += sv(i) * sv(i);
    if (cumulative >= energy_fraction * total - 1e-12 * total) {
      return static_cast<int>(i) + 1;
    }
  }
  return static_cast<int>(sv.size());
}

}  // namespace subspace
