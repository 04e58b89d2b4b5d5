#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "subspace/types.hpp"

namespace subspace {

/// Dense linear downsampling operator mapping a src image (rasterized
/// row-major) to a dst image. entries has shape d_dst x d_src.
struct ProjectionMatrix {
  Eigen::MatrixXd entries;
  ImageGeometry src;
  ImageGeometry dst;
  KernelKind kernel = KernelKind::bilinear;

  Eigen::Index low_dim() const { return entries.rows(); }
  Eigen::Index high_dim() const { return entries.cols(); }
};

/// Interpolation weight at a source-sample offset from the mapped output
/// coordinate. Bilinear is the triangle kernel; bicubic is Keys' cubic
/// convolution kernel with a = -0.5, supported on |offset| < 2.
inline double kernel_weight(KernelKind kernel, double offset) {
  const double t = std::abs(offset);
  if (kernel == KernelKind::bilinear) {
    return std::max(0.0, 1.0 - t);
  }
  constexpr double a = -0.5;
  if (t < 1.0) {
    return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
  }
  if (t < 2.0) {
    return (((t - 5.0) * t + 8.0) * t - 4.0) * a;
  }
  return 0.0;
}

/// 1-D resampling matrix of shape dst_len x src_len. Output sample j reads
/// the source at (j + 0.5) * (src_len / dst_len) - 0.5; out-of-range taps are
/// clamped onto the edge samples and each row is renormalized to sum 1.
inline Eigen::MatrixXd resample_matrix_1d(int src_len, int dst_len, KernelKind kernel) {
  if (src_len < 1 || dst_len < 1) {
    throw UsageError("resample_matrix_1d: lengths must be positive");
  }
  if (dst_len > src_len) {
    throw UsageError("resample_matrix_1d: upsampling not supported (dst " +
                     std::to_string(dst_len) + " > src " + std::to_string(src_len) + ")");
  }
  Eigen::MatrixXd result = Eigen::MatrixXd::Zero(dst_len, src_len);
  const double scale = static_cast<double>(src_len) / static_cast<double>(dst_len);
  const int radius = kernel == KernelKind::bilinear ? 1 : 2;
  for (int j = 0; j < dst_len; ++j) {
    const double x = (j + 0.5) * scale - 0.5;
    const auto base = static_cast<long>(std::floor(x));
    for (long tap = base - radius + 1; tap <= base + radius; ++tap) {
      const double w = kernel_weight(kernel, x - static_cast<double>(tap));
      if (w == 0.0) continue;
      const long idx = std::clamp(tap, 0L, static_cast<long>(src_len) - 1);
      result(j, idx) += w;
    }
    const double row_sum = result.row(j).sum();
    result.row(j) /= row_sum;
  }
  return result;
}

/// Downsampling operator for a geometry pair, built separably as the
/// Kronecker product of per-row and per-column 1-D resampling matrices.
inline ProjectionMatrix build_projection(const ImageGeometry& src, const ImageGeometry& dst,
                                         KernelKind kernel) {
  validate_geometry(src);
  validate_geometry(dst);
  if (dst.height > src.height || dst.width > src.width) {
    throw UsageError("build_projection: dst " + format_geometry(dst) +
                     " exceeds src " + format_geometry(src) + " (upsampling request)");
  }
  const double cross = static_cast<double>(src.height) * dst.width -
                       static_cast<double>(dst.height) * src.width;
  if (std::abs(cross) > 1e-9 * static_cast<double>(src.width) * dst.width) {
    throw UsageError("build_projection: aspect ratio mismatch between src " +
                     format_geometry(src) + " and dst " + format_geometry(dst));
  }

  const Eigen::MatrixXd row_op = resample_matrix_1d(src.height, dst.height, kernel);
  const Eigen::MatrixXd col_op = resample_matrix_1d(src.width, dst.width, kernel);

  ProjectionMatrix p;
  p.src = src;
  p.dst = dst;
  p.kernel = kernel;
  p.entries.resize(dst.pixel_count(), src.pixel_count());
  // Row-major rasterization: P[(r'W' + c'), (rW + c)] = row_op(r', r) * col_op(c', c).
  for (int rd = 0; rd < dst.height; ++rd) {
    for (int rs = 0; rs < src.height; ++rs) {
      p.entries.block(static_cast<Eigen::Index>(rd) * dst.width,
                      static_cast<Eigen::Index>(rs) * src.width, dst.width, src.width) =
          row_op(rd, rs) * col_op;
    }
  }
  return p;
}

/// P * image. Throws on vector length mismatch.
inline Eigen::VectorXd apply_downsample(const ProjectionMatrix& p, const Eigen::VectorXd& image) {
  if (image.size() != p.high_dim()) {
    throw DimensionError("apply_downsample: image length " + std::to_string(image.size()) +
                         " does not match src pixel count " + std::to_string(p.high_dim()));
  }
  return p.entries * image;
}

/// Spec rank rule: singular values at or below max(rows, cols) * eps * sigma_max
/// are treated as zero.
inline double rank_tolerance(Eigen::Index rows, Eigen::Index cols, double sigma_max) {
  return static_cast<double>(std::max(rows, cols)) *
         std::numeric_limits<double>::epsilon() * sigma_max;
}

}  // namespace subspace
