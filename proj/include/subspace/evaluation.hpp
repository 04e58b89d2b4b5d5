#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "subspace/learning.hpp"
#include "subspace/matching.hpp"
#include "subspace/parallel.hpp"
#include "subspace/projection.hpp"
#include "subspace/rng.hpp"
#include "subspace/types.hpp"

namespace subspace {

/// rho[i][j]: similarity of probe j's subspace against gallery class i's.
struct SimilarityMatrix {
  Eigen::MatrixXd values;
  std::vector<std::string> gallery_labels;
  std::vector<std::string> probe_labels;
};

/// Within/between mean confidences and their ratio for one evaluation cell.
/// separation is +infinity when the diagonal mean hits 1 (sentinel).
struct SeparationReport {
  double within_confidence = 0.0;   // e_w
  double between_confidence = 0.0;  // e_b
  double separation = 0.0;          // mu = e_b / e_w
  MatchMethod method = MatchMethod::naive;
  KernelKind kernel = KernelKind::bilinear;
  ImageGeometry low_geometry;
  ImageGeometry high_geometry;
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;
};

struct SweepConfig {
  std::vector<ImageGeometry> scales;  // low-resolution geometries
  std::vector<KernelKind> kernels;
  std::vector<MatchMethod> methods;
  std::vector<double> noise_sigmas;
  int subspace_dim = 5;
  std::uint64_t seed = 0;
  int jobs = 1;
};

struct EvalOptions {
  int jobs = 1;
  CorrectionCache* cache = nullptr;
  MatchOptions match;
};

/// Full pairwise similarity grid between gallery and probe models. Cells are
/// independent and run on the option's job count; the result is identical
/// for any job count.
inline SimilarityMatrix similarity_matrix(const std::vector<SubspaceModel>& gallery,
                                          const std::vector<SubspaceModel>& probes,
                                          KernelKind kernel, MatchMethod method,
                                          const EvalOptions& options = {}) {
  if (gallery.empty() || probes.empty()) {
    throw UsageError("similarity_matrix: empty model list");
  }
  if (gallery.size() != probes.size()) {
    throw UsageError("similarity_matrix: gallery and probe counts differ");
  }
  auto labels_of = [](const std::vector<SubspaceModel>& models) {
    std::vector<std::string> labels;
    labels.reserve(models.size());
    for (const auto& m : models) labels.push_back(m.class_label);
    return labels;
  };
  SimilarityMatrix sm;
  sm.gallery_labels = labels_of(gallery);
  sm.probe_labels = labels_of(probes);
  auto sorted_unique = [](std::vector<std::string> labels) {
    std::sort(labels.begin(), labels.end());
    if (std::adjacent_find(labels.begin(), labels.end()) != labels.end()) {
      throw UsageError("similarity_matrix: duplicate class label '" +
                       *std::adjacent_find(labels.begin(), labels.end()) + "'");
    }
    return labels;
  };
  if (sorted_unique(sm.gallery_labels) != sorted_unique(sm.probe_labels)) {
    throw UsageError("similarity_matrix: gallery and probe class-label sets differ");
  }

  const std::size_t m = gallery.size();
  CorrectionCache fallback_cache(2);
  EvalOptions opts = options;
  if (opts.cache == nullptr) opts.cache = &fallback_cache;
  MatchOptions cell_options = opts.match;
  cell_options.score_only = true;

  const std::vector<double> cells = run_indexed<double>(
      m * m, opts.jobs, [&](std::size_t flat) {
        const std::size_t row = flat / m;
        const std::size_t col = flat % m;
        return match(probes[col], gallery[row], kernel, method, cell_options, opts.cache)
            .similarity;
      });

  sm.values.resize(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m));
  for (std::size_t flat = 0; flat < cells.size(); ++flat) {
    sm.values(static_cast<Eigen::Index>(flat / m), static_cast<Eigen::Index>(flat % m)) =
        cells[flat];
  }
  return sm;
}

/// Mean confidences of correct and incorrect assignments and their ratio.
/// Requires the gallery and probe label lists to be aligned so that the
/// diagonal holds the same-class pairs.
inline SeparationReport class_separation(const SimilarityMatrix& sm) {
  const Eigen::Index m = sm.values.rows();
  if (m < 2 || sm.values.cols() != m) {
    throw UsageError("class_separation: need a square matrix with M >= 2");
  }
  if (sm.gallery_labels != sm.probe_labels) {
    throw UsageError("class_separation: gallery/probe labels are not aligned");
  }
  double diagonal_sum = 0.0;
  double off_sum = 0.0;
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) {
      if (i == j) {
        diagonal_sum += sm.values(i, j);
      } else {
        off_sum += sm.values(i, j);
      }
    }
  }
  SeparationReport report;
  report.within_confidence = 1.0 - diagonal_sum / static_cast<double>(m);
  report.between_confidence = 1.0 - off_sum / static_cast<double>(m * (m - 1));
  if (report.within_confidence <= 1e-12) {
    warn("class_separation: diagonal mean is 1 at tolerance; separation reported as infinity");
    report.separation = std::numeric_limits<double>::infinity();
  } else {
    report.separation = report.between_confidence / report.within_confidence;
  }
  return report;
}

/// Nearest-class assignment: the gallery label of the highest similarity.
/// Exact ties keep the lowest gallery index and record the event.
inline std::string classify(const SubspaceModel& probe, const std::vector<SubspaceModel>& gallery,
                            KernelKind kernel, MatchMethod method, const EvalOptions& options = {}) {
  if (gallery.empty()) {
    throw UsageError("classify: empty gallery");
  }
  MatchOptions cell_options = options.match;
  cell_options.score_only = true;
  std::size_t best = 0;
  double best_score = -1.0;
  for (std::size_t i = 0; i < gallery.size(); ++i) {
    const double score =
        match(probe, gallery[i], kernel, method, cell_options, options.cache).similarity;
    if (score > best_score) {
      best = i;
      best_score = score;
    } else if (score == best_score) {
      warn("classify: tie between gallery classes '" + gallery[best].class_label + "' and '" +
           gallery[i].class_label + "'; keeping the lower index");
    }
  }
  return gallery[best].class_label;
}

/// Per-pixel additive zero-mean Gaussian noise, deterministic in the seed.
/// Values are intentionally not clipped to [0, 255].
inline ImageSet add_gaussian_noise(const ImageSet& set, double sigma, std::uint64_t seed) {
  if (sigma < 0.0) {
    throw UsageError("add_gaussian_noise: sigma must be nonnegative");
  }
  ImageSet noisy = set;
  if (sigma == 0.0) return noisy;
  Rng rng(seed);
  for (auto& sample : noisy.samples) {
    for (Eigen::Index i = 0; i < sample.size(); ++i) {
      sample(i) += sigma * rng.normal();
    }
  }
  return noisy;
}

/// Downsample every sample of a set through P.
inline ImageSet downsample_set(const ImageSet& set, const ProjectionMatrix& p) {
  if (!(set.geometry == p.src)) {
    throw DimensionError("downsample_set: set geometry " + format_geometry(set.geometry) +
                         " does not match projection src " + format_geometry(p.src));
  }
  ImageSet low;
  low.geometry = p.dst;
  low.class_label = set.class_label;
  low.condition_label = set.condition_label;
  low.samples.reserve(set.samples.size());
  Eigen::MatrixXd stacked(p.high_dim(), static_cast<Eigen::Index>(set.samples.size()));
  for (std::size_t i = 0; i < set.samples.size(); ++i) {
    stacked.col(static_cast<Eigen::Index>(i)) = set.samples[i];
  }
  const Eigen::MatrixXd mapped = p.entries * stacked;
  for (Eigen::Index i = 0; i < mapped.cols(); ++i) {
    low.samples.emplace_back(mapped.col(i));
  }
  return low;
}

namespace detail {

// Unit-norm separable cosine mode on the pixel grid; the planted data's
// low-spatial-frequency building block.
inline Eigen::VectorXd cosine_mode(const ImageGeometry& g, int p, int q) {
  constexpr double pi = 3.14159265358979323846;
  Eigen::VectorXd v(g.pixel_count());
  for (int r = 0; r < g.height; ++r) {
    const double row_term = std::cos(pi * p * (r + 0.5) / g.height);
    for (int c = 0; c < g.width; ++c) {
      v(static_cast<Eigen::Index>(r) * g.width + c) =
          row_term * std::cos(pi * q * (c + 0.5) / g.width);
    }
  }
  v.normalize();
  return v;
}

struct ModePool {
  std::vector<Eigen::VectorXd> modes;
  std::vector<int> total_frequency;  // p + q per mode
};

inline ModePool mode_pool(const ImageGeometry& g, int count) {
  ModePool pool;
  const int p_cap = std::min(g.height - 1, 9);
  const int q_cap = std::min(g.width - 1, 9);
  for (int total = 1; total <= p_cap + q_cap && static_cast<int>(pool.modes.size()) < count;
       ++total) {
    for (int p = std::min(total, p_cap); p >= 0 && static_cast<int>(pool.modes.size()) < count;
         --p) {
      const int q = total - p;
      if (q < 0 || q > q_cap) continue;
      pool.modes.push_back(cosine_mode(g, p, q));
      pool.total_frequency.push_back(total);
    }
  }
  return pool;
}

// Unit-norm random mixture over the pool; weights decay mildly with total
// frequency. min_total_frequency restricts the draw to the finer band (the
// rng consumes one draw per pool mode either way, so band-limited and
// full-band draws stay stream-compatible).
inline Eigen::VectorXd random_pool_image(const ModePool& pool, Rng& rng, double decay,
                                         int min_total_frequency = 0) {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(pool.modes.front().size());
  for (std::size_t m = 0; m < pool.modes.size(); ++m) {
    const double weight = rng.normal() / std::pow(1.0 + pool.total_frequency[m], decay);
    if (pool.total_frequency[m] < min_total_frequency) continue;
    v += weight * pool.modes[m];
  }
  v.normalize();
  return v;
}

// Shape constants of the planted appearance model. Class identity spans the
// whole low-frequency pool; acquisition conditions distort only the finer
// band (total frequency >= kConditionBandFloor), the way a nuisance factor
// alters detail more than gross structure; a small smooth per-sample texture
// keeps every set full-rank around the planted subspace.
constexpr double kFrequencyDecay = 0.6;
constexpr double kConditionSpread = 0.5;
constexpr int kConditionBandFloor = 5;
constexpr double kTextureRms = 0.03;  // greyscale levels per pixel

}  // namespace detail

/// Desk-scale stand-in for the face/object databases: M classes, each a
/// random smooth mean plus an intrinsic_dim-dimensional variation model
/// built from low-spatial-frequency images. Condition t > 0 applies a small
/// linear distortion to the planted basis so gallery and probe models differ
/// the way different acquisition conditions make them differ. Pixel values
/// are affinely mapped into [0, 255] per set. Deterministic given the seed.
inline std::vector<ImageSet> generate_synthetic_classes(int class_count, int samples_per_set,
                                                        const ImageGeometry& geometry,
                                                        int intrinsic_dim, std::uint64_t seed,
                                                        int conditions = 1) {
  validate_geometry(geometry);
  if (class_count < 2) {
    throw UsageError("generate_synthetic_classes: need at least 2 classes");
  }
  if (intrinsic_dim < 1) {
    throw UsageError("generate_synthetic_classes: intrinsic_dim must be positive");
  }
  if (samples_per_set < intrinsic_dim + 2) {
    throw UsageError("generate_synthetic_classes: need N >= intrinsic_dim + 2 (got N = " +
                     std::to_string(samples_per_set) + ", dim = " +
                     std::to_string(intrinsic_dim) + ")");
  }
  if (conditions < 1) {
    throw UsageError("generate_synthetic_classes: conditions must be positive");
  }
  const int pool_size = std::max(3 * intrinsic_dim + 8, 24);
  const auto pool = detail::mode_pool(geometry, pool_size);
  if (static_cast<int>(pool.modes.size()) < intrinsic_dim + 1) {
    throw UsageError("generate_synthetic_classes: geometry " + format_geometry(geometry) +
                     " is too small for intrinsic_dim " + std::to_string(intrinsic_dim));
  }

  const Rng root(seed);
  std::vector<ImageSet> sets;
  sets.reserve(static_cast<std::size_t>(class_count) * conditions);
  const double texture_scale =
      detail::kTextureRms * std::sqrt(static_cast<double>(geometry.pixel_count()));

  for (int cls = 0; cls < class_count; ++cls) {
    Rng basis_rng = root.derive(1000 + static_cast<std::uint64_t>(cls));
    Eigen::MatrixXd planted(geometry.pixel_count(), intrinsic_dim);
    for (int j = 0; j < intrinsic_dim; ++j) {
      planted.col(j) = detail::random_pool_image(pool, basis_rng, detail::kFrequencyDecay);
    }

    Rng mean_rng = root.derive(4000 + static_cast<std::uint64_t>(cls));
    Eigen::VectorXd mean = Eigen::VectorXd::Constant(geometry.pixel_count(), 128.0);
    for (std::size_t m = 0; m < pool.modes.size() && pool.total_frequency[m] <= 2; ++m) {
      mean += 40.0 * mean_rng.normal() * pool.modes[m];
    }

    char label[16];
    std::snprintf(label, sizeof(label), "class%02d", cls);

    for (int cond = 0; cond < conditions; ++cond) {
      Eigen::MatrixXd raw = planted;
      if (cond > 0) {
        Rng distort_rng =
            root.derive(2000 + static_cast<std::uint64_t>(cls) * 64 + static_cast<std::uint64_t>(cond));
        for (int j = 0; j < intrinsic_dim; ++j) {
          raw.col(j) += detail::kConditionSpread *
                        detail::random_pool_image(pool, distort_rng, detail::kFrequencyDecay,
                                                  detail::kConditionBandFloor);
        }
      }
      const OrthonormalBasis basis = orthonormalize(raw);

      ImageSet set;
      set.geometry = geometry;
      set.class_label = label;
      set.condition_label = std::to_string(cond);
      set.samples.reserve(static_cast<std::size_t>(samples_per_set));

      Rng sample_rng =
          root.derive(3000 + static_cast<std::uint64_t>(cls) * 64 + static_cast<std::uint64_t>(cond));
      Eigen::VectorXd weights(intrinsic_dim);
      for (int i = 0; i < samples_per_set; ++i) {
        for (int j = 0; j < intrinsic_dim; ++j) {
          weights(j) = sample_rng.normal() * 60.0 / static_cast<double>(j + 1);
        }
        Eigen::VectorXd sample = mean + basis.columns * weights;
        sample += texture_scale *
                  detail::random_pool_image(pool, sample_rng, detail::kFrequencyDecay);
        set.samples.emplace_back(std::move(sample));
      }

      double lo = std::numeric_limits<double>::infinity();
      double hi = -std::numeric_limits<double>::infinity();
      for (const auto& s : set.samples) {
        lo = std::min(lo, s.minCoeff());
        hi = std::max(hi, s.maxCoeff());
      }
      if (hi - lo < 1e-9) {
        for (auto& s : set.samples) s.setConstant(128.0);
      } else {
        const double scale = 255.0 / (hi - lo);
        for (auto& s : set.samples) s = (s.array() - lo) * scale;
      }
      sets.push_back(std::move(set));
    }
  }
  return sets;
}

namespace detail {

struct ProtocolSplit {
  std::vector<const ImageSet*> gallery;  // one per class, sorted by class label
  std::vector<const ImageSet*> probes;   // aligned with gallery
  ImageGeometry geometry;
};

// Gallery data is the first condition, probe data the last. Single-condition
// data reuses the same sets on both sides (warned; same-class similarity is
// then limited only by the scale gap).
inline ProtocolSplit split_gallery_probe(const std::vector<ImageSet>& data) {
  if (data.empty()) {
    throw UsageError("sweep: empty dataset");
  }
  ProtocolSplit split;
  split.geometry = data.front().geometry;
  std::set<std::string> conditions;
  std::map<std::pair<std::string, std::string>, const ImageSet*> by_key;
  for (const auto& set : data) {
    if (!(set.geometry == split.geometry)) {
      throw DimensionError("sweep: mixed geometries in dataset (" +
                           format_geometry(set.geometry) + " vs " +
                           format_geometry(split.geometry) + ")");
    }
    conditions.insert(set.condition_label);
    const auto key = std::make_pair(set.class_label, set.condition_label);
    if (!by_key.emplace(key, &set).second) {
      throw UsageError("sweep: duplicate (class, condition) pair ('" + set.class_label + "', '" +
                       set.condition_label + "')");
    }
  }
  const std::string gallery_cond = *conditions.begin();
  const std::string probe_cond = *conditions.rbegin();
  if (gallery_cond == probe_cond) {
    warn("sweep: single-condition dataset; gallery and probe models come from the same sets");
  }
  std::set<std::string> classes;
  for (const auto& [key, set] : by_key) classes.insert(key.first);
  for (const auto& cls : classes) {
    const auto g = by_key.find({cls, gallery_cond});
    const auto p = by_key.find({cls, probe_cond});
    if (g == by_key.end() || p == by_key.end()) {
      throw UsageError("sweep: class '" + cls + "' missing condition '" +
                       (g == by_key.end() ? gallery_cond : probe_cond) + "'");
    }
    split.gallery.push_back(g->second);
    split.probes.push_back(p->second);
  }
  if (split.gallery.size() < 2) {
    throw UsageError("sweep: need at least 2 classes");
  }
  return split;
}

inline void validate_sweep_config(const SweepConfig& cfg) {
  if (cfg.scales.empty() || cfg.kernels.empty() || cfg.methods.empty()) {
    throw UsageError("sweep: scales, kernels and methods must be non-empty");
  }
  if (cfg.subspace_dim < 1) {
    throw UsageError("sweep: subspace dimension must be positive");
  }
}

inline std::vector<SubspaceModel> models_of(const std::vector<const ImageSet*>& sets, int dim) {
  std::vector<SubspaceModel> models;
  models.reserve(sets.size());
  for (const ImageSet* set : sets) models.push_back(estimate_subspace(*set, dim));
  return models;
}

}  // namespace detail

/// Scale sweep: learn high-resolution gallery models once, then for every
/// (scale, kernel) downsample the probe sets, learn low-resolution models
/// and report class separation per method. Report order is the config order
/// (scale, then kernel, then method).
inline std::vector<SeparationReport> run_scale_sweep(const SweepConfig& cfg,
                                                     const std::vector<ImageSet>& data,
                                                     CorrectionCache* cache = nullptr) {
  detail::validate_sweep_config(cfg);
  const auto split = detail::split_gallery_probe(data);
  const auto gallery_models = detail::models_of(split.gallery, cfg.subspace_dim);

  CorrectionCache local_cache(2);
  if (cache == nullptr) cache = &local_cache;

  std::vector<SeparationReport> reports;
  for (const auto& scale : cfg.scales) {
    for (const auto kernel : cfg.kernels) {
      const auto cm = cache->get_or_build(split.geometry, scale, kernel);
      std::vector<SubspaceModel> probe_models;
      probe_models.reserve(split.probes.size());
      for (const ImageSet* set : split.probes) {
        probe_models.push_back(estimate_subspace(downsample_set(*set, cm->projection),
                                                 cfg.subspace_dim));
      }
      for (const auto method : cfg.methods) {
        EvalOptions opts;
        opts.jobs = cfg.jobs;
        opts.cache = cache;
        SeparationReport report = class_separation(
            similarity_matrix(gallery_models, probe_models, kernel, method, opts));
        report.method = method;
        report.kernel = kernel;
        report.low_geometry = scale;
        report.high_geometry = split.geometry;
        report.noise_sigma = 0.0;
        report.seed = cfg.seed;
        reports.push_back(report);
      }
    }
  }
  return reports;
}

/// Noise sweep: corrupt the downsampled probe images with pixel-wise
/// Gaussian noise before subspace estimation, then evaluate separation.
/// Noise draws depend only on (seed, sigma index, scale index, kernel index,
/// class index), never on the execution order. Report order is (sigma,
/// scale, kernel, method).
inline std::vector<SeparationReport> run_noise_sweep(const SweepConfig& cfg,
                                                     const std::vector<ImageSet>& data,
                                                     CorrectionCache* cache = nullptr) {
  detail::validate_sweep_config(cfg);
  if (cfg.noise_sigmas.empty()) {
    throw UsageError("noise sweep: noise_sigmas must be non-empty");
  }
  const auto split = detail::split_gallery_probe(data);
  const auto gallery_models = detail::models_of(split.gallery, cfg.subspace_dim);

  CorrectionCache local_cache(2);
  if (cache == nullptr) cache = &local_cache;

  std::vector<SeparationReport> reports;
  for (std::size_t sigma_idx = 0; sigma_idx < cfg.noise_sigmas.size(); ++sigma_idx) {
    const double sigma = cfg.noise_sigmas[sigma_idx];
    for (std::size_t scale_idx = 0; scale_idx < cfg.scales.size(); ++scale_idx) {
      const auto& scale = cfg.scales[scale_idx];
      for (std::size_t kernel_idx = 0; kernel_idx < cfg.kernels.size(); ++kernel_idx) {
        const auto kernel = cfg.kernels[kernel_idx];
        const auto cm = cache->get_or_build(split.geometry, scale, kernel);
        std::vector<SubspaceModel> probe_models;
        probe_models.reserve(split.probes.size());
        for (std::size_t cls = 0; cls < split.probes.size(); ++cls) {
          ImageSet low = downsample_set(*split.probes[cls], cm->projection);
          low = add_gaussian_noise(low, sigma,
                                   mix_seed(cfg.seed, {sigma_idx, scale_idx, kernel_idx, cls}));
          probe_models.push_back(estimate_subspace(low, cfg.subspace_dim));
        }
        for (const auto method : cfg.methods) {
          EvalOptions opts;
          opts.jobs = cfg.jobs;
          opts.cache = cache;
          SeparationReport report = class_separation(
              similarity_matrix(gallery_models, probe_models, kernel, method, opts));
          report.method = method;
          report.kernel = kernel;
          report.low_geometry = scale;
          report.high_geometry = split.geometry;
          report.noise_sigma = sigma;
          report.seed = cfg.seed;
          reports.push_back(report);
        }
      }
    }
  }
  return reports;
}

/// Ratio of two separations with the infinity sentinel folded in: equal
/// perfect separations count as no change.
inline double separation_ratio(double numerator, double denominator) {
  const bool num_inf = std::isinf(numerator);
  const bool den_inf = std::isinf(denominator);
  if (num_inf && den_inf) return 1.0;
  if (den_inf) return 0.0;
  if (num_inf) return std::numeric_limits<double>::infinity();
  return numerator / denominator;
}

struct ScaleRatioRow {
  ImageGeometry scale;
  KernelKind kernel = KernelKind::bilinear;
  double ratio = 0.0;  // mu_constrained / mu_naive
};

/// Constrained-over-naive separation improvement per (scale, kernel), from a
/// report list that contains both methods.
inline std::vector<ScaleRatioRow> scale_improvement_ratios(
    const std::vector<SeparationReport>& reports) {
  using CellKey = std::tuple<int, int, int, double, std::uint64_t>;
  auto key_of = [](const SeparationReport& r) {
    return CellKey{r.low_geometry.width, r.low_geometry.height, static_cast<int>(r.kernel),
                   r.noise_sigma, r.seed};
  };
  std::map<CellKey, std::pair<const SeparationReport*, const SeparationReport*>> cells;
  for (const auto& r : reports) {
    auto& cell = cells[key_of(r)];
    (r.method == MatchMethod::constrained ? cell.first : cell.second) = &r;
  }
  std::vector<ScaleRatioRow> rows;
  for (const auto& r : reports) {  // preserve report order, one row per cell
    if (r.method != MatchMethod::constrained) continue;
    const auto& cell = cells[key_of(r)];
    if (cell.first == nullptr || cell.second == nullptr) continue;
    rows.push_back({r.low_geometry, r.kernel,
                    separation_ratio(cell.first->separation, cell.second->separation)});
  }
  return rows;
}

}  // namespace subspace
