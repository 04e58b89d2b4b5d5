#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "subspace/evaluation.hpp"
#include "subspace/rng.hpp"

using namespace subspace;

namespace {

SubspaceModel model_from_basis(const ImageGeometry& g, const Eigen::MatrixXd& columns,
                               const std::string& cls) {
  SubspaceModel m;
  m.geometry = g;
  m.mean = Eigen::VectorXd::Zero(g.pixel_count());
  m.basis = OrthonormalBasis{columns};
  m.class_label = cls;
  m.condition_label = "0";
  return m;
}

SimilarityMatrix matrix_of(const Eigen::MatrixXd& values) {
  SimilarityMatrix sm;
  sm.values = values;
  for (Eigen::Index i = 0; i < values.rows(); ++i) {
    sm.gallery_labels.push_back("c" + std::to_string(i));
    sm.probe_labels.push_back("c" + std::to_string(i));
  }
  return sm;
}

// Scalar-loop oracle for the separation statistics.
void separation_oracle(const Eigen::MatrixXd& rho, double& e_w, double& e_b) {
  const auto m = static_cast<int>(rho.rows());
  double diag = 0.0;
  for (int i = 0; i < m; ++i) diag += rho(i, i);
  e_w = 1.0 - diag / m;
  double off = 0.0;
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < m; ++j) {
      if (i != j) off += rho(i, j);
    }
  }
  e_b = 1.0 - off / (m * (m - 1));
}

}  // namespace

TEST_CASE("similarity matrix diagonal is 1 for gallery == probes") {
  Rng rng(3);
  const ImageGeometry g{4, 4};
  std::vector<SubspaceModel> models;
  for (int c = 0; c < 3; ++c) {
    Eigen::MatrixXd raw(16, 2);
    for (Eigen::Index j = 0; j < 2; ++j) {
      for (Eigen::Index i = 0; i < 16; ++i) raw(i, j) = rng.normal();
    }
    models.push_back(model_from_basis(g, orthonormalize(raw).columns, "c" + std::to_string(c)));
  }
  const auto sm = similarity_matrix(models, models, KernelKind::bilinear, MatchMethod::naive);
  for (Eigen::Index i = 0; i < 3; ++i) {
    CHECK(sm.values(i, i) >= 1.0 - 1e-10);
  }
  CHECK(sm.values.maxCoeff() <= 1.0 + 1e-10);
  CHECK(sm.values.minCoeff() >= 0.0);
}

TEST_CASE("orthogonal planted classes have near-zero off-diagonals") {
  const ImageGeometry g{2, 2};
  const auto a = model_from_basis(g, Eigen::MatrixXd::Identity(4, 4).leftCols(2), "a");
  const auto b = model_from_basis(g, Eigen::MatrixXd::Identity(4, 4).rightCols(2), "b");
  const auto sm = similarity_matrix({a, b}, {a, b}, KernelKind::bilinear, MatchMethod::naive);
  CHECK(sm.values(0, 1) <= 1e-12);
  CHECK(sm.values(1, 0) <= 1e-12);
  CHECK(sm.values(0, 0) >= 1.0 - 1e-12);
}

TEST_CASE("similarity matrix rejects malformed inputs") {
  Rng rng(5);
  const ImageGeometry g{2, 2};
  Eigen::MatrixXd raw(4, 1);
  for (Eigen::Index i = 0; i < 4; ++i) raw(i, 0) = rng.normal();
  const auto a = model_from_basis(g, orthonormalize(raw).columns, "a");
  auto b = a;
  b.class_label = "b";
  auto stray = a;
  stray.class_label = "zzz";
  CHECK_THROWS_AS(similarity_matrix({}, {}, KernelKind::bilinear, MatchMethod::naive),
                  UsageError);
  CHECK_THROWS_AS(similarity_matrix({a, b}, {a, stray}, KernelKind::bilinear, MatchMethod::naive),
                  UsageError);
  CHECK_THROWS_AS(similarity_matrix({a, a}, {a, a}, KernelKind::bilinear, MatchMethod::naive),
                  UsageError);
}

TEST_CASE("class separation on the worked 2x2 example") {
  Eigen::MatrixXd rho(2, 2);
  rho << 0.9, 0.1, 0.2, 0.8;
  const auto report = class_separation(matrix_of(rho));
  CHECK(std::abs(report.within_confidence - 0.15) <= 1e-12);
  CHECK(std::abs(report.between_confidence - 0.85) <= 1e-12);
  CHECK(std::abs(report.separation - 17.0 / 3.0) <= 1e-12);
}

TEST_CASE("class separation sentinel and flat cases") {
  std::vector<std::string> captured;
  set_warning_handler([&](const std::string& msg) { captured.push_back(msg); });
  const auto perfect = class_separation(matrix_of(Eigen::MatrixXd::Identity(3, 3)));
  set_warning_handler({});
  CHECK(perfect.within_confidence == 0.0);
  CHECK(std::isinf(perfect.separation));
  CHECK(!captured.empty());

  const auto flat = class_separation(matrix_of(Eigen::MatrixXd::Constant(3, 3, 0.5)));
  CHECK(flat.separation == doctest::Approx(1.0).epsilon(1e-14));

  CHECK_THROWS_AS(class_separation(matrix_of(Eigen::MatrixXd::Constant(1, 1, 0.5))), UsageError);
}

TEST_CASE("class separation matches the scalar oracle on random matrices") {
  Rng rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    const int m = 2 + static_cast<int>(rng.next_u64() % 5);
    Eigen::MatrixXd rho(m, m);
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < m; ++j) rho(i, j) = rng.uniform01() * 0.98;
    }
    double e_w = 0.0;
    double e_b = 0.0;
    separation_oracle(rho, e_w, e_b);
    const auto report = class_separation(matrix_of(rho));
    CHECK(std::abs(report.within_confidence - e_w) <= 1e-12);
    CHECK(std::abs(report.between_confidence - e_b) <= 1e-12);
    if (e_w > 1e-12) {
      CHECK(std::abs(report.separation - e_b / e_w) <= 1e-12 * std::max(1.0, e_b / e_w));
    }
  }
}

TEST_CASE("classification basics") {
  Rng rng(11);
  const ImageGeometry g{3, 3};
  std::vector<SubspaceModel> gallery;
  for (int c = 0; c < 4; ++c) {
    Eigen::MatrixXd raw(9, 2);
    for (Eigen::Index j = 0; j < 2; ++j) {
      for (Eigen::Index i = 0; i < 9; ++i) raw(i, j) = rng.normal();
    }
    gallery.push_back(model_from_basis(g, orthonormalize(raw).columns, "c" + std::to_string(c)));
  }
  CHECK(classify(gallery[2], gallery, KernelKind::bilinear, MatchMethod::naive) == "c2");
  CHECK_THROWS_AS(classify(gallery[0], {}, KernelKind::bilinear, MatchMethod::naive), UsageError);

  // A duplicated gallery model forces an exact tie.
  auto twin = gallery;
  twin.push_back(gallery[1]);
  twin.back().class_label = "copy";
  std::vector<std::string> captured;
  set_warning_handler([&](const std::string& msg) { captured.push_back(msg); });
  const auto label = classify(gallery[1], twin, KernelKind::bilinear, MatchMethod::naive);
  set_warning_handler({});
  CHECK(label == "c1");
  REQUIRE(!captured.empty());
  CHECK(captured.front().find("tie") != std::string::npos);
}

TEST_CASE("planted classification is perfect at equal geometry") {
  for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
    const auto sets = generate_synthetic_classes(5, 12, {12, 12}, 3, seed, 2);
    std::vector<SubspaceModel> gallery;
    std::vector<SubspaceModel> probes;
    for (const auto& set : sets) {
      (set.condition_label == "0" ? gallery : probes).push_back(estimate_subspace(set, 3));
    }
    for (const auto& probe : probes) {
      CHECK(classify(probe, gallery, KernelKind::bilinear, MatchMethod::naive) ==
            probe.class_label);
    }
  }
}

TEST_CASE("gaussian noise behaviour") {
  Rng rng(13);
  const auto sets = generate_synthetic_classes(2, 6, {8, 8}, 2, 77);
  const auto& set = sets.front();

  SUBCASE("sigma zero is the identity") {
    const auto same = add_gaussian_noise(set, 0.0, 5);
    for (std::size_t i = 0; i < set.samples.size(); ++i) {
      CHECK(same.samples[i] == set.samples[i]);
    }
  }
  SUBCASE("fixed seed is bitwise reproducible") {
    const auto a = add_gaussian_noise(set, 4.0, 99);
    const auto b = add_gaussian_noise(set, 4.0, 99);
    for (std::size_t i = 0; i < a.samples.size(); ++i) {
      CHECK(a.samples[i] == b.samples[i]);
    }
  }
  SUBCASE("empirical standard deviation near sigma") {
    ImageSet big;
    big.geometry = {100, 100};
    big.class_label = "n";
    big.condition_label = "0";
    big.samples.assign(10, Eigen::VectorXd::Zero(10000));
    const auto noisy = add_gaussian_noise(big, 30.0, 2024);
    double sum_sq = 0.0;
    std::size_t count = 0;
    for (const auto& s : noisy.samples) {
      sum_sq += s.squaredNorm();
      count += static_cast<std::size_t>(s.size());
    }
    const double stddev = std::sqrt(sum_sq / static_cast<double>(count));
    CHECK(stddev >= 29.5);
    CHECK(stddev <= 30.5);
  }
  SUBCASE("negative sigma is rejected") {
    CHECK_THROWS_AS(add_gaussian_noise(set, -1.0, 0), UsageError);
  }
}

TEST_CASE("synthetic generator contracts") {
  SUBCASE("deterministic given the seed") {
    const auto a = generate_synthetic_classes(3, 8, {10, 10}, 3, 42, 2);
    const auto b = generate_synthetic_classes(3, 8, {10, 10}, 3, 42, 2);
    REQUIRE(a.size() == b.size());
    for (std::size_t s = 0; s < a.size(); ++s) {
      CHECK(a[s].class_label == b[s].class_label);
      CHECK(a[s].condition_label == b[s].condition_label);
      for (std::size_t i = 0; i < a[s].samples.size(); ++i) {
        CHECK(a[s].samples[i] == b[s].samples[i]);
      }
    }
  }
  SUBCASE("pixel range and rank structure") {
    const auto sets = generate_synthetic_classes(2, 10, {10, 10}, 4, 5);
    for (const auto& set : sets) {
      for (const auto& s : set.samples) {
        CHECK(s.minCoeff() >= 0.0);
        CHECK(s.maxCoeff() <= 255.0);
      }
      const auto model = estimate_subspace(set, 4);
      CHECK(model.energy_captured >= 0.999);
    }
  }
  SUBCASE("cross-class similarity below same-class similarity") {
    const auto sets = generate_synthetic_classes(2, 10, {12, 12}, 3, 9, 2);
    std::vector<SubspaceModel> gallery;
    std::vector<SubspaceModel> probes;
    for (const auto& set : sets) {
      (set.condition_label == "0" ? gallery : probes).push_back(estimate_subspace(set, 3));
    }
    const auto sm = similarity_matrix(gallery, probes, KernelKind::bilinear, MatchMethod::naive);
    CHECK(sm.values(0, 0) > sm.values(0, 1));
    CHECK(sm.values(1, 1) > sm.values(1, 0));
  }
  SUBCASE("parameter validation") {
    CHECK_THROWS_AS(generate_synthetic_classes(1, 10, {10, 10}, 3, 0), UsageError);
    CHECK_THROWS_AS(generate_synthetic_classes(3, 3, {10, 10}, 4, 0), UsageError);
    CHECK_THROWS_AS(generate_synthetic_classes(3, 10, {10, 10}, 0, 0), UsageError);
    CHECK_THROWS_AS(generate_synthetic_classes(3, 10, {10, 10}, 3, 0, 0), UsageError);
  }
}

TEST_CASE("scale sweep at the native scale has ratio 1") {
  const auto data = generate_synthetic_classes(3, 10, {8, 8}, 3, 21, 2);
  SweepConfig cfg;
  cfg.scales = {{8, 8}};
  cfg.kernels = {KernelKind::bilinear};
  cfg.methods = {MatchMethod::naive, MatchMethod::constrained};
  cfg.subspace_dim = 3;
  cfg.seed = 21;
  const auto reports = run_scale_sweep(cfg, data);
  REQUIRE(reports.size() == 2);
  const auto ratios = scale_improvement_ratios(reports);
  REQUIRE(ratios.size() == 1);
  CHECK(std::abs(ratios.front().ratio - 1.0) <= 1e-9);
}

TEST_CASE("scale sweep report order and determinism across job counts") {
  const auto data = generate_synthetic_classes(3, 10, {10, 10}, 3, 33, 2);
  SweepConfig cfg;
  cfg.scales = {{5, 5}, {10, 10}};
  cfg.kernels = {KernelKind::bilinear, KernelKind::bicubic};
  cfg.methods = {MatchMethod::naive, MatchMethod::constrained};
  cfg.subspace_dim = 3;
  cfg.seed = 33;
  cfg.jobs = 1;
  const auto serial = run_scale_sweep(cfg, data);
  cfg.jobs = 4;
  const auto parallel = run_scale_sweep(cfg, data);
  REQUIRE(serial.size() == 8);
  REQUIRE(parallel.size() == serial.size());
  for (std::size_t i = 0; i < serial.size(); ++i) {
    CHECK(serial[i].within_confidence == parallel[i].within_confidence);
    CHECK(serial[i].between_confidence == parallel[i].between_confidence);
    CHECK(serial[i].separation == parallel[i].separation);
  }
  // Config order: scale-major, then kernel, then method.
  CHECK(serial[0].low_geometry == ImageGeometry{5, 5});
  CHECK(serial[0].kernel == KernelKind::bilinear);
  CHECK(serial[0].method == MatchMethod::naive);
  CHECK(serial[1].method == MatchMethod::constrained);
  CHECK(serial[2].kernel == KernelKind::bicubic);
  CHECK(serial[4].low_geometry == ImageGeometry{10, 10});
}

TEST_CASE("noise sweep baseline and determinism") {
  const auto data = generate_synthetic_classes(3, 10, {10, 10}, 3, 55, 2);
  SweepConfig cfg;
  cfg.scales = {{5, 5}};
  cfg.kernels = {KernelKind::bilinear};
  cfg.methods = {MatchMethod::naive, MatchMethod::constrained};
  cfg.noise_sigmas = {0.0, 10.0};
  cfg.subspace_dim = 3;
  cfg.seed = 55;
  const auto reports = run_noise_sweep(cfg, data);
  REQUIRE(reports.size() == 4);
  CHECK(reports[0].noise_sigma == 0.0);
  CHECK(reports[2].noise_sigma == 10.0);

  // sigma = 0 rows are exactly the clean evaluation: rerunning the grid with
  // only sigma 0 reproduces them bitwise.
  SweepConfig baseline = cfg;
  baseline.noise_sigmas = {0.0};
  const auto clean = run_noise_sweep(baseline, data);
  REQUIRE(clean.size() == 2);
  for (std::size_t i = 0; i < clean.size(); ++i) {
    CHECK(clean[i].separation == reports[i].separation);
  }

  const auto again = run_noise_sweep(cfg, data);
  for (std::size_t i = 0; i < reports.size(); ++i) {
    CHECK(again[i].within_confidence == reports[i].within_confidence);
    CHECK(again[i].between_confidence == reports[i].between_confidence);
  }
}

TEST_CASE("separation ratio sentinel policy") {
  const double inf = std::numeric_limits<double>::infinity();
  CHECK(separation_ratio(inf, inf) == 1.0);
  CHECK(separation_ratio(2.0, inf) == 0.0);
  CHECK(std::isinf(separation_ratio(inf, 2.0)));
  CHECK(separation_ratio(3.0, 2.0) == doctest::Approx(1.5).epsilon(1e-15));
}
