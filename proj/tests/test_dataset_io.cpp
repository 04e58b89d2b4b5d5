#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <Eigen/Dense>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "subspace/dataset_io.hpp"
#include "subspace/rng.hpp"

using namespace subspace;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("subspace_io_test_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  static int& counter() {
    static int c = 0;
    return c;
  }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("crc32 known vector") {
  const std::string data = "123456789";
  CHECK(io_detail::crc32(reinterpret_cast<const unsigned char*>(data.data()), data.size()) ==
        0xCBF43926u);
}

TEST_CASE("pgm round trip") {
  TempDir tmp;
  Rng rng(3);
  GreyImage image;
  image.geometry = {7, 5};
  image.pixels.resize(35);
  for (Eigen::Index i = 0; i < 35; ++i) {
    image.pixels(i) = static_cast<double>(rng.next_u64() % 256);
  }
  const auto path = tmp.file("img.pgm");
  write_pgm(path, image);
  const auto loaded = read_pgm(path);
  CHECK(loaded.geometry == image.geometry);
  CHECK(loaded.pixels == image.pixels);
}

TEST_CASE("uniform mid-grey pgm loads as a constant vector") {
  TempDir tmp;
  GreyImage image;
  image.geometry = {50, 50};
  image.pixels = Eigen::VectorXd::Constant(2500, 128.0);
  const auto path = tmp.file("grey.pgm");
  write_pgm(path, image);
  const auto loaded = read_pgm(path);
  REQUIRE(loaded.pixels.size() == 2500);
  CHECK(loaded.pixels.minCoeff() == 128.0);
  CHECK(loaded.pixels.maxCoeff() == 128.0);
}

TEST_CASE("ascii P2 images are readable") {
  TempDir tmp;
  const auto path = tmp.file("ascii.pgm");
  std::ofstream out(path);
  out << "P2\n# comment line\n3 2\n255\n0 10 20\n30 40 50\n";
  out.close();
  const auto image = read_pgm(path);
  CHECK(image.geometry == ImageGeometry{2, 3});
  CHECK(image.pixels(0) == 0.0);
  CHECK(image.pixels(5) == 50.0);
}

TEST_CASE("pgm error paths") {
  TempDir tmp;
  CHECK_THROWS_AS(read_pgm(tmp.file("missing.pgm")), DataError);

  const auto bad = tmp.file("bad.pgm");
  std::ofstream(bad) << "P6 2 2 255 junk";
  CHECK_THROWS_AS(read_pgm(bad), DataError);

  const auto truncated = tmp.file("short.pgm");
  std::ofstream(truncated) << "P5\n4 4\n255\nxx";
  CHECK_THROWS_AS(read_pgm(truncated), DataError);
}

TEST_CASE("manifest round trip and set loading") {
  TempDir tmp;
  const ImageGeometry g{50, 50};
  DatasetManifest manifest;
  manifest.geometry = g;
  Rng rng(9);
  for (int cls = 0; cls < 2; ++cls) {
    DatasetManifest::Entry entry;
    entry.class_label = "class" + std::to_string(cls);
    entry.condition_label = "0";
    for (int i = 0; i < 3; ++i) {
      const std::string name =
          "c" + std::to_string(cls) + "_" + std::to_string(i) + ".pgm";
      GreyImage image;
      image.geometry = g;
      image.pixels.resize(g.pixel_count());
      for (Eigen::Index px = 0; px < image.pixels.size(); ++px) {
        image.pixels(px) = static_cast<double>(rng.next_u64() % 256);
      }
      write_pgm(tmp.file(name), image);
      entry.images.push_back(name);
    }
    manifest.entries.push_back(entry);
  }
  const auto manifest_path = tmp.file("manifest.json");
  save_manifest(manifest, manifest_path);

  const auto sets = load_image_sets(manifest_path);
  REQUIRE(sets.size() == 2);
  for (const auto& set : sets) {
    CHECK(set.samples.size() == 3);
    CHECK(set.geometry.pixel_count() == 2500);
  }

  SUBCASE("entries repeating a (class, condition) pair merge into one set") {
    DatasetManifest split = manifest;
    DatasetManifest::Entry extra;
    extra.class_label = split.entries[0].class_label;
    extra.condition_label = split.entries[0].condition_label;
    extra.images = {split.entries[0].images.back()};
    split.entries[0].images.pop_back();
    split.entries.push_back(extra);
    save_manifest(split, manifest_path);
    const auto merged = load_image_sets(manifest_path);
    REQUIRE(merged.size() == 2);
    CHECK(merged[0].samples.size() == 3);
  }

  SUBCASE("mixed geometry names the offending file") {
    GreyImage odd;
    odd.geometry = {5, 5};
    odd.pixels = Eigen::VectorXd::Zero(25);
    write_pgm(tmp.file("odd.pgm"), odd);
    manifest.entries[0].images.push_back("odd.pgm");
    save_manifest(manifest, manifest_path);
    try {
      load_image_sets(manifest_path);
      FAIL("expected DataError");
    } catch (const DataError& e) {
      CHECK(std::string(e.what()).find("odd.pgm") != std::string::npos);
    }
  }
}

TEST_CASE("model save and load round trip bitwise") {
  TempDir tmp;
  Rng rng(17);
  SubspaceModel model;
  model.geometry = {6, 5};
  model.mean.resize(30);
  for (Eigen::Index i = 0; i < 30; ++i) model.mean(i) = rng.normal() * 100;
  Eigen::MatrixXd raw(30, 3);
  for (Eigen::Index j = 0; j < 3; ++j) {
    for (Eigen::Index i = 0; i < 30; ++i) raw(i, j) = rng.normal();
  }
  model.basis = orthonormalize(raw);
  model.energy_captured = 0.987654321;
  model.class_label = "probe";
  model.condition_label = "2";

  const auto path = tmp.file("model.ssm");
  ModelProvenance prov;
  prov.manifest_hash = "deadbeef";
  prov.kernel = "bilinear";
  prov.parameters = {{"dim", 3}};
  save_model(model, path, prov);

  const auto loaded = load_model(path);
  CHECK(loaded.geometry == model.geometry);
  CHECK(loaded.mean == model.mean);
  CHECK(loaded.basis.columns == model.basis.columns);
  CHECK(loaded.energy_captured == model.energy_captured);
  CHECK(loaded.class_label == "probe");
  CHECK(loaded.condition_label == "2");

  SUBCASE("saving twice yields identical bytes") {
    const auto path2 = tmp.file("model2.ssm");
    save_model(model, path2, prov);
    CHECK(slurp(path) == slurp(path2));
  }

  SUBCASE("corrupted magic is rejected") {
    auto bytes = slurp(path);
    bytes[0] = 'X';
    std::ofstream(tmp.file("corrupt.ssm"), std::ios::binary) << bytes;
    CHECK_THROWS_AS(load_model(tmp.file("corrupt.ssm")), DataError);
  }

  SUBCASE("flipped payload byte fails the checksum") {
    auto bytes = slurp(path);
    bytes[bytes.size() / 2] = static_cast<char>(bytes[bytes.size() / 2] ^ 0x40);
    std::ofstream(tmp.file("flip.ssm"), std::ios::binary) << bytes;
    CHECK_THROWS_AS(load_model(tmp.file("flip.ssm")), DataError);
  }

  SUBCASE("truncated file is rejected") {
    auto bytes = slurp(path);
    bytes.resize(bytes.size() / 2);
    std::ofstream(tmp.file("trunc.ssm"), std::ios::binary) << bytes;
    CHECK_THROWS_AS(load_model(tmp.file("trunc.ssm")), DataError);
  }
}

TEST_CASE("report writing") {
  TempDir tmp;
  SeparationReport r;
  r.within_confidence = 0.15;
  r.between_confidence = 0.85;
  r.separation = 17.0 / 3.0;
  r.method = MatchMethod::constrained;
  r.kernel = KernelKind::bicubic;
  r.low_geometry = {5, 5};
  r.high_geometry = {50, 50};
  r.noise_sigma = 0.0;
  r.seed = 7;

  SUBCASE("single row csv") {
    const auto path = tmp.file("report.csv");
    write_report({r}, ReportFormat::csv, path);
    const auto text = slurp(path);
    CHECK(text ==
          "method,kernel,low_geometry,high_geometry,noise_sigma,e_w,e_b,mu,seed\n"
          "constrained,bicubic,5x5,50x50,0,0.15,0.85,5.66666666667,7\n");
  }

  SUBCASE("identical runs produce identical bytes") {
    const auto a = tmp.file("a.csv");
    const auto b = tmp.file("b.csv");
    write_report({r, r}, ReportFormat::csv, a);
    write_report({r, r}, ReportFormat::csv, b);
    CHECK(slurp(a) == slurp(b));
    const auto aj = tmp.file("a.json");
    const auto bj = tmp.file("b.json");
    write_report({r, r}, ReportFormat::json, aj);
    write_report({r, r}, ReportFormat::json, bj);
    CHECK(slurp(aj) == slurp(bj));
  }

  SUBCASE("infinite separation serializes as inf and null") {
    auto sentinel = r;
    sentinel.separation = std::numeric_limits<double>::infinity();
    const auto csv_path = tmp.file("inf.csv");
    write_report({sentinel}, ReportFormat::csv, csv_path);
    CHECK(slurp(csv_path).find(",inf,") != std::string::npos);

    const auto json_path = tmp.file("inf.json");
    write_report({sentinel}, ReportFormat::json, json_path);
    const auto parsed = nlohmann::json::parse(slurp(json_path));
    CHECK(parsed["reports"][0]["mu"].is_null());
    CHECK(parsed["reports"][0]["mu_infinite"] == true);
  }

  SUBCASE("empty report list is rejected") {
    CHECK_THROWS_AS(write_report({}, ReportFormat::csv, tmp.file("x.csv")), UsageError);
  }
}

TEST_CASE("matrix csv dump") {
  TempDir tmp;
  Eigen::MatrixXd m(2, 3);
  m << 1, 0.5, 0, -0.25, 2, 1e-3;
  const auto path = tmp.file("m.csv");
  write_matrix_csv(m, path);
  CHECK(slurp(path) == "1,0.5,0\n-0.25,2,0.001\n");
}

TEST_CASE("mode export") {
  TempDir tmp;

  SUBCASE("constant mode maps to uniform mid-grey") {
    MatchResult result;
    result.mode_pairs.emplace_back(Eigen::VectorXd::Constant(25, 3.0),
                                   Eigen::VectorXd::Constant(25, -1.0));
    const auto files = export_modes(result, Eigen::VectorXd(), Eigen::VectorXd(), {5, 5},
                                    tmp.file("flat"));
    REQUIRE(files.size() == 2);
    for (const auto& f : files) {
      const auto image = read_pgm(f);
      CHECK(image.pixels.minCoeff() == 128.0);
      CHECK(image.pixels.maxCoeff() == 128.0);
    }
  }

  SUBCASE("a delta mode lights a single pixel") {
    MatchResult result;
    Eigen::VectorXd e1 = Eigen::VectorXd::Zero(25);
    e1(0) = 1.0;
    result.mode_pairs.emplace_back(e1, e1);
    const auto files = export_modes(result, Eigen::VectorXd(), Eigen::VectorXd(), {5, 5},
                                    tmp.file("delta"));
    const auto image = read_pgm(files.front());
    CHECK(image.pixels(0) == 255.0);
    CHECK(image.pixels.tail(24).maxCoeff() < 255.0);
  }

  SUBCASE("same-class planted match yields correlated mode images") {
    const auto p = build_projection({16, 16}, {8, 8}, KernelKind::bilinear);
    const auto cm = prepare_correction_model(p);
    Rng rng(23);
    const int dim = 4;
    Eigen::MatrixXd high_raw(256, dim);
    for (Eigen::Index j = 0; j < dim; ++j) {
      for (Eigen::Index i = 0; i < 256; ++i) high_raw(i, j) = rng.normal();
    }
    const auto basis_high = orthonormalize(high_raw);
    const auto basis_low = orthonormalize(p.entries * basis_high.columns);
    const auto result = constrained_reconstruct(basis_low, basis_high, cm);
    const auto files = export_modes(result, Eigen::VectorXd(), Eigen::VectorXd(), {16, 16},
                                    tmp.file("planted"));
    REQUIRE(files.size() >= 2);
    const auto ref = read_pgm(files[0]);
    const auto rec = read_pgm(files[1]);
    const Eigen::VectorXd a = ref.pixels.array() - ref.pixels.mean();
    const Eigen::VectorXd b = rec.pixels.array() - rec.pixels.mean();
    const double correlation = a.dot(b) / (a.norm() * b.norm());
    CHECK(correlation > 0.9);
  }

  SUBCASE("length mismatch is rejected") {
    MatchResult result;
    result.mode_pairs.emplace_back(Eigen::VectorXd::Zero(9), Eigen::VectorXd::Zero(9));
    CHECK_THROWS_AS(
        export_modes(result, Eigen::VectorXd(), Eigen::VectorXd(), {5, 5}, tmp.file("bad")),
        DimensionError);
  }
}

TEST_CASE("content hash is stable") {
  TempDir tmp;
  const auto path = tmp.file("blob.bin");
  std::ofstream(path, std::ios::binary) << "stable payload";
  const auto first = content_hash(path);
  CHECK(first == content_hash(path));
  CHECK(first.size() == 16);
}

#ifdef SUBSPACE_WITH_PNG
TEST_CASE("png round trip and luminance conversion") {
  TempDir tmp;
  GreyImage image;
  image.geometry = {9, 11};
  image.pixels.resize(99);
  Rng rng(29);
  for (Eigen::Index i = 0; i < 99; ++i) {
    image.pixels(i) = static_cast<double>(rng.next_u64() % 256);
  }
  const auto path = tmp.file("img.png");
  write_png(path, image);
  const auto loaded = read_png(path);
  CHECK(loaded.geometry == image.geometry);
  // Grey PNG read back through the RGB + luminance path: weights sum to 1.
  CHECK((loaded.pixels - image.pixels).cwiseAbs().maxCoeff() <= 0.51);
}
#endif
