#pragma once

#include <Eigen/Dense>
#include <array>
#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "subspace/evaluation.hpp"
#include "subspace/learning.hpp"
#include "subspace/matching.hpp"
#include "subspace/types.hpp"

#include "json.hpp"

#ifdef SUBSPACE_WITH_PNG
#include <png.h>
#endif

namespace subspace {

static_assert(std::endian::native == std::endian::little,
              "model files are little-endian; big-endian hosts are unsupported");

namespace io_detail {

inline std::uint32_t crc32(const unsigned char* data, std::size_t size,
                           std::uint32_t seed = 0) {
  static const auto table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  std::uint32_t crc = ~seed;
  for (std::size_t i = 0; i < size; ++i) {
    crc = table[(crc ^ data[i]) & 0xFFu] ^ (crc >> 8);
  }
  return ~crc;
}

inline std::string read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

// 12 significant digits, the report float contract.
inline std::string format_double(double value) {
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", value);
  return buf;
}

inline int pgm_next_token(std::istream& in) {
  // Skips whitespace and '#' comments, returns the next integer.
  for (;;) {
    int ch = in.peek();
    if (ch == '#') {
      std::string line;
      std::getline(in, line);
    } else if (std::isspace(ch)) {
      in.get();
    } else {
      break;
    }
  }
  int value = -1;
  in >> value;
  return value;
}

}  // namespace io_detail

struct GreyImage {
  ImageGeometry geometry;
  Eigen::VectorXd pixels;  // row-major, values in [0, 255]
};

/// Read an 8-bit PGM (binary P5 or ascii P2).
inline GreyImage read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open image '" + path + "'");
  std::string magic;
  in >> magic;
  if (magic != "P5" && magic != "P2") {
    throw DataError("'" + path + "': unsupported image format (expected PGM P5/P2)");
  }
  const int width = io_detail::pgm_next_token(in);
  const int height = io_detail::pgm_next_token(in);
  const int maxval = io_detail::pgm_next_token(in);
  if (width < 1 || height < 1 || maxval < 1) {
    throw DataError("'" + path + "': malformed PGM header");
  }
  if (maxval > 255) {
    throw DataError("'" + path + "': 16-bit PGM is unsupported");
  }
  GreyImage image;
  image.geometry = ImageGeometry{height, width};
  image.pixels.resize(image.geometry.pixel_count());
  if (magic == "P5") {
    in.get();  // single whitespace after maxval
    std::vector<unsigned char> raw(static_cast<std::size_t>(image.geometry.pixel_count()));
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (in.gcount() != static_cast<std::streamsize>(raw.size())) {
      throw DataError("'" + path + "': truncated PGM payload");
    }
    for (std::size_t i = 0; i < raw.size(); ++i) {
      image.pixels(static_cast<Eigen::Index>(i)) = raw[i];
    }
  } else {
    for (Eigen::Index i = 0; i < image.pixels.size(); ++i) {
      const int v = io_detail::pgm_next_token(in);
      if (v < 0 || v > maxval) throw DataError("'" + path + "': malformed P2 payload");
      image.pixels(i) = v;
    }
  }
  return image;
}

/// Write an 8-bit binary PGM; values are clamped to [0, 255] and rounded.
inline void write_pgm(const std::string& path, const GreyImage& image) {
  if (image.pixels.size() != image.geometry.pixel_count()) {
    throw DimensionError("write_pgm: pixel count does not match geometry");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write image '" + path + "'");
  out << "P5\n" << image.geometry.width << " " << image.geometry.height << "\n255\n";
  std::vector<unsigned char> raw(static_cast<std::size_t>(image.pixels.size()));
  for (Eigen::Index i = 0; i < image.pixels.size(); ++i) {
    const double v = std::clamp(image.pixels(i), 0.0, 255.0);
    raw[static_cast<std::size_t>(i)] = static_cast<unsigned char>(std::lround(v));
  }
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!out) throw DataError("write failed for '" + path + "'");
}

#ifdef SUBSPACE_WITH_PNG
/// Read a PNG; color inputs collapse to greyscale with luminance weights
/// 0.299 / 0.587 / 0.114.
inline GreyImage read_png(const std::string& path) {
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.c_str())) {
    throw DataError("'" + path + "': " + png.message);
  }
  png.format = PNG_FORMAT_RGB;
  std::vector<unsigned char> raw(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, raw.data(), 0, nullptr)) {
    throw DataError("'" + path + "': " + png.message);
  }
  GreyImage image;
  image.geometry = ImageGeometry{static_cast<int>(png.height), static_cast<int>(png.width)};
  image.pixels.resize(image.geometry.pixel_count());
  for (Eigen::Index i = 0; i < image.pixels.size(); ++i) {
    const std::size_t o = static_cast<std::size_t>(i) * 3;
    image.pixels(i) = 0.299 * raw[o] + 0.587 * raw[o + 1] + 0.114 * raw[o + 2];
  }
  return image;
}

inline void write_png(const std::string& path, const GreyImage& image) {
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(image.geometry.width);
  png.height = static_cast<png_uint_32>(image.geometry.height);
  png.format = PNG_FORMAT_GRAY;
  std::vector<unsigned char> raw(static_cast<std::size_t>(image.pixels.size()));
  for (Eigen::Index i = 0; i < image.pixels.size(); ++i) {
    raw[static_cast<std::size_t>(i)] =
        static_cast<unsigned char>(std::lround(std::clamp(image.pixels(i), 0.0, 255.0)));
  }
  if (!png_image_write_to_file(&png, path.c_str(), 0, raw.data(), 0, nullptr)) {
    throw DataError("'" + path + "': " + png.message);
  }
}
#endif

inline GreyImage read_image(const std::string& path) {
  const auto ext = std::filesystem::path(path).extension().string();
#ifdef SUBSPACE_WITH_PNG
  if (ext == ".png") return read_png(path);
#endif
  if (ext == ".pgm" || ext == ".PGM") return read_pgm(path);
  throw DataError("'" + path + "': unsupported image extension '" + ext + "'");
}

/// On-disk dataset description: geometry plus (class, condition, images).
struct DatasetManifest {
  std::filesystem::path root_path;
  ImageGeometry geometry;
  struct Entry {
    std::string class_label;
    std::string condition_label;
    std::vector<std::string> images;  // paths relative to root_path
  };
  std::vector<Entry> entries;
  nlohmann::json provenance;  // resolved generator config, when known
};

inline void save_manifest(const DatasetManifest& manifest, const std::string& path) {
  nlohmann::json j;
  j["schema_version"] = 1;
  j["geometry"] = {{"width", manifest.geometry.width}, {"height", manifest.geometry.height}};
  j["entries"] = nlohmann::json::array();
  for (const auto& e : manifest.entries) {
    j["entries"].push_back(
        {{"class", e.class_label}, {"condition", e.condition_label}, {"images", e.images}});
  }
  if (!manifest.provenance.is_null()) j["provenance"] = manifest.provenance;
  std::ofstream out(path);
  if (!out) throw DataError("cannot write manifest '" + path + "'");
  out << j.dump(2) << "\n";
}

inline DatasetManifest load_manifest(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(io_detail::read_file_bytes(path));
  } catch (const nlohmann::json::exception& e) {
    throw DataError("manifest '" + path + "': " + e.what());
  }
  DatasetManifest manifest;
  manifest.root_path = std::filesystem::path(path).parent_path();
  try {
    manifest.geometry =
        ImageGeometry{j.at("geometry").at("height").get<int>(), j.at("geometry").at("width").get<int>()};
    for (const auto& e : j.at("entries")) {
      DatasetManifest::Entry entry;
      entry.class_label = e.at("class").get<std::string>();
      entry.condition_label = e.at("condition").get<std::string>();
      entry.images = e.at("images").get<std::vector<std::string>>();
      manifest.entries.push_back(std::move(entry));
    }
    if (j.contains("provenance")) manifest.provenance = j["provenance"];
  } catch (const nlohmann::json::exception& e) {
    throw DataError("manifest '" + path + "': " + e.what());
  }
  validate_geometry(manifest.geometry);
  return manifest;
}

/// Load a manifest's images grouped into one ImageSet per (class,
/// condition) pair, in first-appearance order, verifying every image
/// against the manifest geometry.
inline std::vector<ImageSet> load_image_sets(const std::string& manifest_path) {
  const DatasetManifest manifest = load_manifest(manifest_path);
  std::vector<ImageSet> sets;
  std::map<std::pair<std::string, std::string>, std::size_t> group_index;
  for (const auto& entry : manifest.entries) {
    const auto key = std::make_pair(entry.class_label, entry.condition_label);
    auto [it, inserted] = group_index.emplace(key, sets.size());
    if (inserted) {
      ImageSet set;
      set.geometry = manifest.geometry;
      set.class_label = entry.class_label;
      set.condition_label = entry.condition_label;
      sets.push_back(std::move(set));
    }
    ImageSet& set = sets[it->second];
    for (const auto& rel : entry.images) {
      const std::string full = (manifest.root_path / rel).string();
      GreyImage image = read_image(full);
      if (!(image.geometry == manifest.geometry)) {
        throw DataError("'" + full + "': geometry " + format_geometry(image.geometry) +
                        " does not match manifest geometry " +
                        format_geometry(manifest.geometry));
      }
      set.samples.push_back(std::move(image.pixels));
    }
  }
  if (sets.empty()) throw DataError("manifest '" + manifest_path + "' has no entries");
  for (const auto& set : sets) validate_image_set(set);
  return sets;
}

// ---------------------------------------------------------------------------
// Model files: magic, little-endian header and payload, trailing CRC32, plus
// a JSON sidecar carrying provenance.

namespace io_detail {

constexpr char kModelMagic[8] = {'S', 'U', 'B', 'S', 'P', 'M', 'D', 'L'};
constexpr std::uint32_t kModelVersion = 1;

template <typename T>
void put(std::string& out, const T& value) {
  const auto* bytes = reinterpret_cast<const char*>(&value);
  out.append(bytes, sizeof(T));
}

template <typename T>
T take(const std::string& in, std::size_t& offset, const std::string& path) {
  if (offset + sizeof(T) > in.size()) {
    throw DataError("model '" + path + "': truncated file");
  }
  T value;
  std::memcpy(&value, in.data() + offset, sizeof(T));
  offset += sizeof(T);
  return value;
}

}  // namespace io_detail

struct ModelProvenance {
  std::string manifest_hash;
  std::string kernel;
  nlohmann::json parameters;
};

inline void save_model(const SubspaceModel& model, const std::string& path,
                       const ModelProvenance& provenance = {}) {
  std::string payload;
  payload.reserve(64 + static_cast<std::size_t>(model.mean.size() +
                                                model.basis.columns.size()) *
                           sizeof(double));
  io_detail::put(payload, io_detail::kModelVersion);
  io_detail::put(payload, static_cast<std::uint32_t>(model.geometry.height));
  io_detail::put(payload, static_cast<std::uint32_t>(model.geometry.width));
  io_detail::put(payload, static_cast<std::uint64_t>(model.mean.size()));
  io_detail::put(payload, static_cast<std::uint32_t>(model.dim()));
  io_detail::put(payload, model.energy_captured);
  payload.append(reinterpret_cast<const char*>(model.mean.data()),
                 static_cast<std::size_t>(model.mean.size()) * sizeof(double));
  payload.append(reinterpret_cast<const char*>(model.basis.columns.data()),
                 static_cast<std::size_t>(model.basis.columns.size()) * sizeof(double));

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write model '" + path + "'");
  out.write(io_detail::kModelMagic, sizeof(io_detail::kModelMagic));
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  const std::uint32_t crc =
      io_detail::crc32(reinterpret_cast<const unsigned char*>(payload.data()), payload.size());
  out.write(reinterpret_cast<const char*>(&crc), sizeof(crc));
  if (!out) throw DataError("write failed for model '" + path + "'");

  nlohmann::json sidecar;
  sidecar["schema_version"] = 1;
  sidecar["geometry"] = {{"width", model.geometry.width}, {"height", model.geometry.height}};
  sidecar["dim"] = model.dim();
  sidecar["energy_captured"] = model.energy_captured;
  sidecar["class"] = model.class_label;
  sidecar["condition"] = model.condition_label;
  sidecar["provenance"] = {{"manifest_hash", provenance.manifest_hash},
                           {"kernel", provenance.kernel},
                           {"parameters", provenance.parameters}};
  std::ofstream side(path + ".json");
  if (!side) throw DataError("cannot write model sidecar '" + path + ".json'");
  side << sidecar.dump(2) << "\n";
}

inline SubspaceModel load_model(const std::string& path) {
  const std::string bytes = io_detail::read_file_bytes(path);
  if (bytes.size() < sizeof(io_detail::kModelMagic) + sizeof(std::uint32_t) ||
      std::memcmp(bytes.data(), io_detail::kModelMagic, sizeof(io_detail::kModelMagic)) != 0) {
    throw DataError("model '" + path + "': bad magic (not a subspace model file)");
  }
  const std::size_t payload_size =
      bytes.size() - sizeof(io_detail::kModelMagic) - sizeof(std::uint32_t);
  const char* payload = bytes.data() + sizeof(io_detail::kModelMagic);
  std::uint32_t stored_crc;
  std::memcpy(&stored_crc, payload + payload_size, sizeof(stored_crc));
  const std::uint32_t actual_crc =
      io_detail::crc32(reinterpret_cast<const unsigned char*>(payload), payload_size);
  if (stored_crc != actual_crc) {
    throw DataError("model '" + path + "': checksum failure");
  }

  std::size_t offset = sizeof(io_detail::kModelMagic);
  const auto version = io_detail::take<std::uint32_t>(bytes, offset, path);
  if (version != io_detail::kModelVersion) {
    throw DataError("model '" + path + "': unsupported format version " +
                    std::to_string(version));
  }
  SubspaceModel model;
  model.geometry.height = static_cast<int>(io_detail::take<std::uint32_t>(bytes, offset, path));
  model.geometry.width = static_cast<int>(io_detail::take<std::uint32_t>(bytes, offset, path));
  const auto d = static_cast<Eigen::Index>(io_detail::take<std::uint64_t>(bytes, offset, path));
  const auto dim = static_cast<Eigen::Index>(io_detail::take<std::uint32_t>(bytes, offset, path));
  model.energy_captured = io_detail::take<double>(bytes, offset, path);
  validate_geometry(model.geometry);
  if (d != model.geometry.pixel_count()) {
    throw DataError("model '" + path + "': header pixel count mismatch");
  }
  const std::size_t numeric_bytes = static_cast<std::size_t>(d) * (1 + dim) * sizeof(double);
  if (offset + numeric_bytes + sizeof(std::uint32_t) != bytes.size()) {
    throw DataError("model '" + path + "': truncated file");
  }
  model.mean.resize(d);
  std::memcpy(model.mean.data(), bytes.data() + offset, static_cast<std::size_t>(d) * sizeof(double));
  offset += static_cast<std::size_t>(d) * sizeof(double);
  model.basis.columns.resize(d, dim);
  std::memcpy(model.basis.columns.data(), bytes.data() + offset,
              static_cast<std::size_t>(d) * dim * sizeof(double));

  const std::string sidecar_path = path + ".json";
  if (std::filesystem::exists(sidecar_path)) {
    try {
      const auto sidecar = nlohmann::json::parse(io_detail::read_file_bytes(sidecar_path));
      model.class_label = sidecar.value("class", "");
      model.condition_label = sidecar.value("condition", "");
    } catch (const nlohmann::json::exception&) {
      warn("model '" + path + "': unreadable sidecar; class/condition labels left empty");
    }
  }
  return model;
}

/// FNV-1a content hash used for manifest provenance.
inline std::string content_hash(const std::string& path) {
  const std::string bytes = io_detail::read_file_bytes(path);
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------------------
// Reports

enum class ReportFormat { csv, json };

/// Stable report writer. CSV columns: method, kernel, low_geometry,
/// high_geometry, noise_sigma, e_w, e_b, mu, seed; floats carry 12
/// significant digits; an infinite mu serializes as "inf" in CSV and as null
/// plus a flag in JSON. JSON mirrors the CSV and adds schema_version and an
/// optional provenance block.
inline void write_report(const std::vector<SeparationReport>& reports, ReportFormat format,
                         const std::string& path, const nlohmann::json& provenance = {}) {
  if (reports.empty()) {
    throw UsageError("write_report: empty report list");
  }
  if (format == ReportFormat::csv) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write report '" + path + "'");
    out << "method,kernel,low_geometry,high_geometry,noise_sigma,e_w,e_b,mu,seed\n";
    for (const auto& r : reports) {
      out << to_string(r.method) << ',' << to_string(r.kernel) << ','
          << format_geometry(r.low_geometry) << ',' << format_geometry(r.high_geometry) << ','
          << io_detail::format_double(r.noise_sigma) << ','
          << io_detail::format_double(r.within_confidence) << ','
          << io_detail::format_double(r.between_confidence) << ','
          << io_detail::format_double(r.separation) << ',' << r.seed << '\n';
    }
    if (!out) throw DataError("write failed for report '" + path + "'");
    return;
  }
  nlohmann::json j;
  j["schema_version"] = 1;
  if (!provenance.is_null()) j["provenance"] = provenance;
  j["reports"] = nlohmann::json::array();
  for (const auto& r : reports) {
    nlohmann::json row;
    row["method"] = to_string(r.method);
    row["kernel"] = to_string(r.kernel);
    row["low_geometry"] = format_geometry(r.low_geometry);
    row["high_geometry"] = format_geometry(r.high_geometry);
    row["noise_sigma"] = r.noise_sigma;
    row["e_w"] = r.within_confidence;
    row["e_b"] = r.between_confidence;
    if (std::isinf(r.separation)) {
      row["mu"] = nullptr;
      row["mu_infinite"] = true;
    } else {
      row["mu"] = r.separation;
      row["mu_infinite"] = false;
    }
    row["seed"] = r.seed;
    j["reports"].push_back(std::move(row));
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write report '" + path + "'");
  out << j.dump(2) << "\n";
  if (!out) throw DataError("write failed for report '" + path + "'");
}

/// Similarity matrix as CSV: header row of probe labels, then one row per
/// gallery class prefixed with its label.
inline void write_similarity_csv(const SimilarityMatrix& sm, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write similarity matrix '" + path + "'");
  out << "gallery\\probe";
  for (const auto& label : sm.probe_labels) out << ',' << label;
  out << '\n';
  for (Eigen::Index i = 0; i < sm.values.rows(); ++i) {
    out << sm.gallery_labels[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < sm.values.cols(); ++j) {
      out << ',' << io_detail::format_double(sm.values(i, j));
    }
    out << '\n';
  }
  if (!out) throw DataError("write failed for '" + path + "'");
}

/// Dense matrix dump, row-major, one row per line (projection matrices are
/// exported through this for inspection).
inline void write_matrix_csv(const Eigen::MatrixXd& matrix, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write matrix '" + path + "'");
  for (Eigen::Index i = 0; i < matrix.rows(); ++i) {
    for (Eigen::Index j = 0; j < matrix.cols(); ++j) {
      if (j > 0) out << ',';
      out << io_detail::format_double(matrix(i, j));
    }
    out << '\n';
  }
  if (!out) throw DataError("write failed for '" + path + "'");
}

// ---------------------------------------------------------------------------
// Mode export

/// Write the matched mode pairs of a result as greyscale images,
/// per-image affine-rescaled to [0, 255]. The optional means are added
/// before rescaling (pass empty vectors to export raw modes). Returns the
/// written paths.
inline std::vector<std::string> export_modes(const MatchResult& result,
                                             const Eigen::VectorXd& mean_high,
                                             const Eigen::VectorXd& mean_low_reconstructed,
                                             const ImageGeometry& geometry,
                                             const std::string& path_prefix) {
  std::vector<std::string> written;
  auto rescale_write = [&](Eigen::VectorXd image, const Eigen::VectorXd& mean,
                           const std::string& path) {
    if (image.size() != geometry.pixel_count()) {
      throw DimensionError("export_modes: mode length does not match geometry");
    }
    if (mean.size() == image.size()) image += mean;
    const double lo = image.minCoeff();
    const double hi = image.maxCoeff();
    if (hi - lo < 1e-12) {
      image.setConstant(128.0);  // degenerate rescale guard
    } else {
      image = (image.array() - lo) * (255.0 / (hi - lo));
    }
    write_pgm(path, GreyImage{geometry, image});
    written.push_back(path);
  };
  for (std::size_t i = 0; i < result.mode_pairs.size(); ++i) {
    char suffix[32];
    std::snprintf(suffix, sizeof(suffix), "_mode%02zu", i);
    rescale_write(result.mode_pairs[i].first, mean_high,
                  path_prefix + suffix + "_ref.pgm");
    rescale_write(result.mode_pairs[i].second, mean_low_reconstructed,
                  path_prefix + suffix + "_rec.pgm");
  }
  return written;
}

}  // namespace subspace
