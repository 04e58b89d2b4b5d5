#pragma once

#include <cstdint>
#include <cstdio>
#include <functional>
#include <mutex>
#include <stdexcept>
#include <string>

namespace subspace {

/// Parameter misuse (bad dimension requests, malformed flag values).
class UsageError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Broken files, malformed manifests, unsupported formats.
class DataError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Shape mismatches between numeric objects.
class DimensionError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Rank deficiency, vacuous matches, zero-variance data.
class DegeneracyError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

using WarningHandler = std::function<void(const std::string&)>;

namespace detail {
inline std::mutex& warn_mutex() {
  static std::mutex m;
  return m;
}
inline WarningHandler& warn_handler() {
  static WarningHandler h;  // empty means stderr
  return h;
}
}  // namespace detail

/// Install a warning sink (tests capture warnings this way). Empty handler
/// restores the default stderr sink.
inline void set_warning_handler(WarningHandler handler) {
  std::lock_guard<std::mutex> lock(detail::warn_mutex());
  detail::warn_handler() = std::move(handler);
}

inline void warn(const std::string& message) {
  std::lock_guard<std::mutex> lock(detail::warn_mutex());
  if (detail::warn_handler()) {
    detail::warn_handler()(message);
  } else {
    std::fprintf(stderr, "[warn] %s\n", message.c_str());
  }
}

/// Pixel grid of a greyscale image. Width and height are both at least 1.
struct ImageGeometry {
  int height = 0;
  int width = 0;

  std::int64_t pixel_count() const {
    return static_cast<std::int64_t>(height) * static_cast<std::int64_t>(width);
  }

  bool operator==(const ImageGeometry&) const = default;
};

inline void validate_geometry(const ImageGeometry& g) {
  if (g.height < 1 || g.width < 1) {
    throw UsageError("geometry must be at least 1x1, got " + std::to_string(g.width) + "x" +
                     std::to_string(g.height));
  }
}

/// "WxH" flag syntax.
inline std::string format_geometry(const ImageGeometry& g) {
  return std::to_string(g.width) + "x" + std::to_string(g.height);
}

inline ImageGeometry parse_geometry(const std::string& text) {
  const auto sep = text.find_first_of("xX");
  if (sep == std::string::npos || sep == 0 || sep + 1 >= text.size()) {
    throw UsageError("geometry must use WxH syntax, got '" + text + "'");
  }
  ImageGeometry g;
  try {
    std::size_t wend = 0;
    std::size_t hend = 0;
    g.width = std::stoi(text.substr(0, sep), &wend);
    g.height = std::stoi(text.substr(sep + 1), &hend);
    if (wend != sep || hend != text.size() - sep - 1) {
      throw std::invalid_argument("trailing characters");
    }
  } catch (const std::exception&) {
    throw UsageError("geometry must use WxH syntax, got '" + text + "'");
  }
  validate_geometry(g);
  return g;
}

enum class KernelKind { bilinear, bicubic };

inline std::string to_string(KernelKind k) {
  return k == KernelKind::bilinear ? "bilinear" : "bicubic";
}

inline KernelKind parse_kernel(const std::string& text) {
  if (text == "bilinear") return KernelKind::bilinear;
  if (text == "bicubic") return KernelKind::bicubic;
  throw UsageError("unknown kernel '" + text + "' (expected bilinear or bicubic)");
}

enum class MatchMethod { naive, constrained };

inline std::string to_string(MatchMethod m) {
  return m == MatchMethod::naive ? "naive" : "constrained";
}

inline MatchMethod parse_method(const std::string& text) {
  if (text == "naive") return MatchMethod::naive;
  if (text == "constrained") return MatchMethod::constrained;
  throw UsageError("unknown method '" + text + "' (expected naive or constrained)");
}

}  // namespace subspace
