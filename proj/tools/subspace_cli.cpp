// Command-line front end for cross-scale subspace matching experiments:
// synthetic data generation, model learning, pairwise matching, evaluation
// grids and scale/noise sweeps. Every command is deterministic given its
// fully resolved configuration; all randomness flows from explicit seeds.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "subspace/dataset_io.hpp"
#include "subspace/evaluation.hpp"
#include "subspace/learning.hpp"
#include "subspace/matching.hpp"
#include "subspace/projection.hpp"
#include "subspace/rng.hpp"
#include "subspace/types.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string default_out_dir() {
  const char* env = std::getenv("SUBSPACE_OUT_DIR");
  return env != nullptr && *env != '\0' ? env : ".";
}

void maybe_print_config(bool enabled, const json& config) {
  if (enabled) std::cout << config.dump(2) << "\n";
}

std::string fmt(double value) { return subspace::io_detail::format_double(value); }

std::vector<subspace::KernelKind> parse_kernels(const std::vector<std::string>& names) {
  std::vector<subspace::KernelKind> kernels;
  for (const auto& n : names) kernels.push_back(subspace::parse_kernel(n));
  return kernels;
}

std::vector<subspace::MatchMethod> parse_methods(const std::vector<std::string>& names) {
  std::vector<subspace::MatchMethod> methods;
  for (const auto& n : names) methods.push_back(subspace::parse_method(n));
  return methods;
}

std::vector<subspace::ImageGeometry> parse_scales(const std::vector<std::string>& names) {
  std::vector<subspace::ImageGeometry> scales;
  for (const auto& n : names) scales.push_back(subspace::parse_geometry(n));
  return scales;
}

// ---------------------------------------------------------------------------

struct GenArgs {
  int classes = 5;
  int samples = 20;
  std::string size = "50x50";
  int dim = 4;
  int conditions = 1;
  std::uint64_t seed = 0;
  std::string out;
  bool print_config = false;
};

int cmd_gen_synthetic(const GenArgs& args) {
  const auto geometry = subspace::parse_geometry(args.size);
  const json config = {{"command", "gen-synthetic"}, {"classes", args.classes},
                       {"samples", args.samples},   {"size", args.size},
                       {"dim", args.dim},           {"conditions", args.conditions},
                       {"seed", args.seed},         {"out", args.out}};
  maybe_print_config(args.print_config, config);

  const auto sets = subspace::generate_synthetic_classes(args.classes, args.samples, geometry,
                                                         args.dim, args.seed, args.conditions);
  fs::create_directories(args.out);
  subspace::DatasetManifest manifest;
  manifest.geometry = geometry;
  manifest.provenance = config;
  int written = 0;
  for (const auto& set : sets) {
    subspace::DatasetManifest::Entry entry;
    entry.class_label = set.class_label;
    entry.condition_label = set.condition_label;
    for (std::size_t i = 0; i < set.samples.size(); ++i) {
      char name[128];
      std::snprintf(name, sizeof(name), "%s_c%s_%03zu.pgm", set.class_label.c_str(),
                    set.condition_label.c_str(), i);
      subspace::write_pgm((fs::path(args.out) / name).string(),
                          {geometry, set.samples[i]});
      entry.images.push_back(name);
      ++written;
    }
    manifest.entries.push_back(std::move(entry));
  }
  subspace::save_manifest(manifest, (fs::path(args.out) / "manifest.json").string());
  std::cout << "wrote " << written << " images and manifest.json to " << args.out << "\n";
  return 0;
}

// ---------------------------------------------------------------------------

struct LearnArgs {
  std::string manifest;
  std::string out;
  std::string scale;
  std::string kernel = "bilinear";
  double noise_sigma = 0.0;
  std::uint64_t noise_seed = 0;
  int dim = 0;
  double energy = 0.0;
  bool print_config = false;
};

int cmd_learn(const LearnArgs& args) {
  if ((args.dim > 0) == (args.energy > 0.0)) {
    throw subspace::UsageError("learn: give exactly one of --dim or --energy");
  }
  const json config = {{"command", "learn"},       {"manifest", args.manifest},
                       {"out", args.out},          {"scale", args.scale},
                       {"kernel", args.kernel},    {"noise_sigma", args.noise_sigma},
                       {"noise_seed", args.noise_seed}, {"dim", args.dim},
                       {"energy", args.energy}};
  maybe_print_config(args.print_config, config);

  auto sets = subspace::load_image_sets(args.manifest);
  const auto kernel = subspace::parse_kernel(args.kernel);
  if (!args.scale.empty()) {
    const auto low = subspace::parse_geometry(args.scale);
    const auto p = subspace::build_projection(sets.front().geometry, low, kernel);
    for (auto& set : sets) set = subspace::downsample_set(set, p);
  }
  if (args.noise_sigma > 0.0) {
    for (std::size_t i = 0; i < sets.size(); ++i) {
      sets[i] = subspace::add_gaussian_noise(sets[i], args.noise_sigma,
                                             subspace::mix_seed(args.noise_seed, {i}));
    }
  }

  fs::create_directories(args.out);
  subspace::ModelProvenance provenance;
  provenance.manifest_hash = subspace::content_hash(args.manifest);
  provenance.kernel = args.scale.empty() ? "" : args.kernel;
  provenance.parameters = config;
  for (const auto& set : sets) {
    const int dim =
        args.dim > 0 ? args.dim : subspace::choose_dimension(set, args.energy);
    const auto model = subspace::estimate_subspace(set, dim);
    const std::string name = set.class_label + "__" + set.condition_label + ".ssm";
    subspace::save_model(model, (fs::path(args.out) / name).string(), provenance);
    std::cout << name << ": d=" << model.geometry.pixel_count() << " D=" << model.dim()
              << " energy=" << fmt(model.energy_captured) << "\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------

struct MatchArgs {
  std::string low;
  std::string high;
  std::string method = "constrained";
  std::string kernel = "bilinear";
  std::string export_modes_prefix;
  std::string export_projection;
  bool no_mean = false;
  bool allow_degenerate = false;
  bool print_config = false;
};

int cmd_match(const MatchArgs& args) {
  const json config = {{"command", "match"},   {"low", args.low},
                       {"high", args.high},    {"method", args.method},
                       {"kernel", args.kernel}, {"export_modes", args.export_modes_prefix},
                       {"export_projection", args.export_projection},
                       {"no_mean", args.no_mean},
                       {"allow_degenerate", args.allow_degenerate}};
  maybe_print_config(args.print_config, config);

  const auto model_low = subspace::load_model(args.low);
  const auto model_high = subspace::load_model(args.high);
  const auto method = subspace::parse_method(args.method);
  const auto kernel = subspace::parse_kernel(args.kernel);
  if (model_low.geometry.pixel_count() > model_high.geometry.pixel_count()) {
    throw subspace::UsageError(
        "match: --low must be the smaller-geometry model (swap the arguments)");
  }

  const auto cm = subspace::prepare_correction_model(
      subspace::build_projection(model_high.geometry, model_low.geometry, kernel));
  subspace::MatchOptions options;
  options.allow_degenerate = args.allow_degenerate;
  const auto result =
      method == subspace::MatchMethod::naive
          ? subspace::naive_match(model_low.basis, model_high.basis, cm, options)
          : subspace::constrained_reconstruct(model_low.basis, model_high.basis, cm, options);

  std::cout << "method: " << subspace::to_string(result.method) << "\n";
  std::cout << "similarity: " << fmt(result.similarity) << "\n";
  std::cout << "spectrum:";
  for (Eigen::Index i = 0; i < result.spectrum.size(); ++i) {
    std::cout << ' ' << fmt(result.spectrum(i));
  }
  std::cout << "\n";

  if (!args.export_projection.empty()) {
    subspace::write_matrix_csv(cm.projection.entries, args.export_projection);
    std::cout << "projection matrix written to " << args.export_projection << "\n";
  }
  if (!args.export_modes_prefix.empty()) {
    Eigen::VectorXd mean_high;
    Eigen::VectorXd mean_low_rec;
    if (!args.no_mean) {
      mean_high = model_high.mean;
      mean_low_rec = cm.reverse * model_low.mean;
    }
    const auto files =
        subspace::export_modes(result, mean_high, mean_low_rec, model_high.geometry,
                               args.export_modes_prefix);
    std::cout << "wrote " << files.size() << " mode images\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------

struct EvaluateArgs {
  std::string gallery_dir;
  std::string probes_dir;
  std::vector<std::string> methods = {"naive", "constrained"};
  std::string kernel = "bilinear";
  int jobs = 1;
  std::string out_prefix;
  bool print_config = false;
};

std::vector<subspace::SubspaceModel> load_model_dir(const std::string& dir) {
  std::vector<std::string> paths;
  if (!fs::is_directory(dir)) {
    throw subspace::DataError("'" + dir + "' is not a directory");
  }
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() == ".ssm") paths.push_back(entry.path().string());
  }
  std::sort(paths.begin(), paths.end());
  if (paths.empty()) {
    throw subspace::DataError("no .ssm model files in '" + dir + "'");
  }
  std::vector<subspace::SubspaceModel> models;
  for (const auto& p : paths) {
    auto model = subspace::load_model(p);
    if (model.class_label.empty()) {
      model.class_label = fs::path(p).stem().string();
    }
    models.push_back(std::move(model));
  }
  std::sort(models.begin(), models.end(),
            [](const auto& a, const auto& b) { return a.class_label < b.class_label; });
  return models;
}

int cmd_evaluate(const EvaluateArgs& args) {
  // jobs is execution machinery, not experiment configuration: outputs are
  // byte-identical for any job count, so it stays out of the provenance.
  const json config = {{"command", "evaluate"},       {"gallery", args.gallery_dir},
                       {"probes", args.probes_dir},   {"methods", args.methods},
                       {"kernel", args.kernel},       {"out_prefix", args.out_prefix}};
  maybe_print_config(args.print_config, config);

  const auto gallery = load_model_dir(args.gallery_dir);
  const auto probes = load_model_dir(args.probes_dir);
  const auto kernel = subspace::parse_kernel(args.kernel);
  const auto methods = parse_methods(args.methods);

  subspace::CorrectionCache cache;
  std::vector<subspace::SeparationReport> reports;
  for (const auto method : methods) {
    subspace::EvalOptions options;
    options.jobs = args.jobs;
    options.cache = &cache;
    const auto sm = subspace::similarity_matrix(gallery, probes, kernel, method, options);
    subspace::write_similarity_csv(
        sm, args.out_prefix + "_" + subspace::to_string(method) + "_similarity.csv");
    auto report = subspace::class_separation(sm);
    report.method = method;
    report.kernel = kernel;
    report.low_geometry = probes.front().geometry;
    report.high_geometry = gallery.front().geometry;
    reports.push_back(report);
    std::cout << subspace::to_string(method) << ": e_w=" << fmt(report.within_confidence)
              << " e_b=" << fmt(report.between_confidence)
              << " mu=" << fmt(report.separation) << "\n";
  }
  subspace::write_report(reports, subspace::ReportFormat::csv,
                         args.out_prefix + "_separation.csv");
  subspace::write_report(reports, subspace::ReportFormat::json,
                         args.out_prefix + "_separation.json", config);
  return 0;
}

// ---------------------------------------------------------------------------

struct SweepArgs {
  std::string manifest;
  std::vector<std::string> scales;
  std::vector<std::string> kernels = {"bilinear", "bicubic"};
  std::vector<std::string> methods = {"naive", "constrained"};
  std::vector<double> noise_sigmas;
  int dim = 5;
  std::vector<std::uint64_t> seeds = {0};
  int jobs = 1;
  std::string out_prefix;
  bool print_config = false;
};

int cmd_sweep(const SweepArgs& args) {
  const json config = {{"command", "sweep"},     {"manifest", args.manifest},
                       {"scales", args.scales},  {"kernels", args.kernels},
                       {"methods", args.methods}, {"noise_sigmas", args.noise_sigmas},
                       {"dim", args.dim},        {"seeds", args.seeds},
                       {"out_prefix", args.out_prefix}};
  maybe_print_config(args.print_config, config);

  const auto data = subspace::load_image_sets(args.manifest);
  subspace::SweepConfig cfg;
  cfg.scales = parse_scales(args.scales);
  cfg.kernels = parse_kernels(args.kernels);
  cfg.methods = parse_methods(args.methods);
  cfg.subspace_dim = args.dim;
  cfg.jobs = args.jobs;

  subspace::CorrectionCache cache(cfg.scales.size() * cfg.kernels.size() + 1);

  std::vector<subspace::SeparationReport> scale_reports;
  for (const auto seed : args.seeds) {
    cfg.seed = seed;
    const auto batch = subspace::run_scale_sweep(cfg, data, &cache);
    scale_reports.insert(scale_reports.end(), batch.begin(), batch.end());
  }
  subspace::write_report(scale_reports, subspace::ReportFormat::csv,
                         args.out_prefix + "_scale.csv");
  subspace::write_report(scale_reports, subspace::ReportFormat::json,
                         args.out_prefix + "_scale.json", config);
  for (const auto& row : subspace::scale_improvement_ratios(scale_reports)) {
    std::cout << "scale " << subspace::format_geometry(row.scale) << " "
              << subspace::to_string(row.kernel)
              << " mu_constrained/mu_naive = " << fmt(row.ratio) << "\n";
  }

  if (!args.noise_sigmas.empty()) {
    cfg.noise_sigmas = args.noise_sigmas;
    std::vector<subspace::SeparationReport> noise_reports;
    for (const auto seed : args.seeds) {
      cfg.seed = seed;
      const auto batch = subspace::run_noise_sweep(cfg, data, &cache);
      noise_reports.insert(noise_reports.end(), batch.begin(), batch.end());
    }
    subspace::write_report(noise_reports, subspace::ReportFormat::csv,
                           args.out_prefix + "_noise.csv");
    subspace::write_report(noise_reports, subspace::ReportFormat::json,
                           args.out_prefix + "_noise.json", config);

    // Change relative to the sigma = 0 baseline, per (seed, scale, kernel, method).
    for (const auto& r : noise_reports) {
      for (const auto& base : noise_reports) {
        if (base.noise_sigma == 0.0 && base.seed == r.seed && base.method == r.method &&
            base.kernel == r.kernel && base.low_geometry == r.low_geometry) {
          std::cout << "noise sigma=" << fmt(r.noise_sigma) << " "
                    << subspace::format_geometry(r.low_geometry) << " "
                    << subspace::to_string(r.kernel) << " " << subspace::to_string(r.method)
                    << " seed=" << r.seed << " mu/mu0 = "
                    << fmt(subspace::separation_ratio(r.separation, base.separation)) << "\n";
          break;
        }
      }
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cross-scale linear subspace matching toolkit"};
  app.require_subcommand(1);
  app.set_config("--config", "", "Read option defaults from an INI file");

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-synthetic", "Generate a synthetic multi-class dataset");
  gen_cmd->add_option("--classes", gen.classes, "Number of classes (M >= 2)");
  gen_cmd->add_option("--samples", gen.samples, "Samples per (class, condition) set");
  gen_cmd->add_option("--size", gen.size, "Image geometry, WxH");
  gen_cmd->add_option("--dim", gen.dim, "Planted intrinsic dimension");
  gen_cmd->add_option("--conditions", gen.conditions, "Acquisition conditions per class");
  gen_cmd->add_option("--seed", gen.seed, "Generator seed");
  gen_cmd->add_option("--out", gen.out, "Output directory");
  gen_cmd->add_flag("--print-config", gen.print_config, "Echo the resolved configuration");

  LearnArgs learn;
  auto* learn_cmd = app.add_subcommand("learn", "Estimate subspace models from a manifest");
  learn_cmd->add_option("--manifest", learn.manifest, "Dataset manifest path")->required();
  learn_cmd->add_option("--out", learn.out, "Output directory for .ssm models");
  learn_cmd->add_option("--scale", learn.scale, "Downsample to WxH before learning");
  learn_cmd->add_option("--kernel", learn.kernel, "bilinear|bicubic");
  learn_cmd->add_option("--noise-sigma", learn.noise_sigma, "Additive Gaussian noise level");
  learn_cmd->add_option("--noise-seed", learn.noise_seed, "Noise seed");
  learn_cmd->add_option("--dim", learn.dim, "Subspace dimension D");
  learn_cmd->add_option("--energy", learn.energy, "Pick smallest D reaching this energy");
  learn_cmd->add_flag("--print-config", learn.print_config, "Echo the resolved configuration");

  MatchArgs match_args;
  auto* match_cmd = app.add_subcommand("match", "Match a low-res model against a high-res one");
  match_cmd->add_option("--low", match_args.low, "Low-resolution model file")->required();
  match_cmd->add_option("--high", match_args.high, "High-resolution model file")->required();
  match_cmd->add_option("--method", match_args.method, "naive|constrained");
  match_cmd->add_option("--kernel", match_args.kernel, "bilinear|bicubic");
  match_cmd->add_option("--export-modes", match_args.export_modes_prefix,
                        "Write mode image pairs with this path prefix");
  match_cmd->add_option("--export-projection", match_args.export_projection,
                        "Write the projection matrix as CSV");
  match_cmd->add_flag("--no-mean", match_args.no_mean, "Export modes without mean offsets");
  match_cmd->add_flag("--allow-degenerate", match_args.allow_degenerate,
                      "Downgrade the D >= d_l degeneracy error to a warning");
  match_cmd->add_flag("--print-config", match_args.print_config,
                      "Echo the resolved configuration");

  EvaluateArgs eval;
  auto* eval_cmd = app.add_subcommand("evaluate", "Similarity matrix and class separation");
  eval_cmd->add_option("--gallery", eval.gallery_dir, "Directory of gallery models")->required();
  eval_cmd->add_option("--probes", eval.probes_dir, "Directory of probe models")->required();
  eval_cmd->add_option("--methods", eval.methods, "Comma-separated methods")->delimiter(',');
  eval_cmd->add_option("--kernel", eval.kernel, "bilinear|bicubic");
  eval_cmd->add_option("--jobs", eval.jobs, "Parallel matching jobs");
  eval_cmd->add_option("--out", eval.out_prefix, "Output path prefix");
  eval_cmd->add_flag("--print-config", eval.print_config, "Echo the resolved configuration");

  SweepArgs sweep;
  auto* sweep_cmd = app.add_subcommand("sweep", "Scale and noise sweeps over a dataset");
  sweep_cmd->add_option("--manifest", sweep.manifest, "High-resolution dataset manifest")
      ->required();
  sweep_cmd->add_option("--scales", sweep.scales, "Comma-separated WxH list")
      ->required()
      ->delimiter(',');
  sweep_cmd->add_option("--kernels", sweep.kernels, "Comma-separated kernel list")
      ->delimiter(',');
  sweep_cmd->add_option("--methods", sweep.methods, "Comma-separated method list")
      ->delimiter(',');
  sweep_cmd->add_option("--noise-sigmas", sweep.noise_sigmas, "Comma-separated sigma list")
      ->delimiter(',');
  sweep_cmd->add_option("--dim", sweep.dim, "Subspace dimension D");
  sweep_cmd->add_option("--seeds", sweep.seeds, "Comma-separated seed list")->delimiter(',');
  sweep_cmd->add_option("--jobs", sweep.jobs, "Parallel matching jobs");
  sweep_cmd->add_option("--out", sweep.out_prefix, "Output path prefix");
  sweep_cmd->add_flag("--print-config", sweep.print_config, "Echo the resolved configuration");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (gen_cmd->parsed()) {
      if (gen.out.empty()) gen.out = default_out_dir();
      return cmd_gen_synthetic(gen);
    }
    if (learn_cmd->parsed()) {
      if (learn.out.empty()) learn.out = default_out_dir();
      return cmd_learn(learn);
    }
    if (match_cmd->parsed()) {
      return cmd_match(match_args);
    }
    if (eval_cmd->parsed()) {
      if (eval.out_prefix.empty()) {
        eval.out_prefix = (fs::path(default_out_dir()) / "evaluate").string();
      }
      return cmd_evaluate(eval);
    }
    if (sweep_cmd->parsed()) {
      if (sweep.out_prefix.empty()) {
        sweep.out_prefix = (fs::path(default_out_dir()) / "sweep").string();
      }
      return cmd_sweep(sweep);
    }
  } catch (const subspace::UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const subspace::DegeneracyError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const subspace::DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const subspace::DimensionError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
