// medfocus: command-line front end for data generation, segmentation,
// training, probing, evaluation, the masked-vs-unmasked experiment and the
// gradient check.
//
// Exit codes: 0 success, 1 validation error, 2 runtime error. Every
// subcommand prints one line of JSON on stdout; diagnostics go to stderr.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "medfocus/error.hpp"
#include "medfocus/fewshot/manifest.hpp"
#include "medfocus/fewshot/split.hpp"
#include "medfocus/fewshot/synthetic.hpp"
#include "medfocus/fusion/loss_check.hpp"
#include "medfocus/numerics/archive.hpp"
#include "medfocus/segmenter/segment.hpp"
#include "medfocus/train_eval/experiment.hpp"
#include "medfocus/train_eval/probe.hpp"
#include "medfocus/train_eval/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace medfocus;

namespace {

constexpr double kGradTolerance = 1e-4;

struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string config_hash(const json& config) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : config.dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void emit(json summary, const json& config, std::uint64_t seed) {
  summary["seed"] = seed;
  summary["config_hash"] = config_hash(config);
  std::cout << summary.dump() << std::endl;
}

void check_fraction(double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw Error(ErrorKind::FractionOutOfRange, "fraction " + std::to_string(fraction) + " outside (0, 1]");
  }
}

fs::path manifest_path(const fs::path& data) {
  return fs::is_directory(data) ? data / "manifest.json" : data;
}

json read_json_file(const fs::path& path) {
  try {
    return json::parse(read_text_file(path));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::InvalidConfig, path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------- gen-data

struct GenArgs {
  fs::path out;
  GenConfig cfg;
};

void add_gen(CLI::App& app, GenArgs& a) {
  auto* cmd = app.add_subcommand("gen-data", "Generate the synthetic organ/lesion dataset");
  cmd->add_option("--out", a.out, "Dataset root directory")->required();
  cmd->add_option("--seed", a.cfg.seed, "Generator seed")->capture_default_str();
  cmd->add_option("--classes", a.cfg.num_classes, "Number of classes (1-6)")->capture_default_str();
  cmd->add_option("--per-class", a.cfg.per_class_train, "Train images per class")->capture_default_str();
  cmd->add_option("--per-class-test", a.cfg.per_class_test, "Test images per class")->capture_default_str();
  cmd->add_option("--clutter", a.cfg.clutter_strength, "Background clutter strength in [0,1]")->capture_default_str();
  cmd->add_option("--spurious-train", a.cfg.spurious_corr_train, "Marker/label correlation in train")
      ->capture_default_str();
  cmd->add_option("--spurious-test", a.cfg.spurious_corr_test, "Marker/label correlation in test")
      ->capture_default_str();
}

void run_gen(const GenArgs& a) {
  a.cfg.validate();
  const auto manifest = generate_synthetic(a.cfg, a.out);
  emit({{"command", "gen-data"}, {"manifest", (a.out / "manifest.json").generic_string()},
        {"samples", manifest.samples.size()}, {"classes", manifest.classes}},
       to_json(a.cfg), a.cfg.seed);
}

// ---------------------------------------------------------------- segment

struct SegmentArgs {
  fs::path data;
  fs::path out;
  fs::path external;
  int close_radius = 2;
};

void add_segment(CLI::App& app, SegmentArgs& a) {
  auto* cmd = app.add_subcommand("segment", "Write one <id>.mask.pgm per dataset image");
  cmd->add_option("--data", a.data, "Dataset root or manifest.json")->required();
  cmd->add_option("--out", a.out, "Mask output directory")->required();
  cmd->add_option("--external", a.external, "Ingest <id>.mask.pgm files from this directory instead of segmenting");
  cmd->add_option("--close-radius", a.close_radius, "Closing radius of the built-in segmenter")->capture_default_str();
}

void run_segment(const SegmentArgs& a) {
  if (a.close_radius < 0) throw ValidationError("--close-radius must be >= 0");
  const auto manifest = read_manifest(manifest_path(a.data));
  fs::create_directories(a.out);
  double iou_sum = 0.0;
  std::size_t above = 0;
  for (std::size_t i = 0; i < manifest.samples.size(); ++i) {
    const Image image = read_image(manifest.image_path(i));
    const Mask mask = a.external.empty()
                          ? segment(image, {a.close_radius})
                          : load_external_mask(a.external / (manifest.samples[i].id + ".mask.pgm"), image.width,
                                               image.height);
    write_mask(a.out / (manifest.samples[i].id + ".mask.pgm"), mask);
    const double score = iou(mask, load_external_mask(manifest.mask_path(i), image.width, image.height));
    iou_sum += score;
    above += score >= 0.8;
  }
  const json config = {{"source", a.external.empty() ? "builtin" : "external"}, {"close_radius", a.close_radius}};
  const double n = static_cast<double>(manifest.samples.size());
  emit({{"command", "segment"}, {"masks", manifest.samples.size()}, {"mean_iou", iou_sum / n},
        {"fraction_iou_ge_0.8", static_cast<double>(above) / n}},
       config, 0);
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  fs::path data, masks, config, out;
  double fraction = 1.0;
  std::uint64_t seed = 0;
  std::string mask_mode;
};

void add_train(CLI::App& app, TrainArgs& a) {
  auto* cmd = app.add_subcommand("train", "Train encoder, fusion and head with the composite loss");
  cmd->add_option("--data", a.data, "Dataset root or manifest.json")->required();
  cmd->add_option("--masks", a.masks, "Directory of <id>.mask.pgm files");
  cmd->add_option("--config", a.config, "Flat JSON training config; flags override it");
  cmd->add_option("--fraction", a.fraction, "Per-class fraction of train samples in (0,1]")->capture_default_str();
  cmd->add_option("--seed", a.seed, "Split, initialization and shuffle seed")->capture_default_str();
  cmd->add_option("--out", a.out, "Output directory (checkpoint.mfc + checkpoint.json)")->required();
  cmd->add_option("--mask-mode", a.mask_mode, "builtin | external | none (default from config, else builtin)")
      ->check(CLI::IsMember({"builtin", "external", "none"}));
}

TrainConfig resolve_config(const fs::path& config_file, const fs::path& masks, const std::string& mask_mode,
                           std::uint64_t seed) {
  TrainConfig cfg;
  if (!config_file.empty()) cfg = apply_config_json(cfg, read_json_file(config_file));
  if (!masks.empty()) cfg.masks_dir = masks;
  if (!mask_mode.empty()) cfg.mask_mode = mask_mode_from_string(mask_mode);
  cfg.seed = seed;
  return cfg;
}

void run_train(const TrainArgs& a) {
  check_fraction(a.fraction);
  const auto manifest = read_manifest(manifest_path(a.data));
  TrainConfig cfg = bind_dataset(resolve_config(a.config, a.masks, a.mask_mode, a.seed), manifest);
  cfg.validate();
  const SplitManifest split = materialize_split(manifest, a.fraction, a.seed);
  const TrainResult result = train(cfg, manifest, split);

  json config = to_json(cfg);
  config["fraction"] = a.fraction;
  const json meta = {{"config", config},
                     {"split", split_to_json(split)},
                     {"epoch_losses", result.epoch_losses},
                     {"initial_loss", result.initial.l_total},
                     {"final_loss", result.final_loss.l_total}};
  const fs::path ckpt = a.out / "checkpoint.mfc";
  save_checkpoint(ckpt, result.params, meta);
  emit({{"command", "train"}, {"checkpoint", ckpt.generic_string()}, {"train_count", split.indices().size()},
        {"initial_loss", result.initial.l_total}, {"final_loss", result.final_loss.l_total}},
       config, a.seed);
}

// ---------------------------------------------------------------- probe

struct ProbeArgs {
  fs::path ckpt, data, masks, out;
  double fraction = 1.0;
  std::uint64_t seed = 0;
};

void add_probe(CLI::App& app, ProbeArgs& a) {
  auto* cmd = app.add_subcommand("probe", "Fit a logistic-regression probe on frozen fused features");
  cmd->add_option("--ckpt", a.ckpt, "Checkpoint (.mfc)")->required();
  cmd->add_option("--data", a.data, "Dataset root or manifest.json")->required();
  cmd->add_option("--masks", a.masks, "Directory of <id>.mask.pgm files (default: as recorded at training)");
  cmd->add_option("--fraction", a.fraction, "Per-class fraction of train samples in (0,1]")->capture_default_str();
  cmd->add_option("--seed", a.seed, "Split seed")->capture_default_str();
  cmd->add_option("--out", a.out, "Output directory (train_features.mfc, probe.mfc, probe.json)")->required();
}

struct LoadedModel {
  Checkpoint ckpt;
  TrainConfig cfg;
};

LoadedModel load_model(const fs::path& ckpt_path, const fs::path& masks_override) {
  LoadedModel m{load_checkpoint(ckpt_path), {}};
  const json stored = m.ckpt.meta.value("config", json::object());
  json flat = json::object();
  for (const auto& [k, v] : stored.items())
    if (k != "fraction") flat[k] = v;
  m.cfg = apply_config_json(TrainConfig{}, flat);
  m.cfg.arch = m.ckpt.params.arch;
  if (!masks_override.empty()) m.cfg.masks_dir = masks_override;
  return m;
}

MaskSource mask_source(const TrainConfig& cfg) { return {cfg.mask_mode, cfg.masks_dir, cfg.close_radius}; }

void run_probe(const ProbeArgs& a) {
  check_fraction(a.fraction);
  const auto manifest = read_manifest(manifest_path(a.data));
  const LoadedModel model = load_model(a.ckpt, a.masks);
  if (model.cfg.arch.num_classes != manifest.num_classes()) {
    throw Error(ErrorKind::ArchMismatch, "checkpoint and dataset disagree on the class count");
  }
  const SplitManifest split = materialize_split(manifest, a.fraction, a.seed);
  const LabeledImages data = load_images(manifest, split.indices(), mask_source(model.cfg));
  const Tensor features = extract_features(model.ckpt.params, data.images);
  const ProbeModel probe =
      fit_standardized_probe(features, data.labels, manifest.num_classes(), ProbeOptions{model.cfg.probe_l2});
  const Metrics train_metrics = evaluate(probe, features, data.labels);

  write_archive(a.out / "train_features.mfc", feature_archive(features, data));
  write_archive(a.out / "probe.mfc", probe_archive(probe));
  json config = to_json(model.cfg);
  config["fraction"] = a.fraction;
  config["split_seed"] = a.seed;
  const json summary = {{"command", "probe"},
                        {"train_count", data.images.size()},
                        {"iterations", probe.iterations},
                        {"converged", probe.converged},
                        {"objective", probe.final_objective},
                        {"train_accuracy", train_metrics.accuracy}};
  write_text_file(a.out / "probe.json", json{{"summary", summary}, {"config", config}}.dump(2) + "\n");
  if (!probe.converged) std::cerr << "warning: NoConvergence after " << probe.iterations << " iterations\n";
  emit(summary, config, a.seed);
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
  fs::path ckpt, probe, data, masks, out;
};

void add_eval(CLI::App& app, EvalArgs& a) {
  auto* cmd = app.add_subcommand("eval", "Evaluate a probe on the full test set");
  cmd->add_option("--ckpt", a.ckpt, "Checkpoint (.mfc)")->required();
  cmd->add_option("--probe", a.probe, "Probe archive (probe.mfc)")->required();
  cmd->add_option("--data", a.data, "Dataset root or manifest.json")->required();
  cmd->add_option("--masks", a.masks, "Directory of <id>.mask.pgm files (default: as recorded at training)");
  cmd->add_option("--out", a.out, "Output directory (test_features.mfc, metrics.json)")->required();
}

void run_eval(const EvalArgs& a) {
  const auto manifest = read_manifest(manifest_path(a.data));
  const LoadedModel model = load_model(a.ckpt, a.masks);
  const ProbeModel probe = probe_from_archive(read_archive(a.probe));
  if (probe.dim != model.cfg.arch.embed_dim || probe.num_classes != manifest.num_classes()) {
    throw Error(ErrorKind::ArchMismatch, "probe does not match checkpoint/dataset");
  }
  const LabeledImages data = load_images(manifest, manifest.indices(Role::Test), mask_source(model.cfg));
  const Tensor features = extract_features(model.ckpt.params, data.images);
  const Metrics metrics = evaluate(probe, features, data.labels);
  write_archive(a.out / "test_features.mfc", feature_archive(features, data));
  const json config = to_json(model.cfg);
  write_text_file(a.out / "metrics.json", json{{"metrics", to_json(metrics)}, {"config", config}}.dump(2) + "\n");
  emit({{"command", "eval"}, {"test_count", data.images.size()}, {"accuracy", metrics.accuracy}}, config,
       model.cfg.seed);
}

// ---------------------------------------------------------------- experiment

struct ExperimentArgs {
  fs::path data, config, out, masks;
  std::vector<double> fractions{0.05, 0.1, 0.2, 0.5, 1.0};
  std::vector<std::uint64_t> seeds{0};
  std::size_t jobs = 1;
};

void add_experiment(CLI::App& app, ExperimentArgs& a) {
  auto* cmd = app.add_subcommand("experiment", "Masked vs unmasked pipelines across fractions and seeds");
  cmd->add_option("--data", a.data, "Dataset root or manifest.json")->required();
  cmd->add_option("--config", a.config, "Flat JSON training config");
  cmd->add_option("--masks", a.masks, "Directory of <id>.mask.pgm files for the masked pipeline");
  cmd->add_option("--fractions", a.fractions, "Comma-separated fractions")->delimiter(',')->capture_default_str();
  cmd->add_option("--seeds", a.seeds, "Comma-separated seeds")->delimiter(',')->capture_default_str();
  cmd->add_option("--out", a.out, "Output directory (report.json, report.csv)")->required();
  cmd->add_option("--jobs", a.jobs, "Cells run in parallel")->capture_default_str()->check(CLI::PositiveNumber);
}

void run_experiment_cmd(const ExperimentArgs& a) {
  for (double f : a.fractions) check_fraction(f);
  const auto manifest = read_manifest(manifest_path(a.data));
  TrainConfig cfg = resolve_config(a.config, a.masks, "", 0);
  const auto start = std::chrono::steady_clock::now();
  const ExperimentReport report = run_experiment(manifest, cfg, {a.fractions, a.seeds, a.jobs});
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  write_text_file(a.out / "report.json", to_json(report).dump(2) + "\n");
  write_text_file(a.out / "report.csv", report_csv(report));
  json means = json::object();
  for (const auto& agg : report.aggregates) {
    char key[32];
    std::snprintf(key, sizeof key, "%g", agg.fraction);
    means[agg.pipeline][key] = agg.mean_accuracy;
  }
  std::cerr << "experiment finished in " << seconds << " s\n";
  emit({{"command", "experiment"}, {"cells", report.cells.size()}, {"mean_accuracy", means},
        {"report", (a.out / "report.json").generic_string()}},
       report.config, a.seeds.empty() ? 0 : a.seeds.front());
}

// ---------------------------------------------------------------- gradcheck

struct GradcheckArgs {
  std::size_t trials = 1;
  std::string arch = "default";
  std::size_t coords = 0;
  double lambda = 0.5;
};

void add_gradcheck(CLI::App& app, GradcheckArgs& a) {
  auto* cmd = app.add_subcommand("gradcheck", "Finite-difference check of the full composite loss (h = 1e-4)");
  cmd->add_option("--trials", a.trials, "Number of random initializations")->capture_default_str()
      ->check(CLI::PositiveNumber);
  cmd->add_option("--arch", a.arch, "default (training architecture, sampled coordinates) | small (every coordinate of a 16x16 model)")->capture_default_str()
      ->check(CLI::IsMember({"small", "default"}));
  cmd->add_option("--coords", a.coords, "Coordinates sampled per tensor, 0 = all (default arch uses 4 when 0)")
      ->capture_default_str();
  cmd->add_option("--lambda", a.lambda, "Loss trade-off in [0,1]")->capture_default_str();
}

void run_gradcheck(const GradcheckArgs& a) {
  if (!(a.lambda >= 0.0 && a.lambda <= 1.0)) throw Error(ErrorKind::LambdaOutOfRange, "--lambda outside [0, 1]");
  ArchConfig arch = small_check_arch();
  std::size_t coords = a.coords;
  if (a.arch == "default") {
    arch = ArchConfig{};
    arch.vocab = default_vocab(arch.num_classes);
    if (coords == 0) coords = 4;
  }
  const auto start = std::chrono::steady_clock::now();
  double worst = 0.0;
  std::string worst_name;
  std::size_t checked = 0;
  for (std::size_t t = 0; t < a.trials; ++t) {
    const LossCheckResult r = composite_loss_grad_check(arch, t, a.lambda, 1e-4, coords);
    checked += r.coordinates;
    if (r.max_relative_error >= worst) {
      worst = r.max_relative_error;
      worst_name = r.worst_parameter;
    }
  }
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  json config = {{"arch", to_json(arch)}, {"h", 1e-4}, {"lambda", a.lambda}, {"trials", a.trials},
                 {"coords", coords}};
  const bool pass = worst < kGradTolerance;
  emit({{"command", "gradcheck"}, {"max_relative_error", worst}, {"worst_parameter", worst_name},
        {"coordinates", checked}, {"seconds", seconds}, {"pass", pass}},
       config, 0);
  if (!pass) {
    std::cerr << "gradcheck failed: max relative error " << worst << " >= " << kGradTolerance << " in "
              << worst_name << "\n";
    std::exit(2);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"medfocus: mask-prompted vision-language few-shot classification"};
  app.require_subcommand(1);
  GenArgs gen;
  SegmentArgs seg;
  TrainArgs tr;
  ProbeArgs pr;
  EvalArgs ev;
  ExperimentArgs ex;
  GradcheckArgs gc;
  add_gen(app, gen);
  add_segment(app, seg);
  add_train(app, tr);
  add_probe(app, pr);
  add_eval(app, ev);
  add_experiment(app, ex);
  add_gradcheck(app, gc);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    return 1;
  }

  try {
    if (app.got_subcommand("gen-data")) run_gen(gen);
    else if (app.got_subcommand("segment")) run_segment(seg);
    else if (app.got_subcommand("train")) run_train(tr);
    else if (app.got_subcommand("probe")) run_probe(pr);
    else if (app.got_subcommand("eval")) run_eval(ev);
    else if (app.got_subcommand("experiment")) run_experiment_cmd(ex);
    else if (app.got_subcommand("gradcheck")) run_gradcheck(gc);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return is_validation_error(e.kind()) ? 1 : 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
