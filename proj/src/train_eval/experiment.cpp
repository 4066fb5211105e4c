#include "medfocus/train_eval/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <map>
#include <thread>

#include "medfocus/error.hpp"

namespace medfocus {

double ExperimentReport::mean_accuracy(const std::string& pipeline, double fraction) const {
  for (const auto& a : aggregates) {
    if (a.pipeline == pipeline && a.fraction == fraction) return a.mean_accuracy;
  }
  throw Error(ErrorKind::SchemaViolation, "no aggregate for " + pipeline);
}

namespace {

struct CellJob {
  double fraction;
  std::uint64_t seed;
  std::string pipeline;
  const SplitManifest* split;
};

struct Pipeline {
  MaskSource source;
  // every sample prepared once, shared read-only by all cells
  std::vector<Image> images;
};

LabeledImages gather(const Pipeline& pipe, const DatasetManifest& manifest, const std::vector<std::size_t>& indices) {
  LabeledImages out;
  for (std::size_t i : indices) {
    out.images.push_back(pipe.images[i]);
    out.labels.push_back(manifest.samples[i].label);
    out.indices.push_back(i);
  }
  return out;
}

ExperimentCell run_cell(const CellJob& job, const Pipeline& pipe, const DatasetManifest& manifest,
                        TrainConfig cfg, const LabeledImages& test_template) {
  cfg.seed = job.seed;
  cfg.mask_mode = pipe.source.mode;
  const LabeledImages train_set = gather(pipe, manifest, job.split->indices());
  const TrainResult trained = train(cfg, train_set);

  const Tensor train_features = extract_features(trained.params, train_set.images);
  const ProbeModel probe =
      fit_standardized_probe(train_features, train_set.labels, manifest.num_classes(), ProbeOptions{cfg.probe_l2});
  const LabeledImages test_set = gather(pipe, manifest, test_template.indices);
  const Tensor test_features = extract_features(trained.params, test_set.images);

  ExperimentCell cell;
  cell.pipeline = job.pipeline;
  cell.fraction = job.fraction;
  cell.seed = job.seed;
  cell.train_count = train_set.images.size();
  cell.initial_loss = trained.initial;
  cell.final_loss = trained.final_loss;
  cell.probe_iterations = probe.iterations;
  cell.probe_converged = probe.converged;
  cell.metrics = evaluate(probe, test_features, test_set.labels);
  return cell;
}

}  // namespace

ExperimentReport run_experiment(const DatasetManifest& manifest, const TrainConfig& base,
                                const ExperimentOptions& options) {
  if (options.fractions.empty() || options.seeds.empty()) {
    throw Error(ErrorKind::InvalidConfig, "experiment needs at least one fraction and one seed");
  }
  TrainConfig cfg = bind_dataset(base, manifest);
  cfg.validate();

  std::vector<double> fractions = options.fractions;
  std::vector<std::uint64_t> seeds = options.seeds;
  std::sort(fractions.begin(), fractions.end());
  fractions.erase(std::unique(fractions.begin(), fractions.end()), fractions.end());
  std::sort(seeds.begin(), seeds.end());
  seeds.erase(std::unique(seeds.begin(), seeds.end()), seeds.end());

  // Splits first, serially: they also land on disk under root/splits.
  std::map<std::pair<double, std::uint64_t>, SplitManifest> splits;
  for (double f : fractions)
    for (auto s : seeds) splits.emplace(std::pair{f, s}, materialize_split(manifest, f, s));

  const MaskMode masked_mode = cfg.mask_mode == MaskMode::None ? MaskMode::Builtin : cfg.mask_mode;
  std::map<std::string, Pipeline> pipelines;
  pipelines["masked"].source = {masked_mode, cfg.masks_dir, cfg.close_radius};
  pipelines["unmasked"].source = {MaskMode::None, {}, cfg.close_radius};
  for (auto& [_, pipe] : pipelines) {
    for (std::size_t i = 0; i < manifest.samples.size(); ++i) {
      pipe.images.push_back(prepare_image(manifest, i, pipe.source));
    }
  }
  LabeledImages test_template;
  test_template.indices = manifest.indices(Role::Test);

  std::vector<CellJob> jobs;
  for (double f : fractions)
    for (auto s : seeds)
      for (const auto& [name, _] : pipelines) jobs.push_back({f, s, name, &splits.at({f, s})});

  std::vector<ExperimentCell> cells(jobs.size());
  std::vector<std::exception_ptr> errors(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k = next++; k < jobs.size(); k = next++) {
      try {
        cells[k] = run_cell(jobs[k], pipelines.at(jobs[k].pipeline), manifest, cfg, test_template);
      } catch (...) {
        errors[k] = std::current_exception();
      }
    }
  };
  const std::size_t workers = std::clamp<std::size_t>(options.jobs, 1, jobs.size());
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (std::size_t t = 0; t < workers; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  ExperimentReport report;
  report.config = to_json(cfg);
  report.config["fractions"] = fractions;
  report.config["seeds"] = seeds;
  report.config["num_classes"] = cfg.arch.num_classes;
  report.cells = std::move(cells);
  for (const auto& [name, _] : pipelines) {
    for (double f : fractions) {
      std::vector<double> acc;
      for (const auto& c : report.cells)
        if (c.pipeline == name && c.fraction == f) acc.push_back(c.metrics.accuracy);
      double mean = 0.0;
      for (double a : acc) mean += a;
      mean /= static_cast<double>(acc.size());
      double var = 0.0;
      for (double a : acc) var += (a - mean) * (a - mean);
      var /= static_cast<double>(acc.size());
      report.aggregates.push_back({name, f, mean, std::sqrt(var), acc.size()});
    }
  }
  return report;
}

nlohmann::json to_json(const ExperimentReport& r) {
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : r.cells) {
    cells.push_back({{"pipeline", c.pipeline},
                     {"fraction", c.fraction},
                     {"seed", c.seed},
                     {"train_count", c.train_count},
                     {"accuracy", c.metrics.accuracy},
                     {"per_class_accuracy", c.metrics.per_class_accuracy},
                     {"confusion", c.metrics.confusion},
                     {"initial_loss", c.initial_loss.l_total},
                     {"final_loss", c.final_loss.l_total},
                     {"probe_iterations", c.probe_iterations},
                     {"probe_converged", c.probe_converged}});
  }
  nlohmann::json aggregates = nlohmann::json::array();
  for (const auto& a : r.aggregates) {
    aggregates.push_back({{"pipeline", a.pipeline},
                          {"fraction", a.fraction},
                          {"mean_accuracy", a.mean_accuracy},
                          {"std_accuracy", a.std_accuracy},
                          {"seeds", a.seeds}});
  }
  return {{"format", "medfocus-report/1"}, {"config", r.config}, {"cells", cells}, {"aggregates", aggregates}};
}

std::string report_csv(const ExperimentReport& r) {
  std::vector<double> fractions;
  std::vector<std::string> pipelines;
  for (const auto& a : r.aggregates) {
    if (std::find(fractions.begin(), fractions.end(), a.fraction) == fractions.end()) fractions.push_back(a.fraction);
    if (std::find(pipelines.begin(), pipelines.end(), a.pipeline) == pipelines.end()) pipelines.push_back(a.pipeline);
  }
  char buf[64];
  std::string out = "pipeline";
  for (double f : fractions) {
    std::snprintf(buf, sizeof buf, ",%g%%", f * 100.0);
    out += buf;
  }
  out += "\n";
  for (const auto& p : pipelines) {
    out += p;
    for (double f : fractions) {
      std::snprintf(buf, sizeof buf, ",%.4f", r.mean_accuracy(p, f));
      out += buf;
    }
    out += "\n";
  }
  return out;
}

}  // namespace medfocus
