#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "medfocus/fewshot/manifest.hpp"
#include "medfocus/train_eval/probe.hpp"
#include "medfocus/train_eval/train.hpp"

namespace medfocus {

struct ExperimentCell {
  std::string pipeline;  // "masked" or "unmasked"
  double fraction = 1.0;
  std::uint64_t seed = 0;
  std::size_t train_count = 0;
  LossBreakdown initial_loss;
  LossBreakdown final_loss;
  std::size_t probe_iterations = 0;
  bool probe_converged = false;
  Metrics metrics;
};

struct ExperimentAggregate {
  std::string pipeline;
  double fraction = 1.0;
  double mean_accuracy = 0.0;
  double std_accuracy = 0.0;  // population standard deviation over seeds
  std::size_t seeds = 0;
};

struct ExperimentReport {
  nlohmann::json config;
  std::vector<ExperimentCell> cells;  // fraction asc, seed asc, pipeline asc
  std::vector<ExperimentAggregate> aggregates;

  double mean_accuracy(const std::string& pipeline, double fraction) const;
};

struct ExperimentOptions {
  std::vector<double> fractions{0.05, 0.1, 0.2, 0.5, 1.0};
  std::vector<std::uint64_t> seeds{0};
  std::size_t jobs = 1;
};

/// Trains and probes the masked pipeline (cfg.mask_mode, Builtin if None) and
/// the unmasked pipeline (None) on identical splits for every
/// (fraction, seed), evaluating each on the full test set.
ExperimentReport run_experiment(const DatasetManifest& manifest, const TrainConfig& cfg,
                                const ExperimentOptions& options);

nlohmann::json to_json(const ExperimentReport& report);
/// One row per pipeline, one column per fraction (mean accuracy over seeds).
std::string report_csv(const ExperimentReport& report);

}  // namespace medfocus
