#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <json.hpp>

#include "medfocus/encoders/model.hpp"
#include "medfocus/numerics/archive.hpp"
#include "medfocus/train_eval/train.hpp"

namespace medfocus {

/// meanpool_rows(M) for every image, stacked into [N x d]. No graph, no
/// parameter updates.
Tensor extract_features(const ModelParams& params, std::span<const Image> images);

/// {"features": [N x d], "labels": [N], "indices": [N]} as an MFC1 map.
TensorMap feature_archive(const Tensor& features, const LabeledImages& data);

struct ProbeModel {
  std::size_t num_classes = 0;
  std::size_t dim = 0;
  std::vector<double> weights;  // [C x d], row-major
  std::vector<double> bias;     // [C]
  std::size_t iterations = 0;
  double final_objective = 0.0;
  double grad_inf_norm = 0.0;
  bool converged = false;
  /// Per-feature standardization applied before W; empty means raw features.
  std::vector<double> feature_mean;
  std::vector<double> feature_scale;
};

struct ProbeOptions {
  double l2 = 1e-2;
  double tolerance = 1e-6;
  std::size_t max_iterations = 10000;
};

/// Multinomial logistic regression on fixed features:
///   (1/N) sum_i CE(W x_i + b, y_i) + (l2 / 2) ||W||^2
/// minimized from zero by full-batch gradient descent with Armijo backtracking
/// (Barzilai-Borwein trial steps) until ||grad||_inf < tolerance or the
/// iteration cap, in which case converged = false.
/// `features` is [N x d]. Throws MissingClass if a class has no sample.
ProbeModel logistic_probe(const Tensor& features, std::span<const std::size_t> labels, std::size_t num_classes,
                          const ProbeOptions& options = {});

/// Z-scores every feature column with the statistics of `features` (a
/// constant column keeps scale 1), fits logistic_probe on the result and
/// stores the statistics in the model so that probe_logits applies them.
ProbeModel fit_standardized_probe(const Tensor& features, std::span<const std::size_t> labels,
                                  std::size_t num_classes, const ProbeOptions& options = {});

/// The probe objective at the model's weights, on features after its standardization.
double probe_objective(const ProbeModel& probe, const Tensor& features, std::span<const std::size_t> labels,
                       double l2);
/// [N x C] logits, standardizing first when the model carries statistics.
std::vector<double> probe_logits(const ProbeModel& probe, const Tensor& features);

TensorMap probe_archive(const ProbeModel& probe);
ProbeModel probe_from_archive(const TensorMap& tensors);

struct Metrics {
  double accuracy = 0.0;
  std::vector<double> per_class_accuracy;
  /// confusion[true][predicted]
  std::vector<std::vector<std::size_t>> confusion;
};

/// argmax with ties toward the smaller class index.
std::size_t argmax(std::span<const double> values);

Metrics evaluate(const ProbeModel& probe, const Tensor& features, std::span<const std::size_t> labels);
Metrics metrics_from_predictions(std::span<const std::size_t> predicted, std::span<const std::size_t> labels,
                                 std::size_t num_classes);
nlohmann::json to_json(const Metrics& m);

}  // namespace medfocus
