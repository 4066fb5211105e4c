#include "medfocus/train_eval/probe.hpp"

#include <algorithm>
#include <cmath>

#include "medfocus/error.hpp"
#include "medfocus/fusion/heads.hpp"
#include "medfocus/numerics/ops.hpp"

namespace medfocus {

Tensor extract_features(const ModelParams& params, std::span<const Image> images) {
  if (images.empty()) throw Error(ErrorKind::EmptySplit, "no images to extract features from");
  std::vector<Tensor> rows;
  rows.reserve(images.size());
  for (const Image& image : images) rows.push_back(fused_feature(params, image));
  NoGradGuard no_grad;
  return stack_rows(rows).detach();
}

TensorMap feature_archive(const Tensor& features, const LabeledImages& data) {
  std::vector<double> labels(data.labels.begin(), data.labels.end());
  std::vector<double> indices(data.indices.begin(), data.indices.end());
  const std::size_t n = labels.size();
  return {{"features", features.detach()},
          {"labels", Tensor::from({n}, std::move(labels))},
          {"indices", Tensor::from({n}, std::move(indices))}};
}

namespace {

struct Problem {
  const double* x;  // [N x d]
  std::size_t n, d, c;
  std::span<const std::size_t> labels;
  double l2;
};

// Parameters are packed as [W (c x d) | b (c)].
double objective_and_grad(const Problem& p, const std::vector<double>& theta, std::vector<double>* grad) {
  const double* W = theta.data();
  const double* b = theta.data() + p.c * p.d;
  if (grad) grad->assign(theta.size(), 0.0);
  std::vector<double> z(p.c);
  double loss = 0.0;
  for (std::size_t i = 0; i < p.n; ++i) {
    const double* xi = p.x + i * p.d;
    for (std::size_t k = 0; k < p.c; ++k) {
      double acc = b[k];
      for (std::size_t j = 0; j < p.d; ++j) acc += W[k * p.d + j] * xi[j];
      z[k] = acc;
    }
    const double mx = *std::max_element(z.begin(), z.end());
    double se = 0.0;
    for (double v : z) se += std::exp(v - mx);
    const double lse = mx + std::log(se);
    loss += lse - z[p.labels[i]];
    if (grad) {
      for (std::size_t k = 0; k < p.c; ++k) {
        const double r = std::exp(z[k] - lse) - (k == p.labels[i] ? 1.0 : 0.0);
        double* gw = grad->data() + k * p.d;
        for (std::size_t j = 0; j < p.d; ++j) gw[j] += r * xi[j];
        (*grad)[p.c * p.d + k] += r;
      }
    }
  }
  const double inv_n = 1.0 / static_cast<double>(p.n);
  double reg = 0.0;
  for (std::size_t k = 0; k < p.c * p.d; ++k) reg += W[k] * W[k];
  if (grad) {
    for (double& g : *grad) g *= inv_n;
    for (std::size_t k = 0; k < p.c * p.d; ++k) (*grad)[k] += p.l2 * W[k];
  }
  return loss * inv_n + 0.5 * p.l2 * reg;
}

double inf_norm(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

Problem make_problem(const Tensor& features, std::span<const std::size_t> labels, std::size_t num_classes,
                     double l2) {
  if (features.rank() != 2 || features.dim(0) != labels.size()) {
    throw Error(ErrorKind::DimensionMismatch, "probe: features " + shape_str(features.shape()) + " for " +
                                                  std::to_string(labels.size()) + " labels");
  }
  for (auto l : labels) {
    if (l >= num_classes) throw Error(ErrorKind::LabelOutOfRange, "probe label " + std::to_string(l));
  }
  return {features.data().data(), features.dim(0), features.dim(1), num_classes, labels, l2};
}

Tensor standardize(const ProbeModel& m, const Tensor& features) {
  if (m.feature_mean.empty()) return features;
  if (features.rank() != 2 || features.dim(1) != m.feature_mean.size()) {
    throw Error(ErrorKind::DimensionMismatch, "probe expects " + std::to_string(m.feature_mean.size()) +
                                                  "-dim features, got " + shape_str(features.shape()));
  }
  const std::size_t d = features.dim(1);
  std::vector<double> z(features.data().begin(), features.data().end());
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = (z[i] - m.feature_mean[i % d]) / m.feature_scale[i % d];
  return Tensor::from(features.shape(), std::move(z));
}

std::vector<double> pack(const ProbeModel& m) {
  std::vector<double> theta = m.weights;
  theta.insert(theta.end(), m.bias.begin(), m.bias.end());
  return theta;
}

}  // namespace

ProbeModel logistic_probe(const Tensor& features, std::span<const std::size_t> labels, std::size_t num_classes,
                          const ProbeOptions& options) {
  const Problem p = make_problem(features, labels, num_classes, options.l2);
  std::vector<std::size_t> seen(num_classes, 0);
  for (auto l : labels) ++seen[l];
  for (std::size_t k = 0; k < num_classes; ++k) {
    if (seen[k] == 0) throw Error(ErrorKind::MissingClass, "class " + std::to_string(k) + " has no sample");
  }

  std::vector<double> theta(num_classes * p.d + num_classes, 0.0);
  std::vector<double> grad, next_grad, trial(theta.size());
  double f = objective_and_grad(p, theta, &grad);
  double step = 1.0;
  constexpr double kArmijo = 1e-4;
  ProbeModel model;
  model.num_classes = num_classes;
  model.dim = p.d;

  std::size_t it = 0;
  for (; it < options.max_iterations; ++it) {
    if (inf_norm(grad) < options.tolerance) {
      model.converged = true;
      break;
    }
    double gg = 0.0;
    for (double g : grad) gg += g * g;
    double f_trial = 0.0;
    for (;;) {
      for (std::size_t k = 0; k < theta.size(); ++k) trial[k] = theta[k] - step * grad[k];
      f_trial = objective_and_grad(p, trial, nullptr);
      if (f_trial <= f - kArmijo * step * gg || step < 1e-20) break;
      step *= 0.5;
    }
    if (!(f_trial <= f)) break;  // no descent possible at machine precision
    objective_and_grad(p, trial, &next_grad);
    // Barzilai-Borwein trial step for the next iteration.
    double ss = 0.0, sy = 0.0;
    for (std::size_t k = 0; k < theta.size(); ++k) {
      const double s = trial[k] - theta[k];
      const double y = next_grad[k] - grad[k];
      ss += s * s;
      sy += s * y;
    }
    step = sy > 0.0 ? std::clamp(ss / sy, 1e-10, 1e10) : std::min(step * 2.0, 1e10);
    theta.swap(trial);
    grad.swap(next_grad);
    f = f_trial;
  }
  if (!model.converged && inf_norm(grad) < options.tolerance) model.converged = true;
  model.iterations = it;
  model.final_objective = f;
  model.grad_inf_norm = inf_norm(grad);
  model.weights.assign(theta.begin(), theta.begin() + static_cast<std::ptrdiff_t>(num_classes * p.d));
  model.bias.assign(theta.begin() + static_cast<std::ptrdiff_t>(num_classes * p.d), theta.end());
  return model;
}

ProbeModel fit_standardized_probe(const Tensor& features, std::span<const std::size_t> labels,
                                  std::size_t num_classes, const ProbeOptions& options) {
  if (features.rank() != 2) throw Error(ErrorKind::DimensionMismatch, "probe features must be a matrix");
  const std::size_t n = features.dim(0), d = features.dim(1);
  auto X = features.data();
  std::vector<double> mean(d, 0.0), scale(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) mean[j] += X[i * d + j];
  for (double& m : mean) m /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) scale[j] += (X[i * d + j] - mean[j]) * (X[i * d + j] - mean[j]);
  for (double& s : scale) {
    s = std::sqrt(s / static_cast<double>(n));
    if (!(s > 1e-12)) s = 1.0;
  }
  ProbeModel stats;
  stats.feature_mean = std::move(mean);
  stats.feature_scale = std::move(scale);
  ProbeModel model = logistic_probe(standardize(stats, features), labels, num_classes, options);
  model.feature_mean = std::move(stats.feature_mean);
  model.feature_scale = std::move(stats.feature_scale);
  return model;
}

double probe_objective(const ProbeModel& probe, const Tensor& features, std::span<const std::size_t> labels,
                       double l2) {
  const Tensor z = standardize(probe, features);
  const Problem p = make_problem(z, labels, probe.num_classes, l2);
  if (p.d != probe.dim) throw Error(ErrorKind::DimensionMismatch, "probe dimension");
  return objective_and_grad(p, pack(probe), nullptr);
}

std::vector<double> probe_logits(const ProbeModel& probe, const Tensor& raw) {
  const Tensor features = standardize(probe, raw);
  if (features.rank() != 2 || features.dim(1) != probe.dim) {
    throw Error(ErrorKind::DimensionMismatch, "probe expects " + std::to_string(probe.dim) +
                                                  "-dim features, got " + shape_str(features.shape()));
  }
  const std::size_t n = features.dim(0), d = probe.dim, c = probe.num_classes;
  auto X = features.data();
  std::vector<double> out(n * c);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < c; ++k) {
      double acc = probe.bias[k];
      for (std::size_t j = 0; j < d; ++j) acc += probe.weights[k * d + j] * X[i * d + j];
      out[i * c + k] = acc;
    }
  }
  return out;
}

TensorMap probe_archive(const ProbeModel& probe) {
  TensorMap out{{"weights", Tensor::from({probe.num_classes, probe.dim}, probe.weights)},
          {"bias", Tensor::from({probe.num_classes}, probe.bias)},
          {"meta", Tensor::from({4}, {static_cast<double>(probe.iterations), probe.final_objective,
                                      probe.grad_inf_norm, probe.converged ? 1.0 : 0.0})}};
  if (!probe.feature_mean.empty()) {
    out.emplace("feature_mean", Tensor::from({probe.dim}, probe.feature_mean));
    out.emplace("feature_scale", Tensor::from({probe.dim}, probe.feature_scale));
  }
  return out;
}

ProbeModel probe_from_archive(const TensorMap& tensors) {
  auto get = [&](const char* name) -> const Tensor& {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw Error(ErrorKind::SchemaViolation, std::string("probe archive lacks ") + name);
    return it->second;
  };
  const Tensor& w = get("weights");
  const Tensor& b = get("bias");
  const Tensor& meta = get("meta");
  if (w.rank() != 2 || b.numel() != w.dim(0) || meta.numel() != 4) {
    throw Error(ErrorKind::SchemaViolation, "probe archive shapes are inconsistent");
  }
  ProbeModel m;
  m.num_classes = w.dim(0);
  m.dim = w.dim(1);
  m.weights.assign(w.data().begin(), w.data().end());
  m.bias.assign(b.data().begin(), b.data().end());
  m.iterations = static_cast<std::size_t>(meta.at(0));
  m.final_objective = meta.at(1);
  m.grad_inf_norm = meta.at(2);
  m.converged = meta.at(3) != 0.0;
  const auto mean = tensors.find("feature_mean");
  const auto scale = tensors.find("feature_scale");
  if ((mean == tensors.end()) != (scale == tensors.end())) {
    throw Error(ErrorKind::SchemaViolation, "probe archive needs both feature_mean and feature_scale");
  }
  if (mean != tensors.end()) {
    if (mean->second.numel() != m.dim || scale->second.numel() != m.dim) {
      throw Error(ErrorKind::SchemaViolation, "probe standardization has the wrong length");
    }
    m.feature_mean.assign(mean->second.data().begin(), mean->second.data().end());
    m.feature_scale.assign(scale->second.data().begin(), scale->second.data().end());
  }
  return m;
}

std::size_t argmax(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < values.size(); ++k) {
    if (values[k] > values[best]) best = k;
  }
  return best;
}

Metrics metrics_from_predictions(std::span<const std::size_t> predicted, std::span<const std::size_t> labels,
                                 std::size_t num_classes) {
  if (predicted.size() != labels.size() || labels.empty()) {
    throw Error(ErrorKind::DimensionMismatch, "metrics: prediction and label counts differ");
  }
  Metrics m;
  m.confusion.assign(num_classes, std::vector<std::size_t>(num_classes, 0));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= num_classes || predicted[i] >= num_classes) {
      throw Error(ErrorKind::LabelOutOfRange, "metrics: class index out of range");
    }
    ++m.confusion[labels[i]][predicted[i]];
    correct += predicted[i] == labels[i];
  }
  m.accuracy = static_cast<double>(correct) / static_cast<double>(labels.size());
  for (std::size_t k = 0; k < num_classes; ++k) {
    std::size_t total = 0;
    for (auto v : m.confusion[k]) total += v;
    m.per_class_accuracy.push_back(total ? static_cast<double>(m.confusion[k][k]) / static_cast<double>(total) : 0.0);
  }
  return m;
}

Metrics evaluate(const ProbeModel& probe, const Tensor& features, std::span<const std::size_t> labels) {
  if (features.rank() != 2 || features.dim(0) != labels.size()) {
    throw Error(ErrorKind::DimensionMismatch, "evaluate: features and labels disagree");
  }
  const auto logits = probe_logits(probe, features);
  std::vector<std::size_t> predicted(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    predicted[i] = argmax(std::span(logits).subspan(i * probe.num_classes, probe.num_classes));
  }
  return metrics_from_predictions(predicted, labels, probe.num_classes);
}

nlohmann::json to_json(const Metrics& m) {
  return {{"accuracy", m.accuracy}, {"per_class_accuracy", m.per_class_accuracy}, {"confusion", m.confusion}};
}

}  // namespace medfocus
