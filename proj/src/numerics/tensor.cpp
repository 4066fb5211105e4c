#include "medfocus/numerics/tensor.hpp"

#include <cmath>
#include <sstream>
#include <unordered_set>

#include "medfocus/error.hpp"

namespace medfocus {

namespace {
thread_local bool t_grad_enabled = true;
}  // namespace

std::size_t shape_numel(const Shape& shape) noexcept {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

void check_finite(std::span<const double> values, const char* what) {
  for (double v : values) {
    if (!std::isfinite(v)) throw Error(ErrorKind::NonFinite, std::string(what) + " produced a non-finite value");
  }
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  for (auto e : shape) {
    if (e == 0) throw Error(ErrorKind::ShapeMismatch, "zero extent in shape " + shape_str(shape));
  }
  if (shape_numel(shape) != values.size()) {
    throw Error(ErrorKind::ShapeMismatch, "shape " + shape_str(shape) + " does not hold " +
                                              std::to_string(values.size()) + " values");
  }
  check_finite(values, "tensor construction");
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->data = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  std::vector<double> values(shape_numel(shape), value);
  return from(std::move(shape), std::move(values), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from({}, {value}, requires_grad); }

const Shape& Tensor::shape() const { return node_->shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= rank()) throw Error(ErrorKind::ShapeMismatch, "axis out of range for " + shape_str(shape()));
  return shape()[axis];
}

std::span<const double> Tensor::data() const { return node_->data; }

std::span<double> Tensor::mutable_data() { return node_->data; }

double Tensor::item() const {
  if (numel() != 1) throw Error(ErrorKind::ShapeMismatch, "item() on tensor of shape " + shape_str(shape()));
  return node_->data[0];
}

double Tensor::at(std::size_t r, std::size_t c) const { return node_->data[r * shape()[1] + c]; }

bool Tensor::requires_grad() const { return node_->requires_grad; }

void Tensor::set_requires_grad(bool flag) { node_->requires_grad = flag; }

bool Tensor::has_grad() const { return !node_->grad.empty(); }

std::vector<double> Tensor::grad() const {
  if (node_->grad.empty()) return std::vector<double>(node_->data.size(), 0.0);
  return node_->grad;
}

void Tensor::zero_grad() { node_->grad.clear(); }

Tensor Tensor::detach() const { return from(shape(), node_->data, false); }

Tensor Tensor::make_result(Shape shape, std::vector<double> values, std::vector<Tensor> parents,
                           std::function<void(detail::Node&)> backward_fn, const char* op_name) {
  check_finite(values, op_name);
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->data = std::move(values);
  bool needs = false;
  if (t_grad_enabled) {
    for (const auto& p : parents) needs = needs || p.requires_grad();
  }
  if (needs) {
    node->requires_grad = true;
    node->parents.reserve(parents.size());
    for (auto& p : parents) node->parents.push_back(p.node_);
    node->backward_fn = std::move(backward_fn);
  }
  return Tensor(std::move(node));
}

bool grad_enabled() noexcept { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }

NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1 || loss.rank() > 1) {
    throw Error(ErrorKind::NonScalarLoss,
                "backward() needs a scalar loss, got " + (loss.defined() ? shape_str(loss.shape()) : "undefined"));
  }
  detail::Node* root = loss.node().get();
  if (root->consumed) throw Error(ErrorKind::BackwardReused, "backward() already ran on this graph");
  root->consumed = true;
  if (!root->requires_grad) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack{{root, 0}};
  seen.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node* parent = node->parents[next++].get();
      if (parent->requires_grad && seen.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->ensure_grad()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* node = *it;
    if (!node->backward_fn || node->grad.empty()) continue;
    for (auto& p : node->parents) {
      if (p->requires_grad) p->ensure_grad();
    }
    node->backward_fn(*node);
  }
  // Interior gradients are no longer needed; leaves keep theirs.
  for (detail::Node* node : order) {
    if (node->backward_fn) {
      node->grad.clear();
      node->grad.shrink_to_fit();
    }
  }
}

}  // namespace medfocus
