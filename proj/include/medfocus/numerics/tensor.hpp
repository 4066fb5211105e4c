#pragma once

// Dense f64 tensors with a reverse-mode tape.
//
// A Tensor is a cheap handle onto a shared node. Operations on tensors that
// require gradients record their parents and a backward closure; calling
// backward() on a scalar walks that graph once in reverse topological order.
// The graph is rebuilt by every forward pass.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace medfocus {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape) noexcept;
std::string shape_str(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until a backward pass reaches this node
  bool requires_grad = false;
  bool consumed = false;  // set on the root once backward() ran
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  std::vector<double>& ensure_grad() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
    return grad;
  }
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const noexcept { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const { return data().size(); }

  std::span<const double> data() const;
  /// Direct write access. Only meaningful on leaves (parameters, inputs).
  std::span<double> mutable_data();
  double item() const;
  double at(std::size_t i) const { return data()[i]; }
  double at(std::size_t r, std::size_t c) const;

  bool requires_grad() const;
  void set_requires_grad(bool flag);
  bool has_grad() const;
  /// Gradient buffer; zeros when no backward pass has reached this tensor.
  std::vector<double> grad() const;
  void zero_grad();

  /// Copy of the values with no graph history.
  Tensor detach() const;

  const std::shared_ptr<detail::Node>& node() const { return node_; }

  /// Builds an op result; `parents` are recorded only when gradients flow.
  static Tensor make_result(Shape shape, std::vector<double> values,
                            std::vector<Tensor> parents,
                            std::function<void(detail::Node&)> backward_fn,
                            const char* op_name);

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;
};

bool grad_enabled() noexcept;

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Reverse-mode accumulation from a scalar loss into every reachable leaf
/// that requires grad. Leaves not connected to the loss keep a zero grad.
/// Running backward twice on the same graph throws BackwardReused.
void backward(const Tensor& loss);

/// Throws NonFinite if any value is NaN or infinite.
void check_finite(std::span<const double> values, const char* what);

}  // namespace medfocus
