#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace mcwes {

namespace detail {

struct Node {
  std::vector<int> shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until backward touches this node
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Accumulates this node's grad into its parents' grads.
  std::function<void(Node&)> backward_fn;

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  }
};

}  // namespace detail

/// Dense row-major tensor of doubles with reverse-mode gradients.
/// Value-semantics handle over a shared graph node; ops in ops.hpp build the
/// graph eagerly (values are computed at construction time).
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
  static Tensor full(std::vector<int> shape, double value, bool requires_grad = false);
  static Tensor from_data(std::vector<int> shape, std::vector<double> data,
                          bool requires_grad = false);
  static Tensor scalar(double value);

  bool defined() const { return node_ != nullptr; }
  const std::vector<int>& shape() const { return node_->shape; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  int dim(int i) const { return node_->shape[static_cast<size_t>(i)]; }
  int64_t numel() const { return node_->numel(); }

  std::vector<double>& data() { return node_->data; }
  const std::vector<double>& data() const { return node_->data; }
  std::vector<double>& grad() { return node_->grad; }
  const std::vector<double>& grad() const { return node_->grad; }
  bool requires_grad() const { return node_->requires_grad; }

  // 2D element access (tests and small fixtures; hot paths index data() directly).
  double at(int i, int j) const { return node_->data[static_cast<size_t>(i) * dim(1) + j]; }
  double at(int i) const { return node_->data[static_cast<size_t>(i)]; }
  /// Value of a single-element tensor.
  double value() const {
    if (numel() != 1) throw std::invalid_argument("Tensor::value: not a scalar");
    return node_->data[0];
  }

  void zero_grad() { node_->grad.assign(node_->data.size(), 0.0); }

  /// Reverse-mode pass from this scalar. Grads of every node reachable through
  /// the graph are reset first, so one call yields exactly d(this)/d(leaf).
  void backward();

  /// True when every grad entry is finite. Tensors never touched by backward
  /// (empty grad) count as finite.
  bool grad_finite() const;

  std::shared_ptr<detail::Node> node() const { return node_; }
  static Tensor wrap(std::shared_ptr<detail::Node> n) {
    Tensor t;
    t.node_ = std::move(n);
    return t;
  }

 private:
  std::shared_ptr<detail::Node> node_;
};

inline int64_t shape_numel(const std::vector<int>& shape) {
  int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

}  // namespace mcwes
