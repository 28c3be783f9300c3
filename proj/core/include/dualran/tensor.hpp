#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace dualran {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Node of the dynamic gradient graph. Every Tensor owns one.
///
/// A node is a leaf when it was created directly (parameters, inputs) and an
/// interior node when it is the result of an op recorded while grad mode was
/// on. Interior nodes keep their parents alive, so the graph for one forward
/// pass lives exactly as long as the tensors that reference it; backward()
/// releases the interior links once the gradients are propagated.
template <typename T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;
  bool requires_grad = false;
  bool leaf = true;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  /// Gradient buffer, allocated (zeroed) on first use.
  std::span<T> grad_buffer() {
    if (grad.size() != value.size()) grad.assign(value.size(), T{});
    return grad;
  }
  /// Gradient buffer of parent `i`, or an empty span when that parent does
  /// not take gradients.
  std::span<T> parent_grad(std::size_t i) {
    auto& p = parents[i];
    if (!p->requires_grad) return {};
    return p->grad_buffer();
  }
  std::span<const T> parent_value(std::size_t i) const { return parents[i]->value; }
};

/// Dense row-major tensor participating in reverse-mode differentiation.
///
/// Tensors are cheap handles: copying one shares the underlying node. Values
/// of non-leaf tensors never change after creation.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  static Tensor from_data(Shape shape, std::vector<T> data, bool requires_grad = false);
  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T value, bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->value.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  /// Extent of the last axis.
  std::size_t cols() const;
  /// Product of all leading extents (1 for rank-1 tensors).
  std::size_t rows() const;

  std::span<const T> data() const { return node_->value; }
  /// Writable view of a leaf's values (parameter updates, initialisation).
  /// Throws ContractError on interior nodes, whose values are immutable.
  std::span<T> mutable_data();
  T item() const;
  T at(std::size_t row, std::size_t col) const { return node_->value[row * cols() + col]; }

  bool requires_grad() const { return node_->requires_grad; }
  bool is_leaf() const { return node_->leaf; }
  /// Accumulated gradient; empty before the first backward that reaches it.
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad() { return node_->grad_buffer(); }
  void zero_grad();

  /// New leaf holding a copy of this tensor's values.
  Tensor detach(bool requires_grad = false) const;

  Node<T>* node() const { return node_.get(); }
  const std::shared_ptr<Node<T>>& node_ptr() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

/// Thread-local switch for graph recording. While a NoGradGuard is alive on a
/// thread, ops on that thread produce constant tensors.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_mode_enabled();

/// Builds the result of a differentiable op. When recording is on and any
/// input requires gradients, the result is linked to `inputs` and `backward`
/// is run during backward(); otherwise the result is a constant.
template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> value, std::vector<Tensor<T>> inputs,
                      std::function<void(Node<T>&)> backward);

/// Reverse-mode sweep from a scalar loss. Leaf gradients accumulate; the
/// interior graph is released afterwards.
template <typename T>
void backward(const Tensor<T>& loss);

using Tensorf = Tensor<float>;
using Tensord = Tensor<double>;

}  // namespace dualran
