#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "wxadapt/core/error.hpp"

namespace wxa::ag {

using Shape = std::vector<std::size_t>;

inline std::size_t numel_of(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

std::string shape_string(const Shape& shape);

template <typename T>
struct TensorNode {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // allocated on first accumulation
  bool requires_grad = false;
};

/// Shared handle to a dense array that may take part in a Tape.
/// Copies alias the same storage.
template <typename T>
class Tensor {
 public:
  Tensor() = default;

  Tensor(Shape shape, std::vector<T> data, bool requires_grad = false) : node_(std::make_shared<TensorNode<T>>()) {
    if (numel_of(shape) != data.size()) {
      throw ShapeError("Tensor: shape " + shape_string(shape) + " does not match " + std::to_string(data.size()) +
                       " values");
    }
    node_->shape = std::move(shape);
    node_->data = std::move(data);
    node_->requires_grad = requires_grad;
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) { return full(std::move(shape), T(0), requires_grad); }
  static Tensor full(Shape shape, T value, bool requires_grad = false) {
    const auto n = numel_of(shape);
    return Tensor(std::move(shape), std::vector<T>(n, value), requires_grad);
  }
  static Tensor scalar(T value, bool requires_grad = false) { return Tensor(Shape{}, {value}, requires_grad); }

  [[nodiscard]] bool defined() const { return static_cast<bool>(node_); }
  [[nodiscard]] const Shape& shape() const { return node_->shape; }
  [[nodiscard]] std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  [[nodiscard]] std::size_t rank() const { return node_->shape.size(); }
  [[nodiscard]] std::size_t numel() const { return node_->data.size(); }

  [[nodiscard]] std::span<T> data() { return node_->data; }
  [[nodiscard]] std::span<const T> data() const { return node_->data; }
  [[nodiscard]] T item() const {
    if (numel() != 1) throw ShapeError("Tensor::item on non-scalar " + shape_string(shape()));
    return node_->data[0];
  }

  [[nodiscard]] bool requires_grad() const { return node_ && node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }

  [[nodiscard]] bool has_grad() const { return !node_->grad.empty(); }
  /// Gradient buffer, zero-filled on first access.
  std::span<T> grad() {
    if (node_->grad.empty()) node_->grad.assign(node_->data.size(), T(0));
    return node_->grad;
  }
  [[nodiscard]] std::span<const T> grad() const { return node_->grad; }
  void zero_grad() { node_->grad.clear(); }

  /// Deep copy without tape history.
  [[nodiscard]] Tensor clone(bool requires_grad = false) const { return Tensor(shape(), node_->data, requires_grad); }

  [[nodiscard]] bool same_storage(const Tensor& other) const { return node_ == other.node_; }

 private:
  std::shared_ptr<TensorNode<T>> node_;
};

}  // namespace wxa::ag
