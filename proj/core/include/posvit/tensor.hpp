// Copyright 2026 The posvit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace posvit {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

namespace detail {
struct Node;
}

/// Dense row-major array of doubles with an optional gradient buffer.
///
/// A Tensor is a cheap handle: copies share the same underlying node. Tensors
/// produced by differentiable ops remember their inputs so that `backward`
/// can replay the adjoint computation. Leaves created with
/// `requires_grad = true` accumulate gradients across backward calls until
/// `zero_grad` is called.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> data,
                          bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t dim() const { return shape().size(); }
  std::size_t extent(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  /// Writable view of a leaf's values. Throws GraphError for op outputs.
  std::span<double> mutable_data();
  double item() const;
  double at(std::size_t row, std::size_t col) const;

  bool requires_grad() const;
  bool is_leaf() const;
  bool has_grad() const;
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  /// New leaf holding a copy of the values, outside any graph.
  Tensor detach(bool requires_grad = false) const;

  bool same_node(const Tensor& other) const { return node_ == other.node_; }

  // Used by op implementations.
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

/// Runs reverse-mode accumulation from a scalar loss into every leaf that
/// requires a gradient. The graph is released afterwards; calling backward
/// again on the same loss throws GraphError.
void backward(const Tensor& loss);

/// When enabled, every op output is scanned for NaN/Inf and a NumericError is
/// thrown at the first offending op. Enabled by default in debug builds or
/// when the POSVIT_CHECK_FINITE environment variable is set.
void set_finite_checks(bool enabled);
bool finite_checks_enabled();

}  // namespace posvit
