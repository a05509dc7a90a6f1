// Copyright 2026 The posvit Authors
// SPDX-License-Identifier: Apache-2.0

#include "posvit/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <sstream>
#include <unordered_set>

#include "node.hpp"
#include "posvit/errors.hpp"

namespace posvit {

namespace {

bool finite_checks_default() {
#ifndef NDEBUG
  return true;
#else
  return std::getenv("POSVIT_CHECK_FINITE") != nullptr;
#endif
}

std::atomic<bool> g_finite_checks{finite_checks_default()};
std::atomic<std::uint64_t> g_order{0};

std::shared_ptr<detail::Node> make_leaf(Shape shape, std::vector<double> data,
                                        bool requires_grad) {
  for (std::size_t e : shape) {
    if (e == 0) throw DimensionError("tensor extents must be positive, got " + shape_string(shape));
  }
  if (shape_numel(shape) != data.size()) {
    throw DimensionError("tensor of shape " + shape_string(shape) + " needs " +
                         std::to_string(shape_numel(shape)) + " values, got " +
                         std::to_string(data.size()));
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->requires_grad = requires_grad;
  node->order = detail::next_order();
  return node;
}

const detail::Node& checked(const std::shared_ptr<detail::Node>& n) {
  if (!n) throw GraphError("use of an undefined tensor");
  return *n;
}

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << " x ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

void set_finite_checks(bool enabled) { g_finite_checks = enabled; }
bool finite_checks_enabled() { return g_finite_checks; }

namespace detail {

std::uint64_t next_order() { return g_order.fetch_add(1) + 1; }

namespace {

Tensor finish(std::shared_ptr<Node> node, std::span<const std::shared_ptr<Node>> inputs,
              std::function<void(Node&)> backward, const char* op_name) {
  if (g_finite_checks) {
    for (double v : node->data) {
      if (!std::isfinite(v)) {
        throw NumericError(std::string("non-finite value produced by ") + op_name +
                           " (output shape " + shape_string(node->shape) + ")");
      }
    }
  }
  const bool needs_grad = std::any_of(inputs.begin(), inputs.end(),
                                      [](const auto& in) { return in->requires_grad; });
  node->leaf = false;
  node->order = next_order();
  if (needs_grad) {
    node->requires_grad = true;
    node->inputs.assign(inputs.begin(), inputs.end());
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

std::shared_ptr<Node> bare(Shape shape, std::vector<double> data) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  return node;
}

}  // namespace

Tensor make_result(Shape shape, std::vector<double> data,
                   std::initializer_list<const Tensor*> inputs,
                   std::function<void(Node&)> backward, const char* op_name) {
  std::vector<std::shared_ptr<Node>> in;
  in.reserve(inputs.size());
  for (const Tensor* t : inputs) in.push_back(t->node());
  return finish(bare(std::move(shape), std::move(data)), in, std::move(backward), op_name);
}

Tensor make_result(Shape shape, std::vector<double> data, std::span<const Tensor> inputs,
                   std::function<void(Node&)> backward, const char* op_name) {
  std::vector<std::shared_ptr<Node>> in;
  in.reserve(inputs.size());
  for (const Tensor& t : inputs) in.push_back(t.node());
  return finish(bare(std::move(shape), std::move(data)), in, std::move(backward), op_name);
}

}  // namespace detail

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return Tensor(make_leaf(std::move(shape), std::vector<double>(n, 0.0), requires_grad));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return Tensor(make_leaf(std::move(shape), std::vector<double>(n, value), requires_grad));
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data, bool requires_grad) {
  return Tensor(make_leaf(std::move(shape), std::move(data), requires_grad));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(make_leaf({1}, {value}, requires_grad));
}

const Shape& Tensor::shape() const { return checked(node_).shape; }

std::size_t Tensor::extent(std::size_t axis) const {
  const Shape& s = shape();
  if (axis >= s.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " +
                         shape_string(s));
  }
  return s[axis];
}

std::size_t Tensor::numel() const { return checked(node_).data.size(); }

std::span<const double> Tensor::data() const { return checked(node_).data; }

std::span<double> Tensor::mutable_data() {
  checked(node_);
  if (!node_->leaf) throw GraphError("only leaf tensors can be modified in place");
  return node_->data;
}

double Tensor::item() const {
  const auto& n = checked(node_);
  if (n.data.size() != 1) {
    throw DimensionError("item() needs a single-element tensor, got " + shape_string(n.shape));
  }
  return n.data[0];
}

double Tensor::at(std::size_t row, std::size_t col) const {
  const auto& n = checked(node_);
  if (n.shape.size() != 2) throw DimensionError("at(row, col) needs a 2D tensor");
  if (row >= n.shape[0] || col >= n.shape[1]) {
    throw IndexError("index (" + std::to_string(row) + ", " + std::to_string(col) +
                     ") outside " + shape_string(n.shape));
  }
  return n.data[row * n.shape[1] + col];
}

bool Tensor::requires_grad() const { return checked(node_).requires_grad; }
bool Tensor::is_leaf() const { return checked(node_).leaf; }
bool Tensor::has_grad() const {
  const auto& n = checked(node_);
  return !n.grad.empty() && n.grad.size() == n.data.size();
}

std::span<const double> Tensor::grad() const {
  if (!has_grad()) throw GraphError("tensor has no gradient");
  return node_->grad;
}

std::span<double> Tensor::mutable_grad() {
  checked(node_);
  return node_->grad_buffer();
}

void Tensor::zero_grad() {
  checked(node_);
  std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::detach(bool requires_grad) const {
  const auto& n = checked(node_);
  return Tensor(make_leaf(n.shape, n.data, requires_grad));
}

void backward(const Tensor& loss) {
  if (!loss.defined()) throw GraphError("backward on an undefined tensor");
  detail::Node& root = *loss.node();
  if (root.data.size() != 1) {
    throw GraphError("backward needs a scalar loss, got shape " + shape_string(root.shape));
  }
  if (root.released) throw GraphError("backward called twice on the same graph (stale graph)");
  if (!root.requires_grad) throw GraphError("loss does not depend on any tensor that requires grad");

  std::vector<detail::Node*> order;
  std::vector<std::shared_ptr<detail::Node>> alive;
  std::unordered_set<detail::Node*> seen;
  std::vector<detail::Node*> stack{&root};
  seen.insert(&root);
  while (!stack.empty()) {
    detail::Node* n = stack.back();
    stack.pop_back();
    if (n->leaf) continue;
    if (n->released) throw GraphError("graph reaches a node already consumed by backward (stale graph)");
    order.push_back(n);
    for (const auto& in : n->inputs) {
      if (in->requires_grad && seen.insert(in.get()).second) {
        alive.push_back(in);
        stack.push_back(in.get());
      }
    }
  }
  std::sort(order.begin(), order.end(),
            [](const detail::Node* a, const detail::Node* b) { return a->order > b->order; });

  if (root.leaf) {
    root.grad_buffer()[0] += 1.0;
    return;
  }
  root.grad_buffer()[0] = 1.0;
  for (detail::Node* n : order) {
    if (n->backward && !n->grad.empty()) n->backward(*n);
    n->backward = nullptr;
    n->inputs.clear();
    n->grad.clear();
    n->grad.shrink_to_fit();
    n->released = true;
  }
}

}  // namespace posvit
