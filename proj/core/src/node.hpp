// Copyright 2026 The posvit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <vector>

#include "posvit/tensor.hpp"

namespace posvit::detail {

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until something accumulates into it
  bool requires_grad = false;
  bool leaf = true;
  bool released = false;
  std::uint64_t order = 0;  // creation counter; inputs always precede outputs
  std::vector<std::shared_ptr<Node>> inputs;
  // Propagates this node's grad into its inputs' grad buffers.
  std::function<void(Node&)> backward;

  std::span<double> grad_buffer() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
    return grad;
  }
  Node& input(std::size_t i) { return *inputs[i]; }
};

std::uint64_t next_order();

/// Builds an op result. The node is attached to the graph (and keeps its
/// inputs alive) only if some input requires a gradient; `backward` is
/// installed in that case only.
Tensor make_result(Shape shape, std::vector<double> data,
                   std::initializer_list<const Tensor*> inputs,
                   std::function<void(Node&)> backward, const char* op_name);

Tensor make_result(Shape shape, std::vector<double> data,
                   std::span<const Tensor> inputs,
                   std::function<void(Node&)> backward, const char* op_name);

}  // namespace posvit::detail
