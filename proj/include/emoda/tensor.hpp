// SPDX-License-Identifier: Apache-2.0
#pragma once

// Reverse-mode automatic differentiation over dense float64 tensors.
//
// A Tensor is a cheap shared handle to a graph node. Leaf tensors that
// require grad (parameters) accumulate gradients across backward calls;
// interior nodes have their gradient buffers reset at the start of every
// backward pass.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace emoda {

using Shape = std::vector<std::size_t>;
using Rng = std::mt19937_64;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first needed
  bool requires_grad = false;
  std::uint64_t seq = 0;  // creation order; parents always precede children
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  bool is_leaf() const { return parents.empty(); }
  std::vector<double>& ensure_grad();
};

std::uint64_t next_seq();

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(impl_); }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  std::span<double> mutable_data();
  double item() const;

  bool requires_grad() const;
  void set_requires_grad(bool flag);
  bool is_leaf() const;
  bool has_grad() const;
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  /// New leaf holding a copy of the values, disconnected from the graph.
  Tensor detach() const;

  /// Populates gradients of every reachable tensor that requires grad.
  /// The receiver must be a scalar (numel == 1).
  void backward() const;

  const std::shared_ptr<detail::Node>& node() const { return impl_; }
  static Tensor from_node(std::shared_ptr<detail::Node> node);

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : impl_(std::move(node)) {}
  std::shared_ptr<detail::Node> impl_;
};

/// Reachable nodes of a graph in creation order. Replaying the tape back to
/// front visits every node after all of its consumers.
class GradTape {
 public:
  static GradTape record(const Tensor& root);

  const std::vector<std::shared_ptr<detail::Node>>& nodes() const { return nodes_; }
  void replay(const Tensor& root) const;

 private:
  std::vector<std::shared_ptr<detail::Node>> nodes_;
};

/// Disables graph construction on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

  static bool grad_enabled();

 private:
  bool previous_;
};

namespace detail {

/// Builds an op result. The node is attached to the graph only when grad
/// mode is on and some parent requires grad.
Tensor make_result(const char* op, Shape shape, std::vector<double> data,
                   std::vector<Tensor> parents, std::function<void(Node&)> backward);

}  // namespace detail
}  // namespace emoda
