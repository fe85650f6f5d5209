// SPDX-License-Identifier: Apache-2.0
#include "emoda/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <sstream>
#include <unordered_set>

#include "emoda/errors.hpp"

namespace emoda {
namespace {

thread_local bool g_grad_enabled = true;

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

namespace detail {

std::vector<double>& Node::ensure_grad() {
  if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  return grad;
}

std::uint64_t next_seq() {
  static std::atomic<std::uint64_t> counter{0};
  return counter.fetch_add(1, std::memory_order_relaxed);
}

Tensor make_result(const char* op, Shape shape, std::vector<double> data,
                   std::vector<Tensor> parents, std::function<void(Node&)> backward) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->seq = next_seq();
  node->op = op;
  const bool track = NoGradGuard::grad_enabled() &&
                     std::any_of(parents.begin(), parents.end(),
                                 [](const Tensor& p) { return p.requires_grad(); });
  if (track) {
    node->requires_grad = true;
    node->parents.reserve(parents.size());
    for (auto& p : parents) node->parents.push_back(p.node());
    node->backward = std::move(backward);
  }
  return Tensor::from_node(std::move(node));
}

}  // namespace detail

Tensor Tensor::from_node(std::shared_ptr<detail::Node> node) { return Tensor(std::move(node)); }

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const auto n = shape_numel(shape);
  return from_data(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data, bool requires_grad) {
  if (shape_numel(shape) != data.size()) {
    throw DimensionError("tensor shape " + shape_string(shape) + " does not match " +
                         std::to_string(data.size()) + " values");
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->requires_grad = requires_grad;
  node->seq = detail::next_seq();
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from_data({}, {value}, requires_grad); }

const Shape& Tensor::shape() const { return impl_->shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= impl_->shape.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " +
                         shape_string(impl_->shape));
  }
  return impl_->shape[axis];
}

std::size_t Tensor::numel() const { return impl_->data.size(); }
std::span<const double> Tensor::data() const { return impl_->data; }
std::span<double> Tensor::mutable_data() { return impl_->data; }

double Tensor::item() const {
  if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_string(shape()));
  return impl_->data[0];
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

void Tensor::set_requires_grad(bool flag) {
  if (!is_leaf()) throw ContractError("requires_grad can only be set on leaf tensors");
  impl_->requires_grad = flag;
}

bool Tensor::is_leaf() const { return impl_->is_leaf(); }
bool Tensor::has_grad() const { return !impl_->grad.empty(); }
std::span<const double> Tensor::grad() const { return impl_->grad; }
std::span<double> Tensor::mutable_grad() { return impl_->ensure_grad(); }

void Tensor::zero_grad() {
  if (has_grad()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

Tensor Tensor::detach() const { return from_data(impl_->shape, impl_->data, false); }

void Tensor::backward() const {
  if (!defined() || numel() != 1) {
    throw ContractError("backward() requires a scalar loss, got shape " +
                        (defined() ? shape_string(shape()) : std::string("<undefined>")));
  }
  if (!requires_grad()) return;
  GradTape::record(*this).replay(*this);
}

GradTape GradTape::record(const Tensor& root) {
  GradTape tape;
  std::unordered_set<const detail::Node*> seen;
  std::vector<std::shared_ptr<detail::Node>> stack{root.node()};
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto n = std::move(stack.back());
    stack.pop_back();
    for (const auto& p : n->parents) {
      if (p->requires_grad && seen.insert(p.get()).second) stack.push_back(p);
    }
    tape.nodes_.push_back(std::move(n));
  }
  std::sort(tape.nodes_.begin(), tape.nodes_.end(),
            [](const auto& a, const auto& b) { return a->seq < b->seq; });
  return tape;
}

void GradTape::replay(const Tensor& root) const {
  for (const auto& n : nodes_) {
    if (!n->is_leaf()) n->grad.assign(n->data.size(), 0.0);
  }
  root.node()->ensure_grad()[0] += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    auto& n = **it;
    if (n.backward) n.backward(n);
  }
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool NoGradGuard::grad_enabled() { return g_grad_enabled; }

}  // namespace emoda
