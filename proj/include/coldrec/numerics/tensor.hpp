#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace coldrec::numerics {

using Shape = std::vector<std::size_t>;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

[[noreturn]] inline void shape_mismatch(const char* op, const Shape& a,
                                        const Shape& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_string(a) +
                   " and " + shape_string(b));
}

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  // Empty until the first accumulation reaches this node.
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  std::vector<double>& ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}

}  // namespace detail

// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_mode()) { detail::grad_mode() = false; }
  ~NoGradGuard() { detail::grad_mode() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

inline bool grad_enabled() { return detail::grad_mode(); }

// Shared handle to a dense row-major array of doubles. Copies alias the same
// storage; use clone() for an independent copy.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    const auto n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
  }

  static Tensor from(Shape shape, std::vector<double> values,
                     bool requires_grad = false) {
    return Tensor(std::move(shape), std::move(values), requires_grad);
  }

  static Tensor scalar(double v, bool requires_grad = false) {
    return Tensor(Shape{}, std::vector<double>{v}, requires_grad);
  }

  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false)
      : node_(std::make_shared<detail::Node>()) {
    if (shape_numel(shape) != values.size()) {
      throw ShapeError("tensor: shape " + shape_string(shape) + " holds " +
                       std::to_string(shape_numel(shape)) + " values, got " +
                       std::to_string(values.size()));
    }
    node_->shape = std::move(shape);
    node_->value = std::move(values);
    node_->requires_grad = requires_grad;
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t numel() const { return node_->value.size(); }

  std::span<double> values() { return node_->value; }
  std::span<const double> values() const { return node_->value; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool flag) { node_->requires_grad = flag; }

  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> mutable_grad() { return node_->ensure_grad(); }
  void zero_grad() {
    if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
  }
  void clear_grad() { node_->grad.clear(); }

  double item() const {
    if (numel() != 1) {
      throw ShapeError("item: tensor of shape " + shape_string(shape()) +
                       " is not a scalar");
    }
    return node_->value[0];
  }

  double operator[](std::size_t flat) const { return node_->value[flat]; }

  Tensor clone() const {
    return Tensor(node_->shape, node_->value, node_->requires_grad);
  }

  Tensor detach() const { return Tensor(node_->shape, node_->value, false); }

  Tensor reshape(Shape shape) const;

  // Internal access for op implementations.
  const std::shared_ptr<detail::Node>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

namespace detail {

// Creates the output node of an op. The backward closure is attached only when
// recording is on and some input needs gradients.
inline Tensor make_result(Shape shape, std::vector<double> value,
                          std::initializer_list<Tensor> inputs,
                          std::function<void(Node&)> backward_fn) {
  Tensor out(std::move(shape), std::move(value), false);
  if (!grad_mode()) return out;
  bool needs = false;
  for (const auto& t : inputs) needs = needs || t.requires_grad();
  if (!needs) return out;
  auto& node = *out.node();
  node.requires_grad = true;
  for (const auto& t : inputs) node.parents.push_back(t.node());
  node.backward_fn = std::move(backward_fn);
  return out;
}

}  // namespace detail

inline Tensor Tensor::reshape(Shape shape) const {
  if (shape_numel(shape) != numel()) shape_mismatch("reshape", this->shape(), shape);
  auto parent = node_;
  return detail::make_result(std::move(shape), node_->value, {*this},
                             [](detail::Node& self) {
                               auto& p = *self.parents[0];
                               if (!p.requires_grad) return;
                               auto& g = p.ensure_grad();
                               for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
                             });
}

// Reverse-mode sweep from a scalar. Gradients accumulate into every node that
// requires them; leaves without requires_grad are never touched.
inline void backward(const Tensor& loss) {
  if (loss.numel() != 1) {
    throw ShapeError("backward: loss must be a scalar, got shape " +
                     shape_string(loss.shape()));
  }
  auto root = loss.node();
  if (!root->requires_grad) return;

  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> visited;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(root.get(), 0);
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      auto* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->ensure_grad()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    auto* node = *it;
    if (node->backward_fn && !node->grad.empty()) node->backward_fn(*node);
  }
  // Intermediate buffers are released so repeated passes do not double count.
  for (auto* node : order) {
    if (node->backward_fn) node->grad.clear();
  }
}

}  // namespace coldrec::numerics
