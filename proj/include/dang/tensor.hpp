#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "dang/errors.hpp"

namespace dang {

template <class Scalar>
using ArrayX = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

using Shape = std::vector<int>;

inline std::int64_t shape_numel(const Shape& s) {
  std::int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

// One node of the gradient graph. Values are immutable after the forward op
// that created them; only `grad` is written during backward.
template <class Scalar>
struct TensorNode {
  Shape shape;
  ArrayX<Scalar> value;
  ArrayX<Scalar> grad;  // empty until first accumulation
  bool requires_grad = false;
  bool needs_grad = false;  // on a path between a requires_grad leaf and a root
  const char* op = "leaf";
  std::vector<std::shared_ptr<TensorNode>> inputs;
  // Reads this->grad, accumulates into inputs' grads.
  std::function<void(TensorNode&)> backprop;

  bool is_leaf() const { return !backprop; }

  void ensure_grad() {
    if (grad.size() != value.size()) grad = ArrayX<Scalar>::Zero(value.size());
  }

  template <class Expr>
  void accumulate(const Expr& g) {
    ensure_grad();
    grad += g;
  }
};

// Value-semantic handle to a graph node.
template <class Scalar>
class Tensor {
 public:
  using Node = TensorNode<Scalar>;

  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Tensor zeros(const Shape& shape) { return full(shape, Scalar(0)); }

  static Tensor full(const Shape& shape, Scalar v) {
    auto n = std::make_shared<Node>();
    n->shape = shape;
    n->value = ArrayX<Scalar>::Constant(shape_numel(shape), v);
    return Tensor(std::move(n));
  }

  static Tensor scalar(Scalar v) { return full({1}, v); }

  static Tensor from_array(const Shape& shape, ArrayX<Scalar> data) {
    if (data.size() != shape_numel(shape))
      throw DimensionError("tensor: data length " + std::to_string(data.size()) +
                           " does not match shape " + shape_str(shape));
    auto n = std::make_shared<Node>();
    n->shape = shape;
    n->value = std::move(data);
    return Tensor(std::move(n));
  }

  static Tensor from_vector(const Shape& shape, const std::vector<Scalar>& data) {
    ArrayX<Scalar> a(static_cast<Eigen::Index>(data.size()));
    for (std::size_t i = 0; i < data.size(); ++i) a[static_cast<Eigen::Index>(i)] = data[i];
    return from_array(shape, std::move(a));
  }

  // New leaf holding a copy of this tensor's values, cut off from the graph.
  Tensor detach() const {
    auto n = std::make_shared<Node>();
    n->shape = shape();
    n->value = value();
    return Tensor(std::move(n));
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  int dim(int i) const { return node_->shape[static_cast<std::size_t>(i)]; }
  std::int64_t numel() const { return node_->value.size(); }

  const ArrayX<Scalar>& value() const { return node_->value; }
  // Direct write access; meant for leaf setup only.
  ArrayX<Scalar>& mutable_value() { return node_->value; }
  const Scalar* data() const { return node_->value.data(); }
  Scalar* data() { return node_->value.data(); }

  Scalar item() const {
    if (numel() != 1) throw DimensionError("item() on non-scalar tensor " + shape_str(shape()));
    return node_->value[0];
  }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool b) {
    node_->requires_grad = b;
    node_->needs_grad = node_->needs_grad || b;
  }

  // Gradient buffer; zeros if backward never reached this tensor.
  ArrayX<Scalar> grad() const {
    if (node_->grad.size() == node_->value.size()) return node_->grad;
    return ArrayX<Scalar>::Zero(node_->value.size());
  }
  ArrayX<Scalar>& grad_ref() {
    node_->ensure_grad();
    return node_->grad;
  }
  void zero_grad() {
    if (node_->grad.size() > 0) node_->grad.setZero();
  }

  std::shared_ptr<Node> node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

// Topologically ordered op records below a root: every node's inputs precede
// it in `order`. Constant subgraphs (no path to a requires_grad leaf) are
// excluded, as are leaves themselves.
template <class Scalar>
struct GradGraph {
  std::vector<TensorNode<Scalar>*> order;
  TensorNode<Scalar>* root = nullptr;

  static GradGraph build(const Tensor<Scalar>& root_tensor) {
    GradGraph g;
    g.root = root_tensor.node().get();
    if (!g.root->needs_grad) return g;
    std::unordered_set<const TensorNode<Scalar>*> seen;
    // Iterative postorder DFS; `phase` is the next input index to visit.
    std::vector<std::pair<TensorNode<Scalar>*, std::size_t>> stack;
    stack.emplace_back(g.root, 0);
    seen.insert(g.root);
    while (!stack.empty()) {
      auto& [node, phase] = stack.back();
      if (phase < node->inputs.size()) {
        TensorNode<Scalar>* in = node->inputs[phase++].get();
        if (in->needs_grad && !seen.count(in)) {
          seen.insert(in);
          stack.emplace_back(in, 0);
        }
      } else {
        if (!node->is_leaf()) g.order.push_back(node);
        stack.pop_back();
      }
    }
    return g;
  }
};

// Reverse-mode accumulation from a scalar root. Leaf gradients accumulate
// across repeated calls; intermediate gradients are reset per call.
template <class Scalar>
inline void backward(const Tensor<Scalar>& loss) {
  if (loss.numel() != 1)
    throw DimensionError("backward: root must be scalar, got " + shape_str(loss.shape()));
  auto graph = GradGraph<Scalar>::build(loss);
  if (graph.order.empty() && loss.node()->is_leaf()) {
    // Loss does not depend on any parameter; nothing to do.
    return;
  }
  for (auto* n : graph.order) n->grad = ArrayX<Scalar>::Zero(n->value.size());
  graph.root->ensure_grad();
  graph.root->grad[0] += Scalar(1);
  for (auto it = graph.order.rbegin(); it != graph.order.rend(); ++it) {
    TensorNode<Scalar>& n = **it;
    n.ensure_grad();
    n.backprop(n);
  }
}

namespace detail {

// Registers a forward result. The backprop closure is dropped when no input
// can contribute gradients, which prunes constant subgraphs.
template <class Scalar>
Tensor<Scalar> make_op(const char* name, Shape shape, ArrayX<Scalar> value,
                       std::vector<Tensor<Scalar>> inputs,
                       std::function<void(TensorNode<Scalar>&)> backprop) {
  auto n = std::make_shared<TensorNode<Scalar>>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  n->op = name;
  bool needs = false;
  for (const auto& t : inputs) needs = needs || t.node()->needs_grad;
  if (needs) {
    n->needs_grad = true;
    n->inputs.reserve(inputs.size());
    for (auto& t : inputs) n->inputs.push_back(t.node());
    n->backprop = std::move(backprop);
  }
  return Tensor<Scalar>(std::move(n));
}

}  // namespace detail

}  // namespace dang
