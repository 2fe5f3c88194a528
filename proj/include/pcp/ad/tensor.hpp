#pragma once

// Reverse-mode differentiation over dense row-major arrays of doubles.
//
// A Tensor is a cheap handle to a Node. Operations on tensors that require
// gradients append their output node to the calling thread's Graph; the graph
// order is the creation order, which is topological because a node can only
// be built from nodes that already exist.

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace pcp::ad {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NumericError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until a gradient reaches the node
  bool requires_grad = false;
  bool is_leaf = true;
  bool reached = false;  // set during backward once a consumer pushes into it
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;  // pushes this->grad into inputs

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  }
};

class Graph {
 public:
  void record(std::shared_ptr<Node> n) { nodes_.push_back(std::move(n)); }
  std::size_t size() const { return nodes_.size(); }
  const std::vector<std::shared_ptr<Node>>& nodes() const { return nodes_; }

  // Drops every recorded node; tensors the caller still holds keep their
  // values but lose their history.
  void reset() {
    for (auto& n : nodes_) {
      n->inputs.clear();
      n->backward = nullptr;
      n->grad.clear();
    }
    nodes_.clear();
  }

  static Graph& current() {
    thread_local Graph g;
    return g;
  }

 private:
  std::vector<std::shared_ptr<Node>> nodes_;
};

inline bool& grad_mode_flag() {
  thread_local bool enabled = true;
  return enabled;
}

// Disables graph recording on this thread for the guard's lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : prev_(grad_mode_flag()) { grad_mode_flag() = false; }
  ~NoGradGuard() { grad_mode_flag() = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}

  static Tensor from(Shape shape, std::vector<double> data, bool requires_grad = false) {
    if (numel(shape) != data.size()) {
      throw ShapeError("tensor data length " + std::to_string(data.size()) +
                       " does not match shape " + shape_str(shape));
    }
    for (double v : data) {
      if (!std::isfinite(v)) throw NumericError("tensor constructed with non-finite value");
    }
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->data = std::move(data);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
  }
  static Tensor zeros(Shape shape, bool requires_grad = false) {
    const auto n = numel(shape);
    return from(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
  }
  static Tensor full(Shape shape, double v) {
    const auto n = numel(shape);
    return from(std::move(shape), std::vector<double>(n, v));
  }
  static Tensor scalar(double v, bool requires_grad = false) {
    return from({1}, {v}, requires_grad);
  }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t size() const { return node_->data.size(); }
  const std::vector<double>& data() const { return node_->data; }
  std::vector<double>& mutable_data() { return node_->data; }
  const std::vector<double>& grad() const { return node_->grad; }
  std::vector<double>& mutable_grad() { return node_->grad; }
  bool has_grad() const { return node_->grad.size() == node_->data.size(); }
  bool requires_grad() const { return node_->requires_grad; }
  bool is_leaf() const { return node_->is_leaf; }
  double item() const {
    if (size() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
    return node_->data[0];
  }
  double operator[](std::size_t i) const { return node_->data[i]; }

  void zero_grad() {
    if (node_) node_->grad.assign(node_->data.size(), 0.0);
  }
  // Value copy without history.
  Tensor detach() const { return from(shape(), data(), false); }

  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& node_ptr() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

namespace detail {

inline void check_finite(const std::vector<double>& v, const char* op) {
  for (double x : v) {
    if (!std::isfinite(x)) throw NumericError(std::string(op) + ": non-finite value");
  }
}

// Builds the output node of an operation. When grad mode is on and any input
// requires a gradient, the node keeps its inputs and backward closure and is
// recorded in the thread's graph.
inline Tensor make_result(const char* op, Shape shape, std::vector<double> data,
                          std::vector<Tensor> inputs, std::function<void(Node&)> backward) {
  check_finite(data, op);
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->data = std::move(data);
  n->op = op;
  bool needs = false;
  if (grad_mode_flag()) {
    for (const auto& t : inputs) needs = needs || t.requires_grad();
  }
  if (needs) {
    n->requires_grad = true;
    n->is_leaf = false;
    n->inputs.reserve(inputs.size());
    for (const auto& t : inputs) n->inputs.push_back(t.node_ptr());
    n->backward = std::move(backward);
    Graph::current().record(n);
  }
  return Tensor(std::move(n));
}

inline void check_inputs_finite(const Tensor& t, const char* op) {
  check_finite(t.data(), op);
}

}  // namespace detail

// Accumulates d(root)/d(leaf) into every requires_grad leaf reachable from
// root. Intermediate gradients are cleared first so repeated calls without a
// reset add exactly one more copy of the gradient to each leaf.
inline void backward(const Tensor& root) {
  if (root.size() != 1) {
    throw ShapeError("backward requires a scalar root, got shape " + shape_str(root.shape()));
  }
  if (!root.requires_grad()) return;
  auto& nodes = Graph::current().nodes();
  for (auto& n : nodes) {
    n->grad.clear();
    n->reached = false;
  }
  Node* r = root.node();
  r->ensure_grad();
  r->grad[0] += 1.0;
  r->reached = true;
  if (r->is_leaf) return;
  for (auto it = nodes.rbegin(); it != nodes.rend(); ++it) {
    Node* n = it->get();
    if (!n->reached || !n->backward) continue;
    for (auto& in : n->inputs) {
      if (!in->requires_grad) continue;
      in->ensure_grad();
      in->reached = true;
    }
    n->backward(*n);
  }
}

inline void reset_graph() { Graph::current().reset(); }

}  // namespace pcp::ad
