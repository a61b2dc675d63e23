#pragma once

#include <atomic>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "ensr/nn/tensor.hpp"

namespace ensr::nn {

class Node;

/// Handle to a value in a computation graph. Copies share the node.
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  bool defined() const { return node_ != nullptr; }
  const Tensor& value() const;
  const Shape& shape() const;
  std::size_t dim(std::size_t i) const { return shape().at(i); }
  std::size_t size() const { return value().size(); }
  bool requires_grad() const;
  const Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& node_ptr() const { return node_; }

  /// Same value, cut from the graph.
  Var detach() const;

 private:
  std::shared_ptr<Node> node_;
};

/// Gradients of a node's inputs given the gradient of its output. Built from
/// differentiable ops, so running it with graph recording enabled yields a
/// graph that can itself be differentiated.
using BackwardFn = std::function<std::vector<Var>(const Var& grad_out, const Node& self)>;

class Node {
 public:
  Node();
  ~Node();
  Node(const Node&) = delete;
  Node& operator=(const Node&) = delete;

  Tensor value;
  std::vector<Var> inputs;
  BackwardFn backward;
  bool requires_grad = false;
  const char* op = "leaf";

  /// Number of nodes currently alive in this process (leak checks).
  static long live_count();

 private:
  static std::atomic<long> live_;
};

/// Recording switch for the current thread. Graphs are confined to one
/// thread, so the flag is thread-local.
class GradMode {
 public:
  static bool enabled();
  static void set(bool on);
};

/// RAII scope that disables (or forces) graph recording.
class GradModeGuard {
 public:
  explicit GradModeGuard(bool enabled) : previous_(GradMode::enabled()) { GradMode::set(enabled); }
  ~GradModeGuard() { GradMode::set(previous_); }
  GradModeGuard(const GradModeGuard&) = delete;
  GradModeGuard& operator=(const GradModeGuard&) = delete;

 private:
  bool previous_;
};

struct NoGrad : GradModeGuard {
  NoGrad() : GradModeGuard(false) {}
};

Var constant(Tensor t);
/// Leaf that participates in differentiation.
Var leaf(Tensor t);

/// Creates an op result; records inputs/backward only when recording is on
/// and some input requires a gradient.
Var make_op(Tensor value, std::vector<Var> inputs, BackwardFn backward, const char* op);

/// Reverse-mode gradients of a scalar `output` with respect to `wrt`.
/// Unreachable inputs get zero gradients. With create_graph the returned
/// gradients are themselves differentiable.
std::vector<Var> grad(const Var& output, const std::vector<Var>& wrt, bool create_graph = false);

}  // namespace ensr::nn
