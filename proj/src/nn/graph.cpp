#include "ensr/nn/graph.hpp"

#include <unordered_map>
#include <unordered_set>
#include <utility>

#include "ensr/error.hpp"
#include "ensr/nn/ops.hpp"

namespace ensr::nn {

std::atomic<long> Node::live_{0};

Node::Node() { live_.fetch_add(1, std::memory_order_relaxed); }
Node::~Node() { live_.fetch_sub(1, std::memory_order_relaxed); }
long Node::live_count() { return live_.load(std::memory_order_relaxed); }

namespace {
thread_local bool grad_mode_enabled = true;
}

bool GradMode::enabled() { return grad_mode_enabled; }
void GradMode::set(bool on) { grad_mode_enabled = on; }

const Tensor& Var::value() const {
  if (!node_) throw UsageError("use of an undefined Var");
  return node_->value;
}

const Shape& Var::shape() const { return value().shape; }

bool Var::requires_grad() const { return node_ && node_->requires_grad; }

Var Var::detach() const { return constant(value()); }

Var constant(Tensor t) {
  auto n = std::make_shared<Node>();
  n->value = std::move(t);
  n->op = "const";
  return Var(std::move(n));
}

Var leaf(Tensor t) {
  auto n = std::make_shared<Node>();
  n->value = std::move(t);
  n->requires_grad = true;
  n->op = "leaf";
  return Var(std::move(n));
}

Var make_op(Tensor value, std::vector<Var> inputs, BackwardFn backward, const char* op) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->op = op;
  if (GradMode::enabled()) {
    bool any = false;
    for (const Var& v : inputs) any = any || v.requires_grad();
    if (any) {
      n->inputs = std::move(inputs);
      n->backward = std::move(backward);
      n->requires_grad = true;
    }
  }
  return Var(std::move(n));
}

std::vector<Var> grad(const Var& output, const std::vector<Var>& wrt, bool create_graph) {
  if (output.size() != 1) {
    throw UsageError("grad: output must be a scalar, got shape " + shape_str(output.shape()));
  }
  std::vector<Var> result(wrt.size());
  if (!output.requires_grad()) {
    for (std::size_t i = 0; i < wrt.size(); ++i) result[i] = constant(Tensor(wrt[i].shape()));
    return result;
  }

  // Iterative post-order DFS over nodes that require gradients.
  std::vector<Node*> order;
  std::unordered_set<const Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(output.node_ptr().get(), 0);
  visited.insert(output.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].node_ptr().get();
      if (child && child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  std::unordered_set<const Node*> targets;
  for (const Var& w : wrt) targets.insert(w.node());

  GradModeGuard mode(create_graph);
  std::unordered_map<const Node*, Var> grads;
  grads.emplace(output.node(), constant(Tensor(output.shape(), 1.0)));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    auto found = grads.find(node);
    if (found == grads.end()) continue;
    if (!node->backward) continue;
    const Var g = found->second;
    if (!targets.count(node)) grads.erase(found);
    std::vector<Var> gins = node->backward(g, *node);
    for (std::size_t i = 0; i < node->inputs.size(); ++i) {
      const Var& in = node->inputs[i];
      if (!in.requires_grad() || i >= gins.size() || !gins[i].defined()) continue;
      auto [slot, inserted] = grads.try_emplace(in.node(), gins[i]);
      if (!inserted) slot->second = add(slot->second, gins[i]);
    }
  }
  for (std::size_t i = 0; i < wrt.size(); ++i) {
    auto found = grads.find(wrt[i].node());
    result[i] = found != grads.end() ? found->second : constant(Tensor(wrt[i].shape()));
  }
  return result;
}

}  // namespace ensr::nn
