#pragma once

#include <functional>
#include <vector>

#include "meada/tensor.hpp"

namespace meada {

struct Graph;

using NodeId = int;

// One entry of the tape: a value, the ids of the nodes it was computed from,
// and a closure that pushes the adjoint back to them.
struct Node {
    Tensor value;
    Tensor grad;  // allocated only when requires_grad
    bool requires_grad = false;
    const char* op = "leaf";
    std::function<void(Graph&)> backward_fn;
};

// Append-only tape. Nodes are created in topological order, so reverse
// insertion order is a reverse topological order; backward walks it once,
// which pins the floating-point accumulation order bit-for-bit.
struct Graph {
    std::vector<Node> nodes;

    NodeId input(Tensor v, bool requires_grad = false);
    NodeId constant(Tensor v) { return input(std::move(v), false); }

    const Tensor& value(NodeId id) const { return nodes[static_cast<size_t>(id)].value; }
    Tensor& value(NodeId id) { return nodes[static_cast<size_t>(id)].value; }

    // Gradient of the last backward() root with respect to node `id`.
    const Tensor& grad(NodeId id) const;

    // Reverse pass from a scalar root. Gradient slots are zeroed first, so
    // calling backward twice on the same graph gives identical results.
    void backward(NodeId root);

    // Internal: append a computed node.
    NodeId emplace(Tensor value, bool requires_grad, const char* op,
                   std::function<void(Graph&)> backward_fn);
};

}  // namespace meada
