#include "meada/graph.hpp"

#include <algorithm>

namespace meada {

NodeId Graph::input(Tensor v, bool requires_grad) {
    Node n;
    n.value = std::move(v);
    n.requires_grad = requires_grad;
    if (requires_grad) n.grad = Tensor(n.value.shape);
    nodes.push_back(std::move(n));
    return static_cast<NodeId>(nodes.size()) - 1;
}

NodeId Graph::emplace(Tensor value, bool requires_grad, const char* op,
                      std::function<void(Graph&)> backward_fn) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    n.op = op;
    if (requires_grad) {
        n.grad = Tensor(n.value.shape);
        n.backward_fn = std::move(backward_fn);
    }
    nodes.push_back(std::move(n));
    return static_cast<NodeId>(nodes.size()) - 1;
}

const Tensor& Graph::grad(NodeId id) const {
    const Node& n = nodes[static_cast<size_t>(id)];
    if (!n.requires_grad)
        throw shape_error("grad: node does not require gradients");
    return n.grad;
}

void Graph::backward(NodeId root) {
    Node& r = nodes[static_cast<size_t>(root)];
    if (r.value.numel() != 1)
        throw shape_error("backward: root must be scalar, got " + shape_str(r.value.shape));
    if (!r.requires_grad)
        throw shape_error("backward: root does not depend on any differentiable leaf");
    for (NodeId i = 0; i <= root; ++i) {
        Node& n = nodes[static_cast<size_t>(i)];
        if (n.requires_grad) std::fill(n.grad.data.begin(), n.grad.data.end(), 0.0);
    }
    r.grad.data[0] = 1.0;
    for (NodeId i = root; i >= 0; --i) {
        Node& n = nodes[static_cast<size_t>(i)];
        if (n.backward_fn) n.backward_fn(*this);
    }
}

}  // namespace meada
