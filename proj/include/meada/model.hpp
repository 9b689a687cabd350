#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "meada/graph.hpp"
#include "meada/ops.hpp"

namespace meada {

// Architecture description. "mlp": flattened input through relu hidden layers
// (possibly none) into a linear classification layer. "lenet-small":
// conv5x5x6 / pool / conv5x5x16 / pool / dense 120 / dense 84 / dense classes,
// with the 84-wide post-relu activation as the latent z.
struct ModelSpec {
    std::string arch = "mlp";
    Shape input_shape;            // [D] or [H,W,C]
    std::vector<int> hidden;      // mlp hidden widths; ignored by lenet-small
    int classes = 2;
    std::uint64_t seed = 0;
};

void validate_spec(const ModelSpec& spec);

struct Param {
    std::string name;
    Tensor value;
};

struct Model {
    ModelSpec spec;
    std::vector<Param> params;

    Tensor& param(const std::string& name);
    const Tensor& param(const std::string& name) const;
};

// Kaiming-uniform fan-in weights, zero biases, drawn deterministically from
// spec.seed in parameter order.
Model make_model(const ModelSpec& spec);

int latent_dim(const ModelSpec& spec);

// Tape-embedded forward pass over a batch x_id of shape [N, ...input_shape].
struct ForwardNodes {
    NodeId z = -1;       // penultimate activation, [N, latent_dim]
    NodeId logits = -1;  // [N, classes]
    NodeId logp = -1;    // row-wise log softmax
    std::vector<NodeId> param_ids;  // aligned with Model::params
};

// param_ids must hold one node per parameter in make_model order; used
// directly so Bayesian callers can wire sampled parameters into the net.
ForwardNodes model_forward_with_params(Graph& g, const ModelSpec& spec,
                                       const std::vector<NodeId>& param_ids, NodeId x_id);

// Inserts the model's parameters as graph inputs (differentiable when
// train_params) and runs the forward chain.
ForwardNodes model_forward(Graph& g, const Model& m, NodeId x_id, bool train_params);

struct ForwardResult {
    Tensor z;
    Tensor logits;
    Tensor probs;
};

// Inference on a scratch graph; x is [N, ...input_shape].
ForwardResult forward(const Model& m, const Tensor& x);

}  // namespace meada
