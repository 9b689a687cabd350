#pragma once

#include <vector>

#include "meada/graph.hpp"

// The primitive set of the reverse-mode engine. Every primitive has an exact
// analytic adjoint; the gradcheck suite compares each one against central
// finite differences. Shapes are strict: the only broadcasts are
// scalar-tensor (either operand of add/mul with numel 1) and last-axis bias
// add. Anything else throws shape_error naming the primitive and both shapes.

namespace meada {

enum class Pad { valid, same };

NodeId add(Graph& g, NodeId a, NodeId b);
NodeId add_bias(Graph& g, NodeId a, NodeId bias);  // bias along the last axis
NodeId mul(Graph& g, NodeId a, NodeId b);
NodeId mul_scalar(Graph& g, NodeId a, double s);
NodeId sub(Graph& g, NodeId a, NodeId b);

NodeId matmul(Graph& g, NodeId a, NodeId b);  // [m,k] x [k,n]

// input [N,H,W,CI], kernel [KH,KW,CI,CO], stride 1. Pad::same needs odd KH,KW.
NodeId conv2d(Graph& g, NodeId input, NodeId kernel, Pad pad);

NodeId maxpool2(Graph& g, NodeId a);  // 2x2 window, stride 2, NHWC

NodeId relu(Graph& g, NodeId a);
NodeId log(Graph& g, NodeId a);
NodeId exp(Graph& g, NodeId a);
NodeId square(Graph& g, NodeId a);
NodeId softplus(Graph& g, NodeId a);
NodeId clamp_min(Graph& g, NodeId a, double lo);

NodeId sum(Graph& g, NodeId a);   // -> [1]
NodeId mean(Graph& g, NodeId a);  // -> [1]
NodeId row_sum(Graph& g, NodeId a);  // [N,C] -> [N]

// Row-wise log(softmax) of [N,C], max-shifted; exact adjoint g - p * rowsum(g).
NodeId log_softmax(Graph& g, NodeId a);

NodeId concat(Graph& g, const std::vector<NodeId>& parts, int axis);

NodeId reshape(Graph& g, NodeId a, Shape s);  // numel preserved, row-major order kept

}  // namespace meada
