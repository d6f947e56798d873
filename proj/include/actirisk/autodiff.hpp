#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "actirisk/rng.hpp"
#include "actirisk/tensor.hpp"

namespace actirisk::nn {

// Reverse-mode tape for exactly the layer set the risk model needs.
// Build a fresh Graph per forward pass; values are computed eagerly and
// backward() runs the recorded closures in reverse creation order, which is a
// valid reverse topological order because inputs always precede consumers.
class Graph {
  public:
    using NodeId = int;

    Graph() = default;
    // Backward closures capture `this`; the graph must stay put.
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;
    Graph(Graph&&) = delete;
    Graph& operator=(Graph&&) = delete;

    NodeId leaf(Tensor value, bool requires_grad);

    const Tensor& value(NodeId id) const { return nodes_[check(id)].value; }
    // Gradient accumulated by the last backward(); zeros if the node was not reached.
    const Tensor& grad(NodeId id);
    bool requires_grad(NodeId id) const { return nodes_[check(id)].requires_grad; }
    std::size_t num_nodes() const { return nodes_.size(); }

    // --- primitives -------------------------------------------------------

    // input [N,L,Cin] (*) kernel [K,Cin,Cout] + bias [Cout] -> [N,L,Cout].
    // Cross-correlation, stride 1, "same" zero padding (left pad (K-1)/2).
    NodeId conv1d(NodeId input, NodeId kernel, NodeId bias);

    // out[..., c] = in[..., c] * scale[c] + shift[c] over the trailing channel axis.
    NodeId per_component_affine(NodeId input, NodeId scale, NodeId shift);

    NodeId relu(NodeId x);
    NodeId add(NodeId a, NodeId b);          // same-shape elementwise
    NodeId mul(NodeId a, NodeId b);          // same-shape elementwise

    // Inverted-scaling dropout; identity when !training or rate == 0 (the rng
    // is not consumed in that case). rate must lie in [0, 1).
    NodeId dropout(NodeId x, double rate, bool training, Rng& rng);

    // [A,B,C] -> [A,C] mean over the middle axis.
    NodeId avg_pool_axis1(NodeId x);
    // Weighted mean over the middle axis; weights[a*B+b] must sum to 1 per row.
    NodeId weighted_mean_axis1(NodeId x, std::vector<double> weights);

    NodeId reshape(NodeId x, std::vector<int> new_shape);

    // input [B,I] x weights [I,O] + bias [O] -> [B,O].
    NodeId dense(NodeId input, NodeId weights, NodeId bias);

    // Identity forward; backward multiplies the incoming adjoint by -lambda.
    NodeId gradient_reversal(NodeId x, double lambda);

    // Standard batch normalization over all but the trailing channel axis.
    // Training mode uses batch statistics and updates the running buffers;
    // evaluation uses the (frozen) running statistics.
    NodeId batch_norm(NodeId x, NodeId gamma, NodeId beta, Tensor* running_mean,
                      Tensor* running_var, bool training, double momentum = 0.1,
                      double eps = 1e-5);

    // Mean cross-entropy over rows with mask != 0. labels[i] in [0, C).
    NodeId softmax_cross_entropy(NodeId logits, std::vector<int> labels,
                                 std::vector<std::uint8_t> mask);

    NodeId sum_all(NodeId x); // scalar

    // Reverse accumulation from a scalar loss into every requires-grad node.
    void backward(NodeId loss);

  private:
    struct Node {
        Tensor value;
        Tensor grad;
        bool requires_grad = false;
        bool grad_live = false;
        std::function<void()> back; // empty for leaves
    };

    std::vector<Node> nodes_;
    bool backward_done_ = false;

    int check(NodeId id) const {
        if (id < 0 || id >= static_cast<NodeId>(nodes_.size())) {
            throw ValidationError("Graph: invalid node id");
        }
        return id;
    }

    NodeId emplace(Tensor value, bool requires_grad, std::function<void()> back);
    Tensor& grad_buf(NodeId id);
    double* grad_buf_if_needed(NodeId id); // nullptr when the node has no grad path
};

// --- Adam ------------------------------------------------------------------

struct AdamState {
    std::vector<Tensor> m;
    std::vector<Tensor> v;
    long step = 0;

    static AdamState init_like(const std::vector<Tensor*>& params);
};

// Standard Adam update with bias correction. Aborts on non-finite gradients.
void adam_step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads,
               AdamState& state, double lr, double beta1 = 0.9, double beta2 = 0.999,
               double eps = 1e-8);

} // namespace actirisk::nn
