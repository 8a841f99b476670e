#pragma once

// Reverse-mode automatic differentiation over a small, closed operator set:
// exactly what the tabular transformer and its losses need. A Graph is a tape
// of nodes confined to one thread for the duration of a training step;
// backward() walks the tape in reverse creation order and accumulates
// gradients into bound Parameters.

#include <cstdint>
#include <deque>
#include <functional>
#include <string>
#include <vector>

#include "dxtab/tensor.hpp"

namespace dxtab::nn {

struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;

    Parameter() = default;
    Parameter(std::string n, Tensor v)
        : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}

    void zero_grad() { grad.fill(0.0); }
};

class Graph {
public:
    using NodeId = int;

    // Leaves.
    NodeId input(Tensor v);       // constant, no gradient
    NodeId param(Parameter& p);   // differentiable, bound to external storage

    const Tensor& value(NodeId id) const { return nodes_[static_cast<std::size_t>(id)].value; }
    const Tensor& grad_of(NodeId id) const { return nodes_[static_cast<std::size_t>(id)].grad; }

    // Operator set.
    NodeId matmul(NodeId a, NodeId b);     // (M,K)x(K,N); (B,M,K)x(B,K,N); (B,M,K)x(K,N)
    NodeId matmul_nt(NodeId a, NodeId b);  // A * B^T on the last two dims
    NodeId add(NodeId a, NodeId b);        // same shape, or bias over the last dim
    NodeId mul(NodeId a, NodeId b);        // elementwise, same shape
    NodeId scale(NodeId a, double c);
    NodeId softmax(NodeId a);              // last dim
    NodeId layer_norm(NodeId a, NodeId gamma, NodeId beta, double eps = 1e-5);
    NodeId gelu(NodeId a);
    NodeId relu(NodeId a);
    NodeId embedding(NodeId table, std::vector<std::int64_t> idx);  // (V,D) -> (B,D)
    NodeId mean_all(NodeId a);             // -> scalar
    NodeId bce_with_logits(NodeId logits, std::vector<double> labels,
                           std::vector<double> weights);  // mean over batch -> scalar
    NodeId select_token(NodeId a, std::int64_t pos);        // (B,S,D) -> (B,D)
    NodeId concat_seq(const std::vector<NodeId>& parts);    // along dim 1
    NodeId feature_tokenize(NodeId x, NodeId w, NodeId b);  // x(B,P), w/b(P,D) -> (B,P,D)
    NodeId split_heads(NodeId a, std::int64_t heads);       // (B,S,D) -> (B*h,S,D/h)
    NodeId merge_heads(NodeId a, std::int64_t heads);
    NodeId reshape(NodeId a, std::vector<std::int64_t> shape);

    // Populates gradients of every parameter on the path from `loss`.
    void backward(NodeId loss);

    std::size_t node_count() const { return nodes_.size(); }

private:
    struct Node {
        Tensor value;
        Tensor grad;  // allocated on demand during backward
        Parameter* bound = nullptr;
        bool needs_grad = false;
        std::function<void(Graph&)> backward_fn;
    };

    NodeId push(Tensor value, bool needs_grad, std::function<void(Graph&)> fn);
    Node& node(NodeId id) { return nodes_[static_cast<std::size_t>(id)]; }
    Tensor& ensure_grad(NodeId id);
    bool needs(NodeId id) const { return nodes_[static_cast<std::size_t>(id)].needs_grad; }

    std::deque<Node> nodes_;
};

double sigmoid(double z);

}  // namespace dxtab::nn
