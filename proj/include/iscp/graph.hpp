#pragma once

#include "iscp/tensor.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace iscp {

// Reverse-mode autodiff over a flat, topologically ordered node list.
//
// Ops are appended eagerly (each computes its value on construction). Leaf
// values can be rebound with set_leaf() and the whole graph re-evaluated
// with forward(), which reuses the cached buffers; this is what the
// training and search loops do per batch instead of rebuilding the graph.
//
// backward(root) zeroes all gradients, seeds the scalar root with 1 and
// walks the node list in reverse, accumulating into every node that
// requires a gradient. A leaf with no path to the root keeps its all-zero
// gradient. A Graph is single-owner during forward/backward.
class Graph {
public:
    using NodeId = int;

    enum class Op : std::uint8_t {
        kLeaf,
        kIdentity,
        kAdd,
        kSub,
        kMul,
        kAffine,      // k*a + c elementwise
        kBroadcastC,  // H×W -> C×H×W
        kMix,         // m, xc, xn -> m*xc + (1-m)*xn with m broadcast
        kConv2d,      // x, w(co×ci×k×k), b
        kDense,       // x(flat n), w(m×n), b
        kRelu,
        kMaxPool2,
        kSoftmaxXent, // scalar; label stored per node
        kPickLogit,   // scalar logits[index]
        kMean,        // scalar
        kL1Norm,      // scalar Σ|a|
        kTvPenalty,   // scalar (1/n)·Σ forward-difference squares
    };

    NodeId leaf(Tensor value);

    NodeId identity(NodeId a);
    NodeId add(NodeId a, NodeId b);
    NodeId sub(NodeId a, NodeId b);
    NodeId mul(NodeId a, NodeId b);
    NodeId affine(NodeId a, double k, double c);
    NodeId broadcast_channels(NodeId m, int channels);
    NodeId mix(NodeId m, NodeId xc, NodeId xn);
    NodeId conv2d(NodeId x, NodeId w, NodeId b);
    NodeId dense(NodeId x, NodeId w, NodeId b);
    NodeId relu(NodeId a);
    NodeId maxpool2(NodeId a);
    NodeId softmax_xent(NodeId logits, int label);
    NodeId pick_logit(NodeId logits, int index);
    NodeId mean(NodeId a);
    NodeId l1norm(NodeId a);
    NodeId tv_penalty(NodeId a);

    void set_leaf(NodeId id, const Tensor& value);
    void set_label(NodeId xent_node, int label);
    void set_pick_index(NodeId pick_node, int index);

    // Recomputes values for all nodes up to and including root from the
    // current leaf values and returns the root value.
    const Tensor& forward(NodeId root);
    // Requires a prior forward; root must be scalar.
    void backward(NodeId root);
    // forward + backward + grad read, per the gradient(graph, root, leaf)
    // contract.
    Tensor gradient(NodeId root, NodeId leaf);

    const Tensor& value(NodeId id) const;
    const Tensor& grad(NodeId id) const;
    double scalar(NodeId id) const;
    int size() const { return static_cast<int>(nodes_.size()); }
    bool is_leaf(NodeId id) const;

private:
    struct Node {
        Op op;
        std::array<NodeId, 3> in{-1, -1, -1};
        Tensor value;
        Tensor grad;
        bool requires_grad = false;
        int aux = 0;                 // label / pick index / channel count
        double k = 0.0, c = 0.0;     // affine coefficients
        std::vector<int> argmax;     // maxpool
        std::vector<double> probs;   // softmax cache
    };

    std::vector<Node> nodes_;

    NodeId push(Node n);
    void check_id(NodeId id, const char* who) const;
    void eval(Node& n);
    void backprop(Node& n);
    [[noreturn]] void fail(NodeId id, const std::string& msg) const;
};

// Standalone TV penalty used outside graphs: (1/n)·Σ of squared forward
// differences, borders skipped, n = H·W.
double tv_penalty(const Tensor& mask);

// Plain softmax over a logits vector (reporting path, not differentiable).
std::vector<double> softmax(const Tensor& logits);

int argmax(const Tensor& v);

} // namespace iscp
