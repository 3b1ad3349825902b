#pragma once

#include <functional>
#include <vector>

#include "dgfd/tensor.hpp"

namespace dgfd::ad {

class Graph;

/// Handle to a node inside one Graph.
struct Var {
    Graph* g = nullptr;
    int node = -1;
};

/// Reverse-mode tape for one forward pass. Nodes are appended in forward
/// order, so walking the tape backwards is a valid topological order and
/// visits every node exactly once. Gradients accumulate additively at
/// fan-out nodes.
class Graph {
public:
    Var leaf(Tensor value, bool needs_grad = false);
    Var constant(Tensor value) { return leaf(std::move(value), false); }

    // Elementwise / shape ops
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var scale(Var a, double c);
    Var relu(Var a);
    Var sigmoid(Var a);
    Var reshape(Var a, std::vector<size_t> shape);
    Var sum(Var a);
    Var mean(Var a);

    // Layer ops
    Var matmul(Var x, Var w);                      // [B,I] x [I,O]
    Var add_bias(Var x, Var b);                    // [B,F] + [F]; the only broadcast
    Var dense(Var x, Var w, Var b) { return add_bias(matmul(x, w), b); }
    Var conv1d(Var x, Var w, Var b, int stride = 1);  // x [B,C,L], w [O,C,K], valid
    Var max_pool1d(Var x, int pool);               // window == stride == pool
    Var global_avg_pool1d(Var x);                  // [B,C,L] -> [B,C]
    Var concat_cols(const std::vector<Var>& xs);   // [B,Fi] -> [B,sum(Fi)]
    Var softmax(Var logits);                       // rowwise [B,T]
    Var softmax_cross_entropy(Var logits, const std::vector<int>& labels);  // scalar

    /// Backpropagate from a scalar loss. May be called once per graph.
    void backward(Var loss);

    const Tensor& value(Var v) const;
    const Tensor& grad(Var v) const;  // valid after backward() for needs-grad nodes
    size_t node_count() const { return nodes_.size(); }

private:
    struct Node {
        Tensor value;
        Tensor grad;
        std::vector<int> inputs;
        std::function<void(Graph&, int)> backprop;  // empty for leaves
        bool needs_grad = false;
    };

    int push(Tensor value, std::vector<int> inputs, std::function<void(Graph&, int)> backprop);
    Node& node(Var v);
    const Node& cnode(Var v) const;
    Tensor& grad_buf(int idx);

    std::vector<Node> nodes_;
    bool ran_backward_ = false;

    friend struct GraphOps;
};

}  // namespace dgfd::ad
