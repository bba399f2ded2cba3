#pragma once

#include <functional>
#include <vector>

#include "oshape/tensor.hpp"

namespace oshape {

class Tape;

// Handle to a node owned by a Tape.
struct Var {
    Tape* tape = nullptr;
    int id = -1;
    bool valid() const { return tape != nullptr && id >= 0; }
};

// Reverse-mode differentiation tape. Nodes are appended in construction
// order, which is a topological order of the graph; backward() walks the
// node list once in reverse, so every node's adjoint is complete before its
// own backward closure fires.
class Tape {
public:
    using BackwardFn = std::function<void(Tape&, int self)>;

    Var constant(Tensor value) { return add_node(std::move(value), {}, nullptr, false); }
    Var param(Tensor value) { return add_node(std::move(value), {}, nullptr, true); }

    const Tensor& value(Var v) const { return nodes_[v.id].value; }
    const Tensor& grad(Var v) const { return nodes_[v.id].grad; }

    // Seeds d(root)/d(root)=1 and accumulates adjoints into every node that
    // (transitively) depends on a param. root must be a scalar.
    void backward(Var root);

    std::size_t size() const { return nodes_.size(); }

    // --- elementwise / activation ---
    Var relu(Var x);
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var scale(Var x, double c);
    Var neg(Var x) { return scale(x, -1.0); }
    Var add_const(Var x, const Tensor& c);
    Var pow_scalar(Var x, double p); // elementwise x^p, x > 0

    // --- linear algebra ---
    Var affine(Var x, Var w, Var b); // [B,I]*[I,O] + [O]
    Var matmul(Var a, Var b);        // [R,K]*[K,C]

    // --- softmax family (row-wise over the last axis of a matrix) ---
    Var softmax_rows(Var x);
    Var log_softmax_rows(Var x);

    // --- reductions ---
    Var sum(Var x);      // -> scalar
    Var mean(Var x);     // -> scalar
    Var sum_rows(Var x); // [R,C] -> [R]
    Var dot(Var a, Var b);
    Var max_all(Var x); // -> scalar; adjoint routed to the first argmax
    Var div(Var a, Var b); // scalar / scalar
    Var mean_of(const std::vector<Var>& scalars);

    // --- shape / selection ---
    Var reshape(Var x, std::vector<std::size_t> shape);
    Var add_rowvec(Var x, Var v); // [R,C] + broadcast [C]
    Var mul_rowvec(Var x, Var v); // [R,C] * broadcast [C]
    Var mul_scalar(Var x, Var s); // tensor * scalar node
    Var pick(Var x, std::vector<std::size_t> cols); // x[r, cols[r]] -> [R]
    Var slice_rows(Var x, std::size_t r0, std::size_t r1);
    Var concat_rows(const std::vector<Var>& xs);

    // Escape hatch for domain-specific ops. backward receives the node id;
    // use out_grad()/value_of()/accumulate() to propagate.
    Var custom(std::vector<Var> parents, Tensor value, BackwardFn backward);

    const Tensor& value_of(int id) const { return nodes_[id].value; }
    const Tensor& out_grad(int id) const { return nodes_[id].grad; }
    const std::vector<int>& parents_of(int id) const { return nodes_[id].parents; }
    bool wants_grad(int id) const { return nodes_[id].needs_grad; }

    // Adds g into the gradient buffer of node id (no-op for constants).
    void accumulate(int id, const Tensor& g);
    Tensor& grad_buffer(int id) { return nodes_[id].grad; }
    void mark_touched(int id) { nodes_[id].touched = true; }

private:
    struct Node {
        Tensor value;
        Tensor grad;
        std::vector<int> parents;
        BackwardFn backward;
        bool needs_grad = false;
        bool touched = false; // received a nonzero adjoint during backward
    };

    Var add_node(Tensor value, std::vector<int> parents, BackwardFn backward, bool is_param);
    bool any_needs_grad(const std::vector<int>& parents) const;

    std::vector<Node> nodes_;
};

} // namespace oshape
