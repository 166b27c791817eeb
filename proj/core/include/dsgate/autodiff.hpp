#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "dsgate/tensor.hpp"

namespace dsgate {

enum class Act { sigmoid, softplus, silu };

const char* act_name(Act a);
Act act_from_name(const std::string& name);

// Handle to one node of a reverse-mode differentiation graph. Values are
// immutable once the node is built; only the gradient buffer is written,
// during backward(). Graphs are built per forward pass and discarded.
class Var {
public:
    // Receives the gradient w.r.t. this node's value and pushes contributions
    // into the parents via Var::add_grad.
    using BackwardFn = std::function<void(const Tensor4& out_grad, std::vector<Var>& parents)>;

    Var() = default;

    static Var leaf(Tensor4 value);       // tracked parameter or input
    static Var constant(Tensor4 value);   // no gradient flows into it

    // Generic op node; exposed so callers can register additional primitives.
    static Var apply(Tensor4 value, std::vector<Var> parents, BackwardFn backward);

    bool defined() const { return node_ != nullptr; }
    // Ref-qualified so reading off a temporary Var yields a copy instead of a
    // reference into a node about to be released.
    const Tensor4& value() const&;
    Tensor4 value() &&;
    const Tensor4& grad() const&;
    Tensor4 grad() &&;
    bool requires_grad() const;
    void add_grad(const Tensor4& g);

    // Reverse pass from this node, which must hold a single element.
    // Gradients accumulate into every reachable node that requires them.
    void backward() const;

private:
    struct Node;
    std::shared_ptr<Node> node_;
};

// --- primitive operations -------------------------------------------------
//
// All shape preconditions throw ShapeError naming both shapes; domain
// violations throw DomainError. Value dims are annotated as (B,C,H,W).

// weight (Cout,Cin,1,1), bias (1,Cout,1,1): out[b,co,h,w] = sum_ci w*x + bias.
Var pointwise_conv(const Var& x, const Var& weight, const Var& bias);

// weight (Cout,Cin,3,3), stride 1, zero padding 1; spatial extents preserved.
Var conv3x3_same(const Var& x, const Var& weight, const Var& bias);

// Elementwise sigmoid / softplus / silu. Rejects non-finite input.
Var activation(Act kind, const Var& x);

// (B,C,H,W) -> (B,C,1,1). Mean uses the exact divisor H*W with sequential
// row-major summation; max routes its gradient to the first attaining
// position in row-major order.
Var reduce_mean(const Var& x);
Var reduce_max(const Var& x);

// z, temperature (B,K,1,1); all temperature entries must be > 0.
// out[b,k] = softmax_k(z[b,k] / T[b,k]), computed with max subtraction.
Var softmax_channels(const Var& z, const Var& temperature);

// Channel concatenation / inverse split; round-trip is exact.
Var concat_channels(const std::vector<Var>& parts);
std::vector<Var> split_channels(const Var& x, const std::vector<std::int64_t>& sizes);

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);

// scale*x + shift, elementwise with fixed scalars.
Var affine(const Var& x, double scale, double shift);

// gate (B,C,1,1) broadcast over H,W of x (B,C,H,W).
Var scale_channels(const Var& x, const Var& gate);

// s (B,1,1,1) broadcast over C,H,W of x.
Var scale_per_batch(const Var& x, const Var& s);

// Synergy combination mu*d + mu + d with partials (d+1, mu+1).
Var dso_combine(const Var& mu, const Var& d);

// Mean softmax cross-entropy over logits (B,K,1,1) against integer labels.
Var cross_entropy_mean(const Var& logits, const std::vector<int>& labels);

// Scalar projection sum(x .* coeffs); used to drive vector-valued ops in
// gradient checks.
Var weighted_sum(const Var& x, const Tensor4& coeffs);

}  // namespace dsgate
