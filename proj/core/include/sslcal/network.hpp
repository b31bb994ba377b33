#pragma once

#include <cstddef>
#include <string_view>
#include <vector>

#include "sslcal/matrix.hpp"
#include "sslcal/rng.hpp"
#include "sslcal/tensor.hpp"

namespace sslcal {

enum class Activation { identity, relu, tanh };

struct DenseLayer {
    ParamTensor weight;  // out_dim x in_dim
    ParamTensor bias;    // out_dim
    Activation act = Activation::identity;

    std::size_t in_dim() const { return weight.shape[1]; }
    std::size_t out_dim() const { return weight.shape[0]; }
};

// Sequential dense network. Parameters are split into two named groups:
// "backbone" covers layers [0, head_start), "head" covers [head_start, end).
struct Network {
    std::vector<DenseLayer> layers;
    std::size_t head_start = 0;

    // He-style uniform fan-in init for the weights, zero bias.
    static DenseLayer make_layer(std::size_t in, std::size_t out, Activation act,
                                 Rng& rng);

    // Hidden layers with `hidden_act`, then a final linear layer to `out`
    // which forms the "head" group.
    static Network mlp(std::size_t in, const std::vector<std::size_t>& hidden,
                       std::size_t out, Activation hidden_act, Rng& rng);

    // Hidden stack only (no classifier); the whole network is "backbone".
    // Used when an external head (e.g. a variational layer) sits on top.
    static Network encoder(std::size_t in, const std::vector<std::size_t>& hidden,
                           Activation hidden_act, Rng& rng);

    std::size_t input_dim() const;
    std::size_t output_dim() const;

    std::vector<ParamTensor*> parameters();
    std::vector<const ParamTensor*> parameters() const;
    std::vector<ParamTensor*> group(std::string_view name);

    void zero_grads();
    void copy_values_from(const Network& other);  // shapes must match
    void validate() const;
};

// Per-layer activations retained by forward for the reverse pass.
struct ForwardTrace {
    Matrix input;
    std::vector<Matrix> pre;   // affine outputs per layer
    std::vector<Matrix> post;  // after activation

    const Matrix& output() const { return post.back(); }
    bool empty() const { return post.empty(); }
};

ForwardTrace forward(const Network& net, const Matrix& inputs);

// Accumulates parameter gradients from dL/d(output); returns dL/d(inputs).
// Repeated calls with different traces accumulate.
Matrix backward(Network& net, const ForwardTrace& trace, const Matrix& upstream);

// Values detached from any gradient path. Gradients only flow through traces
// handed to backward, so a detached copy contributes to no parameter gradient.
Matrix stop_gradient(const Matrix& values);

}  // namespace sslcal
