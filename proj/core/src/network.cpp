#include "sslcal/network.hpp"

#include <cmath>
#include <string>

#include "sslcal/errors.hpp"

namespace sslcal {

DenseLayer Network::make_layer(std::size_t in, std::size_t out, Activation act,
                               Rng& rng) {
    if (in == 0 || out == 0) throw ConfigError("layer dimensions must be positive");
    DenseLayer layer;
    layer.weight = ParamTensor({out, in});
    layer.bias = ParamTensor({out});
    layer.act = act;
    const double limit = std::sqrt(6.0 / static_cast<double>(in));
    for (double& w : layer.weight.value) w = rng.uniform(-limit, limit);
    return layer;
}

Network Network::mlp(std::size_t in, const std::vector<std::size_t>& hidden,
                     std::size_t out, Activation hidden_act, Rng& rng) {
    Network net;
    std::size_t cur = in;
    for (std::size_t h : hidden) {
        net.layers.push_back(make_layer(cur, h, hidden_act, rng));
        cur = h;
    }
    net.layers.push_back(make_layer(cur, out, Activation::identity, rng));
    net.head_start = net.layers.size() - 1;
    net.validate();
    return net;
}

Network Network::encoder(std::size_t in, const std::vector<std::size_t>& hidden,
                         Activation hidden_act, Rng& rng) {
    if (hidden.empty()) throw ConfigError("encoder needs at least one hidden layer");
    Network net;
    std::size_t cur = in;
    for (std::size_t h : hidden) {
        net.layers.push_back(make_layer(cur, h, hidden_act, rng));
        cur = h;
    }
    net.head_start = net.layers.size();
    net.validate();
    return net;
}

std::size_t Network::input_dim() const { return layers.front().in_dim(); }
std::size_t Network::output_dim() const { return layers.back().out_dim(); }

std::vector<ParamTensor*> Network::parameters() {
    std::vector<ParamTensor*> out;
    for (auto& l : layers) {
        out.push_back(&l.weight);
        out.push_back(&l.bias);
    }
    return out;
}

std::vector<const ParamTensor*> Network::parameters() const {
    std::vector<const ParamTensor*> out;
    for (const auto& l : layers) {
        out.push_back(&l.weight);
        out.push_back(&l.bias);
    }
    return out;
}

std::vector<ParamTensor*> Network::group(std::string_view name) {
    std::size_t lo = 0, hi = 0;
    if (name == "backbone") {
        lo = 0;
        hi = head_start;
    } else if (name == "head") {
        lo = head_start;
        hi = layers.size();
    } else {
        throw ConfigError("unknown parameter group: " + std::string(name));
    }
    std::vector<ParamTensor*> out;
    for (std::size_t i = lo; i < hi; ++i) {
        out.push_back(&layers[i].weight);
        out.push_back(&layers[i].bias);
    }
    return out;
}

void Network::zero_grads() {
    for (auto& l : layers) {
        l.weight.zero_grad();
        l.bias.zero_grad();
    }
}

void Network::copy_values_from(const Network& other) {
    if (layers.size() != other.layers.size())
        throw ConfigError("copy_values_from: layer count mismatch");
    for (std::size_t i = 0; i < layers.size(); ++i) {
        if (layers[i].weight.numel() != other.layers[i].weight.numel())
            throw ConfigError("copy_values_from: shape mismatch");
        layers[i].weight.value = other.layers[i].weight.value;
        layers[i].bias.value = other.layers[i].bias.value;
    }
}

void Network::validate() const {
    if (layers.empty()) throw ConfigError("network has no layers");
    for (std::size_t i = 0; i + 1 < layers.size(); ++i) {
        if (layers[i].out_dim() != layers[i + 1].in_dim())
            throw ConfigError("incompatible layer dimensions at layer " +
                              std::to_string(i));
    }
    if (head_start > layers.size()) throw ConfigError("head_start out of range");
}

namespace {

void apply_activation(Activation act, const Matrix& z, Matrix& a) {
    a = z;
    switch (act) {
        case Activation::identity:
            break;
        case Activation::relu:
            for (double& v : a.data)
                if (v < 0.0) v = 0.0;
            break;
        case Activation::tanh:
            for (double& v : a.data) v = std::tanh(v);
            break;
    }
}

// dL/dz from dL/da given the stored pre/post activations
Matrix activation_backward(Activation act, const Matrix& z, const Matrix& a,
                           const Matrix& upstream) {
    Matrix g = upstream;
    switch (act) {
        case Activation::identity:
            break;
        case Activation::relu:
            for (std::size_t i = 0; i < g.data.size(); ++i)
                if (z.data[i] <= 0.0) g.data[i] = 0.0;
            break;
        case Activation::tanh:
            for (std::size_t i = 0; i < g.data.size(); ++i)
                g.data[i] *= 1.0 - a.data[i] * a.data[i];
            break;
    }
    return g;
}

}  // namespace

ForwardTrace forward(const Network& net, const Matrix& inputs) {
    net.validate();
    if (inputs.cols != net.input_dim())
        throw ConfigError("forward: input width " + std::to_string(inputs.cols) +
                          " does not match first-layer in-dim " +
                          std::to_string(net.input_dim()));
    ForwardTrace trace;
    trace.input = inputs;
    trace.pre.reserve(net.layers.size());
    trace.post.reserve(net.layers.size());

    const Matrix* cur = &trace.input;
    for (const auto& layer : net.layers) {
        const std::size_t n = cur->rows, in = layer.in_dim(), out = layer.out_dim();
        Matrix z(n, out);
        for (std::size_t i = 0; i < n; ++i) {
            const double* x = cur->data.data() + i * in;
            double* zi = z.data.data() + i * out;
            for (std::size_t o = 0; o < out; ++o) {
                const double* w = layer.weight.value.data() + o * in;
                double acc = layer.bias.value[o];
                for (std::size_t k = 0; k < in; ++k) acc += w[k] * x[k];
                zi[o] = acc;
            }
        }
        Matrix a;
        apply_activation(layer.act, z, a);
        trace.pre.push_back(std::move(z));
        trace.post.push_back(std::move(a));
        cur = &trace.post.back();
    }
    return trace;
}

Matrix backward(Network& net, const ForwardTrace& trace, const Matrix& upstream) {
    if (trace.empty()) throw StateError("backward called without a prior forward");
    if (trace.post.size() != net.layers.size())
        throw StateError("backward: trace does not match this network");
    if (!upstream.same_shape(trace.post.back()))
        throw ConfigError("backward: upstream gradient shape mismatch");

    Matrix g = upstream;
    for (std::size_t li = net.layers.size(); li-- > 0;) {
        auto& layer = net.layers[li];
        const Matrix& layer_input = (li == 0) ? trace.input : trace.post[li - 1];
        Matrix dz = activation_backward(layer.act, trace.pre[li], trace.post[li], g);

        const std::size_t n = dz.rows, in = layer.in_dim(), out = layer.out_dim();
        // dW += dz^T x ; db += column sums of dz
        for (std::size_t i = 0; i < n; ++i) {
            const double* x = layer_input.data.data() + i * in;
            const double* gz = dz.data.data() + i * out;
            for (std::size_t o = 0; o < out; ++o) {
                double* gw = layer.weight.grad.data() + o * in;
                const double go = gz[o];
                for (std::size_t k = 0; k < in; ++k) gw[k] += go * x[k];
                layer.bias.grad[o] += go;
            }
        }
        // dx = dz W
        Matrix dx(n, in);
        for (std::size_t i = 0; i < n; ++i) {
            const double* gz = dz.data.data() + i * out;
            double* dxi = dx.data.data() + i * in;
            for (std::size_t o = 0; o < out; ++o) {
                const double* w = layer.weight.value.data() + o * in;
                const double go = gz[o];
                for (std::size_t k = 0; k < in; ++k) dxi[k] += go * w[k];
            }
        }
        g = std::move(dx);
    }
    return g;
}

Matrix stop_gradient(const Matrix& values) { return values; }

}  // namespace sslcal
