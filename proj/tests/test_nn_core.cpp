#include <doctest.h>

#include <cmath>

#include "sslcal/errors.hpp"
#include "sslcal/losses.hpp"
#include "sslcal/network.hpp"
#include "sslcal/optim.hpp"
#include "test_util.hpp"

using namespace sslcal;

namespace {

Network single_linear(std::size_t in, std::size_t out) {
    Rng rng(0);
    Network net;
    net.layers.push_back(Network::make_layer(in, out, Activation::identity, rng));
    net.head_start = 0;
    return net;
}

Network random_net(Rng& rng, std::size_t in, std::vector<std::size_t> dims,
                   std::vector<Activation> acts) {
    Network net;
    std::size_t cur = in;
    for (std::size_t i = 0; i < dims.size(); ++i) {
        net.layers.push_back(Network::make_layer(cur, dims[i], acts[i], rng));
        cur = dims[i];
    }
    net.head_start = net.layers.size() - 1;
    return net;
}

}  // namespace

TEST_CASE("forward: zero-weight linear layer maps anything to zero") {
    Network net = single_linear(3, 2);
    for (double& w : net.layers[0].weight.value) w = 0.0;
    Matrix x(2, 3);
    x(0, 0) = 1.5; x(0, 1) = -2.0; x(0, 2) = 7.0;
    x(1, 0) = 0.0; x(1, 1) = 3.25; x(1, 2) = -1.0;
    const auto trace = forward(net, x);
    for (double v : trace.output().data) CHECK(v == 0.0);
}

TEST_CASE("forward: identity-weight 2x2 layer reproduces its input") {
    Network net = single_linear(2, 2);
    net.layers[0].weight.value = {1.0, 0.0, 0.0, 1.0};
    Matrix x(1, 2);
    x(0, 0) = 1.0;
    x(0, 1) = 2.0;
    const auto trace = forward(net, x);
    CHECK(trace.output()(0, 0) == 1.0);
    CHECK(trace.output()(0, 1) == 2.0);
}

TEST_CASE("forward: one-hidden-layer net matches a hand evaluation") {
    // W1 = [[0.5,-1],[0.25,0.75]], b1 = [0.1,-0.2], relu; W2 = [[1,2]], b2 = [0.5]
    Rng rng(0);
    Network net;
    net.layers.push_back(Network::make_layer(2, 2, Activation::relu, rng));
    net.layers.push_back(Network::make_layer(2, 1, Activation::identity, rng));
    net.head_start = 1;
    net.layers[0].weight.value = {0.5, -1.0, 0.25, 0.75};
    net.layers[0].bias.value = {0.1, -0.2};
    net.layers[1].weight.value = {1.0, 2.0};
    net.layers[1].bias.value = {0.5};

    Matrix x(2, 2);
    x(0, 0) = 1.0; x(0, 1) = 0.0;
    x(1, 0) = 0.0; x(1, 1) = 1.0;
    const auto trace = forward(net, x);
    // row 0: z1 = [0.6, 0.05] -> relu -> y = 0.6 + 2*0.05 + 0.5 = 1.2
    CHECK(trace.output()(0, 0) == doctest::Approx(1.2).epsilon(1e-12));
    // row 1: z1 = [-0.9, 0.55] -> relu [0, 0.55] -> y = 1.1 + 0.5 = 1.6
    CHECK(trace.output()(1, 0) == doctest::Approx(1.6).epsilon(1e-12));
}

TEST_CASE("forward: input width mismatch is a configuration error") {
    Network net = single_linear(3, 2);
    CHECK_THROWS_AS(forward(net, Matrix(1, 4)), ConfigError);
}

TEST_CASE("softmax_cross_entropy: [0,0] against class 0 gives ln 2") {
    Matrix logits(1, 2);
    const auto res = softmax_cross_entropy(logits, Targets::hard({0}));
    CHECK(res.loss == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("softmax_cross_entropy: saturated margin drives the loss to zero") {
    Matrix logits(1, 2);
    logits(0, 0) = 200.0;
    logits(0, 1) = 0.0;
    const auto res = softmax_cross_entropy(logits, Targets::hard({0}));
    CHECK(res.loss >= 0.0);
    CHECK(res.loss < 1e-80);
}

TEST_CASE("softmax_cross_entropy: soft target equal to softmax is a fixed point") {
    Rng rng(7);
    Matrix logits = testutil::random_matrix(4, 5, rng);
    const auto res = softmax_cross_entropy(logits, Targets::soft(softmax(logits)));
    for (double g : res.dlogits.data) CHECK(std::abs(g) < 1e-15);
}

TEST_CASE("softmax_cross_entropy: class-count mismatch is a configuration error") {
    Matrix logits(1, 3);
    Matrix target(1, 2, 0.5);
    CHECK_THROWS_AS(softmax_cross_entropy(logits, Targets::soft(target)),
                    ConfigError);
}

TEST_CASE("softmax rows are stochastic within 1e-9") {
    Rng rng(11);
    const Matrix p = softmax(testutil::random_matrix(50, 7, rng, 5.0));
    for (std::size_t i = 0; i < p.rows; ++i) {
        double sum = 0.0;
        for (std::size_t j = 0; j < p.cols; ++j) {
            sum += p(i, j);
            CHECK(p(i, j) >= 0.0);
        }
        CHECK(std::abs(sum - 1.0) < 1e-9);
    }
}

TEST_CASE("backward: dW = g x^T on a hand-set 2x2 linear layer") {
    Network net = single_linear(2, 2);
    net.layers[0].weight.value = {1.0, 2.0, 3.0, 4.0};
    Matrix x(1, 2);
    x(0, 0) = 5.0;
    x(0, 1) = 6.0;
    const auto trace = forward(net, x);
    Matrix g(1, 2);
    g(0, 0) = 0.1;
    g(0, 1) = 0.2;
    const Matrix dx = backward(net, trace, g);

    CHECK(net.layers[0].weight.grad[0] == doctest::Approx(0.5));
    CHECK(net.layers[0].weight.grad[1] == doctest::Approx(0.6));
    CHECK(net.layers[0].weight.grad[2] == doctest::Approx(1.0));
    CHECK(net.layers[0].weight.grad[3] == doctest::Approx(1.2));
    CHECK(net.layers[0].bias.grad[0] == doctest::Approx(0.1));
    CHECK(net.layers[0].bias.grad[1] == doctest::Approx(0.2));
    CHECK(dx(0, 0) == doctest::Approx(0.1 * 1.0 + 0.2 * 3.0));
    CHECK(dx(0, 1) == doctest::Approx(0.1 * 2.0 + 0.2 * 4.0));
}

TEST_CASE("backward: zero upstream leaves all gradients zero") {
    Rng rng(3);
    Network net = Network::mlp(3, {5}, 2, Activation::relu, rng);
    const auto trace = forward(net, testutil::random_matrix(4, 3, rng));
    backward(net, trace, Matrix(4, 2));
    for (auto* p : net.parameters())
        for (double g : p->grad) CHECK(g == 0.0);
}

TEST_CASE("backward: repeated calls accumulate") {
    Rng rng(5);
    Network net = Network::mlp(2, {4}, 3, Activation::tanh, rng);
    const Matrix x = testutil::random_matrix(3, 2, rng);
    const auto trace = forward(net, x);
    Matrix g = testutil::random_matrix(3, 3, rng);
    backward(net, trace, g);
    const auto once = net.layers[0].weight.grad;
    backward(net, trace, g);
    for (std::size_t i = 0; i < once.size(); ++i)
        CHECK(net.layers[0].weight.grad[i] == doctest::Approx(2.0 * once[i]));
}

TEST_CASE("backward without a prior forward is a state error") {
    Network net = single_linear(2, 2);
    ForwardTrace empty;
    CHECK_THROWS_AS(backward(net, empty, Matrix(1, 2)), StateError);
}

TEST_CASE("gradient correctness: analytic vs central differences on random nets") {
    // every layer type, nets up to 3 layers and 16 units
    Rng rng(12345);
    const Activation acts[] = {Activation::relu, Activation::tanh,
                               Activation::identity};
    for (int trial = 0; trial < 12; ++trial) {
        const std::size_t depth = 1 + rng.index(3);
        const std::size_t in = 2 + rng.index(4);
        std::vector<std::size_t> dims;
        std::vector<Activation> layer_acts;
        for (std::size_t l = 0; l < depth; ++l) {
            dims.push_back(2 + rng.index(15));
            layer_acts.push_back(acts[rng.index(3)]);
        }
        Network net = random_net(rng, in, dims, layer_acts);
        const Matrix x = testutil::random_matrix(3, in, rng);
        std::vector<int> labels;
        for (int i = 0; i < 3; ++i)
            labels.push_back(static_cast<int>(rng.index(dims.back())));

        net.zero_grads();
        const auto trace = forward(net, x);
        const auto ce = softmax_cross_entropy(trace.output(), Targets::hard(labels));
        backward(net, trace, ce.dlogits);

        auto eval = [&]() {
            return softmax_cross_entropy(forward(net, x).output(),
                                         Targets::hard(labels))
                .loss;
        };
        for (auto* p : net.parameters()) {
            const auto numeric = testutil::finite_diff(p->value, eval);
            CHECK(testutil::max_rel_err(p->grad, numeric) < 1e-4);
        }
    }
}

TEST_CASE("determinism: identical seeds give bit-identical trajectories") {
    auto run = [](std::uint64_t seed) {
        Rng init(seed), data(seed + 1);
        Network net = Network::mlp(4, {8, 8}, 3, Activation::relu, init);
        SgdOptimizer sgd(0.9, 1e-4);
        const Matrix x = testutil::random_matrix(16, 4, data);
        std::vector<int> y;
        for (int i = 0; i < 16; ++i) y.push_back(static_cast<int>(data.index(3)));
        for (int step = 0; step < 120; ++step) {
            net.zero_grads();
            const auto trace = forward(net, x);
            const auto ce = softmax_cross_entropy(trace.output(), Targets::hard(y));
            backward(net, trace, ce.dlogits);
            auto params = net.parameters();
            sgd.step(params, 0.05);
        }
        std::vector<double> flat;
        for (auto* p : net.parameters())
            flat.insert(flat.end(), p->value.begin(), p->value.end());
        return flat;
    };
    const auto a = run(99);
    const auto b = run(99);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("stop_gradient: forward values are identical") {
    Rng rng(2);
    const Matrix x = testutil::random_matrix(5, 4, rng);
    const Matrix y = stop_gradient(x);
    REQUIRE(y.same_shape(x));
    for (std::size_t i = 0; i < x.data.size(); ++i) CHECK(y.data[i] == x.data[i]);
}

TEST_CASE("stop_gradient: pseudo-label branch contributes no gradient") {
    // loss = H(stop_gradient(q1), q2): parameter grads must equal the grads of
    // a computation where q1 comes from a frozen copy of the network.
    Rng rng(21);
    Network net = Network::mlp(3, {6}, 4, Activation::relu, rng);
    Rng data_rng(22);
    const Matrix x1 = testutil::random_matrix(5, 3, data_rng);
    const Matrix x2 = testutil::random_matrix(5, 3, data_rng);

    net.zero_grads();
    const Matrix q1 = stop_gradient(softmax(forward(net, x1).output()));
    const auto trace2 = forward(net, x2);
    const auto ce = softmax_cross_entropy(trace2.output(), Targets::soft(q1));
    backward(net, trace2, ce.dlogits);
    std::vector<double> grads_detached;
    for (auto* p : net.parameters())
        grads_detached.insert(grads_detached.end(), p->grad.begin(),
                              p->grad.end());

    Network frozen = net;  // manually frozen pseudo-label producer
    net.zero_grads();
    const Matrix q1_frozen = softmax(forward(frozen, x1).output());
    const auto trace2b = forward(net, x2);
    const auto ce2 =
        softmax_cross_entropy(trace2b.output(), Targets::soft(q1_frozen));
    backward(net, trace2b, ce2.dlogits);
    std::vector<double> grads_frozen;
    for (auto* p : net.parameters())
        grads_frozen.insert(grads_frozen.end(), p->grad.begin(), p->grad.end());

    REQUIRE(grads_detached.size() == grads_frozen.size());
    for (std::size_t i = 0; i < grads_detached.size(); ++i)
        CHECK(grads_detached[i] == grads_frozen[i]);
}

TEST_CASE("network groups partition the parameters") {
    Rng rng(4);
    Network net = Network::mlp(3, {5, 6}, 2, Activation::relu, rng);
    const auto backbone = net.group("backbone");
    const auto head = net.group("head");
    CHECK(backbone.size() + head.size() == net.parameters().size());
    CHECK(head.size() == 2);  // final linear layer: weight + bias
    CHECK_THROWS_AS(net.group("nonsense"), ConfigError);
}

TEST_CASE("sgd: zero gradient leaves parameters unchanged") {
    ParamTensor p({2});
    p.value = {1.5, -2.5};
    SgdOptimizer sgd(0.9, 0.0);
    ParamTensor* params[] = {&p};
    sgd.step(params, 0.1);
    CHECK(p.value[0] == 1.5);
    CHECK(p.value[1] == -2.5);
}

TEST_CASE("sgd: one step with lr 0.1 and grad 1 decreases the value by 0.1") {
    ParamTensor p({1});
    p.value = {2.0};
    p.grad = {1.0};
    SgdOptimizer sgd(0.0, 0.0);
    ParamTensor* params[] = {&p};
    sgd.step(params, 0.1);
    CHECK(p.value[0] == doctest::Approx(1.9).epsilon(1e-15));
}

TEST_CASE("adam: first-step magnitude is about lr regardless of gradient size") {
    for (double g : {1e-3, 1.0, 1e3}) {
        ParamTensor p({1});
        p.value = {0.0};
        p.grad = {g};
        AdamOptimizer adam;
        ParamTensor* params[] = {&p};
        adam.step(params, 0.01);
        CHECK(std::abs(p.value[0] + 0.01) < 1e-6);  // update = -lr * g/|g|
    }
}

TEST_CASE("optimizers reject non-positive learning rates") {
    ParamTensor p({1});
    ParamTensor* params[] = {&p};
    SgdOptimizer sgd(0.9, 0.0);
    AdamOptimizer adam;
    CHECK_THROWS_AS(sgd.step(params, 0.0), ConfigError);
    CHECK_THROWS_AS(adam.step(params, -0.1), ConfigError);
}

TEST_CASE("cosine_lr endpoints and midpoint") {
    CHECK(cosine_lr(0, 100, 0.3) == doctest::Approx(0.3));
    CHECK(cosine_lr(100, 100, 0.3) == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(cosine_lr(50, 100, 0.3) == doctest::Approx(0.15).epsilon(1e-12));
    CHECK(cosine_lr(250, 100, 0.3) == doctest::Approx(0.0).epsilon(1e-15));
    // monotone non-increasing
    double prev = cosine_lr(0, 50, 1.0);
    for (std::size_t s = 1; s <= 50; ++s) {
        const double cur = cosine_lr(s, 50, 1.0);
        CHECK(cur <= prev + 1e-15);
        prev = cur;
    }
}
