#include <benchmark/benchmark.h>

#include "sslcal/bayes.hpp"
#include "sslcal/calibration.hpp"
#include "sslcal/losses.hpp"
#include "sslcal/network.hpp"
#include "sslcal/paws.hpp"
#include "sslcal/rng.hpp"

using namespace sslcal;

namespace {

Matrix random_inputs(std::size_t n, std::size_t d, Rng& rng) {
    Matrix m(n, d);
    for (double& v : m.data) v = rng.normal();
    return m;
}

void BM_forward_backward(benchmark::State& state) {
    Rng rng(1);
    Network net = Network::mlp(2, {64, 64}, 4, Activation::relu, rng);
    const Matrix x = random_inputs(static_cast<std::size_t>(state.range(0)), 2, rng);
    std::vector<int> y(x.rows);
    for (auto& v : y) v = static_cast<int>(rng.index(4));
    for (auto _ : state) {
        net.zero_grads();
        const auto trace = forward(net, x);
        const auto ce = softmax_cross_entropy(trace.output(), Targets::hard(y));
        benchmark::DoNotOptimize(backward(net, trace, ce.dlogits));
    }
}
BENCHMARK(BM_forward_backward)->Arg(64)->Arg(448);

void BM_bayes_predict(benchmark::State& state) {
    Rng rng(2);
    VariationalLinear head = VariationalLinear::init(64, 4, rng);
    const Matrix v = random_inputs(448, 64, rng);
    for (auto _ : state) {
        benchmark::DoNotOptimize(
            bayes_predict(head, v, static_cast<int>(state.range(0)), rng));
    }
}
BENCHMARK(BM_bayes_predict)->Arg(10)->Arg(50);

void BM_ece(benchmark::State& state) {
    Rng rng(3);
    const Matrix probs = softmax(random_inputs(10000, 10, rng));
    std::vector<int> y(probs.rows);
    for (auto& v : y) v = static_cast<int>(rng.index(10));
    for (auto _ : state) benchmark::DoNotOptimize(ece(probs, y));
}
BENCHMARK(BM_ece);

void BM_snn_classify(benchmark::State& state) {
    Rng rng(4);
    const Matrix queries = random_inputs(256, 32, rng);
    SupportSet support;
    support.embeddings = random_inputs(64, 32, rng);
    support.labels = Matrix(64, 4);
    for (std::size_t i = 0; i < 64; ++i) support.labels(i, i % 4) = 1.0;
    support.temperature = 0.1;
    for (auto _ : state) benchmark::DoNotOptimize(snn_classify(queries, support));
}
BENCHMARK(BM_snn_classify);

}  // namespace

BENCHMARK_MAIN();
