#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "sslcal/tensor.hpp"

namespace sslcal {

// base_lr * 0.5 * (1 + cos(pi * step / total)); steps past the end clamp to 0.
double cosine_lr(std::size_t step, std::size_t total_steps, double base_lr);

// SGD with momentum buffer; weight decay is added to the gradient.
class SgdOptimizer {
public:
    SgdOptimizer(double momentum, double weight_decay)
        : momentum_(momentum), weight_decay_(weight_decay) {}

    void step(std::span<ParamTensor* const> params, double lr);

private:
    double momentum_, weight_decay_;
    std::vector<std::vector<double>> velocity_;
};

// Adam with bias correction.
class AdamOptimizer {
public:
    explicit AdamOptimizer(double beta1 = 0.9, double beta2 = 0.999,
                           double eps = 1e-8)
        : beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(std::span<ParamTensor* const> params, double lr);

private:
    double beta1_, beta2_, eps_;
    long t_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

}  // namespace sslcal
