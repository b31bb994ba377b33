#pragma once

#include <algorithm>
#include <cstddef>
#include <utility>
#include <vector>

namespace sslcal {

// A value buffer plus a gradient buffer of identical shape; the unit of
// optimization. Gradients accumulate until zero_grad.
struct ParamTensor {
    std::vector<std::size_t> shape;
    std::vector<double> value;
    std::vector<double> grad;

    ParamTensor() = default;
    explicit ParamTensor(std::vector<std::size_t> s) : shape(std::move(s)) {
        std::size_t n = 1;
        for (auto d : shape) n *= d;
        value.assign(n, 0.0);
        grad.assign(n, 0.0);
    }

    std::size_t numel() const { return value.size(); }
    void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }
};

}  // namespace sslcal
