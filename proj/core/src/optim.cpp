#include "sslcal/optim.hpp"

#include <cmath>

#include "sslcal/errors.hpp"

namespace sslcal {

namespace {
constexpr double kPi = 3.141592653589793238462643383279502884;

void check_state(std::vector<std::vector<double>>& state,
                 std::span<ParamTensor* const> params) {
    if (state.empty()) {
        state.resize(params.size());
        for (std::size_t i = 0; i < params.size(); ++i)
            state[i].assign(params[i]->numel(), 0.0);
    }
    if (state.size() != params.size())
        throw StateError("optimizer called with a different parameter list");
    for (std::size_t i = 0; i < params.size(); ++i)
        if (state[i].size() != params[i]->numel())
            throw StateError("optimizer state does not match parameter shapes");
}
}  // namespace

double cosine_lr(std::size_t step, std::size_t total_steps, double base_lr) {
    if (step > total_steps) step = total_steps;
    const double frac = total_steps == 0
                            ? 0.0
                            : static_cast<double>(step) /
                                  static_cast<double>(total_steps);
    return base_lr * 0.5 * (1.0 + std::cos(kPi * frac));
}

void SgdOptimizer::step(std::span<ParamTensor* const> params, double lr) {
    if (lr <= 0.0) throw ConfigError("sgd: learning rate must be positive");
    check_state(velocity_, params);
    for (std::size_t i = 0; i < params.size(); ++i) {
        ParamTensor& p = *params[i];
        std::vector<double>& vel = velocity_[i];
        for (std::size_t j = 0; j < p.numel(); ++j) {
            const double g = p.grad[j] + weight_decay_ * p.value[j];
            vel[j] = momentum_ * vel[j] + g;
            p.value[j] -= lr * vel[j];
        }
    }
}

void AdamOptimizer::step(std::span<ParamTensor* const> params, double lr) {
    if (lr <= 0.0) throw ConfigError("adam: learning rate must be positive");
    check_state(m_, params);
    check_state(v_, params);
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        ParamTensor& p = *params[i];
        for (std::size_t j = 0; j < p.numel(); ++j) {
            const double g = p.grad[j];
            m_[i][j] = beta1_ * m_[i][j] + (1.0 - beta1_) * g;
            v_[i][j] = beta2_ * v_[i][j] + (1.0 - beta2_) * g * g;
            const double mhat = m_[i][j] / bc1;
            const double vhat = v_[i][j] / bc2;
            p.value[j] -= lr * mhat / (std::sqrt(vhat) + eps_);
        }
    }
}

}  // namespace sslcal
