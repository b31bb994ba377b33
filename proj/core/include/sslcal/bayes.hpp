#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "sslcal/matrix.hpp"
#include "sslcal/rng.hpp"
#include "sslcal/tensor.hpp"

namespace sslcal {

inline double softplus(double x) {
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

inline double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

// Variational Gaussian linear layer with a unit-Gaussian prior per weight.
// The posterior scale is parameterized as sigma = softplus(rho) so it stays
// positive for every finite rho. Weights and biases are both variational.
struct VariationalLinear {
    ParamTensor mu_w, rho_w;  // out x in
    ParamTensor mu_b, rho_b;  // out

    static VariationalLinear init(std::size_t in, std::size_t out, Rng& rng,
                                  double rho_init = -3.0);

    std::size_t in_dim() const { return mu_w.shape[1]; }
    std::size_t out_dim() const { return mu_w.shape[0]; }

    std::vector<ParamTensor*> parameters();
    void zero_grads();
};

// One reparameterized draw: w = mu + softplus(rho) .* eps, eps ~ N(0, I).
// The eps buffers are retained so the reverse pass can route gradients to
// (mu, rho).
struct WeightSample {
    Matrix w;                // out x in
    std::vector<double> b;   // out
    Matrix eps_w;
    std::vector<double> eps_b;
};

WeightSample sample_weights(const VariationalLinear& layer, Rng& rng);
// Deterministic test hook: caller supplies the noise.
WeightSample sample_weights_with(const VariationalLinear& layer, Matrix eps_w,
                                 std::vector<double> eps_b);

// logits = v W^T + b for an already-drawn weight set.
Matrix bayes_forward(const WeightSample& sample, const Matrix& v);

// Accumulates d(mu)/d(rho) gradients from dL/dlogits; returns dL/dv.
Matrix bayes_backward(VariationalLinear& layer, const WeightSample& sample,
                      const Matrix& v, const Matrix& dlogits);

// KL(q(theta|phi) || N(0, I)) in closed form:
// sum over weights of 0.5 * (mu^2 + sigma^2 - 1 - ln sigma^2).
double kl_to_prior(const VariationalLinear& layer);

// Accumulates scale * dKL/d(mu, rho) into the layer gradients.
void kl_backward(VariationalLinear& layer, double scale);

// Monte-Carlo posterior predictive over M weight draws.
struct PosteriorPredictive {
    Matrix mean;    // n x K, rows sum to 1
    Matrix stddev;  // n x K, population std across the M draws
    int samples_used = 0;
};

// mean/std of softmax outputs across M reparameterized draws; M >= 2.
PosteriorPredictive bayes_predict(const VariationalLinear& layer, const Matrix& v,
                                  int num_samples, Rng& rng);
// Test hook over caller-supplied draws.
PosteriorPredictive bayes_predict_with(const Matrix& v,
                                       std::span<const WeightSample> samples);

struct ElboTerms {
    double negative_elbo;
    double data_term;
    double kl_term;
};

// negative_elbo = data_nll + kl_coefficient * KL / dataset_size.
// Per-example KL scaling is the minibatch ELBO convention; the coefficient
// carries the warm-up schedule.
ElboTerms elbo_terms(const VariationalLinear& layer, double data_nll,
                     double kl_coefficient, std::size_t dataset_size);

}  // namespace sslcal
