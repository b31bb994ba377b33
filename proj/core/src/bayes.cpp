#include "sslcal/bayes.hpp"

#include <cmath>

#include "sslcal/errors.hpp"
#include "sslcal/losses.hpp"

namespace sslcal {

VariationalLinear VariationalLinear::init(std::size_t in, std::size_t out,
                                          Rng& rng, double rho_init) {
    if (in == 0 || out == 0)
        throw ConfigError("variational layer dimensions must be positive");
    VariationalLinear layer;
    layer.mu_w = ParamTensor({out, in});
    layer.rho_w = ParamTensor({out, in});
    layer.mu_b = ParamTensor({out});
    layer.rho_b = ParamTensor({out});
    const double limit = std::sqrt(6.0 / static_cast<double>(in));
    for (double& w : layer.mu_w.value) w = rng.uniform(-limit, limit);
    for (double& r : layer.rho_w.value) r = rho_init;
    for (double& r : layer.rho_b.value) r = rho_init;
    return layer;
}

std::vector<ParamTensor*> VariationalLinear::parameters() {
    return {&mu_w, &rho_w, &mu_b, &rho_b};
}

void VariationalLinear::zero_grads() {
    mu_w.zero_grad();
    rho_w.zero_grad();
    mu_b.zero_grad();
    rho_b.zero_grad();
}

WeightSample sample_weights(const VariationalLinear& layer, Rng& rng) {
    Matrix eps_w(layer.out_dim(), layer.in_dim());
    std::vector<double> eps_b(layer.out_dim());
    rng.fill_normal(eps_w.data);
    rng.fill_normal(eps_b);
    return sample_weights_with(layer, std::move(eps_w), std::move(eps_b));
}

WeightSample sample_weights_with(const VariationalLinear& layer, Matrix eps_w,
                                 std::vector<double> eps_b) {
    if (eps_w.rows != layer.out_dim() || eps_w.cols != layer.in_dim() ||
        eps_b.size() != layer.out_dim())
        throw ConfigError("sample_weights_with: noise shape mismatch");
    WeightSample s;
    s.eps_w = std::move(eps_w);
    s.eps_b = std::move(eps_b);
    s.w = Matrix(layer.out_dim(), layer.in_dim());
    s.b.resize(layer.out_dim());
    for (std::size_t i = 0; i < s.w.data.size(); ++i)
        s.w.data[i] = layer.mu_w.value[i] +
                      softplus(layer.rho_w.value[i]) * s.eps_w.data[i];
    for (std::size_t i = 0; i < s.b.size(); ++i)
        s.b[i] = layer.mu_b.value[i] + softplus(layer.rho_b.value[i]) * s.eps_b[i];
    return s;
}

Matrix bayes_forward(const WeightSample& sample, const Matrix& v) {
    const std::size_t n = v.rows, in = sample.w.cols, out = sample.w.rows;
    if (v.cols != in) throw ConfigError("bayes_forward: embedding width mismatch");
    Matrix logits(n, out);
    for (std::size_t i = 0; i < n; ++i) {
        const double* x = v.data.data() + i * in;
        double* z = logits.data.data() + i * out;
        for (std::size_t o = 0; o < out; ++o) {
            const double* w = sample.w.data.data() + o * in;
            double acc = sample.b[o];
            for (std::size_t k = 0; k < in; ++k) acc += w[k] * x[k];
            z[o] = acc;
        }
    }
    return logits;
}

Matrix bayes_backward(VariationalLinear& layer, const WeightSample& sample,
                      const Matrix& v, const Matrix& dlogits) {
    const std::size_t n = v.rows, in = layer.in_dim(), out = layer.out_dim();
    if (dlogits.rows != n || dlogits.cols != out)
        throw ConfigError("bayes_backward: upstream shape mismatch");

    // dL/dW accumulated locally, then routed through the reparameterization:
    // dL/dmu = dL/dW, dL/drho = dL/dW .* eps .* sigmoid(rho).
    Matrix dw(out, in);
    std::vector<double> db(out, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double* x = v.data.data() + i * in;
        const double* g = dlogits.data.data() + i * out;
        for (std::size_t o = 0; o < out; ++o) {
            double* dwo = dw.data.data() + o * in;
            for (std::size_t k = 0; k < in; ++k) dwo[k] += g[o] * x[k];
            db[o] += g[o];
        }
    }
    for (std::size_t i = 0; i < dw.data.size(); ++i) {
        layer.mu_w.grad[i] += dw.data[i];
        layer.rho_w.grad[i] +=
            dw.data[i] * sample.eps_w.data[i] * sigmoid(layer.rho_w.value[i]);
    }
    for (std::size_t o = 0; o < out; ++o) {
        layer.mu_b.grad[o] += db[o];
        layer.rho_b.grad[o] += db[o] * sample.eps_b[o] * sigmoid(layer.rho_b.value[o]);
    }

    Matrix dv(n, in);
    for (std::size_t i = 0; i < n; ++i) {
        const double* g = dlogits.data.data() + i * out;
        double* dvi = dv.data.data() + i * in;
        for (std::size_t o = 0; o < out; ++o) {
            const double* w = sample.w.data.data() + o * in;
            for (std::size_t k = 0; k < in; ++k) dvi[k] += g[o] * w[k];
        }
    }
    return dv;
}

namespace {

double kl_term(double mu, double rho) {
    const double sg = softplus(rho);
    return 0.5 * (mu * mu + sg * sg - 1.0 - 2.0 * std::log(sg));
}

}  // namespace

double kl_to_prior(const VariationalLinear& layer) {
    double kl = 0.0;
    for (std::size_t i = 0; i < layer.mu_w.numel(); ++i)
        kl += kl_term(layer.mu_w.value[i], layer.rho_w.value[i]);
    for (std::size_t i = 0; i < layer.mu_b.numel(); ++i)
        kl += kl_term(layer.mu_b.value[i], layer.rho_b.value[i]);
    return kl;
}

void kl_backward(VariationalLinear& layer, double scale) {
    // dKL/dmu = mu ; dKL/drho = (sigma - 1/sigma) * sigmoid(rho)
    for (std::size_t i = 0; i < layer.mu_w.numel(); ++i) {
        layer.mu_w.grad[i] += scale * layer.mu_w.value[i];
        const double sg = softplus(layer.rho_w.value[i]);
        layer.rho_w.grad[i] +=
            scale * (sg - 1.0 / sg) * sigmoid(layer.rho_w.value[i]);
    }
    for (std::size_t i = 0; i < layer.mu_b.numel(); ++i) {
        layer.mu_b.grad[i] += scale * layer.mu_b.value[i];
        const double sg = softplus(layer.rho_b.value[i]);
        layer.rho_b.grad[i] +=
            scale * (sg - 1.0 / sg) * sigmoid(layer.rho_b.value[i]);
    }
}

PosteriorPredictive bayes_predict(const VariationalLinear& layer, const Matrix& v,
                                  int num_samples, Rng& rng) {
    if (num_samples < 2)
        throw ConfigError("bayes_predict needs at least 2 samples for a std");
    std::vector<WeightSample> samples;
    samples.reserve(static_cast<std::size_t>(num_samples));
    for (int m = 0; m < num_samples; ++m)
        samples.push_back(sample_weights(layer, rng));
    return bayes_predict_with(v, samples);
}

PosteriorPredictive bayes_predict_with(const Matrix& v,
                                       std::span<const WeightSample> samples) {
    if (samples.size() < 2)
        throw ConfigError("bayes_predict needs at least 2 samples for a std");
    const std::size_t big_m = samples.size();
    std::vector<Matrix> probs;
    probs.reserve(big_m);
    for (const auto& s : samples) probs.push_back(softmax(bayes_forward(s, v)));

    PosteriorPredictive pp;
    pp.samples_used = static_cast<int>(big_m);
    pp.mean = Matrix(v.rows, probs[0].cols);
    pp.stddev = Matrix(v.rows, probs[0].cols);
    for (const auto& p : probs)
        for (std::size_t i = 0; i < p.data.size(); ++i)
            pp.mean.data[i] += p.data[i];
    for (double& x : pp.mean.data) x /= static_cast<double>(big_m);
    // population std: divide by M, not M-1
    for (const auto& p : probs)
        for (std::size_t i = 0; i < p.data.size(); ++i) {
            const double d = p.data[i] - pp.mean.data[i];
            pp.stddev.data[i] += d * d;
        }
    for (double& x : pp.stddev.data)
        x = std::sqrt(x / static_cast<double>(big_m));
    return pp;
}

ElboTerms elbo_terms(const VariationalLinear& layer, double data_nll,
                     double kl_coefficient, std::size_t dataset_size) {
    if (dataset_size == 0) throw ConfigError("elbo_terms: dataset size must be > 0");
    if (kl_coefficient < 0.0 || kl_coefficient > 1.0)
        throw ConfigError("elbo_terms: kl coefficient must lie in [0, 1]");
    ElboTerms t;
    t.data_term = data_nll;
    t.kl_term =
        kl_coefficient * kl_to_prior(layer) / static_cast<double>(dataset_size);
    t.negative_elbo = t.data_term + t.kl_term;
    return t;
}

}  // namespace sslcal
