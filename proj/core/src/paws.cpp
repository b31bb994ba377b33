#include "sslcal/paws.hpp"

#include <cmath>
#include <string>

#include "sslcal/errors.hpp"
#include "sslcal/ssl.hpp"

namespace sslcal {

void SupportSet::validate() const {
    if (temperature <= 0.0)
        throw ConfigError("support set: temperature must be positive");
    if (embeddings.rows == 0) throw InputError("support set is empty");
    if (embeddings.rows != labels.rows)
        throw ConfigError("support set: embedding/label count mismatch");
    std::vector<char> seen(labels.cols, 0);
    for (std::size_t i = 0; i < labels.rows; ++i) {
        int ones = 0;
        for (std::size_t k = 0; k < labels.cols; ++k) {
            const double v = labels(i, k);
            if (v == 1.0)
                ++ones;
            else if (v != 0.0)
                throw InputError("support label row " + std::to_string(i) +
                                 " is not one-hot");
        }
        if (ones != 1)
            throw InputError("support label row " + std::to_string(i) +
                             " is not one-hot");
        seen[argmax(labels.row(i))] = 1;
    }
    for (std::size_t k = 0; k < seen.size(); ++k)
        if (!seen[k])
            throw InputError("support set has no sample for class " +
                             std::to_string(k));
}

namespace {

// Unit-normalize rows; zero-norm rows are rejected.
void normalize_rows(const Matrix& z, Matrix& hat, std::vector<double>& norms,
                    const char* what) {
    hat = Matrix(z.rows, z.cols);
    norms.resize(z.rows);
    for (std::size_t i = 0; i < z.rows; ++i) {
        double sq = 0.0;
        for (std::size_t k = 0; k < z.cols; ++k) sq += z(i, k) * z(i, k);
        const double n = std::sqrt(sq);
        if (n == 0.0)
            throw InputError(std::string(what) + " embedding " +
                             std::to_string(i) + " has zero norm");
        norms[i] = n;
        for (std::size_t k = 0; k < z.cols; ++k) hat(i, k) = z(i, k) / n;
    }
}

}  // namespace

std::pair<Matrix, SnnTrace> snn_classify_traced(const Matrix& queries,
                                                const SupportSet& support) {
    support.validate();
    if (queries.cols != support.embeddings.cols)
        throw ConfigError("snn: query/support dimension mismatch");
    if (queries.rows == 0) throw InputError("snn: empty query batch");

    SnnTrace tr;
    tr.inv_temperature = 1.0 / support.temperature;
    normalize_rows(queries, tr.query_hat, tr.query_norm, "query");
    normalize_rows(support.embeddings, tr.support_hat, tr.support_norm, "support");

    const std::size_t n = queries.rows, b = support.embeddings.rows,
                      d = queries.cols, k = support.labels.cols;
    tr.cosine = Matrix(n, b);
    tr.weights = Matrix(n, b);
    Matrix probs(n, k);
    for (std::size_t i = 0; i < n; ++i) {
        double mx = -1e300;
        for (std::size_t s = 0; s < b; ++s) {
            double dot = 0.0;
            for (std::size_t j = 0; j < d; ++j)
                dot += tr.query_hat(i, j) * tr.support_hat(s, j);
            tr.cosine(i, s) = dot;
            const double logit = dot / support.temperature;
            if (logit > mx) mx = logit;
        }
        double sum = 0.0;
        for (std::size_t s = 0; s < b; ++s) {
            const double e = std::exp(tr.cosine(i, s) / support.temperature - mx);
            tr.weights(i, s) = e;
            sum += e;
        }
        for (std::size_t s = 0; s < b; ++s) {
            tr.weights(i, s) /= sum;
            for (std::size_t c = 0; c < k; ++c)
                probs(i, c) += tr.weights(i, s) * support.labels(s, c);
        }
    }
    return {std::move(probs), std::move(tr)};
}

Matrix snn_classify(const Matrix& queries, const SupportSet& support) {
    return snn_classify_traced(queries, support).first;
}

SnnGradients snn_backward(const SnnTrace& trace, const Matrix& support_labels,
                          const Matrix& dprobs) {
    const std::size_t n = trace.query_hat.rows, b = trace.support_hat.rows,
                      d = trace.query_hat.cols, k = support_labels.cols;
    if (dprobs.rows != n || dprobs.cols != k)
        throw ConfigError("snn_backward: upstream shape mismatch");

    SnnGradients g;
    g.dqueries = Matrix(n, d);
    g.dsupport = Matrix(b, d);
    for (std::size_t i = 0; i < n; ++i) {
        // dL/dw_is = sum_c dprobs_ic y_sc ; softmax backward over s
        std::vector<double> dw(b, 0.0);
        double dot_wd = 0.0;
        for (std::size_t s = 0; s < b; ++s) {
            double acc = 0.0;
            for (std::size_t c = 0; c < k; ++c)
                acc += dprobs(i, c) * support_labels(s, c);
            dw[s] = acc;
            dot_wd += trace.weights(i, s) * acc;
        }
        for (std::size_t s = 0; s < b; ++s) {
            const double dlogit = trace.weights(i, s) * (dw[s] - dot_wd);
            const double dcos = dlogit * trace.inv_temperature;
            // d cos / d z_i = (b_hat - cos * a_hat) / |z_i|
            // d cos / d z_s = (a_hat - cos * b_hat) / |z_s|
            const double c = trace.cosine(i, s);
            for (std::size_t j = 0; j < d; ++j) {
                g.dqueries(i, j) += dcos *
                                    (trace.support_hat(s, j) -
                                     c * trace.query_hat(i, j)) /
                                    trace.query_norm[i];
                g.dsupport(s, j) += dcos *
                                    (trace.query_hat(i, j) -
                                     c * trace.support_hat(s, j)) /
                                    trace.support_norm[s];
            }
        }
    }
    return g;
}

double paws_loss(const Matrix& q1_pred, const Matrix& q2_pred,
                 const Matrix& q1_target, const Matrix& q2_target, double t) {
    if (!q1_pred.same_shape(q2_pred) || !q1_pred.same_shape(q1_target) ||
        !q1_pred.same_shape(q2_target))
        throw ConfigError("paws_loss: shape mismatch");
    if (q1_pred.rows == 0) throw InputError("paws_loss: empty batch");
    const Matrix t1 = sharpen(q1_target, t);
    const Matrix t2 = sharpen(q2_target, t);
    double loss = 0.0;
    for (std::size_t i = 0; i < q1_pred.rows; ++i)
        for (std::size_t c = 0; c < q1_pred.cols; ++c) {
            if (t2(i, c) != 0.0)
                loss += -t2(i, c) * std::log(std::max(q1_pred(i, c), 1e-300));
            if (t1(i, c) != 0.0)
                loss += -t1(i, c) * std::log(std::max(q2_pred(i, c), 1e-300));
        }
    return loss / (2.0 * static_cast<double>(q1_pred.rows));
}

double me_max(std::span<const double> q_bar) {
    double neg_entropy = 0.0;
    for (double p : q_bar)
        if (p > 0.0) neg_entropy += p * std::log(p);
    return neg_entropy;
}

std::vector<double> me_max_backward(std::span<const double> q_bar) {
    std::vector<double> g(q_bar.size());
    for (std::size_t i = 0; i < q_bar.size(); ++i)
        g[i] = q_bar[i] > 0.0 ? std::log(q_bar[i]) + 1.0 : 1.0;
    return g;
}

WeightAggregate WeightAggregate::make(const Network& source, AggregateMode mode,
                                      int t_swa) {
    WeightAggregate agg;
    agg.mode = mode;
    agg.net = source;   // initialized as a copy
    agg.net.zero_grads();
    agg.n_a = 0;
    agg.t_swa = t_swa;
    return agg;
}

void copy_update(WeightAggregate& agg, const Network& source) {
    agg.net.copy_values_from(source);
}

void swa_update(WeightAggregate& agg, const Network& source, int epoch) {
    if (agg.mode != AggregateMode::swa)
        throw StateError("swa_update on a non-SWA aggregate");
    if (epoch < agg.t_swa) {
        agg.net.copy_values_from(source);
        return;
    }
    const double na = static_cast<double>(agg.n_a);
    auto dst = agg.net.parameters();
    auto src = source.parameters();
    for (std::size_t p = 0; p < dst.size(); ++p)
        for (std::size_t j = 0; j < dst[p]->numel(); ++j)
            dst[p]->value[j] =
                (na * dst[p]->value[j] + src[p]->value[j]) / (na + 1.0);
    ++agg.n_a;
}

void ema_update(WeightAggregate& agg, const Network& source, double gamma) {
    if (gamma < 0.0 || gamma > 1.0)
        throw ConfigError("ema_update: gamma must lie in [0,1]");
    auto dst = agg.net.parameters();
    auto src = source.parameters();
    for (std::size_t p = 0; p < dst.size(); ++p)
        for (std::size_t j = 0; j < dst[p]->numel(); ++j)
            dst[p]->value[j] =
                gamma * dst[p]->value[j] + (1.0 - gamma) * src[p]->value[j];
}

double gamma_schedule(int epoch, int total_epochs, GammaSchedule kind,
                      double gamma_max, int warmup_epochs, double cosine_start) {
    if (epoch < 0) throw ConfigError("gamma_schedule: epoch must be >= 0");
    if (kind == GammaSchedule::linear_warmup) {
        if (warmup_epochs <= 0)
            throw ConfigError("gamma_schedule: warm-up must be positive");
        const double frac =
            std::min(1.0, static_cast<double>(epoch) /
                              static_cast<double>(warmup_epochs));
        return frac * gamma_max;
    }
    if (total_epochs <= 0)
        throw ConfigError("gamma_schedule: total epochs must be positive");
    constexpr double pi = 3.141592653589793238462643383279502884;
    const double e = std::min(epoch, total_epochs);
    return 1.0 - cosine_start *
                     (1.0 + std::cos(pi * e / static_cast<double>(total_epochs))) /
                     2.0;
}

std::pair<Matrix, BamEmbedTrace> bam_paws_embed_with(
    const VariationalLinear& layer, const Matrix& v,
    std::vector<WeightSample> samples) {
    if (samples.empty())
        throw ConfigError("bam_paws_embed needs at least one sample");
    BamEmbedTrace trace;
    trace.v = v;
    trace.samples = std::move(samples);
    Matrix z(v.rows, layer.out_dim());
    for (const auto& s : trace.samples) {
        const Matrix out = bayes_forward(s, v);
        for (std::size_t i = 0; i < z.data.size(); ++i) z.data[i] += out.data[i];
    }
    const double inv_m = 1.0 / static_cast<double>(trace.samples.size());
    for (double& x : z.data) x *= inv_m;
    return {std::move(z), std::move(trace)};
}

std::pair<Matrix, BamEmbedTrace> bam_paws_embed_traced(
    const VariationalLinear& layer, const Matrix& v, int num_samples, Rng& rng) {
    if (num_samples < 1)
        throw ConfigError("bam_paws_embed needs at least one sample");
    std::vector<WeightSample> samples;
    samples.reserve(static_cast<std::size_t>(num_samples));
    for (int m = 0; m < num_samples; ++m)
        samples.push_back(sample_weights(layer, rng));
    return bam_paws_embed_with(layer, v, std::move(samples));
}

Matrix bam_paws_embed(const VariationalLinear& layer, const Matrix& v,
                      int num_samples, Rng& rng) {
    return bam_paws_embed_traced(layer, v, num_samples, rng).first;
}

Matrix bam_paws_embed_backward(VariationalLinear& layer,
                               const BamEmbedTrace& trace, const Matrix& dz) {
    const double inv_m = 1.0 / static_cast<double>(trace.samples.size());
    Matrix scaled = dz;
    for (double& x : scaled.data) x *= inv_m;
    Matrix dv(trace.v.rows, trace.v.cols);
    for (const auto& s : trace.samples) {
        const Matrix part = bayes_backward(layer, s, trace.v, scaled);
        for (std::size_t i = 0; i < dv.data.size(); ++i) dv.data[i] += part.data[i];
    }
    return dv;
}

}  // namespace sslcal
