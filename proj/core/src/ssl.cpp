#include "sslcal/ssl.hpp"

#include <algorithm>
#include <cmath>

#include "sslcal/errors.hpp"

namespace sslcal {

void MethodPreset::validate() const {
    if (tau < 0.0 || tau > 1.0) throw ConfigError("preset: tau must lie in [0,1]");
    if (!hard_labels && (t <= 0.0 || t > 1.0))
        throw ConfigError("preset: temperature must lie in (0,1] or be hard");
    if (mu < 1.0) throw ConfigError("preset: mu must be >= 1");
    if (lambda_u < 0.0) throw ConfigError("preset: lambda must be >= 0");
}

std::vector<MethodPreset> preset_catalog() {
    std::vector<MethodPreset> presets;
    presets.push_back({"PL", 1, 1, 0.95, 0.0, true, AugmentMode::symmetric_weak, false});
    presets.push_back({"UDA", 7, 1, 0.8, 0.4, false, AugmentMode::asymmetric, false});
    presets.push_back({"FM", 7, 1, 0.95, 0.0, true, AugmentMode::asymmetric, false});
    presets.push_back({"BAM-PL", 1, 1, 0.95, 0.0, true, AugmentMode::symmetric_weak, true});
    presets.push_back({"BAM-UDA", 7, 1, 0.8, 0.9, false, AugmentMode::asymmetric, true});
    presets.push_back({"BAM-FM", 7, 1, 0.95, 0.0, true, AugmentMode::asymmetric, true});
    return presets;
}

const MethodPreset& find_preset(const std::string& name) {
    static const std::vector<MethodPreset> catalog = preset_catalog();
    for (const auto& p : catalog)
        if (p.name == name) return p;
    throw ConfigError("unknown method preset: " + name);
}

Matrix sharpen(const Matrix& q, double t) {
    if (t <= 0.0) throw ConfigError("sharpen: temperature must be positive");
    if (t == 1.0) return q;
    Matrix out(q.rows, q.cols);
    const double inv_t = 1.0 / t;
    for (std::size_t i = 0; i < q.rows; ++i) {
        const double mx = max_of(q.row(i));
        if (mx <= 0.0) throw InputError("sharpen: row with all-zero mass");
        double sum = 0.0;
        for (std::size_t k = 0; k < q.cols; ++k) {
            const double r = std::pow(q(i, k) / mx, inv_t);
            out(i, k) = r;
            sum += r;
        }
        for (std::size_t k = 0; k < q.cols; ++k) out(i, k) /= sum;
    }
    return out;
}

Matrix sharpen_hard(const Matrix& q) {
    Matrix out(q.rows, q.cols);
    for (std::size_t i = 0; i < q.rows; ++i) {
        if (max_of(q.row(i)) <= 0.0)
            throw InputError("sharpen: row with all-zero mass");
        out(i, argmax(q.row(i))) = 1.0;
    }
    return out;
}

Matrix sharpen(const Matrix& q, const MethodPreset& preset) {
    return preset.hard_labels ? sharpen_hard(q) : sharpen(q, preset.t);
}

Matrix sharpen_backward(const Matrix& q, double t, const Matrix& upstream) {
    if (t <= 0.0) throw ConfigError("sharpen_backward: temperature must be positive");
    if (!q.same_shape(upstream))
        throw ConfigError("sharpen_backward: shape mismatch");
    if (t == 1.0) return upstream;
    Matrix dq(q.rows, q.cols);
    const double inv_t = 1.0 / t;
    for (std::size_t i = 0; i < q.rows; ++i) {
        const double mx = max_of(q.row(i));
        if (mx <= 0.0) throw InputError("sharpen_backward: row with all-zero mass");
        std::vector<double> rho(q.cols);
        double sum = 0.0;
        for (std::size_t k = 0; k < q.cols; ++k) {
            rho[k] = std::pow(q(i, k) / mx, inv_t);
            sum += rho[k];
        }
        double dot = 0.0;
        for (std::size_t k = 0; k < q.cols; ++k) {
            rho[k] /= sum;
            dot += upstream(i, k) * rho[k];
        }
        // d rho_k / d q_j = (1/t) rho_j/q_j (delta_kj - rho_k)
        for (std::size_t j = 0; j < q.cols; ++j) {
            const double qj = q(i, j);
            dq(i, j) = qj > 0.0
                           ? inv_t * rho[j] / qj * (upstream(i, j) - dot)
                           : 0.0;
        }
    }
    return dq;
}

std::vector<char> select_by_confidence(const Matrix& q, double tau) {
    if (tau < 0.0 || tau > 1.0)
        throw ConfigError("select_by_confidence: tau must lie in [0,1]");
    std::vector<char> mask(q.rows);
    for (std::size_t i = 0; i < q.rows; ++i)
        mask[i] = max_of(q.row(i)) >= tau ? 1 : 0;
    return mask;
}

double quantile_linear(std::vector<double> values, double q) {
    if (values.empty()) throw InputError("quantile over an empty set");
    if (q <= 0.0 || q > 1.0) throw ConfigError("quantile level must lie in (0,1]");
    std::sort(values.begin(), values.end());
    const double pos = q * static_cast<double>(values.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    const double frac = pos - static_cast<double>(lo);
    if (lo + 1 >= values.size()) return values.back();
    return values[lo] + frac * (values[lo + 1] - values[lo]);
}

void SelectionState::push(double threshold) {
    if (recent_thresholds.size() == capacity) recent_thresholds.pop_front();
    recent_thresholds.push_back(threshold);
}

double SelectionState::effective_threshold() const {
    if (recent_thresholds.empty())
        throw StateError("selection state has no thresholds yet");
    double sum = 0.0;
    for (double v : recent_thresholds) sum += v;
    return sum / static_cast<double>(recent_thresholds.size());
}

VarianceSelection select_by_variance(const PosteriorPredictive& pp,
                                     SelectionState& state, double q_effective) {
    if (pp.mean.rows == 0) throw InputError("select_by_variance: empty batch");
    if (q_effective <= 0.0 || q_effective > 1.0)
        throw ConfigError("select_by_variance: Q must lie in (0,1]");

    VarianceSelection sel;
    sel.scores.resize(pp.mean.rows);
    for (std::size_t i = 0; i < pp.mean.rows; ++i) {
        const std::size_t c = argmax(pp.mean.row(i));
        const double sd = pp.stddev(i, c);
        sel.scores[i] = sd * sd;
    }
    state.push(quantile_linear(sel.scores, q_effective));
    sel.threshold = state.effective_threshold();
    sel.mask.resize(sel.scores.size());
    for (std::size_t i = 0; i < sel.scores.size(); ++i)
        sel.mask[i] = sel.scores[i] <= sel.threshold ? 1 : 0;
    return sel;
}

double q_warmup(int epoch, double target_q, int warmup_epochs) {
    if (epoch < 0) throw ConfigError("q_warmup: epoch must be >= 0");
    if (target_q < 0.1) throw ConfigError("q_warmup: target Q must be >= 0.1");
    if (warmup_epochs <= 0) throw ConfigError("q_warmup: warm-up must be positive");
    if (epoch >= warmup_epochs) return target_q;
    return 0.1 + (target_q - 0.1) * static_cast<double>(epoch) /
                     static_cast<double>(warmup_epochs);
}

double kl_coefficient(int epoch, int ramp_epochs, KlSchedule kind) {
    if (kind == KlSchedule::constant) return 1.0;
    if (ramp_epochs <= 0) throw ConfigError("kl ramp length must be positive");
    const double e = std::min(epoch, ramp_epochs);
    constexpr double pi = 3.141592653589793238462643383279502884;
    return 1.0 - 0.5 * (1.0 + std::cos(pi * e / static_cast<double>(ramp_epochs)));
}

double unlabeled_loss(const Matrix& q_weak, const Matrix& q_strong,
                      const std::vector<char>& mask, const MethodPreset& preset) {
    if (!q_weak.same_shape(q_strong))
        throw ConfigError("unlabeled_loss: view shape mismatch");
    if (mask.size() != q_weak.rows)
        throw ConfigError("unlabeled_loss: mask length mismatch");
    if (q_weak.rows == 0) return 0.0;
    const Matrix targets = sharpen(q_weak, preset);
    double loss = 0.0;
    for (std::size_t i = 0; i < q_weak.rows; ++i) {
        if (!mask[i]) continue;
        for (std::size_t k = 0; k < q_weak.cols; ++k) {
            const double t = targets(i, k);
            if (t != 0.0) loss += -t * std::log(std::max(q_strong(i, k), 1e-300));
        }
    }
    return loss / static_cast<double>(q_weak.rows);
}

MaskedCeResult masked_softmax_cross_entropy(const Matrix& logits,
                                            const Matrix& target_dist,
                                            const std::vector<char>& mask) {
    if (!logits.same_shape(target_dist))
        throw ConfigError("masked ce: shape mismatch");
    if (mask.size() != logits.rows) throw ConfigError("masked ce: mask mismatch");
    const std::size_t n = logits.rows, k = logits.cols;
    MaskedCeResult res{0.0, Matrix(n, k)};
    for (std::size_t i = 0; i < n; ++i) {
        if (!mask[i]) continue;
        const double m = max_of(logits.row(i));
        double sum = 0.0;
        for (std::size_t c = 0; c < k; ++c) sum += std::exp(logits(i, c) - m);
        const double log_z = m + std::log(sum);
        for (std::size_t c = 0; c < k; ++c) {
            res.loss += -target_dist(i, c) * (logits(i, c) - log_z);
            const double p = std::exp(logits(i, c) - log_z);
            res.dlogits(i, c) = (p - target_dist(i, c)) / static_cast<double>(n);
        }
    }
    res.loss /= static_cast<double>(n);
    return res;
}

CombinedLoss combined_step_loss(const Network& net, const VariationalLinear* bayes,
                                const Batch& labeled, const Matrix& unlabeled_weak,
                                const Matrix& unlabeled_strong,
                                const MethodPreset& preset, SelectionState& state,
                                double q_effective, double kl_coef,
                                std::size_t dataset_size, int bayes_samples,
                                Rng* bayes_rng) {
    preset.validate();
    if (preset.bayes && bayes == nullptr)
        throw ConfigError("BAM preset requires a variational head");

    CombinedLoss out;
    if (preset.bayes) {
        if (bayes_rng == nullptr)
            throw ConfigError("BAM preset requires a noise source");
        const Matrix z_weak = forward(net, unlabeled_weak).output();
        const PosteriorPredictive pp =
            bayes_predict(*bayes, z_weak, bayes_samples, *bayes_rng);
        out.pseudo = pp.mean;
        out.mask = select_by_variance(pp, state, q_effective).mask;

        const Matrix z_lab = forward(net, labeled.inputs).output();
        const WeightSample s_lab = sample_weights(*bayes, *bayes_rng);
        out.labeled =
            softmax_cross_entropy(bayes_forward(s_lab, z_lab), labeled.targets).loss;

        const Matrix z_strong = forward(net, unlabeled_strong).output();
        const WeightSample s_str = sample_weights(*bayes, *bayes_rng);
        const Matrix q_strong = softmax(bayes_forward(s_str, z_strong));
        out.unlabeled = preset.lambda_u *
                        unlabeled_loss(out.pseudo, q_strong, out.mask, preset);

        out.kl = elbo_terms(*bayes, 0.0, kl_coef, dataset_size).kl_term;
    } else {
        const Matrix q_weak =
            stop_gradient(softmax(forward(net, unlabeled_weak).output()));
        out.pseudo = q_weak;
        out.mask = select_by_confidence(q_weak, preset.tau);

        out.labeled =
            softmax_cross_entropy(forward(net, labeled.inputs).output(),
                                  labeled.targets)
                .loss;
        const Matrix q_strong = softmax(forward(net, unlabeled_strong).output());
        out.unlabeled =
            preset.lambda_u * unlabeled_loss(q_weak, q_strong, out.mask, preset);
        out.kl = 0.0;
    }
    // the logged components are the terms as they enter the objective, so the
    // total is their exact sum
    out.total = out.labeled + out.unlabeled + out.kl;
    return out;
}

}  // namespace sslcal
