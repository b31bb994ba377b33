#include "sslcal/losses.hpp"

#include <cmath>
#include <string>

#include "sslcal/errors.hpp"

namespace sslcal {

Matrix softmax(const Matrix& logits) {
    Matrix p(logits.rows, logits.cols);
    for (std::size_t i = 0; i < logits.rows; ++i) {
        const double m = max_of(logits.row(i));
        double sum = 0.0;
        for (std::size_t k = 0; k < logits.cols; ++k) {
            const double e = std::exp(logits(i, k) - m);
            p(i, k) = e;
            sum += e;
        }
        for (std::size_t k = 0; k < logits.cols; ++k) p(i, k) /= sum;
    }
    return p;
}

void validate_soft_rows(const Matrix& dist) {
    for (std::size_t i = 0; i < dist.rows; ++i) {
        double sum = 0.0;
        for (std::size_t k = 0; k < dist.cols; ++k) sum += dist(i, k);
        if (std::abs(sum - 1.0) > 1e-9)
            throw InputError("soft-target row " + std::to_string(i) +
                             " does not sum to 1");
    }
}

CeResult softmax_cross_entropy(const Matrix& logits, const Targets& targets) {
    const std::size_t n = logits.rows, k = logits.cols;
    if (n == 0) throw InputError("softmax_cross_entropy: empty batch");
    if (targets.size() != n)
        throw ConfigError("softmax_cross_entropy: batch size mismatch");
    if (targets.is_soft() && targets.soft_dist.cols != k)
        throw ConfigError("softmax_cross_entropy: class count mismatch");
    if (targets.is_soft()) validate_soft_rows(targets.soft_dist);

    CeResult res{0.0, Matrix(n, k)};
    for (std::size_t i = 0; i < n; ++i) {
        const double m = max_of(logits.row(i));
        double sum = 0.0;
        for (std::size_t c = 0; c < k; ++c) sum += std::exp(logits(i, c) - m);
        const double log_z = m + std::log(sum);

        if (targets.is_soft()) {
            for (std::size_t c = 0; c < k; ++c)
                res.loss += -targets.soft_dist(i, c) * (logits(i, c) - log_z);
        } else {
            const int y = targets.hard_labels[i];
            if (y < 0 || static_cast<std::size_t>(y) >= k)
                throw InputError("hard label out of range at row " +
                                 std::to_string(i));
            res.loss += -(logits(i, y) - log_z);
        }
        for (std::size_t c = 0; c < k; ++c) {
            const double p = std::exp(logits(i, c) - log_z);
            const double t = targets.is_soft()
                                 ? targets.soft_dist(i, c)
                                 : (targets.hard_labels[i] == static_cast<int>(c)
                                        ? 1.0
                                        : 0.0);
            res.dlogits(i, c) = (p - t) / static_cast<double>(n);
        }
    }
    res.loss /= static_cast<double>(n);
    return res;
}

double cross_entropy_rows(const Matrix& target_dist, const Matrix& probs) {
    if (!target_dist.same_shape(probs))
        throw ConfigError("cross_entropy_rows: shape mismatch");
    if (target_dist.rows == 0) throw InputError("cross_entropy_rows: empty batch");
    double loss = 0.0;
    for (std::size_t i = 0; i < probs.rows; ++i)
        for (std::size_t c = 0; c < probs.cols; ++c) {
            const double t = target_dist(i, c);
            if (t != 0.0) loss += -t * std::log(std::max(probs(i, c), 1e-300));
        }
    return loss / static_cast<double>(probs.rows);
}

Matrix one_hot_rows(const std::vector<int>& labels, std::size_t k) {
    Matrix m(labels.size(), k);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const int y = labels[i];
        if (y < 0 || static_cast<std::size_t>(y) >= k)
            throw InputError("label out of range at row " + std::to_string(i));
        m(i, static_cast<std::size_t>(y)) = 1.0;
    }
    return m;
}

}  // namespace sslcal
