#pragma once

#include <vector>

#include "sslcal/matrix.hpp"

namespace sslcal {

// Classification targets: hard class indices or soft distributions.
struct Targets {
    std::vector<int> hard_labels;
    Matrix soft_dist;

    bool is_soft() const { return soft_dist.rows > 0; }
    std::size_t size() const {
        return is_soft() ? soft_dist.rows : hard_labels.size();
    }

    static Targets hard(std::vector<int> labels) {
        Targets t;
        t.hard_labels = std::move(labels);
        return t;
    }
    static Targets soft(Matrix dist) {
        Targets t;
        t.soft_dist = std::move(dist);
        return t;
    }
};

// One training batch: inputs plus targets, with optional hidden true labels
// kept for diagnostics only.
struct Batch {
    Matrix inputs;
    Targets targets;
    std::vector<int> true_labels;  // empty when absent
};

// Row-wise stable softmax (max subtraction). Rows sum to 1 within 1e-9.
Matrix softmax(const Matrix& logits);

struct CeResult {
    double loss;     // mean over rows, >= 0
    Matrix dlogits;  // (softmax(logits) - target) / n
};

// Fused softmax cross-entropy. Throws ConfigError on K mismatch and
// InputError on invalid targets (labels outside [0,K), rows not summing to 1).
CeResult softmax_cross_entropy(const Matrix& logits, const Targets& targets);

// -sum_k t_k log p_k per row, averaged over rows; both arguments are
// probability rows. Used where predictions are already distributions.
double cross_entropy_rows(const Matrix& target_dist, const Matrix& probs);

Matrix one_hot_rows(const std::vector<int>& labels, std::size_t k);

// Enforces the soft-target invariant (rows sum to 1 within 1e-9).
void validate_soft_rows(const Matrix& dist);

}  // namespace sslcal
