#pragma once

#include <cstddef>
#include <deque>
#include <string>
#include <vector>

#include "sslcal/bayes.hpp"
#include "sslcal/losses.hpp"
#include "sslcal/matrix.hpp"
#include "sslcal/network.hpp"

namespace sslcal {

enum class AugmentMode { symmetric_weak, asymmetric };

// One threshold-mediated method: Pseudo-Label / UDA / FixMatch and their
// Bayesian-model-averaging variants.
struct MethodPreset {
    std::string name;
    double mu = 1.0;        // unlabeled batch ratio
    double lambda_u = 1.0;  // unlabeled loss weight
    double tau = 0.95;      // confidence threshold
    double t = 1.0;         // sharpening temperature (ignored when hard)
    bool hard_labels = false;
    AugmentMode augmentation = AugmentMode::symmetric_weak;
    bool bayes = false;     // variance-based selection with a variational head

    void validate() const;
};

// The six presets with their published hyperparameters.
std::vector<MethodPreset> preset_catalog();
const MethodPreset& find_preset(const std::string& name);

// Temperature exponentiation and renormalization; t = 1 is the identity,
// hard variant returns the argmax one-hot.
Matrix sharpen(const Matrix& q, double t);
Matrix sharpen_hard(const Matrix& q);
Matrix sharpen(const Matrix& q, const MethodPreset& preset);

// Adjoint of sharpen for rows of strictly positive distributions:
// given dL/d(sharpened) returns dL/dq.
Matrix sharpen_backward(const Matrix& q, double t, const Matrix& upstream);

// mask[i] = max_k q[i][k] >= tau
std::vector<char> select_by_confidence(const Matrix& q, double tau);

// Linear-interpolation quantile over unsorted values, q in (0, 1].
double quantile_linear(std::vector<double> values, double q);

struct QWarmup {
    double start = 0.1;
    double target = 0.75;
    int warmup_epochs = 10;
};

// Bounded queue of recent batch thresholds; the effective threshold is the
// arithmetic mean of the queue contents.
struct SelectionState {
    std::deque<double> recent_thresholds;
    std::size_t capacity = 50;
    QWarmup q_schedule;

    void push(double threshold);
    double effective_threshold() const;
    bool empty() const { return recent_thresholds.empty(); }
};

struct VarianceSelection {
    std::vector<char> mask;
    double threshold = 0.0;          // mean of the queue after the push
    std::vector<double> scores;      // variance at the predicted class
};

// Score each sample by the predictive variance at its predicted class, push
// the batch Q-quantile of the scores, and accept samples whose score is <=
// the averaged threshold.
VarianceSelection select_by_variance(const PosteriorPredictive& pp,
                                     SelectionState& state, double q_effective);

// Linear warm-up of the quantile Q from 0.1 to target over the first
// `warmup_epochs` epochs, constant afterwards.
double q_warmup(int epoch, double target_q, int warmup_epochs = 10);

enum class KlSchedule { constant, one_minus_cosine };

// Coefficient for the KL loss term: 0 -> 1 over ramp_epochs under the
// one-minus-cosine schedule, constant 1 otherwise.
double kl_coefficient(int epoch, int ramp_epochs, KlSchedule kind);

// Eq-1 style masked consistency loss: mean over the full unlabeled batch of
// mask * H(sharpen(q_weak), q_strong). q_weak rows are pseudo-labels produced
// under stop-gradient; q_strong rows are prediction distributions.
double unlabeled_loss(const Matrix& q_weak, const Matrix& q_strong,
                      const std::vector<char>& mask, const MethodPreset& preset);

// Masked fused softmax CE against soft targets, full-batch denominator;
// dlogits rows of rejected samples are zero.
struct MaskedCeResult {
    double loss;
    Matrix dlogits;
};
MaskedCeResult masked_softmax_cross_entropy(const Matrix& logits,
                                            const Matrix& target_dist,
                                            const std::vector<char>& mask);

struct CombinedLoss {
    double total = 0.0;
    double labeled = 0.0;
    double unlabeled = 0.0;
    double kl = 0.0;
    std::vector<char> mask;
    Matrix pseudo;  // weak-view pseudo distributions (posterior mean for BAM)
};

// Value-level evaluation of the combined objective L_l + lambda * L_u (+ KL
// for BAM variants) for one step's batches. `bayes` may be null for non-BAM
// presets; BAM presets require it.
CombinedLoss combined_step_loss(const Network& net, const VariationalLinear* bayes,
                                const Batch& labeled, const Matrix& unlabeled_weak,
                                const Matrix& unlabeled_strong,
                                const MethodPreset& preset, SelectionState& state,
                                double q_effective, double kl_coef,
                                std::size_t dataset_size, int bayes_samples,
                                Rng* bayes_rng);

}  // namespace sslcal
