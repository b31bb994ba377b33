#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "sslcal/bayes.hpp"
#include "sslcal/matrix.hpp"
#include "sslcal/network.hpp"

namespace sslcal {

// Labeled support set for the soft nearest-neighbour classifier.
struct SupportSet {
    Matrix embeddings;   // B x d
    Matrix labels;       // B x K one-hot rows
    double temperature;  // tau_p > 0

    void validate() const;  // >= 1 support per class, valid one-hots, tau_p > 0
};

// Retained intermediates for the snn reverse pass.
struct SnnTrace {
    Matrix query_hat;              // unit-norm queries
    Matrix support_hat;            // unit-norm supports
    std::vector<double> query_norm;
    std::vector<double> support_norm;
    Matrix cosine;                 // n x B
    Matrix weights;                // softmax over supports, n x B
    double inv_temperature = 1.0;
};

// q_i = sum_s softmax_s(cos(z_i, z_s)/tau_p) y_s; rows are distributions.
Matrix snn_classify(const Matrix& queries, const SupportSet& support);
std::pair<Matrix, SnnTrace> snn_classify_traced(const Matrix& queries,
                                                const SupportSet& support);

struct SnnGradients {
    Matrix dqueries;
    Matrix dsupport;
};

// Routes dL/d(probs) back to both query and support embeddings.
SnnGradients snn_backward(const SnnTrace& trace, const Matrix& support_labels,
                          const Matrix& dprobs);

// Symmetric sharpened consistency loss over two views:
// (1/2n) sum_i H(sharpen(q1_target_i), q2_pred_i) + H(sharpen(q2_target_i), q1_pred_i).
// Targets come from the aggregate network under stop-gradient.
double paws_loss(const Matrix& q1_pred, const Matrix& q2_pred,
                 const Matrix& q1_target, const Matrix& q2_target, double t);

// Mean-entropy maximization regularizer: returns -H(q_bar) so that minimizing
// the total loss maximizes the entropy of the average prediction.
double me_max(std::span<const double> q_bar);
std::vector<double> me_max_backward(std::span<const double> q_bar);

enum class AggregateMode { off, swa, ema };

// Non-trainable copy of the backbone weights plus aggregation state.
struct WeightAggregate {
    AggregateMode mode = AggregateMode::off;
    Network net;      // theta_g; values mirror the trainable network's shapes
    long n_a = 0;     // number of aggregated models (SWA)
    int t_swa = 0;    // onset epoch for SWA

    static WeightAggregate make(const Network& source, AggregateMode mode,
                                int t_swa = 0);
};

// OFF mode: theta_g is a verbatim copy of theta_f after every step.
void copy_update(WeightAggregate& agg, const Network& source);

// Before t_swa the weights are copied and n_a stays 0; at and after t_swa
// theta_g <- (n_a theta_g + theta_f)/(n_a + 1), then n_a += 1, so theta_g is
// the running arithmetic mean of the post-onset snapshots.
void swa_update(WeightAggregate& agg, const Network& source, int epoch);

// theta_g <- gamma theta_g + (1 - gamma) theta_f, gamma in [0, 1].
void ema_update(WeightAggregate& agg, const Network& source, double gamma);

enum class GammaSchedule { linear_warmup, one_minus_cosine };

// linear_warmup: min(epoch/warmup, 1) * gamma_max.
// one_minus_cosine: 1 - start * (1 + cos(pi * epoch / total)) / 2.
double gamma_schedule(int epoch, int total_epochs, GammaSchedule kind,
                      double gamma_max = 0.996, int warmup_epochs = 50,
                      double cosine_start = 0.05);

// Bayesian-marginalized representation: mean of M sampled linear-layer
// outputs, no softmax. M >= 1.
Matrix bam_paws_embed(const VariationalLinear& layer, const Matrix& v,
                      int num_samples, Rng& rng);

struct BamEmbedTrace {
    std::vector<WeightSample> samples;
    Matrix v;
};

std::pair<Matrix, BamEmbedTrace> bam_paws_embed_traced(
    const VariationalLinear& layer, const Matrix& v, int num_samples, Rng& rng);
// Test hook over fixed draws.
std::pair<Matrix, BamEmbedTrace> bam_paws_embed_with(
    const VariationalLinear& layer, const Matrix& v,
    std::vector<WeightSample> samples);

// Accumulates head gradients from dL/d(z_hat); returns dL/dv.
Matrix bam_paws_embed_backward(VariationalLinear& layer,
                               const BamEmbedTrace& trace, const Matrix& dz);

}  // namespace sslcal
