#pragma once

#include <cstddef>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include "sslcal/matrix.hpp"

namespace sslcal {

struct ReliabilityBin {
    double low = 0.0, high = 0.0;  // half-open interval (low, high]
    std::size_t count = 0;
    double accuracy = 0.0;
    double mean_confidence = 0.0;
};

struct ReliabilityReport {
    std::vector<ReliabilityBin> bins;
    double ece = 0.0;
    double accuracy = 0.0;  // overall
    std::size_t n = 0;
};

// Expected calibration error over M equal-width confidence bins. Sample i
// falls in the bin whose half-open interval ((m-1)/M, m/M] contains its
// confidence max_k q[i][k]; a confidence of exactly 0 goes to bin 1. Empty
// bins contribute nothing.
ReliabilityReport ece(const Matrix& probabilities, const std::vector<int>& labels,
                      int num_bins = 10);

// CSV columns: bin_low, bin_high, count, accuracy, confidence.
void write_reliability_csv(const ReliabilityReport& report, std::ostream& out);

// Fraction of accepted samples whose pseudo-label argmax matches the true
// label; nullopt when nothing was accepted.
std::optional<double> purity_rate(const std::vector<char>& accept_mask,
                                  const Matrix& pseudo_labels,
                                  const std::vector<int>& true_labels);

// Mean over samples of the maximum class probability.
double mean_max_prob(const Matrix& probabilities);

struct Checkpoint {
    double accuracy = 0.0;
    double ece = 0.0;
};

struct ConvergenceReport {
    double accuracy = 0.0;
    double ece = 0.0;
    std::size_t checkpoint_index = 0;
};

// Convergence criterion: locate the best-accuracy checkpoint, take the window
// of 20 checkpoints centered there (clipped at the history boundaries), and
// report the window's median accuracy together with the ECE of the checkpoint
// attaining it. The median of an even window is the lower middle order
// statistic so that a real checkpoint attains it; ties break toward earlier
// checkpoints.
ConvergenceReport convergence_report(std::span<const Checkpoint> history);

struct BoundReport {
    double negative_elbo_term = 0.0;  // (1/N) * [-ELBO]
    double divergence_term = 0.0;     // -E_q[(1/N_u) sum log p(yhat|x)/p(y|x)]
    double confidence_term = 0.0;     // log(1/delta) / N
    double slack_term = 0.0;          // s^2 / 2
    double total = 0.0;
    double delta = 0.0, s2 = 0.0;
    std::size_t n = 0, n_u = 0;
};

// Assembles the PAC-Bayes generalization bound from its four terms. The
// pseudo-label divergence expectation is a Monte-Carlo estimate supplied by
// the caller; with no unlabeled data the divergence term is zero (supervised
// limit).
BoundReport pac_bayes_bound(double negative_elbo, double pseudo_log_ratio_mc,
                            std::size_t n, std::size_t n_u, double delta,
                            double s2);

}  // namespace sslcal
