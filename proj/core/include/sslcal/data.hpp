#pragma once

#include <cstddef>
#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "sslcal/matrix.hpp"
#include "sslcal/rng.hpp"

namespace sslcal {

struct Dataset {
    Matrix x;
    std::vector<int> y;
    int k = 0;
};

struct LabeledSet {
    Matrix x;
    std::vector<int> y;
    std::size_t size() const { return x.rows; }
};

// Disjoint labeled/unlabeled/test split. Unlabeled labels are hidden ground
// truth kept for diagnostics (purity) only; they never reach a loss.
struct DatasetSplit {
    LabeledSet labeled;
    LabeledSet unlabeled;
    LabeledSet test;
    int k = 0;
    std::vector<std::size_t> class_counts;  // per-class unlabeled sizes
};

// Gaussian blobs on a circle of radius `separation`, unit variance,
// n_per_class samples per class. Deterministic for a fixed seed.
Dataset make_blobs(int k, int n_per_class, int dim, double separation,
                   std::uint64_t seed);

// Two interleaving half-moons with additive Gaussian noise; K = 2.
Dataset make_moons(int n, double noise, std::uint64_t seed);

struct SplitRule {
    int labels_per_class = 0;     // takes precedence when > 0
    double label_fraction = 0.0;  // otherwise round(fraction * class size)
};

// Stratified deterministic split; every class keeps at least one label.
DatasetSplit split_ssl(const Dataset& dataset, const SplitRule& rule,
                       double test_fraction, std::uint64_t seed);

// Exponential-decay class profile: n_i = round(n_max * alpha^(-i/(K-1))).
// max/min ratio is approximately alpha.
std::vector<std::size_t> long_tail_counts(int k, int n_max, double alpha);

struct LongTailRule {
    double label_fraction = 0.1;
    int min_labels = 1;       // every class keeps at least this many labels
    int test_per_class = 0;   // class-balanced held-out test samples
};

// Draws a long-tailed unlabeled set of counts[i] per class plus a disjoint
// labeled set of max(min_labels, round(label_fraction * counts[i])) per class
// and a class-balanced test set.
DatasetSplit curate_long_tail(const Dataset& dataset,
                              const std::vector<std::size_t>& counts,
                              const LongTailRule& rule, std::uint64_t seed);

struct AugmentPolicy {
    enum class Kind { weak, strong };
    Kind kind = Kind::weak;
    double noise_sigma = 0.0;
    double scale_range = 0.0;  // strong only: per-feature scale in [1-r, 1+r]
    double dropout_p = 0.0;    // strong only: zero a feature with probability p

    static AugmentPolicy weak(double sigma);
    static AugmentPolicy strong(double sigma, double scale_range, double dropout_p);
    void validate() const;
};

// Additive Gaussian noise; strong policies additionally apply per-feature
// random scaling and feature dropout. Shape-preserving, deterministic given
// the rng state.
Matrix augment(const Matrix& inputs, const AugmentPolicy& policy, Rng& rng);

// Rectangular numeric CSV with a header row; the label column is mapped to
// contiguous class ids. Features are z-score normalized per column when
// requested (constant columns divide by 1).
Dataset load_csv(const std::string& path, const std::string& label_column,
                 bool normalize);

// Same schema as the input CSVs plus a `split` column in
// {labeled, unlabeled, test}.
void write_dataset_csv(const DatasetSplit& split, std::ostream& out);

}  // namespace sslcal
