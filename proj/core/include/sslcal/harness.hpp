#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "sslcal/bayes.hpp"
#include "sslcal/calibration.hpp"
#include "sslcal/config.hpp"
#include "sslcal/data.hpp"
#include "sslcal/network.hpp"
#include "sslcal/optim.hpp"
#include "sslcal/paws.hpp"
#include "sslcal/ssl.hpp"

namespace sslcal {

// One logging event. Null purity means no sample was accepted; test fields
// are only present on checkpoint rows.
struct MetricsRow {
    long step = 0;
    int epoch = 0;
    double labeled_loss = 0.0;
    double unlabeled_loss = 0.0;
    double kl_loss = 0.0;
    double accepted_fraction = 0.0;
    std::optional<double> purity_rate;
    double mean_max_prob = 0.0;
    double threshold_value = 0.0;
    std::optional<double> test_accuracy;
    std::optional<double> test_ece;
};

// Streaming CSV writer with the frozen `#schema=1` header. Every numeric
// field must be finite; a NaN/Inf aborts with a diagnostic naming the step.
class MetricsWriter {
public:
    explicit MetricsWriter(const std::string& path);
    void write(const MetricsRow& row);
    void flush() { out_.flush(); }

private:
    std::ofstream out_;
};

std::vector<MetricsRow> read_metrics_csv(const std::string& path);

// Recomputes the convergence criterion from the checkpoint rows of a metrics
// file; equals the in-run summary exactly.
ConvergenceReport report_from_metrics(const std::vector<MetricsRow>& rows);

struct StepContext {
    long step = 1;         // 1-based global training step
    int epoch = 0;         // 0-based epoch index
    long total_steps = 1;
};

struct EvalResult {
    double accuracy = 0.0;
    double ece = 0.0;
};

struct ThresholdStepOutput {
    MetricsRow row;
    std::vector<char> mask;
    Matrix pseudo;  // weak-view pseudo distributions (posterior mean for BAM)
};

// Resolves the config's method preset with any [method] overrides applied.
MethodPreset effective_preset(const ExperimentConfig& cfg);

// One training run of a threshold-mediated method (Eq-1 family). Owns the
// model, optimizers and selection state; the caller drives batching.
class ThresholdTrainer {
public:
    ThresholdTrainer(const ExperimentConfig& cfg, std::size_t input_dim,
                     std::size_t num_classes, std::size_t dataset_total,
                     Rng& init_rng);

    ThresholdStepOutput step(const Matrix& x_labeled,
                             const std::vector<int>& y_labeled,
                             const Matrix& x_unlabeled,
                             const std::vector<int>& y_unlabeled_hidden,
                             const StepContext& ctx, Rng& aug_rng, Rng& bnn_rng);

    Matrix predict(const Matrix& x, Rng& eval_rng);
    EvalResult evaluate(const LabeledSet& test, Rng& eval_rng);
    ReliabilityReport reliability(const LabeledSet& test, Rng& eval_rng);

    const MethodPreset& preset() const { return preset_; }
    Network& network() { return net_; }
    VariationalLinear* head() { return head_ ? &*head_ : nullptr; }
    SelectionState& selection() { return selection_; }

private:
    ExperimentConfig cfg_;
    MethodPreset preset_;
    Network net_;
    std::optional<VariationalLinear> head_;
    SelectionState selection_;
    SgdOptimizer sgd_;
    AdamOptimizer adam_;
    KlSchedule kl_kind_;
    std::size_t dataset_total_;
    std::size_t num_classes_;

    double backbone_lr(const StepContext& ctx) const;
    double head_lr(const StepContext& ctx) const;
};

// One training run of the PAWS family: symmetric sharpened consistency with
// me-max over a labeled support set, optional SWA/EMA aggregation and the
// optional Bayesian-marginalized projection layer.
class PawsTrainer {
public:
    PawsTrainer(const ExperimentConfig& cfg, std::size_t input_dim,
                std::size_t num_classes, std::size_t dataset_total,
                Rng& init_rng);

    MetricsRow step(const Matrix& support_x, const std::vector<int>& support_y,
                    const Matrix& x_unlabeled,
                    const std::vector<int>& y_unlabeled_hidden,
                    const StepContext& ctx, Rng& aug_rng, Rng& bnn_rng);

    void update_aggregate(int epoch);

    Matrix predict(const Matrix& x, const LabeledSet& support, Rng& eval_rng);
    EvalResult evaluate(const LabeledSet& test, const LabeledSet& support,
                        Rng& eval_rng);
    ReliabilityReport reliability(const LabeledSet& test, const LabeledSet& support,
                                  Rng& eval_rng);

    Network& network() { return net_; }
    WeightAggregate& aggregate() { return aggregate_; }
    VariationalLinear* head() { return head_ ? &*head_ : nullptr; }

private:
    ExperimentConfig cfg_;
    Network net_;
    std::optional<VariationalLinear> head_;
    WeightAggregate aggregate_;
    SgdOptimizer sgd_;
    SgdOptimizer sgd_head_;  // same update rule, no weight decay
    KlSchedule kl_kind_;
    std::size_t dataset_total_;
    std::size_t num_classes_;
    bool update_per_iteration_;

    double backbone_lr(const StepContext& ctx) const;
    // Embeds inputs through the aggregate network (the pseudo-label path).
    Matrix target_embed(const Matrix& x, Rng& rng);
};

struct RunSummary {
    std::string method;
    std::uint64_t seed = 0;
    int epochs = 0;
    std::size_t num_checkpoints = 0;
    ConvergenceReport convergence;
    double final_accuracy = 0.0;
    double final_ece = 0.0;
    std::string metrics_path;
    std::string report_path;
    std::optional<BoundReport> bound;  // BAM threshold runs only
};

// Builds the dataset described by a config (generator or CSV, plain or
// long-tailed split).
DatasetSplit build_dataset(const ExperimentConfig& cfg);

// Runs the configured method end to end: deterministic for a fixed seed,
// emits metrics.csv / report.json / reliability.csv under cfg.out_dir.
RunSummary run_experiment(const ExperimentConfig& cfg);

}  // namespace sslcal
