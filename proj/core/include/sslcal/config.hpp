#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace sslcal {

// Full experiment description. Every field has a working default; unknown
// config keys are rejected at parse time.
struct ExperimentConfig {
    // [method]
    std::string method = "UDA";  // PL | UDA | FM | BAM-PL | BAM-UDA | BAM-FM |
                                 // PAWS | BAM-PAWS
    double method_tau = -1.0;    // negative means "use the preset value"
    double method_t = -1.0;
    double method_mu = -1.0;
    double method_lambda = -1.0;

    // [data]
    std::string data_source = "blobs";  // blobs | moons | csv
    std::string csv_path;
    std::string csv_label_column = "label";
    bool csv_normalize = true;
    int k = 4;
    int per_class = 630;
    int dim = 2;
    double separation = 2.0;
    int moons_n = 2000;
    double moons_noise = 0.15;
    int labels_per_class = 4;
    double label_fraction = 0.0;
    double test_fraction = 0.2;
    double long_tail_alpha = 0.0;  // >= 1 enables the long-tailed curation path
    int long_tail_nmax = 500;
    int long_tail_test_per_class = 100;

    // [model]
    std::vector<std::size_t> hidden = {64, 64};
    int embed_dim = 32;  // PAWS representation width

    // [optim]
    double lr = 0.03;
    double momentum = 0.9;
    double weight_decay = 5e-4;
    int epochs = 100;
    int batch = 64;
    std::string lr_schedule = "cosine";  // cosine | constant
    double head_lr = 0.01;               // separate Adam for the BNN head

    // [bam]
    int bam_samples = 10;
    double bam_q = 0.75;
    int q_warmup_epochs = 10;
    std::string kl_schedule = "one_minus_cosine";  // one_minus_cosine | constant
    int kl_ramp_epochs = 50;
    double rho_init = -3.0;

    // [aggregate]
    std::string aggregate_mode = "off";  // off | swa | ema
    int t_swa = 50;
    std::string gamma_schedule = "linear_warmup";  // linear_warmup | one_minus_cosine
    double gamma_max = 0.996;
    int gamma_warmup_epochs = 50;
    double gamma_cosine_start = 0.05;
    std::string swa_update_every = "iteration";  // iteration | epoch

    // [paws]
    double paws_temperature = 0.1;
    double paws_sharpen_t = 0.25;
    int support_per_class = 4;
    double paws_mu = 1.0;

    // [augment]
    double weak_sigma = 0.05;
    double strong_sigma = 0.2;
    double scale_range = 0.2;
    double dropout_p = 0.1;

    // [bound]
    double bound_delta = 0.05;
    double bound_s2 = 1.0;

    // [run]
    std::uint64_t seed = 1;
    std::string out_dir = "run_out";
    int eval_every = 1;
    bool quiet = false;

    bool is_paws_family() const {
        return method == "PAWS" || method == "BAM-PAWS";
    }
    bool is_bam() const { return method.rfind("BAM-", 0) == 0; }

    void validate() const;  // throws ConfigError on any violation
};

// Flat key-value config file with [section] headers, `key = value` lines and
// '#'/';' comments. Unknown section.key pairs are rejected.
ExperimentConfig parse_config_file(const std::string& path);
ExperimentConfig parse_config_text(const std::string& text);

// Dotted-path override, e.g. "data.k=8" or "run.seed=3".
void apply_override(ExperimentConfig& cfg, const std::string& key_value);

}  // namespace sslcal
