#include "cli.hpp"

#include <charconv>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "sslcal/config.hpp"
#include "sslcal/data.hpp"
#include "sslcal/errors.hpp"
#include "sslcal/harness.hpp"
#include "sslcal/ssl.hpp"

namespace sslcal {

namespace {

std::string fmt(double v) {
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, p);
}

void print_presets(std::ostream& out) {
    for (const auto& p : preset_catalog()) {
        out << p.name << ": mu=" << fmt(p.mu) << " tau=" << fmt(p.tau)
            << " t=" << (p.hard_labels ? std::string("hard") : fmt(p.t))
            << " lambda=" << fmt(p.lambda_u) << " augment="
            << (p.augmentation == AugmentMode::asymmetric ? "asymmetric"
                                                          : "symmetric-weak")
            << " selection=" << (p.bayes ? "variance" : "confidence") << "\n";
    }
}

int cmd_run(const std::string& config_path,
            const std::vector<std::string>& overrides, long seed,
            const std::string& out_dir, bool quiet) {
    ExperimentConfig cfg = parse_config_file(config_path);
    for (const auto& kv : overrides) apply_override(cfg, kv);
    if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    if (quiet) cfg.quiet = true;
    run_experiment(cfg);
    return 0;
}

int cmd_curate(int k, int n_max, double alpha, int dim, double separation,
               double label_fraction, int test_per_class, long seed,
               const std::string& out_path, bool quiet) {
    const auto counts = long_tail_counts(k, n_max, alpha);
    LongTailRule rule;
    rule.label_fraction = label_fraction;
    rule.min_labels = 1;
    rule.test_per_class = test_per_class;

    // size the synthetic source so the largest class fits its draw
    std::size_t per_class_needed = 0;
    for (std::size_t n_u : counts) {
        const std::size_t n_l = std::max<std::size_t>(
            1, static_cast<std::size_t>(
                   std::llround(label_fraction * static_cast<double>(n_u))));
        per_class_needed = std::max(
            per_class_needed, n_u + n_l + static_cast<std::size_t>(test_per_class));
    }
    const std::uint64_t u_seed = static_cast<std::uint64_t>(seed);
    const Dataset ds = make_blobs(k, static_cast<int>(per_class_needed), dim,
                                  separation, derive_seed(u_seed, "dataset"));
    const DatasetSplit split =
        curate_long_tail(ds, counts, rule, derive_seed(u_seed, "split"));

    if (out_path == "-") {
        write_dataset_csv(split, std::cout);
    } else {
        std::ofstream out(out_path);
        if (!out) throw InputError("cannot open output file: " + out_path);
        write_dataset_csv(split, out);
    }
    if (!quiet) {
        std::size_t total_u = 0;
        for (auto c : split.class_counts) total_u += c;
        std::cerr << "curated " << split.labeled.size() << " labeled / " << total_u
                  << " unlabeled / " << split.test.size() << " test samples\n";
    }
    return 0;
}

int cmd_report(const std::string& metrics_path, bool quiet) {
    const auto rows = read_metrics_csv(metrics_path);
    const ConvergenceReport rep = report_from_metrics(rows);
    (void)quiet;
    std::cout << "reported_accuracy=" << fmt(rep.accuracy)
              << " reported_ece=" << fmt(rep.ece)
              << " checkpoint_index=" << rep.checkpoint_index << "\n";
    return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
    CLI::App app{"calibrated semi-supervised learning laboratory"};
    app.require_subcommand(1);

    long seed = -1;
    std::string out_override;
    bool quiet = false;
    app.add_option("--seed", seed, "override the experiment seed");
    app.add_option("--out", out_override, "override the output path");
    app.add_flag("--quiet", quiet, "suppress progress output");

    auto* run = app.add_subcommand("run", "run an experiment from a config file");
    std::string config_path;
    std::vector<std::string> overrides;
    run->add_option("config", config_path, "experiment config file")->required();
    run->add_option("--set", overrides,
                    "override a config value, e.g. --set data.k=8");

    auto* presets =
        app.add_subcommand("presets", "list the built-in method presets");

    auto* curate =
        app.add_subcommand("curate", "emit a long-tailed dataset as CSV");
    int k = 10, n_max = 500, dim = 2, test_per_class = 100;
    double alpha = 10.0, separation = 2.0, label_fraction = 0.1;
    std::string curate_out = "dataset.csv";
    curate->add_option("--k", k, "number of classes");
    curate->add_option("--n-max", n_max, "largest class size");
    curate->add_option("--alpha", alpha, "imbalance ratio");
    curate->add_option("--dim", dim, "feature dimension");
    curate->add_option("--separation", separation, "class separation");
    curate->add_option("--label-fraction", label_fraction,
                       "labeled fraction per class");
    curate->add_option("--test-per-class", test_per_class,
                       "class-balanced test samples per class");
    curate->add_option("--out-file", curate_out, "output CSV path ('-' for stdout)");

    auto* report = app.add_subcommand(
        "report", "recompute the convergence report from a metrics CSV");
    std::string metrics_path;
    report->add_option("metrics", metrics_path, "metrics CSV file")->required();

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        app.exit(e);
        return 0;
    } catch (const CLI::ParseError& e) {
        std::cerr << app.help() << "\n";
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }

    try {
        if (run->parsed())
            return cmd_run(config_path, overrides, seed, out_override, quiet);
        if (presets->parsed()) {
            print_presets(std::cout);
            return 0;
        }
        if (curate->parsed())
            return cmd_curate(k, n_max, alpha, dim, separation, label_fraction,
                              test_per_class, seed < 0 ? 1 : seed, curate_out,
                              quiet);
        if (report->parsed()) return cmd_report(metrics_path, quiet);
    } catch (const ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return 2;
    } catch (const InputError& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}

}  // namespace sslcal
