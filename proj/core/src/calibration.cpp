#include "sslcal/calibration.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <string>

#include "sslcal/errors.hpp"

namespace sslcal {

ReliabilityReport ece(const Matrix& probabilities, const std::vector<int>& labels,
                      int num_bins) {
    if (probabilities.rows == 0) throw InputError("ece: empty input");
    if (labels.size() != probabilities.rows)
        throw InputError("ece: label count mismatch");
    if (num_bins < 1) throw ConfigError("ece: need at least one bin");

    const std::size_t n = probabilities.rows;
    const int m = num_bins;
    ReliabilityReport rep;
    rep.n = n;
    rep.bins.resize(static_cast<std::size_t>(m));
    for (int b = 0; b < m; ++b) {
        rep.bins[b].low = static_cast<double>(b) / m;
        rep.bins[b].high = static_cast<double>(b + 1) / m;
    }

    std::vector<std::size_t> hits(static_cast<std::size_t>(m), 0);
    std::size_t total_hits = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto row = probabilities.row(i);
        const std::size_t pred = argmax(row);
        const double conf = row[pred];
        int b = static_cast<int>(std::ceil(conf * m));
        if (b < 1) b = 1;  // confidence exactly 0 goes to the first bin
        if (b > m) b = m;
        auto& bin = rep.bins[static_cast<std::size_t>(b - 1)];
        ++bin.count;
        bin.mean_confidence += conf;
        const bool correct = static_cast<int>(pred) == labels[i];
        if (correct) {
            bin.accuracy += 1.0;
            ++hits[static_cast<std::size_t>(b - 1)];
            ++total_hits;
        }
    }

    rep.accuracy = static_cast<double>(total_hits) / static_cast<double>(n);
    rep.ece = 0.0;
    for (auto& bin : rep.bins) {
        if (bin.count == 0) continue;
        bin.accuracy /= static_cast<double>(bin.count);
        bin.mean_confidence /= static_cast<double>(bin.count);
        rep.ece += static_cast<double>(bin.count) / static_cast<double>(n) *
                   std::abs(bin.accuracy - bin.mean_confidence);
    }
    return rep;
}

void write_reliability_csv(const ReliabilityReport& report, std::ostream& out) {
    out << "bin_low,bin_high,count,accuracy,confidence\n";
    char buf[64];
    auto put = [&](double v, char sep) {
        auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
        out.write(buf, p - buf);
        out.put(sep);
    };
    for (const auto& bin : report.bins) {
        put(bin.low, ',');
        put(bin.high, ',');
        out << bin.count << ',';
        put(bin.accuracy, ',');
        put(bin.mean_confidence, '\n');
    }
}

std::optional<double> purity_rate(const std::vector<char>& accept_mask,
                                  const Matrix& pseudo_labels,
                                  const std::vector<int>& true_labels) {
    if (accept_mask.size() != pseudo_labels.rows ||
        accept_mask.size() != true_labels.size())
        throw InputError("purity_rate: length mismatch");
    std::size_t accepted = 0, correct = 0;
    for (std::size_t i = 0; i < accept_mask.size(); ++i) {
        if (!accept_mask[i]) continue;
        ++accepted;
        if (static_cast<int>(argmax(pseudo_labels.row(i))) == true_labels[i])
            ++correct;
    }
    if (accepted == 0) return std::nullopt;
    return static_cast<double>(correct) / static_cast<double>(accepted);
}

double mean_max_prob(const Matrix& probabilities) {
    if (probabilities.rows == 0) throw InputError("mean_max_prob: empty input");
    double sum = 0.0;
    for (std::size_t i = 0; i < probabilities.rows; ++i)
        sum += max_of(probabilities.row(i));
    return sum / static_cast<double>(probabilities.rows);
}

ConvergenceReport convergence_report(std::span<const Checkpoint> history) {
    if (history.empty()) throw InputError("convergence_report: empty history");

    std::size_t best = 0;
    for (std::size_t i = 1; i < history.size(); ++i)
        if (history[i].accuracy > history[best].accuracy) best = i;

    const std::size_t lo = best >= 10 ? best - 10 : 0;
    const std::size_t hi = std::min(history.size(), best + 10);
    std::vector<double> accs;
    accs.reserve(hi - lo);
    for (std::size_t i = lo; i < hi; ++i) accs.push_back(history[i].accuracy);
    std::sort(accs.begin(), accs.end());
    const double median = accs[(accs.size() - 1) / 2];  // lower middle when even

    for (std::size_t i = lo; i < hi; ++i) {
        if (history[i].accuracy == median)
            return {history[i].accuracy, history[i].ece, i};
    }
    throw StateError("convergence_report: median checkpoint not found");
}

BoundReport pac_bayes_bound(double negative_elbo, double pseudo_log_ratio_mc,
                            std::size_t n, std::size_t n_u, double delta,
                            double s2) {
    if (delta <= 0.0 || delta > 1.0)
        throw ConfigError("pac_bayes_bound: delta must lie in (0,1]");
    if (s2 < 0.0) throw ConfigError("pac_bayes_bound: s^2 must be >= 0");
    if (n == 0) throw ConfigError("pac_bayes_bound: N must be positive");
    if (n_u > n) throw ConfigError("pac_bayes_bound: N_u cannot exceed N");

    BoundReport rep;
    rep.n = n;
    rep.n_u = n_u;
    rep.delta = delta;
    rep.s2 = s2;
    rep.negative_elbo_term = negative_elbo / static_cast<double>(n);
    rep.divergence_term = n_u == 0 ? 0.0 : -pseudo_log_ratio_mc;
    rep.confidence_term = std::log(1.0 / delta) / static_cast<double>(n);
    rep.slack_term = s2 / 2.0;
    rep.total = rep.negative_elbo_term + rep.divergence_term +
                rep.confidence_term + rep.slack_term;
    return rep;
}

}  // namespace sslcal
