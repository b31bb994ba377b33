#include <doctest.h>

#include <cmath>
#include <sstream>

#include "sslcal/calibration.hpp"
#include "sslcal/errors.hpp"
#include "test_util.hpp"

using namespace sslcal;

namespace {

// Direct double loop over bins and samples; deliberately independent of the
// implementation's single-pass binning.
double brute_force_ece(const Matrix& probs, const std::vector<int>& labels,
                       int m) {
    double total = 0.0;
    const double n = static_cast<double>(probs.rows);
    for (int bin = 1; bin <= m; ++bin) {
        const double lo = static_cast<double>(bin - 1) / m;
        const double hi = static_cast<double>(bin) / m;
        double count = 0.0, acc = 0.0, conf = 0.0;
        for (std::size_t i = 0; i < probs.rows; ++i) {
            const std::size_t pred = argmax(probs.row(i));
            const double c = probs(i, pred);
            const bool member = (c > lo && c <= hi) || (bin == 1 && c <= 0.0);
            if (!member) continue;
            count += 1.0;
            conf += c;
            if (static_cast<int>(pred) == labels[i]) acc += 1.0;
        }
        if (count == 0.0) continue;
        total += (count / n) * std::abs(acc / count - conf / count);
    }
    return total;
}

Matrix probs_with_confidence(const std::vector<double>& conf,
                             const std::vector<int>& predicted, int k) {
    Matrix m(conf.size(), k);
    for (std::size_t i = 0; i < conf.size(); ++i) {
        const double rest = (1.0 - conf[i]) / (k - 1);
        for (int c = 0; c < k; ++c) m(i, c) = rest;
        m(i, predicted[i]) = conf[i];
    }
    return m;
}

}  // namespace

TEST_CASE("ece: one-hot correct predictions are perfectly calibrated") {
    Matrix probs(3, 4);
    probs(0, 1) = 1.0;
    probs(1, 0) = 1.0;
    probs(2, 3) = 1.0;
    const auto rep = ece(probs, {1, 0, 3});
    CHECK(rep.ece == 0.0);
    CHECK(rep.accuracy == 1.0);
}

TEST_CASE("ece: two fully-confident samples, one wrong, give 0.5") {
    const Matrix probs = probs_with_confidence({1.0, 1.0}, {0, 0}, 2);
    const auto rep = ece(probs, {0, 1});
    CHECK(rep.ece == doctest::Approx(0.5).epsilon(1e-12));
    // a single occupied bin: the last one
    for (std::size_t b = 0; b + 1 < rep.bins.size(); ++b)
        CHECK(rep.bins[b].count == 0);
    CHECK(rep.bins.back().count == 2);
}

TEST_CASE("ece: two-bin hand example gives 0.05") {
    const Matrix probs =
        probs_with_confidence({0.55, 0.55, 0.95, 0.95}, {0, 0, 1, 1}, 2);
    const auto rep = ece(probs, {0, 1, 1, 1});  // T, F, T, T
    CHECK(rep.ece == doctest::Approx(0.05).epsilon(1e-12));
    CHECK(rep.bins[5].count == 2);   // (0.5, 0.6]
    CHECK(rep.bins[9].count == 2);   // (0.9, 1.0]
    CHECK(rep.bins[5].accuracy == doctest::Approx(0.5));
    CHECK(rep.bins[5].mean_confidence == doctest::Approx(0.55));
}

TEST_CASE("ece: empty input is an input error") {
    Matrix empty;
    CHECK_THROWS_AS(ece(empty, {}), InputError);
}

TEST_CASE("ece equals the brute-force double loop on random batches") {
    Rng rng(51);
    for (int trial = 0; trial < 25; ++trial) {
        const std::size_t n = 1 + rng.index(400);
        const std::size_t k = 2 + rng.index(9);
        Matrix probs = testutil::random_distribution_rows(n, k, rng);
        std::vector<int> labels(n);
        for (auto& y : labels) y = static_cast<int>(rng.index(k));
        const auto rep = ece(probs, labels);
        CHECK(std::abs(rep.ece - brute_force_ece(probs, labels, 10)) < 1e-12);
    }
}

TEST_CASE("ece is invariant under sample order and class relabeling") {
    Rng rng(52);
    const std::size_t n = 64, k = 5;
    Matrix probs = testutil::random_distribution_rows(n, k, rng);
    std::vector<int> labels(n);
    for (auto& y : labels) y = static_cast<int>(rng.index(k));
    const double base = ece(probs, labels).ece;

    // permute samples
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    rng.shuffle(order);
    Matrix probs_perm(n, k);
    std::vector<int> labels_perm(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < k; ++c) probs_perm(i, c) = probs(order[i], c);
        labels_perm[i] = labels[order[i]];
    }
    CHECK(ece(probs_perm, labels_perm).ece == doctest::Approx(base).epsilon(1e-15));

    // relabel classes consistently
    const std::size_t cls_perm[5] = {3, 4, 0, 1, 2};
    Matrix probs_relab(n, k);
    std::vector<int> labels_relab(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < k; ++c)
            probs_relab(i, cls_perm[c]) = probs(i, c);
        labels_relab[i] = static_cast<int>(cls_perm[labels[i]]);
    }
    CHECK(ece(probs_relab, labels_relab).ece ==
          doctest::Approx(base).epsilon(1e-15));
}

TEST_CASE("reliability bins export as CSV") {
    const Matrix probs = probs_with_confidence({0.95, 0.55}, {0, 1}, 2);
    const auto rep = ece(probs, {0, 1});
    std::ostringstream out;
    write_reliability_csv(rep, out);
    const std::string text = out.str();
    CHECK(text.rfind("bin_low,bin_high,count,accuracy,confidence\n", 0) == 0);
    std::size_t lines = 0;
    for (char c : text)
        if (c == '\n') ++lines;
    CHECK(lines == 11);  // header + 10 bins
}

TEST_CASE("purity_rate: all accepted and correct gives 1") {
    const Matrix pseudo = probs_with_confidence({0.9, 0.8}, {1, 0}, 3);
    const auto p = purity_rate({1, 1}, pseudo, {1, 0});
    REQUIRE(p.has_value());
    CHECK(*p == 1.0);
}

TEST_CASE("purity_rate: four accepted, two correct gives 0.5") {
    const Matrix pseudo =
        probs_with_confidence({0.9, 0.9, 0.9, 0.9, 0.9}, {0, 1, 2, 0, 1}, 3);
    const auto p = purity_rate({1, 1, 1, 1, 0}, pseudo, {0, 1, 0, 1, 2});
    REQUIRE(p.has_value());
    CHECK(*p == 0.5);
}

TEST_CASE("purity_rate: empty acceptance is reported as missing") {
    const Matrix pseudo = probs_with_confidence({0.9}, {0}, 2);
    CHECK_FALSE(purity_rate({0}, pseudo, {0}).has_value());
}

TEST_CASE("purity_rate: length mismatch is an input error") {
    const Matrix pseudo = probs_with_confidence({0.9}, {0}, 2);
    CHECK_THROWS_AS(purity_rate({1, 1}, pseudo, {0}), InputError);
}

TEST_CASE("mean_max_prob examples") {
    const Matrix one_hot = probs_with_confidence({1.0, 1.0}, {0, 1}, 3);
    CHECK(mean_max_prob(one_hot) == 1.0);
    Matrix uniform(3, 4, 0.25);
    CHECK(mean_max_prob(uniform) == doctest::Approx(0.25));
    const Matrix mixed = probs_with_confidence({0.6, 0.8}, {0, 1}, 2);
    CHECK(mean_max_prob(mixed) == doctest::Approx(0.7).epsilon(1e-15));
    Matrix empty;
    CHECK_THROWS_AS(mean_max_prob(empty), InputError);
}

TEST_CASE("convergence_report: constant history reports the constant") {
    std::vector<Checkpoint> history(7, {0.83, 0.12});
    const auto rep = convergence_report(history);
    CHECK(rep.accuracy == 0.83);
    CHECK(rep.ece == 0.12);
}

TEST_CASE("convergence_report: history shorter than 20 uses the whole window") {
    std::vector<Checkpoint> history = {
        {0.1, 1.0}, {0.5, 2.0}, {0.3, 3.0}, {0.9, 4.0}, {0.2, 5.0}};
    // best at index 3; window is everything; lower median of 5 = 3rd smallest
    const auto rep = convergence_report(history);
    CHECK(rep.accuracy == 0.3);
    CHECK(rep.ece == 3.0);
    CHECK(rep.checkpoint_index == 2);
}

TEST_CASE("convergence_report: 30-point history with the best at index 25") {
    std::vector<Checkpoint> history;
    for (int i = 0; i < 30; ++i)
        history.push_back({static_cast<double>(i), 1000.0 + i});
    history[25].accuracy = 100.0;
    // window [15, 30); sorted accuracies 15..24, 26..29, 100; lower median
    // (index 7 of 15) is 22
    const auto rep = convergence_report(history);
    CHECK(rep.accuracy == 22.0);
    CHECK(rep.ece == 1022.0);
    CHECK(rep.checkpoint_index == 22);
}

TEST_CASE("convergence_report: ties break toward earlier checkpoints") {
    std::vector<Checkpoint> history = {
        {0.5, 1.0}, {0.7, 2.0}, {0.5, 3.0}, {0.7, 4.0}, {0.9, 5.0}};
    // best 0.9 at 4; window all; sorted {0.5, 0.5, 0.7, 0.7, 0.9} median 0.7;
    // first window entry with 0.7 is index 1
    const auto rep = convergence_report(history);
    CHECK(rep.accuracy == 0.7);
    CHECK(rep.ece == 2.0);
    CHECK(rep.checkpoint_index == 1);
}

TEST_CASE("convergence_report is idempotent and rejects empty histories") {
    std::vector<Checkpoint> history = {{0.4, 0.2}, {0.6, 0.1}, {0.5, 0.3}};
    const auto a = convergence_report(history);
    const auto b = convergence_report(history);
    CHECK(a.accuracy == b.accuracy);
    CHECK(a.ece == b.ece);
    CHECK(a.checkpoint_index == b.checkpoint_index);
    CHECK_THROWS_AS(convergence_report(std::vector<Checkpoint>{}), InputError);
}

TEST_CASE("pac_bayes_bound: delta = 1 removes the confidence term") {
    const auto rep = pac_bayes_bound(5.0, 0.1, 50, 10, 1.0, 0.0);
    CHECK(rep.confidence_term == 0.0);
}

TEST_CASE("pac_bayes_bound: correct pseudo-labels give a zero divergence term") {
    const auto rep = pac_bayes_bound(5.0, 0.0, 50, 10, 0.1, 1.0);
    CHECK(rep.divergence_term == 0.0);
}

TEST_CASE("pac_bayes_bound: supervised limit (N_u = 0) drops the divergence") {
    const auto rep = pac_bayes_bound(5.0, -0.7, 50, 0, 0.1, 1.0);
    CHECK(rep.divergence_term == 0.0);
}

TEST_CASE("pac_bayes_bound: worked numeric example") {
    const auto rep = pac_bayes_bound(10.0, -0.2, 100, 50, 0.05, 1.0);
    CHECK(rep.negative_elbo_term == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(rep.divergence_term == doctest::Approx(0.2).epsilon(1e-12));
    CHECK(rep.confidence_term ==
          doctest::Approx(std::log(20.0) / 100.0).epsilon(1e-12));
    CHECK(rep.slack_term == doctest::Approx(0.5).epsilon(1e-12));
    const double expected = 0.1 + 0.2 + std::log(20.0) / 100.0 + 0.5;
    CHECK(std::abs(rep.total - expected) < 1e-9);
}

TEST_CASE("pac_bayes_bound: total equals the sum of the four terms exactly") {
    const auto rep = pac_bayes_bound(3.7, 0.42, 200, 150, 0.2, 0.8);
    CHECK(rep.total == rep.negative_elbo_term + rep.divergence_term +
                           rep.confidence_term + rep.slack_term);
}

TEST_CASE("pac_bayes_bound: invalid inputs are configuration errors") {
    CHECK_THROWS_AS(pac_bayes_bound(1.0, 0.0, 10, 5, 0.0, 1.0), ConfigError);
    CHECK_THROWS_AS(pac_bayes_bound(1.0, 0.0, 10, 5, -0.1, 1.0), ConfigError);
    CHECK_THROWS_AS(pac_bayes_bound(1.0, 0.0, 10, 5, 0.5, -1.0), ConfigError);
    CHECK_THROWS_AS(pac_bayes_bound(1.0, 0.0, 10, 20, 0.5, 1.0), ConfigError);
    CHECK_THROWS_AS(pac_bayes_bound(1.0, 0.0, 0, 0, 0.5, 1.0), ConfigError);
}
