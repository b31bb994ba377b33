#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "sslcal/data.hpp"
#include "sslcal/errors.hpp"
#include "test_util.hpp"

using namespace sslcal;

namespace {

std::string write_temp(const std::string& name, const std::string& content) {
    const auto path = std::filesystem::temp_directory_path() / name;
    std::ofstream out(path);
    out << content;
    return path.string();
}

}  // namespace

TEST_CASE("make_blobs: deterministic, class-balanced, correctly sized") {
    const Dataset a = make_blobs(4, 100, 2, 3.0, 42);
    const Dataset b = make_blobs(4, 100, 2, 3.0, 42);
    CHECK(a.x.rows == 400);
    CHECK(a.k == 4);
    for (std::size_t i = 0; i < a.x.data.size(); ++i)
        CHECK(a.x.data[i] == b.x.data[i]);
    std::vector<int> counts(4, 0);
    for (int y : a.y) counts[static_cast<std::size_t>(y)]++;
    for (int c : counts) CHECK(c == 100);

    const Dataset c = make_blobs(4, 100, 2, 3.0, 43);
    bool any_diff = false;
    for (std::size_t i = 0; i < c.x.data.size(); ++i)
        if (c.x.data[i] != a.x.data[i]) any_diff = true;
    CHECK(any_diff);
}

TEST_CASE("make_blobs: wide separation is solved by nearest centroid") {
    const Dataset ds = make_blobs(3, 200, 2, 100.0, 7);
    // centroids per class
    std::vector<double> cx(3, 0.0), cy(3, 0.0);
    std::vector<int> n(3, 0);
    for (std::size_t i = 0; i < ds.x.rows; ++i) {
        cx[ds.y[i]] += ds.x(i, 0);
        cy[ds.y[i]] += ds.x(i, 1);
        n[ds.y[i]]++;
    }
    for (int c = 0; c < 3; ++c) {
        cx[c] /= n[c];
        cy[c] /= n[c];
    }
    for (std::size_t i = 0; i < ds.x.rows; ++i) {
        int best = 0;
        double best_d = 1e300;
        for (int c = 0; c < 3; ++c) {
            const double dx = ds.x(i, 0) - cx[c], dy = ds.x(i, 1) - cy[c];
            const double d = dx * dx + dy * dy;
            if (d < best_d) {
                best_d = d;
                best = c;
            }
        }
        CHECK(best == ds.y[i]);
    }
}

TEST_CASE("make_blobs rejects invalid sizes") {
    CHECK_THROWS_AS(make_blobs(1, 10, 2, 1.0, 0), ConfigError);
    CHECK_THROWS_AS(make_blobs(3, 0, 2, 1.0, 0), ConfigError);
    CHECK_THROWS_AS(make_blobs(3, 10, 0, 1.0, 0), ConfigError);
}

TEST_CASE("make_moons: two classes on noiseless half circles") {
    const Dataset ds = make_moons(101, 0.0, 5);
    CHECK(ds.k == 2);
    CHECK(ds.x.rows == 101);
    std::vector<int> counts(2, 0);
    for (int y : ds.y) counts[y]++;
    CHECK(counts[0] == 51);
    CHECK(counts[1] == 50);
    for (std::size_t i = 0; i < ds.x.rows; ++i) {
        if (ds.y[i] == 0) {
            const double r = ds.x(i, 0) * ds.x(i, 0) + ds.x(i, 1) * ds.x(i, 1);
            CHECK(r == doctest::Approx(1.0).epsilon(1e-9));
        } else {
            const double dx = ds.x(i, 0) - 1.0, dy = ds.x(i, 1) - 0.5;
            CHECK(dx * dx + dy * dy == doctest::Approx(1.0).epsilon(1e-9));
        }
    }
    const Dataset again = make_moons(101, 0.0, 5);
    for (std::size_t i = 0; i < ds.x.data.size(); ++i)
        CHECK(ds.x.data[i] == again.x.data[i]);
}

TEST_CASE("split_ssl: labeling the whole class leaves no unlabeled data") {
    const Dataset ds = make_blobs(2, 30, 2, 5.0, 1);
    SplitRule rule;
    rule.labels_per_class = 30;
    const DatasetSplit split = split_ssl(ds, rule, 0.0, 9);
    CHECK(split.unlabeled.size() == 0);
    CHECK(split.labeled.size() == 60);
    CHECK(split.test.size() == 0);
}

TEST_CASE("split_ssl: four labels per class over four classes gives 16") {
    const Dataset ds = make_blobs(4, 50, 2, 5.0, 2);
    SplitRule rule;
    rule.labels_per_class = 4;
    const DatasetSplit split = split_ssl(ds, rule, 0.2, 9);
    CHECK(split.labeled.size() == 16);
    std::vector<int> counts(4, 0);
    for (int y : split.labeled.y) counts[y]++;
    for (int c : counts) CHECK(c == 4);  // stratification is exact
    // per-class unlabeled sizes: 50 - 10 test - 4 labeled
    for (std::size_t c = 0; c < 4; ++c) CHECK(split.class_counts[c] == 36);
}

TEST_CASE("split_ssl: identical seeds give identical splits, disjoint parts") {
    const Dataset ds = make_blobs(3, 40, 3, 4.0, 3);
    SplitRule rule;
    rule.labels_per_class = 5;
    const DatasetSplit a = split_ssl(ds, rule, 0.25, 77);
    const DatasetSplit b = split_ssl(ds, rule, 0.25, 77);
    CHECK(a.labeled.x.data == b.labeled.x.data);
    CHECK(a.unlabeled.x.data == b.unlabeled.x.data);
    CHECK(a.test.x.data == b.test.x.data);

    // continuous features make rows unique, so row sets must be disjoint
    auto row_key = [](const Matrix& m, std::size_t i) {
        std::ostringstream os;
        for (double v : m.row(i)) os << v << ",";
        return os.str();
    };
    std::set<std::string> seen;
    std::size_t total = 0;
    for (const LabeledSet* part : {&a.labeled, &a.unlabeled, &a.test})
        for (std::size_t i = 0; i < part->size(); ++i) {
            seen.insert(row_key(part->x, i));
            ++total;
        }
    CHECK(seen.size() == total);
    CHECK(total == ds.x.rows);
}

TEST_CASE("split_ssl: oversized label request is a configuration error") {
    const Dataset ds = make_blobs(2, 10, 2, 5.0, 4);
    SplitRule rule;
    rule.labels_per_class = 11;
    CHECK_THROWS_AS(split_ssl(ds, rule, 0.0, 1), ConfigError);
    rule.labels_per_class = 9;
    CHECK_THROWS_AS(split_ssl(ds, rule, 0.3, 1), ConfigError);  // 3 test + 9 > 10
}

TEST_CASE("long_tail_counts: alpha = 1 keeps every class at n_max") {
    const auto counts = long_tail_counts(5, 300, 1.0);
    for (auto c : counts) CHECK(c == 300);
}

TEST_CASE("long_tail_counts: published tail size and totals") {
    const auto c100 = long_tail_counts(10, 5000, 100.0);
    CHECK(c100.front() == 5000);
    CHECK(c100.back() == 50);  // 5000 * 100^-1
    std::size_t total100 = 0;
    for (auto c : c100) total100 += c;
    CHECK(std::abs(static_cast<double>(total100) - 12406.0) <= 0.003 * 12406.0);

    const auto c10 = long_tail_counts(10, 5000, 10.0);
    std::size_t total10 = 0;
    for (auto c : c10) total10 += c;
    CHECK(std::abs(static_cast<double>(total10) - 20431.0) <= 0.003 * 20431.0);
}

TEST_CASE("long_tail_counts: max/min ratio tracks alpha within 2%") {
    for (double alpha : {5.0, 10.0, 50.0, 100.0}) {
        const auto counts = long_tail_counts(10, 500, alpha);
        const double ratio = static_cast<double>(counts.front()) /
                             static_cast<double>(counts.back());
        CHECK(ratio >= alpha * 0.98);
        CHECK(ratio <= alpha * 1.02);
    }
}

TEST_CASE("curate_long_tail: the minimum-one-label rule") {
    // class sizes 30 and 3: 10% of 3 rounds to 0, the floor of one label applies
    const Dataset ds = make_blobs(2, 50, 2, 5.0, 11);
    const std::vector<std::size_t> counts = {30, 3};
    LongTailRule rule;
    rule.label_fraction = 0.1;
    rule.test_per_class = 5;
    const DatasetSplit split = curate_long_tail(ds, counts, rule, 6);
    std::vector<int> lab_counts(2, 0);
    for (int y : split.labeled.y) lab_counts[y]++;
    CHECK(lab_counts[0] == 3);  // round(0.1 * 30)
    CHECK(lab_counts[1] == 1);  // minimum rule
    std::vector<int> test_counts(2, 0);
    for (int y : split.test.y) test_counts[y]++;
    CHECK(test_counts[0] == 5);  // class-balanced test set
    CHECK(test_counts[1] == 5);
    CHECK(split.class_counts == counts);
}

TEST_CASE("curate_long_tail: ten percent of fifty is five labels") {
    const Dataset ds = make_blobs(2, 80, 2, 5.0, 12);
    const std::vector<std::size_t> counts = {50, 20};
    LongTailRule rule;
    rule.label_fraction = 0.1;
    const DatasetSplit split = curate_long_tail(ds, counts, rule, 6);
    std::vector<int> lab_counts(2, 0);
    for (int y : split.labeled.y) lab_counts[y]++;
    CHECK(lab_counts[0] == 5);
    CHECK(lab_counts[1] == 2);
}

TEST_CASE("curate_long_tail: insufficient samples per class are rejected") {
    const Dataset ds = make_blobs(2, 20, 2, 5.0, 13);
    LongTailRule rule;
    rule.label_fraction = 0.1;
    CHECK_THROWS_AS(curate_long_tail(ds, {25, 5}, rule, 1), ConfigError);
}

TEST_CASE("augment: zero-noise weak policy is the identity") {
    Rng rng(61);
    const Matrix x = testutil::random_matrix(5, 3, rng);
    Rng aug_rng(62);
    const Matrix out = augment(x, AugmentPolicy::weak(0.0), aug_rng);
    CHECK(out.data == x.data);
}

TEST_CASE("augment: weak noise has the configured magnitude") {
    Rng rng(63);
    const Matrix x(100, 100, 0.0);
    Rng aug_rng(64);
    const double sigma = 0.05;
    const Matrix out = augment(x, AugmentPolicy::weak(sigma), aug_rng);
    double sq = 0.0;
    for (double v : out.data) sq += v * v;
    const double emp = std::sqrt(sq / static_cast<double>(out.data.size()));
    CHECK(emp == doctest::Approx(sigma).epsilon(0.05));
}

TEST_CASE("augment: full dropout zeroes every feature") {
    Rng rng(65);
    const Matrix x = testutil::random_matrix(4, 6, rng);
    Rng aug_rng(66);
    const Matrix out = augment(x, AugmentPolicy::strong(0.0, 0.0, 1.0), aug_rng);
    for (double v : out.data) CHECK(v == 0.0);
}

TEST_CASE("augment: shape-preserving and deterministic given the rng state") {
    Rng rng(67);
    const Matrix x = testutil::random_matrix(7, 4, rng);
    const AugmentPolicy strong = AugmentPolicy::strong(0.2, 0.2, 0.1);
    Rng a(68), b(68);
    const Matrix out_a = augment(x, strong, a);
    const Matrix out_b = augment(x, strong, b);
    CHECK(out_a.rows == x.rows);
    CHECK(out_a.cols == x.cols);
    CHECK(out_a.data == out_b.data);
    CHECK_THROWS_AS(AugmentPolicy::strong(-0.1, 0.0, 0.0).validate(), ConfigError);
    CHECK_THROWS_AS(AugmentPolicy::strong(0.1, 0.0, 1.5).validate(), ConfigError);
}

TEST_CASE("load_csv: hand-written file parses exactly") {
    const std::string path = write_temp(
        "sslcal_t1.csv", "a,b,label\n1.5,-2,0\n0.25,4,1\n-1,0.5,0\n");
    const Dataset ds = load_csv(path, "label", false);
    CHECK(ds.k == 2);
    CHECK(ds.x.rows == 3);
    CHECK(ds.x.cols == 2);
    CHECK(ds.x(0, 0) == 1.5);
    CHECK(ds.x(0, 1) == -2.0);
    CHECK(ds.x(1, 0) == 0.25);
    CHECK(ds.x(1, 1) == 4.0);
    CHECK(ds.x(2, 0) == -1.0);
    CHECK(ds.x(2, 1) == 0.5);
    CHECK(ds.y == std::vector<int>{0, 1, 0});
    std::remove(path.c_str());
}

TEST_CASE("load_csv: normalization zeroes constant columns safely") {
    const std::string path = write_temp(
        "sslcal_t2.csv", "a,b,label\n3,1,x\n3,2,y\n3,3,x\n");
    const Dataset ds = load_csv(path, "label", true);
    for (std::size_t i = 0; i < 3; ++i) CHECK(ds.x(i, 0) == 0.0);
    // non-constant column is z-scored
    double mean = 0.0;
    for (std::size_t i = 0; i < 3; ++i) mean += ds.x(i, 1);
    CHECK(std::abs(mean) < 1e-12);
    std::remove(path.c_str());
}

TEST_CASE("load_csv: string labels map to contiguous sorted ids") {
    const std::string path = write_temp(
        "sslcal_t3.csv", "f,label\n1,10\n2,2\n3,10\n4,5\n");
    const Dataset ds = load_csv(path, "label", false);
    // numeric sort: 2 -> 0, 5 -> 1, 10 -> 2
    CHECK(ds.y == std::vector<int>{2, 0, 2, 1});
    std::remove(path.c_str());
}

TEST_CASE("load_csv error paths name the offending row") {
    const std::string missing = write_temp("sslcal_t4.csv", "a,b\n1,2\n");
    CHECK_THROWS_AS(load_csv(missing, "label", false), InputError);
    std::remove(missing.c_str());

    const std::string ragged =
        write_temp("sslcal_t5.csv", "a,label\n1,0\n1,2,3\n");
    CHECK_THROWS_WITH_AS(load_csv(ragged, "label", false),
                         doctest::Contains("line 3"), InputError);
    std::remove(ragged.c_str());

    const std::string non_numeric =
        write_temp("sslcal_t6.csv", "a,label\nok,0\n");
    CHECK_THROWS_WITH_AS(load_csv(non_numeric, "label", false),
                         doctest::Contains("line 2"), InputError);
    std::remove(non_numeric.c_str());

    CHECK_THROWS_AS(load_csv("/nonexistent/file.csv", "label", false),
                    InputError);
}

TEST_CASE("write_dataset_csv emits the split column schema") {
    const Dataset ds = make_blobs(2, 10, 2, 5.0, 21);
    SplitRule rule;
    rule.labels_per_class = 2;
    const DatasetSplit split = split_ssl(ds, rule, 0.2, 3);
    std::ostringstream out;
    write_dataset_csv(split, out);
    std::istringstream in(out.str());
    std::string header;
    std::getline(in, header);
    CHECK(header == "f0,f1,label,split");
    std::size_t rows = 0, labeled = 0, unlabeled = 0, test = 0;
    std::string line;
    while (std::getline(in, line)) {
        ++rows;
        if (line.find(",labeled") != std::string::npos) ++labeled;
        if (line.find(",unlabeled") != std::string::npos) ++unlabeled;
        if (line.find(",test") != std::string::npos) ++test;
    }
    CHECK(rows == 20);
    CHECK(labeled == 4);
    CHECK(unlabeled == 12);
    CHECK(test == 4);
}
