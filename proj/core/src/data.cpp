#include "sslcal/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "sslcal/errors.hpp"

namespace sslcal {

namespace {
constexpr double kPi = 3.141592653589793238462643383279502884;

std::vector<std::vector<std::size_t>> indices_by_class(const Dataset& ds) {
    std::vector<std::vector<std::size_t>> by_class(ds.k);
    for (std::size_t i = 0; i < ds.y.size(); ++i) {
        const int y = ds.y[i];
        if (y < 0 || y >= ds.k) throw InputError("label outside [0, K)");
        by_class[static_cast<std::size_t>(y)].push_back(i);
    }
    return by_class;
}

void append_rows(LabeledSet& dst, const Dataset& src,
                 const std::vector<std::size_t>& idx) {
    if (dst.x.cols == 0) dst.x.cols = src.x.cols;
    for (std::size_t i : idx) {
        dst.x.data.insert(dst.x.data.end(), src.x.row(i).begin(),
                          src.x.row(i).end());
        dst.y.push_back(src.y[i]);
        ++dst.x.rows;
    }
}
}  // namespace

Dataset make_blobs(int k, int n_per_class, int dim, double separation,
                   std::uint64_t seed) {
    if (k < 2) throw ConfigError("make_blobs: need at least 2 classes");
    if (n_per_class < 1) throw ConfigError("make_blobs: need samples per class");
    if (dim < 1) throw ConfigError("make_blobs: dimension must be positive");

    Rng rng(seed);
    Dataset ds;
    ds.k = k;
    ds.x = Matrix(static_cast<std::size_t>(k) * n_per_class,
                  static_cast<std::size_t>(dim));
    ds.y.reserve(ds.x.rows);

    std::size_t row = 0;
    for (int c = 0; c < k; ++c) {
        std::vector<double> center(static_cast<std::size_t>(dim), 0.0);
        if (dim == 1) {
            center[0] = separation * c;
        } else {
            const double angle = 2.0 * kPi * c / k;
            center[0] = separation * std::cos(angle);
            center[1] = separation * std::sin(angle);
        }
        for (int i = 0; i < n_per_class; ++i, ++row) {
            for (int j = 0; j < dim; ++j)
                ds.x(row, static_cast<std::size_t>(j)) =
                    center[static_cast<std::size_t>(j)] + rng.normal();
            ds.y.push_back(c);
        }
    }
    return ds;
}

Dataset make_moons(int n, double noise, std::uint64_t seed) {
    if (n < 2) throw ConfigError("make_moons: need at least 2 samples");
    Rng rng(seed);
    Dataset ds;
    ds.k = 2;
    ds.x = Matrix(static_cast<std::size_t>(n), 2);
    ds.y.reserve(static_cast<std::size_t>(n));

    const int n_outer = n / 2 + n % 2;
    const int n_inner = n / 2;
    std::size_t row = 0;
    for (int i = 0; i < n_outer; ++i, ++row) {
        const double t = n_outer == 1 ? 0.0 : kPi * i / (n_outer - 1);
        ds.x(row, 0) = std::cos(t) + noise * rng.normal();
        ds.x(row, 1) = std::sin(t) + noise * rng.normal();
        ds.y.push_back(0);
    }
    for (int i = 0; i < n_inner; ++i, ++row) {
        const double t = n_inner == 1 ? 0.0 : kPi * i / (n_inner - 1);
        ds.x(row, 0) = 1.0 - std::cos(t) + noise * rng.normal();
        ds.x(row, 1) = 0.5 - std::sin(t) + noise * rng.normal();
        ds.y.push_back(1);
    }
    return ds;
}

DatasetSplit split_ssl(const Dataset& dataset, const SplitRule& rule,
                       double test_fraction, std::uint64_t seed) {
    if (dataset.k < 2) throw ConfigError("split_ssl: need at least 2 classes");
    if (test_fraction < 0.0 || test_fraction >= 1.0)
        throw ConfigError("split_ssl: test fraction must lie in [0,1)");
    if (rule.labels_per_class <= 0 && rule.label_fraction <= 0.0)
        throw ConfigError("split_ssl: no labeling rule given");

    Rng rng(seed);
    auto by_class = indices_by_class(dataset);

    DatasetSplit split;
    split.k = dataset.k;
    split.class_counts.assign(static_cast<std::size_t>(dataset.k), 0);
    for (int c = 0; c < dataset.k; ++c) {
        auto& idx = by_class[static_cast<std::size_t>(c)];
        rng.shuffle(idx);
        const std::size_t n_c = idx.size();
        const std::size_t n_test = static_cast<std::size_t>(
            std::llround(test_fraction * static_cast<double>(n_c)));
        const std::size_t n_label =
            rule.labels_per_class > 0
                ? static_cast<std::size_t>(rule.labels_per_class)
                : static_cast<std::size_t>(std::llround(
                      rule.label_fraction * static_cast<double>(n_c)));
        if (n_label < 1)
            throw ConfigError("split_ssl: class " + std::to_string(c) +
                              " would get no labels");
        if (n_test + n_label > n_c)
            throw ConfigError("split_ssl: class " + std::to_string(c) +
                              " has too few samples for the requested split");

        std::vector<std::size_t> test_idx(idx.begin(), idx.begin() + n_test);
        std::vector<std::size_t> lab_idx(idx.begin() + n_test,
                                         idx.begin() + n_test + n_label);
        std::vector<std::size_t> unl_idx(idx.begin() + n_test + n_label,
                                         idx.end());
        append_rows(split.test, dataset, test_idx);
        append_rows(split.labeled, dataset, lab_idx);
        append_rows(split.unlabeled, dataset, unl_idx);
        split.class_counts[static_cast<std::size_t>(c)] = unl_idx.size();
    }
    return split;
}

std::vector<std::size_t> long_tail_counts(int k, int n_max, double alpha) {
    if (k < 2) throw ConfigError("long_tail_counts: need at least 2 classes");
    if (n_max < 1) throw ConfigError("long_tail_counts: n_max must be positive");
    if (alpha < 1.0) throw ConfigError("long_tail_counts: alpha must be >= 1");
    std::vector<std::size_t> counts(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) {
        const double expo = -static_cast<double>(i) / static_cast<double>(k - 1);
        counts[static_cast<std::size_t>(i)] = static_cast<std::size_t>(
            std::llround(n_max * std::pow(alpha, expo)));
    }
    return counts;
}

DatasetSplit curate_long_tail(const Dataset& dataset,
                              const std::vector<std::size_t>& counts,
                              const LongTailRule& rule, std::uint64_t seed) {
    if (counts.size() != static_cast<std::size_t>(dataset.k))
        throw ConfigError("curate_long_tail: counts/class mismatch");
    if (rule.min_labels < 1)
        throw ConfigError("curate_long_tail: minimum labels must be >= 1");

    Rng rng(seed);
    auto by_class = indices_by_class(dataset);

    DatasetSplit split;
    split.k = dataset.k;
    split.class_counts = counts;
    for (int c = 0; c < dataset.k; ++c) {
        auto& idx = by_class[static_cast<std::size_t>(c)];
        rng.shuffle(idx);
        const std::size_t n_u = counts[static_cast<std::size_t>(c)];
        const std::size_t n_l = std::max<std::size_t>(
            static_cast<std::size_t>(rule.min_labels),
            static_cast<std::size_t>(std::llround(
                rule.label_fraction * static_cast<double>(n_u))));
        const std::size_t n_t = static_cast<std::size_t>(rule.test_per_class);
        if (n_u + n_l + n_t > idx.size())
            throw ConfigError("curate_long_tail: class " + std::to_string(c) +
                              " has insufficient samples");

        std::vector<std::size_t> test_idx(idx.begin(), idx.begin() + n_t);
        std::vector<std::size_t> lab_idx(idx.begin() + n_t,
                                         idx.begin() + n_t + n_l);
        std::vector<std::size_t> unl_idx(idx.begin() + n_t + n_l,
                                         idx.begin() + n_t + n_l + n_u);
        append_rows(split.test, dataset, test_idx);
        append_rows(split.labeled, dataset, lab_idx);
        append_rows(split.unlabeled, dataset, unl_idx);
    }
    return split;
}

AugmentPolicy AugmentPolicy::weak(double sigma) {
    AugmentPolicy p;
    p.kind = Kind::weak;
    p.noise_sigma = sigma;
    return p;
}

AugmentPolicy AugmentPolicy::strong(double sigma, double scale_range,
                                    double dropout_p) {
    AugmentPolicy p;
    p.kind = Kind::strong;
    p.noise_sigma = sigma;
    p.scale_range = scale_range;
    p.dropout_p = dropout_p;
    return p;
}

void AugmentPolicy::validate() const {
    if (noise_sigma < 0.0) throw ConfigError("augment: sigma must be >= 0");
    if (scale_range < 0.0 || scale_range >= 1.0)
        throw ConfigError("augment: scale range must lie in [0,1)");
    if (dropout_p < 0.0 || dropout_p > 1.0)
        throw ConfigError("augment: dropout probability must lie in [0,1]");
}

Matrix augment(const Matrix& inputs, const AugmentPolicy& policy, Rng& rng) {
    policy.validate();
    Matrix out = inputs;
    if (policy.noise_sigma > 0.0)
        for (double& v : out.data) v += policy.noise_sigma * rng.normal();
    if (policy.kind == AugmentPolicy::Kind::strong) {
        if (policy.scale_range > 0.0)
            for (double& v : out.data)
                v *= rng.uniform(1.0 - policy.scale_range,
                                 1.0 + policy.scale_range);
        if (policy.dropout_p > 0.0)
            for (double& v : out.data)
                if (rng.uniform() < policy.dropout_p) v = 0.0;
    }
    return out;
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur.push_back(ch);
        }
    }
    fields.push_back(cur);
    return fields;
}

double parse_number(const std::string& s, std::size_t line_no) {
    double v = 0.0;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    auto [p, ec] = std::from_chars(first, last, v);
    if (ec != std::errc{} || p != last)
        throw InputError("non-numeric feature value '" + s + "' at line " +
                         std::to_string(line_no));
    return v;
}

}  // namespace

Dataset load_csv(const std::string& path, const std::string& label_column,
                 bool normalize) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open CSV file: " + path);

    std::string line;
    if (!std::getline(in, line)) throw InputError("CSV file is empty: " + path);
    const auto header = split_line(line);
    std::size_t label_idx = header.size();
    for (std::size_t i = 0; i < header.size(); ++i)
        if (header[i] == label_column) label_idx = i;
    if (label_idx == header.size())
        throw InputError("label column '" + label_column + "' not found");

    const std::size_t d = header.size() - 1;
    std::vector<double> features;
    std::vector<std::string> raw_labels;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto fields = split_line(line);
        if (fields.size() != header.size())
            throw InputError("ragged row at line " + std::to_string(line_no) +
                             ": expected " + std::to_string(header.size()) +
                             " fields, got " + std::to_string(fields.size()));
        for (std::size_t i = 0; i < fields.size(); ++i) {
            if (i == label_idx) {
                if (fields[i].empty())
                    throw InputError("missing label at line " +
                                     std::to_string(line_no));
                raw_labels.push_back(fields[i]);
            } else {
                features.push_back(parse_number(fields[i], line_no));
            }
        }
    }
    if (raw_labels.empty()) throw InputError("CSV has no data rows: " + path);

    // Map labels to contiguous ids: numerically when every label parses as a
    // number, lexicographically otherwise.
    std::vector<std::string> unique = raw_labels;
    std::sort(unique.begin(), unique.end());
    unique.erase(std::unique(unique.begin(), unique.end()), unique.end());
    bool all_numeric = true;
    for (const auto& s : unique) {
        double v = 0.0;
        auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc{} || p != s.data() + s.size()) {
            all_numeric = false;
            break;
        }
    }
    if (all_numeric)
        std::sort(unique.begin(), unique.end(),
                  [](const std::string& a, const std::string& b) {
                      return std::stod(a) < std::stod(b);
                  });
    std::map<std::string, int> label_ids;
    for (std::size_t i = 0; i < unique.size(); ++i)
        label_ids[unique[i]] = static_cast<int>(i);

    Dataset ds;
    ds.k = static_cast<int>(unique.size());
    ds.x = Matrix(raw_labels.size(), d);
    ds.x.data = std::move(features);
    ds.y.reserve(raw_labels.size());
    for (const auto& s : raw_labels) ds.y.push_back(label_ids[s]);

    if (normalize && d > 0) {
        for (std::size_t j = 0; j < d; ++j) {
            double mean = 0.0;
            for (std::size_t i = 0; i < ds.x.rows; ++i) mean += ds.x(i, j);
            mean /= static_cast<double>(ds.x.rows);
            double var = 0.0;
            for (std::size_t i = 0; i < ds.x.rows; ++i) {
                const double dlt = ds.x(i, j) - mean;
                var += dlt * dlt;
            }
            var /= static_cast<double>(ds.x.rows);
            const double sd = std::sqrt(var);
            const double denom = sd == 0.0 ? 1.0 : sd;
            for (std::size_t i = 0; i < ds.x.rows; ++i)
                ds.x(i, j) = (ds.x(i, j) - mean) / denom;
        }
    }
    return ds;
}

namespace {

void write_rows(std::ostream& out, const LabeledSet& set, const char* split_name) {
    char buf[64];
    for (std::size_t i = 0; i < set.size(); ++i) {
        for (std::size_t j = 0; j < set.x.cols; ++j) {
            auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), set.x(i, j));
            out.write(buf, p - buf);
            out.put(',');
        }
        out << set.y[i] << ',' << split_name << '\n';
    }
}

}  // namespace

void write_dataset_csv(const DatasetSplit& split, std::ostream& out) {
    const std::size_t d =
        split.labeled.x.cols ? split.labeled.x.cols : split.unlabeled.x.cols;
    for (std::size_t j = 0; j < d; ++j) out << 'f' << j << ',';
    out << "label,split\n";
    write_rows(out, split.labeled, "labeled");
    write_rows(out, split.unlabeled, "unlabeled");
    write_rows(out, split.test, "test");
}

}  // namespace sslcal
