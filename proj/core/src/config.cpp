#include "sslcal/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "sslcal/errors.hpp"

namespace sslcal {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

double to_double(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const double x = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': expected a number, got '" +
                          v + "'");
    }
}

long to_long(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const long x = std::stol(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': expected an integer, got '" +
                          v + "'");
    }
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError("config key '" + key + "': expected a boolean, got '" + v +
                      "'");
}

std::vector<std::size_t> to_size_list(const std::string& key,
                                      const std::string& v) {
    std::vector<std::size_t> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) continue;
        const long x = to_long(key, item);
        if (x <= 0) throw ConfigError("config key '" + key + "': sizes must be positive");
        out.push_back(static_cast<std::size_t>(x));
    }
    if (out.empty()) throw ConfigError("config key '" + key + "': empty list");
    return out;
}

using Setter = std::function<void(ExperimentConfig&, const std::string&,
                                  const std::string&)>;

const std::map<std::string, Setter>& setters() {
    static const std::map<std::string, Setter> table = {
        {"method.name", [](auto& c, auto& k, auto& v) { (void)k; c.method = v; }},
        {"method.tau", [](auto& c, auto& k, auto& v) { c.method_tau = to_double(k, v); }},
        {"method.t", [](auto& c, auto& k, auto& v) { c.method_t = to_double(k, v); }},
        {"method.mu", [](auto& c, auto& k, auto& v) { c.method_mu = to_double(k, v); }},
        {"method.lambda", [](auto& c, auto& k, auto& v) { c.method_lambda = to_double(k, v); }},

        {"data.source", [](auto& c, auto& k, auto& v) { (void)k; c.data_source = v; }},
        {"data.csv_path", [](auto& c, auto& k, auto& v) { (void)k; c.csv_path = v; }},
        {"data.label_column", [](auto& c, auto& k, auto& v) { (void)k; c.csv_label_column = v; }},
        {"data.normalize", [](auto& c, auto& k, auto& v) { c.csv_normalize = to_bool(k, v); }},
        {"data.k", [](auto& c, auto& k, auto& v) { c.k = static_cast<int>(to_long(k, v)); }},
        {"data.per_class", [](auto& c, auto& k, auto& v) { c.per_class = static_cast<int>(to_long(k, v)); }},
        {"data.dim", [](auto& c, auto& k, auto& v) { c.dim = static_cast<int>(to_long(k, v)); }},
        {"data.separation", [](auto& c, auto& k, auto& v) { c.separation = to_double(k, v); }},
        {"data.moons_n", [](auto& c, auto& k, auto& v) { c.moons_n = static_cast<int>(to_long(k, v)); }},
        {"data.moons_noise", [](auto& c, auto& k, auto& v) { c.moons_noise = to_double(k, v); }},
        {"data.labels_per_class", [](auto& c, auto& k, auto& v) { c.labels_per_class = static_cast<int>(to_long(k, v)); }},
        {"data.label_fraction", [](auto& c, auto& k, auto& v) { c.label_fraction = to_double(k, v); }},
        {"data.test_fraction", [](auto& c, auto& k, auto& v) { c.test_fraction = to_double(k, v); }},
        {"data.long_tail_alpha", [](auto& c, auto& k, auto& v) { c.long_tail_alpha = to_double(k, v); }},
        {"data.long_tail_nmax", [](auto& c, auto& k, auto& v) { c.long_tail_nmax = static_cast<int>(to_long(k, v)); }},
        {"data.long_tail_test_per_class", [](auto& c, auto& k, auto& v) { c.long_tail_test_per_class = static_cast<int>(to_long(k, v)); }},

        {"model.hidden", [](auto& c, auto& k, auto& v) { c.hidden = to_size_list(k, v); }},
        {"model.embed_dim", [](auto& c, auto& k, auto& v) { c.embed_dim = static_cast<int>(to_long(k, v)); }},

        {"optim.lr", [](auto& c, auto& k, auto& v) { c.lr = to_double(k, v); }},
        {"optim.momentum", [](auto& c, auto& k, auto& v) { c.momentum = to_double(k, v); }},
        {"optim.weight_decay", [](auto& c, auto& k, auto& v) { c.weight_decay = to_double(k, v); }},
        {"optim.epochs", [](auto& c, auto& k, auto& v) { c.epochs = static_cast<int>(to_long(k, v)); }},
        {"optim.batch", [](auto& c, auto& k, auto& v) { c.batch = static_cast<int>(to_long(k, v)); }},
        {"optim.lr_schedule", [](auto& c, auto& k, auto& v) { (void)k; c.lr_schedule = v; }},
        {"optim.head_lr", [](auto& c, auto& k, auto& v) { c.head_lr = to_double(k, v); }},

        {"bam.samples", [](auto& c, auto& k, auto& v) { c.bam_samples = static_cast<int>(to_long(k, v)); }},
        {"bam.q", [](auto& c, auto& k, auto& v) { c.bam_q = to_double(k, v); }},
        {"bam.q_warmup_epochs", [](auto& c, auto& k, auto& v) { c.q_warmup_epochs = static_cast<int>(to_long(k, v)); }},
        {"bam.kl_schedule", [](auto& c, auto& k, auto& v) { (void)k; c.kl_schedule = v; }},
        {"bam.kl_ramp_epochs", [](auto& c, auto& k, auto& v) { c.kl_ramp_epochs = static_cast<int>(to_long(k, v)); }},
        {"bam.rho_init", [](auto& c, auto& k, auto& v) { c.rho_init = to_double(k, v); }},

        {"aggregate.mode", [](auto& c, auto& k, auto& v) { (void)k; c.aggregate_mode = v; }},
        {"aggregate.t_swa", [](auto& c, auto& k, auto& v) { c.t_swa = static_cast<int>(to_long(k, v)); }},
        {"aggregate.gamma_schedule", [](auto& c, auto& k, auto& v) { (void)k; c.gamma_schedule = v; }},
        {"aggregate.gamma_max", [](auto& c, auto& k, auto& v) { c.gamma_max = to_double(k, v); }},
        {"aggregate.gamma_warmup_epochs", [](auto& c, auto& k, auto& v) { c.gamma_warmup_epochs = static_cast<int>(to_long(k, v)); }},
        {"aggregate.gamma_cosine_start", [](auto& c, auto& k, auto& v) { c.gamma_cosine_start = to_double(k, v); }},
        {"aggregate.swa_update_every", [](auto& c, auto& k, auto& v) { (void)k; c.swa_update_every = v; }},

        {"paws.temperature", [](auto& c, auto& k, auto& v) { c.paws_temperature = to_double(k, v); }},
        {"paws.sharpen_t", [](auto& c, auto& k, auto& v) { c.paws_sharpen_t = to_double(k, v); }},
        {"paws.support_per_class", [](auto& c, auto& k, auto& v) { c.support_per_class = static_cast<int>(to_long(k, v)); }},
        {"paws.mu", [](auto& c, auto& k, auto& v) { c.paws_mu = to_double(k, v); }},

        {"augment.weak_sigma", [](auto& c, auto& k, auto& v) { c.weak_sigma = to_double(k, v); }},
        {"augment.strong_sigma", [](auto& c, auto& k, auto& v) { c.strong_sigma = to_double(k, v); }},
        {"augment.scale_range", [](auto& c, auto& k, auto& v) { c.scale_range = to_double(k, v); }},
        {"augment.dropout_p", [](auto& c, auto& k, auto& v) { c.dropout_p = to_double(k, v); }},

        {"bound.delta", [](auto& c, auto& k, auto& v) { c.bound_delta = to_double(k, v); }},
        {"bound.s2", [](auto& c, auto& k, auto& v) { c.bound_s2 = to_double(k, v); }},

        {"run.seed", [](auto& c, auto& k, auto& v) { c.seed = static_cast<std::uint64_t>(to_long(k, v)); }},
        {"run.out", [](auto& c, auto& k, auto& v) { (void)k; c.out_dir = v; }},
        {"run.eval_every", [](auto& c, auto& k, auto& v) { c.eval_every = static_cast<int>(to_long(k, v)); }},
        {"run.quiet", [](auto& c, auto& k, auto& v) { c.quiet = to_bool(k, v); }},
    };
    return table;
}

void set_key(ExperimentConfig& cfg, const std::string& key,
             const std::string& value) {
    const auto& table = setters();
    auto it = table.find(key);
    if (it == table.end()) throw ConfigError("unknown config key: " + key);
    it->second(cfg, key, value);
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text) {
    ExperimentConfig cfg;
    std::stringstream in(text);
    std::string line, section;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        line = trim(line);
        if (line.empty() || line[0] == '#' || line[0] == ';') continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError("malformed section header at line " +
                                  std::to_string(line_no));
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("expected key = value at line " +
                              std::to_string(line_no));
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (section.empty())
            throw ConfigError("key '" + key + "' appears before any section");
        set_key(cfg, section + "." + key, value);
    }
    return cfg;
}

ExperimentConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open config file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

void apply_override(ExperimentConfig& cfg, const std::string& key_value) {
    const std::size_t eq = key_value.find('=');
    if (eq == std::string::npos)
        throw ConfigError("override must look like section.key=value: " +
                          key_value);
    set_key(cfg, trim(key_value.substr(0, eq)), trim(key_value.substr(eq + 1)));
}

void ExperimentConfig::validate() const {
    const bool threshold_family =
        method == "PL" || method == "UDA" || method == "FM" ||
        method == "BAM-PL" || method == "BAM-UDA" || method == "BAM-FM";
    if (!threshold_family && !is_paws_family())
        throw ConfigError("unknown method: " + method);

    if (data_source != "blobs" && data_source != "moons" && data_source != "csv")
        throw ConfigError("unknown data source: " + data_source);
    if (data_source == "csv" && csv_path.empty())
        throw ConfigError("csv source needs data.csv_path");
    if (k < 2) throw ConfigError("data.k must be >= 2");
    if (per_class < 1) throw ConfigError("data.per_class must be positive");
    if (dim < 1) throw ConfigError("data.dim must be positive");
    if (labels_per_class <= 0 && label_fraction <= 0.0)
        throw ConfigError("either data.labels_per_class or data.label_fraction "
                          "must be set");
    if (test_fraction < 0.0 || test_fraction >= 1.0)
        throw ConfigError("data.test_fraction must lie in [0,1)");
    if (long_tail_alpha != 0.0 && long_tail_alpha < 1.0)
        throw ConfigError("data.long_tail_alpha must be 0 (off) or >= 1");

    if (hidden.empty()) throw ConfigError("model.hidden must not be empty");
    if (embed_dim < 1) throw ConfigError("model.embed_dim must be positive");

    if (lr <= 0.0) throw ConfigError("optim.lr must be positive");
    if (momentum < 0.0 || momentum >= 1.0)
        throw ConfigError("optim.momentum must lie in [0,1)");
    if (weight_decay < 0.0) throw ConfigError("optim.weight_decay must be >= 0");
    if (epochs < 0) throw ConfigError("optim.epochs must be >= 0");
    if (batch < 1) throw ConfigError("optim.batch must be positive");
    if (lr_schedule != "cosine" && lr_schedule != "constant")
        throw ConfigError("optim.lr_schedule must be cosine or constant");
    if (head_lr <= 0.0) throw ConfigError("optim.head_lr must be positive");

    if (bam_samples < 2) throw ConfigError("bam.samples must be >= 2");
    if (bam_q < 0.1 || bam_q > 1.0)
        throw ConfigError("bam.q must lie in [0.1, 1]");
    if (q_warmup_epochs < 1) throw ConfigError("bam.q_warmup_epochs must be >= 1");
    if (kl_schedule != "one_minus_cosine" && kl_schedule != "constant")
        throw ConfigError("bam.kl_schedule must be one_minus_cosine or constant");
    if (kl_ramp_epochs < 1) throw ConfigError("bam.kl_ramp_epochs must be >= 1");

    if (aggregate_mode != "off" && aggregate_mode != "swa" &&
        aggregate_mode != "ema")
        throw ConfigError("aggregate.mode must be off, swa or ema");
    if (aggregate_mode != "off" && !is_paws_family())
        throw ConfigError("weight aggregation is only supported for the PAWS "
                          "family");
    if (t_swa < 0) throw ConfigError("aggregate.t_swa must be >= 0");
    if (gamma_schedule != "linear_warmup" && gamma_schedule != "one_minus_cosine")
        throw ConfigError("aggregate.gamma_schedule must be linear_warmup or "
                          "one_minus_cosine");
    if (gamma_max < 0.0 || gamma_max > 1.0)
        throw ConfigError("aggregate.gamma_max must lie in [0,1]");
    if (gamma_warmup_epochs < 1)
        throw ConfigError("aggregate.gamma_warmup_epochs must be >= 1");
    if (gamma_cosine_start < 0.0 || gamma_cosine_start > 1.0)
        throw ConfigError("aggregate.gamma_cosine_start must lie in [0,1]");
    if (swa_update_every != "iteration" && swa_update_every != "epoch")
        throw ConfigError("aggregate.swa_update_every must be iteration or epoch");

    if (paws_temperature <= 0.0)
        throw ConfigError("paws.temperature must be positive");
    if (paws_sharpen_t <= 0.0 || paws_sharpen_t > 1.0)
        throw ConfigError("paws.sharpen_t must lie in (0,1]");
    if (support_per_class < 1)
        throw ConfigError("paws.support_per_class must be positive");
    if (paws_mu < 1.0) throw ConfigError("paws.mu must be >= 1");

    if (weak_sigma < 0.0 || strong_sigma < 0.0)
        throw ConfigError("augment sigmas must be >= 0");
    if (weak_sigma >= strong_sigma)
        throw ConfigError("augment.weak_sigma must be strictly smaller than "
                          "augment.strong_sigma");
    if (scale_range < 0.0 || scale_range >= 1.0)
        throw ConfigError("augment.scale_range must lie in [0,1)");
    if (dropout_p < 0.0 || dropout_p > 1.0)
        throw ConfigError("augment.dropout_p must lie in [0,1]");

    if (bound_delta <= 0.0 || bound_delta > 1.0)
        throw ConfigError("bound.delta must lie in (0,1]");
    if (bound_s2 < 0.0) throw ConfigError("bound.s2 must be >= 0");

    if (eval_every < 1) throw ConfigError("run.eval_every must be >= 1");
    if (out_dir.empty()) throw ConfigError("run.out must not be empty");

    if (method_tau >= 0.0 && method_tau > 1.0)
        throw ConfigError("method.tau must lie in [0,1]");
    if (method_t >= 0.0 && (method_t == 0.0 || method_t > 1.0))
        throw ConfigError("method.t must lie in (0,1]");
    if (method_mu >= 0.0 && method_mu < 1.0)
        throw ConfigError("method.mu must be >= 1");
}

}  // namespace sslcal
