#include "sslcal/harness.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "sslcal/errors.hpp"

namespace sslcal {

namespace {

void put_double(std::ostream& out, double v) {
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    out.write(buf, p - buf);
}

void check_finite(double v, const char* field, long step) {
    if (!std::isfinite(v))
        throw StateError(std::string("non-finite ") + field + " at step " +
                         std::to_string(step));
}

constexpr const char* kMetricsHeader =
    "step,epoch,labeled_loss,unlabeled_loss,kl_loss,accepted_fraction,"
    "purity_rate,mean_max_prob,threshold_value,test_accuracy,test_ece";

}  // namespace

MetricsWriter::MetricsWriter(const std::string& path) : out_(path) {
    if (!out_) throw InputError("cannot open metrics file for writing: " + path);
    out_ << "#schema=1\n" << kMetricsHeader << "\n";
}

void MetricsWriter::write(const MetricsRow& row) {
    check_finite(row.labeled_loss, "labeled_loss", row.step);
    check_finite(row.unlabeled_loss, "unlabeled_loss", row.step);
    check_finite(row.kl_loss, "kl_loss", row.step);
    check_finite(row.accepted_fraction, "accepted_fraction", row.step);
    if (row.purity_rate) check_finite(*row.purity_rate, "purity_rate", row.step);
    check_finite(row.mean_max_prob, "mean_max_prob", row.step);
    check_finite(row.threshold_value, "threshold_value", row.step);
    if (row.test_accuracy) check_finite(*row.test_accuracy, "test_accuracy", row.step);
    if (row.test_ece) check_finite(*row.test_ece, "test_ece", row.step);

    out_ << row.step << ',' << row.epoch << ',';
    put_double(out_, row.labeled_loss);
    out_.put(',');
    put_double(out_, row.unlabeled_loss);
    out_.put(',');
    put_double(out_, row.kl_loss);
    out_.put(',');
    put_double(out_, row.accepted_fraction);
    out_.put(',');
    if (row.purity_rate) put_double(out_, *row.purity_rate);
    out_.put(',');
    put_double(out_, row.mean_max_prob);
    out_.put(',');
    put_double(out_, row.threshold_value);
    out_.put(',');
    if (row.test_accuracy) put_double(out_, *row.test_accuracy);
    out_.put(',');
    if (row.test_ece) put_double(out_, *row.test_ece);
    out_.put('\n');
}

namespace {

std::optional<double> parse_optional(const std::string& s) {
    if (s.empty()) return std::nullopt;
    double v = 0.0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size())
        throw InputError("bad numeric field in metrics CSV: '" + s + "'");
    return v;
}

double parse_required(const std::string& s) {
    auto v = parse_optional(s);
    if (!v) throw InputError("missing required field in metrics CSV");
    return *v;
}

}  // namespace

std::vector<MetricsRow> read_metrics_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open metrics file: " + path);
    std::string line;
    if (!std::getline(in, line) || line.rfind("#schema=1", 0) != 0)
        throw InputError("metrics CSV is missing the #schema=1 header: " + path);
    if (!std::getline(in, line) || line != kMetricsHeader)
        throw InputError("metrics CSV has an unexpected column header: " + path);

    std::vector<MetricsRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
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
        if (fields.size() != 11)
            throw InputError("metrics CSV row has wrong field count");
        MetricsRow r;
        r.step = static_cast<long>(parse_required(fields[0]));
        r.epoch = static_cast<int>(parse_required(fields[1]));
        r.labeled_loss = parse_required(fields[2]);
        r.unlabeled_loss = parse_required(fields[3]);
        r.kl_loss = parse_required(fields[4]);
        r.accepted_fraction = parse_required(fields[5]);
        r.purity_rate = parse_optional(fields[6]);
        r.mean_max_prob = parse_required(fields[7]);
        r.threshold_value = parse_required(fields[8]);
        r.test_accuracy = parse_optional(fields[9]);
        r.test_ece = parse_optional(fields[10]);
        rows.push_back(r);
    }
    return rows;
}

ConvergenceReport report_from_metrics(const std::vector<MetricsRow>& rows) {
    std::vector<Checkpoint> checkpoints;
    for (const auto& r : rows)
        if (r.test_accuracy && r.test_ece)
            checkpoints.push_back({*r.test_accuracy, *r.test_ece});
    if (checkpoints.empty())
        throw InputError("metrics CSV contains no checkpoint rows");
    return convergence_report(checkpoints);
}

MethodPreset effective_preset(const ExperimentConfig& cfg) {
    MethodPreset p = find_preset(cfg.method);
    if (cfg.method_tau >= 0.0) p.tau = cfg.method_tau;
    if (cfg.method_t >= 0.0) {
        p.t = cfg.method_t;
        p.hard_labels = false;
    }
    if (cfg.method_mu >= 0.0) p.mu = cfg.method_mu;
    if (cfg.method_lambda >= 0.0) p.lambda_u = cfg.method_lambda;
    p.validate();
    return p;
}

// ---------------------------------------------------------------------------
// ThresholdTrainer

ThresholdTrainer::ThresholdTrainer(const ExperimentConfig& cfg,
                                   std::size_t input_dim,
                                   std::size_t num_classes,
                                   std::size_t dataset_total, Rng& init_rng)
    : cfg_(cfg),
      preset_(effective_preset(cfg)),
      net_(cfg.is_bam()
               ? Network::encoder(input_dim, cfg.hidden, Activation::relu,
                                  init_rng)
               : Network::mlp(input_dim, cfg.hidden, num_classes,
                              Activation::relu, init_rng)),
      sgd_(cfg.momentum, cfg.weight_decay),
      adam_(),
      kl_kind_(cfg.kl_schedule == "constant" ? KlSchedule::constant
                                             : KlSchedule::one_minus_cosine),
      dataset_total_(dataset_total),
      num_classes_(num_classes) {
    if (preset_.bayes) {
        head_ = VariationalLinear::init(cfg.hidden.back(), num_classes, init_rng,
                                        cfg.rho_init);
        selection_.q_schedule = {0.1, cfg.bam_q, cfg.q_warmup_epochs};
    }
}

double ThresholdTrainer::backbone_lr(const StepContext& ctx) const {
    if (cfg_.lr_schedule == "constant") return cfg_.lr;
    return cosine_lr(static_cast<std::size_t>(ctx.step - 1),
                     static_cast<std::size_t>(ctx.total_steps), cfg_.lr);
}

double ThresholdTrainer::head_lr(const StepContext& ctx) const {
    if (cfg_.lr_schedule == "constant") return cfg_.head_lr;
    return cosine_lr(static_cast<std::size_t>(ctx.step - 1),
                     static_cast<std::size_t>(ctx.total_steps), cfg_.head_lr);
}

ThresholdStepOutput ThresholdTrainer::step(
    const Matrix& x_labeled, const std::vector<int>& y_labeled,
    const Matrix& x_unlabeled, const std::vector<int>& y_unlabeled_hidden,
    const StepContext& ctx, Rng& aug_rng, Rng& bnn_rng) {
    if (x_labeled.rows == 0) throw InputError("threshold step: empty labeled batch");
    if (x_unlabeled.rows == 0)
        throw InputError("threshold step: empty unlabeled batch");

    const AugmentPolicy weak = AugmentPolicy::weak(cfg_.weak_sigma);
    const AugmentPolicy second_leg =
        preset_.augmentation == AugmentMode::asymmetric
            ? AugmentPolicy::strong(cfg_.strong_sigma, cfg_.scale_range,
                                    cfg_.dropout_p)
            : weak;
    const Matrix xl = augment(x_labeled, weak, aug_rng);
    const Matrix xw = augment(x_unlabeled, weak, aug_rng);
    const Matrix xs = augment(x_unlabeled, second_leg, aug_rng);

    ThresholdStepOutput out;
    double labeled_loss = 0.0, unl_loss = 0.0, kl_loss = 0.0, threshold = 0.0;

    net_.zero_grads();
    if (head_) {
        head_->zero_grads();

        // pseudo-labels from the M-sample posterior predictive, stop-gradient
        const Matrix z_w = stop_gradient(forward(net_, xw).output());
        const PosteriorPredictive pp =
            bayes_predict(*head_, z_w, cfg_.bam_samples, bnn_rng);
        out.pseudo = pp.mean;
        const double q_eff =
            q_warmup(ctx.epoch, cfg_.bam_q, cfg_.q_warmup_epochs);
        const VarianceSelection sel = select_by_variance(pp, selection_, q_eff);
        out.mask = sel.mask;
        threshold = sel.threshold;
        const Matrix targets = sharpen(out.pseudo, preset_);

        const ForwardTrace tl = forward(net_, xl);
        const WeightSample s_lab = sample_weights(*head_, bnn_rng);
        const Matrix logits_l = bayes_forward(s_lab, tl.output());
        const CeResult ce_l =
            softmax_cross_entropy(logits_l, Targets::hard(y_labeled));
        labeled_loss = ce_l.loss;

        const ForwardTrace ts = forward(net_, xs);
        const WeightSample s_str = sample_weights(*head_, bnn_rng);
        const Matrix logits_s = bayes_forward(s_str, ts.output());
        MaskedCeResult ce_u =
            masked_softmax_cross_entropy(logits_s, targets, out.mask);
        unl_loss = ce_u.loss;

        const double kcoef =
            kl_coefficient(ctx.epoch, cfg_.kl_ramp_epochs, kl_kind_);
        kl_loss = elbo_terms(*head_, 0.0, kcoef, dataset_total_).kl_term;

        const Matrix dv_l = bayes_backward(*head_, s_lab, tl.output(), ce_l.dlogits);
        backward(net_, tl, dv_l);
        for (double& g : ce_u.dlogits.data) g *= preset_.lambda_u;
        const Matrix dv_s = bayes_backward(*head_, s_str, ts.output(), ce_u.dlogits);
        backward(net_, ts, dv_s);
        kl_backward(*head_, kcoef / static_cast<double>(dataset_total_));

        auto backbone = net_.parameters();
        sgd_.step(backbone, backbone_lr(ctx));
        auto head_params = head_->parameters();
        adam_.step(head_params, head_lr(ctx));
    } else {
        const Matrix q_w = stop_gradient(softmax(forward(net_, xw).output()));
        out.pseudo = q_w;
        out.mask = select_by_confidence(q_w, preset_.tau);
        threshold = preset_.tau;
        const Matrix targets = sharpen(q_w, preset_);

        const ForwardTrace tl = forward(net_, xl);
        const CeResult ce_l =
            softmax_cross_entropy(tl.output(), Targets::hard(y_labeled));
        labeled_loss = ce_l.loss;

        const ForwardTrace ts = forward(net_, xs);
        MaskedCeResult ce_u =
            masked_softmax_cross_entropy(ts.output(), targets, out.mask);
        unl_loss = ce_u.loss;

        backward(net_, tl, ce_l.dlogits);
        for (double& g : ce_u.dlogits.data) g *= preset_.lambda_u;
        backward(net_, ts, ce_u.dlogits);

        auto params = net_.parameters();
        sgd_.step(params, backbone_lr(ctx));
    }

    std::size_t accepted = 0;
    for (char m : out.mask) accepted += m ? 1 : 0;

    out.row.step = ctx.step;
    out.row.epoch = ctx.epoch;
    out.row.labeled_loss = labeled_loss;
    out.row.unlabeled_loss = preset_.lambda_u * unl_loss;  // term as optimized
    out.row.kl_loss = kl_loss;
    out.row.accepted_fraction =
        static_cast<double>(accepted) / static_cast<double>(out.mask.size());
    if (!y_unlabeled_hidden.empty())
        out.row.purity_rate = purity_rate(out.mask, out.pseudo, y_unlabeled_hidden);
    out.row.mean_max_prob = mean_max_prob(out.pseudo);
    out.row.threshold_value = threshold;
    return out;
}

Matrix ThresholdTrainer::predict(const Matrix& x, Rng& eval_rng) {
    if (head_) {
        const Matrix v = forward(net_, x).output();
        return bayes_predict(*head_, v, cfg_.bam_samples, eval_rng).mean;
    }
    return softmax(forward(net_, x).output());
}

EvalResult ThresholdTrainer::evaluate(const LabeledSet& test, Rng& eval_rng) {
    const ReliabilityReport rep = reliability(test, eval_rng);
    return {rep.accuracy, rep.ece};
}

ReliabilityReport ThresholdTrainer::reliability(const LabeledSet& test,
                                                Rng& eval_rng) {
    return ece(predict(test.x, eval_rng), test.y);
}

// ---------------------------------------------------------------------------
// PawsTrainer

namespace {

AggregateMode parse_mode(const std::string& mode) {
    if (mode == "off") return AggregateMode::off;
    if (mode == "swa") return AggregateMode::swa;
    if (mode == "ema") return AggregateMode::ema;
    throw ConfigError("unknown aggregate mode: " + mode);
}

Network build_paws_net(const ExperimentConfig& cfg, std::size_t input_dim,
                       Rng& init_rng) {
    if (cfg.method == "BAM-PAWS")
        return Network::encoder(input_dim, cfg.hidden, Activation::relu, init_rng);
    Network net = Network::mlp(input_dim, cfg.hidden,
                               static_cast<std::size_t>(cfg.embed_dim),
                               Activation::relu, init_rng);
    // the whole encoder (projection layer included) is theta_f for PAWS
    net.head_start = net.layers.size();
    return net;
}

}  // namespace

PawsTrainer::PawsTrainer(const ExperimentConfig& cfg, std::size_t input_dim,
                         std::size_t num_classes, std::size_t dataset_total,
                         Rng& init_rng)
    : cfg_(cfg),
      net_(build_paws_net(cfg, input_dim, init_rng)),
      aggregate_(WeightAggregate::make(net_, parse_mode(cfg.aggregate_mode),
                                       cfg.t_swa)),
      sgd_(cfg.momentum, cfg.weight_decay),
      sgd_head_(cfg.momentum, 0.0),
      kl_kind_(cfg.kl_schedule == "constant" ? KlSchedule::constant
                                             : KlSchedule::one_minus_cosine),
      dataset_total_(dataset_total),
      num_classes_(num_classes),
      update_per_iteration_(cfg.swa_update_every == "iteration") {
    if (cfg.method == "BAM-PAWS")
        head_ = VariationalLinear::init(cfg.hidden.back(),
                                        static_cast<std::size_t>(cfg.embed_dim),
                                        init_rng, cfg.rho_init);
}

double PawsTrainer::backbone_lr(const StepContext& ctx) const {
    if (cfg_.lr_schedule == "constant") return cfg_.lr;
    return cosine_lr(static_cast<std::size_t>(ctx.step - 1),
                     static_cast<std::size_t>(ctx.total_steps), cfg_.lr);
}

Matrix PawsTrainer::target_embed(const Matrix& x, Rng& rng) {
    const Matrix v = forward(aggregate_.net, x).output();
    if (!head_) return v;
    return bam_paws_embed(*head_, v, cfg_.bam_samples, rng);
}

MetricsRow PawsTrainer::step(const Matrix& support_x,
                             const std::vector<int>& support_y,
                             const Matrix& x_unlabeled,
                             const std::vector<int>& y_unlabeled_hidden,
                             const StepContext& ctx, Rng& aug_rng, Rng& bnn_rng) {
    if (support_x.rows == 0) throw InputError("paws step: empty support set");
    if (x_unlabeled.rows == 0) throw InputError("paws step: empty unlabeled batch");

    const AugmentPolicy weak = AugmentPolicy::weak(cfg_.weak_sigma);
    const Matrix x1 = augment(x_unlabeled, weak, aug_rng);
    const Matrix x2 = augment(x_unlabeled, weak, aug_rng);
    const Matrix xs = augment(support_x, weak, aug_rng);

    const Matrix sup_labels = one_hot_rows(support_y, num_classes_);
    const double t = cfg_.paws_sharpen_t;
    const std::size_t n = x_unlabeled.rows;
    const std::size_t k = num_classes_;

    net_.zero_grads();
    if (head_) head_->zero_grads();

    // trainable branch
    const ForwardTrace tr1 = forward(net_, x1);
    const ForwardTrace tr2 = forward(net_, x2);
    const ForwardTrace trs = forward(net_, xs);
    Matrix z1, z2, zs;
    BamEmbedTrace bt1, bt2, bts;
    if (head_) {
        std::tie(z1, bt1) =
            bam_paws_embed_traced(*head_, tr1.output(), cfg_.bam_samples, bnn_rng);
        std::tie(z2, bt2) =
            bam_paws_embed_traced(*head_, tr2.output(), cfg_.bam_samples, bnn_rng);
        std::tie(zs, bts) =
            bam_paws_embed_traced(*head_, trs.output(), cfg_.bam_samples, bnn_rng);
    } else {
        z1 = tr1.output();
        z2 = tr2.output();
        zs = trs.output();
    }
    const SupportSet sup{zs, sup_labels, cfg_.paws_temperature};
    auto [p1, st1] = snn_classify_traced(z1, sup);
    auto [p2, st2] = snn_classify_traced(z2, sup);

    // target branch through the aggregate weights, stop-gradient
    const Matrix g1 = target_embed(x1, bnn_rng);
    const Matrix g2 = target_embed(x2, bnn_rng);
    const Matrix gs = target_embed(xs, bnn_rng);
    const SupportSet gsup{gs, sup_labels, cfg_.paws_temperature};
    const Matrix q1 = snn_classify(g1, gsup);
    const Matrix q2 = snn_classify(g2, gsup);

    const double loss_u = paws_loss(p1, p2, q1, q2, t);

    // me-max over the sharpened anchor predictions (the gradient-carrying
    // branch; the aggregate targets are constants here)
    const Matrix rho1 = sharpen(p1, t);
    const Matrix rho2 = sharpen(p2, t);
    std::vector<double> q_bar(k, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < k; ++c)
            q_bar[c] += rho1(i, c) + rho2(i, c);
    const double inv2n = 1.0 / (2.0 * static_cast<double>(n));
    for (double& v : q_bar) v *= inv2n;
    const double memax = me_max(q_bar);
    (void)memax;

    double kl_loss = 0.0, kcoef = 0.0;
    if (head_) {
        kcoef = kl_coefficient(ctx.epoch, cfg_.kl_ramp_epochs, kl_kind_);
        kl_loss = elbo_terms(*head_, 0.0, kcoef, dataset_total_).kl_term;
    }

    // reverse pass: consistency terms...
    const Matrix st_q1 = sharpen(q1, t);
    const Matrix st_q2 = sharpen(q2, t);
    Matrix dp1(n, k), dp2(n, k);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < k; ++c) {
            dp1(i, c) = -st_q2(i, c) / std::max(p1(i, c), 1e-300) * inv2n;
            dp2(i, c) = -st_q1(i, c) / std::max(p2(i, c), 1e-300) * inv2n;
        }
    // ...plus the me-max path through the sharpening
    const std::vector<double> dq_bar = me_max_backward(q_bar);
    Matrix drho(n, k);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < k; ++c) drho(i, c) = dq_bar[c] * inv2n;
    const Matrix dp1_memax = sharpen_backward(p1, t, drho);
    const Matrix dp2_memax = sharpen_backward(p2, t, drho);
    for (std::size_t i = 0; i < dp1.data.size(); ++i) {
        dp1.data[i] += dp1_memax.data[i];
        dp2.data[i] += dp2_memax.data[i];
    }

    const SnnGradients sg1 = snn_backward(st1, sup_labels, dp1);
    const SnnGradients sg2 = snn_backward(st2, sup_labels, dp2);
    Matrix dzs = sg1.dsupport;
    for (std::size_t i = 0; i < dzs.data.size(); ++i)
        dzs.data[i] += sg2.dsupport.data[i];

    if (head_) {
        const Matrix dv1 = bam_paws_embed_backward(*head_, bt1, sg1.dqueries);
        const Matrix dv2 = bam_paws_embed_backward(*head_, bt2, sg2.dqueries);
        const Matrix dvs = bam_paws_embed_backward(*head_, bts, dzs);
        backward(net_, tr1, dv1);
        backward(net_, tr2, dv2);
        backward(net_, trs, dvs);
        kl_backward(*head_, kcoef / static_cast<double>(dataset_total_));
    } else {
        backward(net_, tr1, sg1.dqueries);
        backward(net_, tr2, sg2.dqueries);
        backward(net_, trs, dzs);
    }

    const double lr = backbone_lr(ctx);
    auto params = net_.parameters();
    sgd_.step(params, lr);
    if (head_) {
        auto head_params = head_->parameters();
        sgd_head_.step(head_params, lr);
    }

    if (update_per_iteration_) update_aggregate(ctx.epoch);

    MetricsRow row;
    row.step = ctx.step;
    row.epoch = ctx.epoch;
    row.labeled_loss = 0.0;
    row.unlabeled_loss = loss_u;
    row.kl_loss = kl_loss;
    row.accepted_fraction = 1.0;  // PAWS pseudo-labels are non-selective
    Matrix q_mean(n, k);
    for (std::size_t i = 0; i < q_mean.data.size(); ++i)
        q_mean.data[i] = 0.5 * (q1.data[i] + q2.data[i]);
    if (!y_unlabeled_hidden.empty()) {
        const std::vector<char> all(n, 1);
        row.purity_rate = purity_rate(all, q_mean, y_unlabeled_hidden);
    }
    row.mean_max_prob = 0.5 * (mean_max_prob(q1) + mean_max_prob(q2));
    row.threshold_value = 0.0;
    return row;
}

void PawsTrainer::update_aggregate(int epoch) {
    switch (aggregate_.mode) {
        case AggregateMode::off:
            copy_update(aggregate_, net_);
            break;
        case AggregateMode::swa:
            swa_update(aggregate_, net_, epoch);
            break;
        case AggregateMode::ema: {
            const double gamma = gamma_schedule(
                epoch, cfg_.epochs,
                cfg_.gamma_schedule == "one_minus_cosine"
                    ? GammaSchedule::one_minus_cosine
                    : GammaSchedule::linear_warmup,
                cfg_.gamma_max, cfg_.gamma_warmup_epochs, cfg_.gamma_cosine_start);
            ema_update(aggregate_, net_, gamma);
            break;
        }
    }
}

Matrix PawsTrainer::predict(const Matrix& x, const LabeledSet& support,
                            Rng& eval_rng) {
    const Matrix zt = target_embed(x, eval_rng);
    const Matrix zs = target_embed(support.x, eval_rng);
    const SupportSet sup{zs, one_hot_rows(support.y, num_classes_),
                         cfg_.paws_temperature};
    return snn_classify(zt, sup);
}

EvalResult PawsTrainer::evaluate(const LabeledSet& test, const LabeledSet& support,
                                 Rng& eval_rng) {
    const ReliabilityReport rep = reliability(test, support, eval_rng);
    return {rep.accuracy, rep.ece};
}

ReliabilityReport PawsTrainer::reliability(const LabeledSet& test,
                                           const LabeledSet& support,
                                           Rng& eval_rng) {
    return ece(predict(test.x, support, eval_rng), test.y);
}

// ---------------------------------------------------------------------------
// run_experiment

DatasetSplit build_dataset(const ExperimentConfig& cfg) {
    Dataset ds;
    const std::uint64_t data_seed = derive_seed(cfg.seed, "dataset");
    if (cfg.data_source == "blobs") {
        ds = make_blobs(cfg.k, cfg.per_class, cfg.dim, cfg.separation, data_seed);
    } else if (cfg.data_source == "moons") {
        ds = make_moons(cfg.moons_n, cfg.moons_noise, data_seed);
    } else {
        ds = load_csv(cfg.csv_path, cfg.csv_label_column, cfg.csv_normalize);
    }

    const std::uint64_t split_seed = derive_seed(cfg.seed, "split");
    if (cfg.long_tail_alpha >= 1.0) {
        const auto counts =
            long_tail_counts(ds.k, cfg.long_tail_nmax, cfg.long_tail_alpha);
        LongTailRule rule;
        rule.label_fraction =
            cfg.label_fraction > 0.0 ? cfg.label_fraction : 0.1;
        rule.min_labels = 1;
        rule.test_per_class = cfg.long_tail_test_per_class;
        return curate_long_tail(ds, counts, rule, split_seed);
    }
    SplitRule rule;
    rule.labels_per_class = cfg.labels_per_class;
    rule.label_fraction = cfg.label_fraction;
    return split_ssl(ds, rule, cfg.test_fraction, split_seed);
}

namespace {

// Monte-Carlo estimate of the PAC-Bayes bound inputs for a BAM threshold run.
BoundReport estimate_bound(ThresholdTrainer& trainer, const DatasetSplit& split,
                           const ExperimentConfig& cfg, Rng& rng) {
    VariationalLinear& head = *trainer.head();
    const Matrix v_lab = forward(trainer.network(), split.labeled.x).output();
    const Matrix v_unl = forward(trainer.network(), split.unlabeled.x).output();

    // pseudo-labels assigned by the posterior mean
    const PosteriorPredictive pp =
        bayes_predict(head, v_unl, cfg.bam_samples, rng);
    std::vector<int> pseudo(v_unl.rows);
    for (std::size_t i = 0; i < v_unl.rows; ++i)
        pseudo[i] = static_cast<int>(argmax(pp.mean.row(i)));

    const std::size_t n_l = split.labeled.size();
    const std::size_t n_u = split.unlabeled.size();
    const std::size_t n = n_l + n_u;

    double data_nll = 0.0;      // E_q over samples of the summed NLL
    double log_ratio = 0.0;     // E_q[(1/N_u) sum log p(yhat|x)/p(y|x)]
    const int m = cfg.bam_samples;
    for (int s = 0; s < m; ++s) {
        const WeightSample ws = sample_weights(head, rng);
        const Matrix pl = softmax(bayes_forward(ws, v_lab));
        const Matrix pu = softmax(bayes_forward(ws, v_unl));
        double nll = 0.0;
        for (std::size_t i = 0; i < n_l; ++i)
            nll -= std::log(std::max(pl(i, split.labeled.y[i]), 1e-300));
        double ratio = 0.0;
        for (std::size_t i = 0; i < n_u; ++i) {
            const double p_hat = std::max(pu(i, pseudo[i]), 1e-300);
            const double p_true = std::max(pu(i, split.unlabeled.y[i]), 1e-300);
            nll -= std::log(p_hat);
            ratio += std::log(p_hat) - std::log(p_true);
        }
        data_nll += nll;
        if (n_u > 0) log_ratio += ratio / static_cast<double>(n_u);
    }
    data_nll /= static_cast<double>(m);
    log_ratio /= static_cast<double>(m);

    const double neg_elbo = data_nll + kl_to_prior(head);
    return pac_bayes_bound(neg_elbo, log_ratio, n, n_u, cfg.bound_delta,
                           cfg.bound_s2);
}

nlohmann::ordered_json summary_to_json(const RunSummary& s) {
    nlohmann::ordered_json j;
    j["method"] = s.method;
    j["seed"] = s.seed;
    j["epochs"] = s.epochs;
    j["num_checkpoints"] = s.num_checkpoints;
    j["reported_accuracy"] = s.convergence.accuracy;
    j["reported_ece"] = s.convergence.ece;
    j["checkpoint_index"] = s.convergence.checkpoint_index;
    j["final_accuracy"] = s.final_accuracy;
    j["final_ece"] = s.final_ece;
    j["metrics_csv"] = s.metrics_path;
    if (s.bound) {
        nlohmann::ordered_json b;
        b["negative_elbo_term"] = s.bound->negative_elbo_term;
        b["divergence_term"] = s.bound->divergence_term;
        b["confidence_term"] = s.bound->confidence_term;
        b["slack_term"] = s.bound->slack_term;
        b["total"] = s.bound->total;
        b["delta"] = s.bound->delta;
        b["s2"] = s.bound->s2;
        b["n"] = s.bound->n;
        b["n_u"] = s.bound->n_u;
        j["pac_bayes_bound"] = b;
    }
    return j;
}

}  // namespace

RunSummary run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    const DatasetSplit split = build_dataset(cfg);
    if (split.labeled.size() == 0) throw ConfigError("run: no labeled data");
    if (split.test.size() == 0) throw ConfigError("run: no test data");

    namespace fs = std::filesystem;
    fs::create_directories(cfg.out_dir);
    const std::string metrics_path =
        (fs::path(cfg.out_dir) / "metrics.csv").string();
    const std::string report_path =
        (fs::path(cfg.out_dir) / "report.json").string();
    const std::string reliability_path =
        (fs::path(cfg.out_dir) / "reliability.csv").string();

    Rng init_rng(derive_seed(cfg.seed, "init"));
    Rng aug_rng(derive_seed(cfg.seed, "augment"));
    Rng bnn_rng(derive_seed(cfg.seed, "bnn"));
    Rng batch_rng(derive_seed(cfg.seed, "batch"));
    const std::uint64_t eval_base = derive_seed(cfg.seed, "eval");
    auto eval_rng_for = [&](int checkpoint) {
        return Rng(eval_base ^
                   (0x9e3779b97f4a7c15ull * static_cast<std::uint64_t>(
                                                checkpoint + 1)));
    };

    const std::size_t input_dim = split.labeled.x.cols;
    const std::size_t k = static_cast<std::size_t>(split.k);
    const std::size_t n_total = split.labeled.size() + split.unlabeled.size();

    const bool paws = cfg.is_paws_family();
    std::optional<ThresholdTrainer> threshold_trainer;
    std::optional<PawsTrainer> paws_trainer;
    double mu;
    if (paws) {
        paws_trainer.emplace(cfg, input_dim, k, n_total, init_rng);
        mu = cfg.paws_mu;
    } else {
        threshold_trainer.emplace(cfg, input_dim, k, n_total, init_rng);
        mu = threshold_trainer->preset().mu;
    }

    const std::size_t n_u = split.unlabeled.size();
    const std::size_t unlabeled_batch = std::min<std::size_t>(
        n_u, std::max<std::size_t>(
                 1, static_cast<std::size_t>(std::llround(
                        mu * static_cast<double>(cfg.batch)))));
    const long steps_per_epoch =
        n_u == 0 ? 0
                 : static_cast<long>((n_u + unlabeled_batch - 1) / unlabeled_batch);
    const long total_steps = std::max<long>(1, cfg.epochs * steps_per_epoch);

    MetricsWriter writer(metrics_path);
    std::vector<Checkpoint> checkpoints;

    auto run_eval = [&](long step, int epoch) {
        Rng eval_rng = eval_rng_for(static_cast<int>(checkpoints.size()));
        EvalResult ev = paws ? paws_trainer->evaluate(split.test, split.labeled,
                                                      eval_rng)
                             : threshold_trainer->evaluate(split.test, eval_rng);
        MetricsRow row;
        row.step = step;
        row.epoch = epoch;
        row.test_accuracy = ev.accuracy;
        row.test_ece = ev.ece;
        writer.write(row);
        checkpoints.push_back({ev.accuracy, ev.ece});
    };

    // labeled-class index for class-balanced support sampling
    std::vector<std::vector<std::size_t>> labeled_by_class(k);
    for (std::size_t i = 0; i < split.labeled.size(); ++i)
        labeled_by_class[static_cast<std::size_t>(split.labeled.y[i])].push_back(i);
    if (paws)
        for (std::size_t c = 0; c < k; ++c)
            if (labeled_by_class[c].empty())
                throw ConfigError("PAWS needs at least one label per class");

    auto gather = [](const LabeledSet& set, const std::vector<std::size_t>& idx) {
        LabeledSet out;
        out.x = Matrix(idx.size(), set.x.cols);
        out.y.reserve(idx.size());
        for (std::size_t r = 0; r < idx.size(); ++r) {
            std::copy(set.x.row(idx[r]).begin(), set.x.row(idx[r]).end(),
                      out.x.row(r).begin());
            out.y.push_back(set.y[idx[r]]);
        }
        return out;
    };

    run_eval(0, 0);  // initial evaluation before any training

    long global_step = 0;
    std::vector<std::size_t> order(n_u);
    for (std::size_t i = 0; i < n_u; ++i) order[i] = i;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        batch_rng.shuffle(order);
        for (std::size_t off = 0; off < n_u; off += unlabeled_batch) {
            const std::size_t take = std::min(unlabeled_batch, n_u - off);
            std::vector<std::size_t> chunk(order.begin() + off,
                                           order.begin() + off + take);
            const LabeledSet ub = gather(split.unlabeled, chunk);
            ++global_step;
            const StepContext ctx{global_step, epoch, total_steps};

            MetricsRow row;
            if (paws) {
                std::vector<std::size_t> sup_idx;
                sup_idx.reserve(k * static_cast<std::size_t>(cfg.support_per_class));
                for (std::size_t c = 0; c < k; ++c)
                    for (int s = 0; s < cfg.support_per_class; ++s)
                        sup_idx.push_back(labeled_by_class[c][batch_rng.index(
                            labeled_by_class[c].size())]);
                const LabeledSet sup = gather(split.labeled, sup_idx);
                row = paws_trainer->step(sup.x, sup.y, ub.x, ub.y, ctx, aug_rng,
                                         bnn_rng);
            } else {
                std::vector<std::size_t> lab_idx(
                    static_cast<std::size_t>(cfg.batch));
                for (auto& idx : lab_idx)
                    idx = batch_rng.index(split.labeled.size());
                const LabeledSet lb = gather(split.labeled, lab_idx);
                row = threshold_trainer
                          ->step(lb.x, lb.y, ub.x, ub.y, ctx, aug_rng, bnn_rng)
                          .row;
            }
            writer.write(row);
        }
        if (paws && cfg.swa_update_every == "epoch")
            paws_trainer->update_aggregate(epoch);
        if ((epoch + 1) % cfg.eval_every == 0 || epoch + 1 == cfg.epochs)
            run_eval(global_step, epoch);
    }
    writer.flush();

    RunSummary summary;
    summary.method = cfg.method;
    summary.seed = cfg.seed;
    summary.epochs = cfg.epochs;
    summary.num_checkpoints = checkpoints.size();
    summary.convergence = convergence_report(checkpoints);
    summary.final_accuracy = checkpoints.back().accuracy;
    summary.final_ece = checkpoints.back().ece;
    summary.metrics_path = metrics_path;
    summary.report_path = report_path;

    {
        Rng eval_rng = eval_rng_for(static_cast<int>(checkpoints.size()));
        std::ofstream rel(reliability_path);
        const ReliabilityReport rep =
            paws ? paws_trainer->reliability(split.test, split.labeled, eval_rng)
                 : threshold_trainer->reliability(split.test, eval_rng);
        write_reliability_csv(rep, rel);
    }
    if (!paws && threshold_trainer->head() != nullptr) {
        Rng bound_rng(derive_seed(cfg.seed, "bound"));
        summary.bound =
            estimate_bound(*threshold_trainer, split, cfg, bound_rng);
    }

    std::ofstream rep(report_path);
    if (!rep) throw InputError("cannot write report: " + report_path);
    rep << summary_to_json(summary).dump(2) << "\n";
    rep.close();

    if (!cfg.quiet) {
        std::cout << cfg.method << " seed=" << cfg.seed
                  << " reported_accuracy=" << summary.convergence.accuracy
                  << " reported_ece=" << summary.convergence.ece
                  << " checkpoint_index=" << summary.convergence.checkpoint_index
                  << "\n";
    }
    return summary;
}

}  // namespace sslcal
