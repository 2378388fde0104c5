// Copyright 2026 The MutualSL Authors
// SPDX-License-Identifier: Apache-2.0

#include "mutualsl/engine.hpp"

#include <chrono>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "json.hpp"
#include "mutualsl/config.hpp"
#include "mutualsl/errors.hpp"

namespace mutualsl {

using nlohmann::json;

std::vector<std::string> validate_train_config(const TrainConfig& c) {
    std::vector<std::string> v;
    if (!(c.learning_rate > 0.0)) v.push_back("learning_rate must be > 0");
    if (c.batch_size < 1) v.push_back("batch_size must be >= 1");
    if (c.epochs < 1) v.push_back("epochs must be >= 1");
    if (!(c.weight_decay >= 0.0)) v.push_back("weight_decay must be >= 0");
    if (c.d < 1 || c.d_in < 1 || c.vocab_size < 1) v.push_back("d, d_in and vocab_size must be positive");
    if (c.conv_kernel < 1 || c.conv_kernel % 2 == 0) v.push_back("conv_kernel must be a positive odd number");
    if (c.max_len && *c.max_len < 0) v.push_back("max_len must be >= 0");
    return v;
}

AdamW::AdamW(std::size_t size, double lr, double weight_decay)
    : lr_(lr), wd_(weight_decay), m_(size, 0.0), v_(size, 0.0) {}

void AdamW::step(std::span<double> params, std::span<const double> grad) {
    ++t_;
    const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grad[i];
        m_[i] = b1_ * m_[i] + (1.0 - b1_) * g;
        v_[i] = b2_ * v_[i] + (1.0 - b2_) * g * g;
        params[i] *= 1.0 - lr_ * wd_;
        params[i] -= lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_);
    }
}

std::string to_string(Predictor p) { return p == Predictor::textual ? "TP" : "VP"; }

namespace {

void require_valid(const TrainConfig& cfg) {
    const auto v = validate_train_config(cfg);
    if (v.empty()) return;
    std::string msg = "invalid training config: ";
    for (std::size_t i = 0; i < v.size(); ++i) msg += (i ? "; " : "") + v[i];
    throw ValidationError(msg);
}

void check_manifest(const ModelParams& p, const TrainConfig& cfg) {
    const Manifest want = cfg.manifest();
    if (p.manifest.d != want.d || p.manifest.d_in != want.d_in || p.manifest.vocab_size != want.vocab_size ||
        p.manifest.conv_kernel != want.conv_kernel)
        throw ManifestMismatch("manifest mismatch: parameters do not match the configured architecture");
}

bool all_finite(std::span<const double> xs) {
    return std::all_of(xs.begin(), xs.end(), [](double x) { return std::isfinite(x); });
}

Exec exec_of(const TrainConfig& cfg) { return cfg.parallel ? Exec::parallel : Exec::serial; }

MetricsReport evaluate_prepared(const ModelParams& p, std::span<const PreparedSample> data, const TrainConfig& cfg,
                                Predictor which) {
    const auto preds = predict_spans(p, data, which, cfg.max_len, exec_of(cfg));
    std::vector<FrameSpan> truths;
    truths.reserve(data.size());
    for (const auto& ps : data) truths.push_back(ps.sample->answer_frames);
    return compute_metrics(preds, truths);
}

}  // namespace

MetricsReport evaluate(const ModelParams& p, const std::vector<Sample>& corpus, const TrainConfig& cfg,
                       Predictor which) {
    check_manifest(p, cfg);
    if (corpus.empty()) throw Error("evaluate: corpus is empty");
    const auto data = prepare_all(corpus);
    return evaluate_prepared(p, data, cfg, which);
}

TrainResult train(const std::vector<Sample>& train_set, const std::vector<Sample>& val_set, const TrainConfig& cfg) {
    require_valid(cfg);
    if (train_set.empty() || val_set.empty()) throw Error("train: training and validation corpora must be nonempty");
    const auto t0 = std::chrono::steady_clock::now();
    const auto train_data = prepare_all(train_set);
    const auto val_data = prepare_all(val_set);

    TrainResult out{{}, init_params(cfg.manifest()), {}};
    ModelParams params = out.best;
    AdamW opt(params.values.values().size(), cfg.learning_rate, cfg.weight_decay);
    const MutualMode mode = cfg.mkt_enabled ? MutualMode::odl : MutualMode::off;

    std::vector<std::size_t> order(train_data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 shuffler(cfg.seed ^ 0x6a09e667f3bcc909ULL);

    auto& report = out.report;
    report.config = cfg;
    report.best_val_miou = -1.0;
    long step = 0;
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffler);
        std::vector<LossBundle> losses;
        losses.reserve(order.size());
        double alpha_sum = 0.0, beta_sum = 0.0;
        long transfer_count = 0;
        for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t e = std::min(order.size(), b + static_cast<std::size_t>(cfg.batch_size));
            const std::span<const std::size_t> idx(order.data() + b, e - b);
            auto bg = batch_gradient(params, train_data, idx, mode, cfg.max_len, exec_of(cfg));
            ++step;
            for (const auto& l : bg.losses)
                if (!std::isfinite(l.total)) throw DivergenceError(epoch, step, "loss is not finite");
            if (!all_finite(bg.grad.values())) throw DivergenceError(epoch, step, "gradient is not finite");
            opt.step(params.values.values(), bg.grad.values());
            losses.insert(losses.end(), bg.losses.begin(), bg.losses.end());
            for (const auto& t : bg.transfers)
                if (t.has_pseudo()) {
                    alpha_sum += t.alpha;
                    beta_sum += t.beta;
                    ++transfer_count;
                }
        }
        EpochRecord rec;
        rec.epoch = epoch;
        rec.losses = mean_bundle(losses);
        if (cfg.mkt_enabled) {
            rec.mean_alpha = transfer_count ? alpha_sum / static_cast<double>(transfer_count) : 0.0;
            rec.mean_beta = transfer_count ? beta_sum / static_cast<double>(transfer_count) : 0.0;
        }
        rec.val = evaluate_prepared(params, val_data, cfg, Predictor::textual);
        if (rec.val.miou > report.best_val_miou) {
            report.best_val_miou = rec.val.miou;
            report.best_epoch = epoch;
            out.best = params;
        }
        report.epochs.push_back(std::move(rec));
    }
    out.last = std::move(params);
    report.wall_clock_sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return out;
}

namespace {

MetricsReport mean_metrics(const std::vector<const MetricsReport*>& ms) {
    MetricsReport m;
    for (double mu : kIouThresholds) m.iou_at[mu] = 0.0;
    for (const auto* r : ms) {
        m.miou += r->miou;
        for (double mu : kIouThresholds) m.iou_at[mu] += r->iou_at.at(mu);
    }
    const double n = static_cast<double>(ms.size());
    m.miou /= n;
    for (double mu : kIouThresholds) m.iou_at[mu] /= n;
    return m;
}

}  // namespace

AblationResult ablate(const std::vector<Sample>& train_set, const std::vector<Sample>& val_set,
                      const TrainConfig& cfg, const std::vector<std::uint64_t>& seeds) {
    if (seeds.empty()) throw Error("ablate: at least one seed is required");
    if (val_set.empty()) throw Error("ablate: evaluation corpus is empty");
    AblationResult res;
    for (std::uint64_t seed : seeds) {
        TrainConfig c = cfg;
        c.seed = seed;
        c.mkt_enabled = false;
        TrainResult plain = train(train_set, val_set, c);
        c.mkt_enabled = true;
        TrainResult mutual = train(train_set, val_set, c);
        for (Predictor which : {Predictor::visual, Predictor::textual}) {
            res.rows.push_back({seed, which, false, evaluate(plain.last, val_set, c, which)});
            res.rows.push_back({seed, which, true, evaluate(mutual.last, val_set, c, which)});
        }
        res.plain_reports.push_back(std::move(plain.report));
        res.mkt_reports.push_back(std::move(mutual.report));
    }
    const std::size_t per_seed = res.rows.size();
    for (Predictor which : {Predictor::visual, Predictor::textual})
        for (bool mkt : {false, true}) {
            std::vector<const MetricsReport*> ms;
            for (std::size_t i = 0; i < per_seed; ++i)
                if (res.rows[i].predictor == which && res.rows[i].mkt == mkt) ms.push_back(&res.rows[i].metrics);
            res.rows.push_back({std::nullopt, which, mkt, mean_metrics(ms)});
        }
    return res;
}

std::string ablation_csv(const AblationResult& r) {
    std::ostringstream os;
    os.precision(10);
    os << "seed,predictor,mkt," << metrics_csv_header() << '\n';
    for (const auto& row : r.rows) {
        os << (row.seed ? std::to_string(*row.seed) : std::string("mean")) << ',' << to_string(row.predictor) << ','
           << (row.mkt ? "MKT" : "W/O MKT");
        for (const auto& [key, value] : metrics_entries(row.metrics)) os << ',' << value;
        os << '\n';
    }
    return os.str();
}

std::string alpha_beta_trace(const TrainReport& report) {
    if (!report.config.mkt_enabled) throw Error("alpha/beta trace requires a report trained with mutual transfer");
    std::ostringstream os;
    os.precision(17);
    os << "epoch,mean_alpha,mean_beta\n";
    for (const auto& e : report.epochs)
        os << e.epoch << ',' << e.mean_alpha.value_or(0.0) << ',' << e.mean_beta.value_or(0.0) << '\n';
    return os.str();
}

std::string losses_csv(const TrainReport& report) {
    std::ostringstream os;
    os.precision(17);
    os << "epoch,loss_visual,loss_textual,loss_visual_mutual,loss_textual_mutual,total,val_iou_0.3,val_iou_0.5,"
          "val_iou_0.7,val_miou\n";
    for (const auto& e : report.epochs) {
        const auto& l = e.losses;
        os << e.epoch << ',' << l.loss_visual << ',' << l.loss_textual << ',' << l.loss_visual_mutual << ','
           << l.loss_textual_mutual << ',' << l.total << ',' << metrics_csv_row(e.val) << '\n';
    }
    return os.str();
}

std::string report_to_json(const TrainReport& r) {
    json j;
    j["config"] = train_config_to_json(r.config);
    json epochs = json::array();
    for (const auto& e : r.epochs) {
        json val = json::object();
        for (const auto& [key, value] : metrics_entries(e.val)) val[key] = value;
        epochs.push_back({{"epoch", e.epoch},
                          {"loss_visual", e.losses.loss_visual},
                          {"loss_textual", e.losses.loss_textual},
                          {"loss_visual_mutual", e.losses.loss_visual_mutual},
                          {"loss_textual_mutual", e.losses.loss_textual_mutual},
                          {"total", e.losses.total},
                          {"mean_alpha", e.mean_alpha ? json(*e.mean_alpha) : json(nullptr)},
                          {"mean_beta", e.mean_beta ? json(*e.mean_beta) : json(nullptr)},
                          {"val", std::move(val)}});
    }
    j["epochs"] = std::move(epochs);
    j["best_epoch"] = r.best_epoch;
    j["best_val_miou"] = r.best_val_miou;
    j["checkpoint"] = r.checkpoint;
    j["wall_clock_sec"] = r.wall_clock_sec;
    return j.dump(2);
}

TrainReport report_from_json(const std::string& text) {
    TrainReport r;
    try {
        const json j = json::parse(text);
        r.config = train_config_from_json(j.at("config"));
        for (const auto& e : j.at("epochs")) {
            EpochRecord rec;
            rec.epoch = e.at("epoch").get<int>();
            rec.losses = total_loss(e.at("loss_visual").get<double>(), e.at("loss_textual").get<double>(),
                                    e.at("loss_visual_mutual").get<double>(),
                                    e.at("loss_textual_mutual").get<double>());
            if (!e.at("mean_alpha").is_null()) rec.mean_alpha = e.at("mean_alpha").get<double>();
            if (!e.at("mean_beta").is_null()) rec.mean_beta = e.at("mean_beta").get<double>();
            const auto& v = e.at("val");
            rec.val.iou_at[0.3] = v.at("iou_0.3").get<double>();
            rec.val.iou_at[0.5] = v.at("iou_0.5").get<double>();
            rec.val.iou_at[0.7] = v.at("iou_0.7").get<double>();
            rec.val.miou = v.at("miou").get<double>();
            r.epochs.push_back(std::move(rec));
        }
        r.best_epoch = j.at("best_epoch").get<int>();
        r.best_val_miou = j.at("best_val_miou").get<double>();
        r.checkpoint = j.at("checkpoint").get<std::string>();
        r.wall_clock_sec = j.at("wall_clock_sec").get<double>();
    } catch (const json::exception& e) {
        throw ValidationError(std::string("malformed training report: ") + e.what());
    }
    return r;
}

}  // namespace mutualsl
