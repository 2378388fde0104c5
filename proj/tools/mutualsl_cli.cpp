// Copyright 2026 The MutualSL Authors
// SPDX-License-Identifier: Apache-2.0

// mutualsl: generate corpora, train, evaluate, run the MKT ablation and export alpha/beta traces.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "mutualsl/config.hpp"
#include "mutualsl/engine.hpp"
#include "mutualsl/errors.hpp"
#include "mutualsl/synthgen.hpp"

namespace fs = std::filesystem;
using namespace mutualsl;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitDivergence = 3;

constexpr const char* kConfigEnv = "MUTUALSL_CONFIG";

struct UsageError : Error {
    using Error::Error;
};

struct Options {
    std::string config_path;
    std::string out;
    bool force = false;
    bool no_mkt = false;
    std::string checkpoint;
    std::string corpus;
    std::string report;
    std::string predictor = "textual";
    std::map<std::string, std::string> keys;
    std::map<std::string, CLI::Option*> key_opts;
};

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw Error("cannot open '" + p.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw Error("cannot write '" + p.string() + "'");
    out << text;
}

RunConfig effective_config(const Options& o) {
    RunConfig cfg;
    std::string path = o.config_path;
    if (path.empty())
        if (const char* env = std::getenv(kConfigEnv)) path = env;
    if (!path.empty()) {
        json doc;
        try {
            doc = json::parse(read_file(path));
        } catch (const json::parse_error& e) {
            throw ValidationError("config '" + path + "': " + e.what());
        }
        merge_config(cfg, doc);
    }
    for (const auto& [key, opt] : o.key_opts)
        if (opt->count() > 0) set_config_flag(cfg, key, o.keys.at(key));
    if (o.no_mkt) cfg.train.mkt_enabled = false;
    return cfg;
}

// Creates the out directory and refuses to clobber any of `files` unless forced.
fs::path prepare_out(const Options& o, std::initializer_list<const char*> files) {
    if (o.out.empty()) throw UsageError("--out is required");
    const fs::path dir(o.out);
    if (!o.force)
        for (const char* f : files)
            if (fs::exists(dir / f))
                throw UsageError("'" + (dir / f).string() + "' exists; pass --force to overwrite");
    fs::create_directories(dir);
    return dir;
}

void echo_config(const fs::path& dir, const RunConfig& cfg) { write_file(dir / "config.json", config_to_json(cfg).dump(2) + "\n"); }

std::pair<std::vector<Sample>, std::vector<Sample>> training_data(const RunConfig& cfg, bool allow_generate) {
    if (cfg.train_corpus.empty()) {
        if (!allow_generate) throw ValidationError("no training corpus given (set train_corpus)");
        auto corpus = generate_corpus(cfg.gen);
        return split_corpus(corpus, cfg.train_frac, cfg.gen.seed);
    }
    auto train_set = load_corpus(cfg.train_corpus);
    if (!cfg.val_corpus.empty()) return {std::move(train_set), load_corpus(cfg.val_corpus)};
    return split_corpus(train_set, cfg.train_frac, cfg.gen.seed);
}

int cmd_generate(const Options& o) {
    const RunConfig cfg = effective_config(o);
    const auto dir = prepare_out(o, {"corpus.jsonl", "config.json"});
    const auto corpus = generate_corpus(cfg.gen);
    save_corpus(corpus, dir / "corpus.jsonl");
    echo_config(dir, cfg);
    std::cout << "wrote " << corpus.size() << " samples to " << (dir / "corpus.jsonl").string() << "\n";
    return kExitOk;
}

int cmd_train(const Options& o) {
    const RunConfig cfg = effective_config(o);
    const auto [train_set, val_set] = training_data(cfg, false);
    const auto dir = prepare_out(o, {"report.json", "losses.csv", "alpha_beta.csv", "best.ckpt", "final.ckpt",
                                     "config.json"});
    echo_config(dir, cfg);
    TrainResult r = train(train_set, val_set, cfg.train);
    r.report.checkpoint = "best.ckpt";
    save_checkpoint(r.best, dir / "best.ckpt");
    save_checkpoint(r.last, dir / "final.ckpt");
    write_file(dir / "report.json", report_to_json(r.report) + "\n");
    write_file(dir / "losses.csv", losses_csv(r.report));
    if (cfg.train.mkt_enabled) write_file(dir / "alpha_beta.csv", alpha_beta_trace(r.report));
    std::cout << "trained " << r.report.epochs.size() << " epochs; best val mIoU " << r.report.best_val_miou
              << " at epoch " << r.report.best_epoch << "\n";
    return kExitOk;
}

int cmd_eval(const Options& o) {
    const RunConfig cfg = effective_config(o);
    if (o.checkpoint.empty()) throw UsageError("--checkpoint is required");
    const std::string corpus_path = !o.corpus.empty() ? o.corpus : cfg.val_corpus;
    if (corpus_path.empty()) throw UsageError("--corpus is required");
    Predictor which;
    if (o.predictor == "textual") which = Predictor::textual;
    else if (o.predictor == "visual") which = Predictor::visual;
    else throw UsageError("--predictor must be 'textual' or 'visual'");

    const ModelParams p = load_checkpoint(o.checkpoint, cfg.train.manifest());
    const auto corpus = load_corpus(corpus_path);
    const auto dir = prepare_out(o, {"metrics.json", "metrics.csv", "config.json"});
    echo_config(dir, cfg);
    const MetricsReport m = evaluate(p, corpus, cfg.train, which);
    json j = json::object();
    for (const auto& [key, value] : metrics_entries(m)) j[key] = value;
    write_file(dir / "metrics.json", j.dump(2) + "\n");
    write_file(dir / "metrics.csv", metrics_csv_header() + "\n" + metrics_csv_row(m) + "\n");
    std::cout << metrics_csv_header() << "\n" << metrics_csv_row(m) << "\n";
    return kExitOk;
}

int cmd_ablate(const Options& o) {
    const RunConfig cfg = effective_config(o);
    const auto [train_set, val_set] = training_data(cfg, true);
    const auto dir = prepare_out(o, {"ablation.csv", "config.json"});
    echo_config(dir, cfg);
    const AblationResult r = ablate(train_set, val_set, cfg.train, cfg.seeds);
    write_file(dir / "ablation.csv", ablation_csv(r));
    for (const auto& rep : r.mkt_reports)
        write_file(dir / ("alpha_beta_seed" + std::to_string(rep.config.seed) + ".csv"), alpha_beta_trace(rep));
    std::cout << ablation_csv(r);
    return kExitOk;
}

int cmd_trace(const Options& o) {
    if (o.report.empty()) throw UsageError("--report is required");
    const TrainReport rep = report_from_json(read_file(o.report));
    const std::string csv = alpha_beta_trace(rep);
    const auto dir = prepare_out(o, {"alpha_beta.csv"});
    write_file(dir / "alpha_beta.csv", csv);
    std::cout << "wrote " << rep.epochs.size() << " rows to " << (dir / "alpha_beta.csv").string() << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Cross-modal mutual knowledge transfer for visual answer localization"};
    app.require_subcommand(1);
    Options o;

    auto common = [&](CLI::App* sub) {
        sub->add_option("--config", o.config_path, std::string("JSON config file (default: $") + kConfigEnv + ")");
        sub->add_option("--out", o.out, "output directory");
        sub->add_flag("--force", o.force, "overwrite existing outputs");
        for (const auto& key : config_keys())
            o.key_opts[key] = sub->add_option("--" + key, o.keys[key], "config key")
                                  ->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    };

    auto* gen = app.add_subcommand("generate", "write a synthetic corpus to <out>/corpus.jsonl");
    auto* trn = app.add_subcommand("train", "train on train_corpus (validated on val_corpus or a split)");
    auto* evl = app.add_subcommand("eval", "score a checkpoint on a corpus");
    auto* abl = app.add_subcommand("ablate", "train with and without MKT for each seed");
    auto* trc = app.add_subcommand("trace", "export the alpha/beta trace of a training report");
    // Each subcommand owns its own copy of the key options; only the selected one is parsed.
    std::map<CLI::App*, std::map<std::string, CLI::Option*>> per_sub;
    for (auto* sub : {gen, trn, evl, abl}) {
        o.key_opts.clear();
        common(sub);
        per_sub[sub] = o.key_opts;
    }
    trn->add_flag("--no-mkt", o.no_mkt, "disable mutual knowledge transfer");
    abl->add_flag("--no-mkt", o.no_mkt, "accepted for symmetry; ablate always runs both settings");
    evl->add_option("--checkpoint", o.checkpoint, "checkpoint file");
    evl->add_option("--corpus", o.corpus, "corpus to evaluate (default: val_corpus)");
    evl->add_option("--predictor", o.predictor, "textual (default) or visual");
    trc->add_option("--report", o.report, "report.json written by train");
    trc->add_option("--out", o.out, "output directory");
    trc->add_flag("--force", o.force, "overwrite existing outputs");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitUsage;
    }

    try {
        for (auto& [sub, opts] : per_sub)
            if (sub->parsed()) o.key_opts = opts;
        if (gen->parsed()) return cmd_generate(o);
        if (trn->parsed()) return cmd_train(o);
        if (evl->parsed()) return cmd_eval(o);
        if (abl->parsed()) return cmd_ablate(o);
        return cmd_trace(o);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const DivergenceError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitDivergence;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
}
