// Copyright 2026 The MutualSL Authors
// SPDX-License-Identifier: Apache-2.0

#include "mutualsl/config.hpp"

#include <functional>
#include <map>

#include "mutualsl/errors.hpp"

namespace mutualsl {

using nlohmann::json;

namespace {

struct Field {
    std::function<void(RunConfig&, const json&)> set;
    std::function<json(const RunConfig&)> get;
};

std::pair<int, int> as_pair(const json& v) {
    auto p = v.get<std::vector<int>>();
    if (p.size() != 2) throw ValidationError("expected two integers");
    return {p[0], p[1]};
}

const std::map<std::string, Field>& fields() {
    static const std::map<std::string, Field> f = {
        {"num_samples", {[](RunConfig& c, const json& v) { c.gen.num_samples = v.get<int>(); },
                         [](const RunConfig& c) { return json(c.gen.num_samples); }}},
        {"k", {[](RunConfig& c, const json& v) { c.gen.k = v.get<int>(); },
               [](const RunConfig& c) { return json(c.gen.k); }}},
        {"d_in", {[](RunConfig& c, const json& v) { c.gen.d_in = c.train.d_in = v.get<int>(); },
                  [](const RunConfig& c) { return json(c.train.d_in); }}},
        {"vocab_size", {[](RunConfig& c, const json& v) { c.gen.vocab_size = c.train.vocab_size = v.get<int>(); },
                        [](const RunConfig& c) { return json(c.train.vocab_size); }}},
        {"num_subtitles_range", {[](RunConfig& c, const json& v) { c.gen.num_subtitles_range = as_pair(v); },
                                 [](const RunConfig& c) {
                                     return json::array({c.gen.num_subtitles_range.first,
                                                         c.gen.num_subtitles_range.second});
                                 }}},
        {"answer_len_range", {[](RunConfig& c, const json& v) { c.gen.answer_len_range = as_pair(v); },
                              [](const RunConfig& c) {
                                  return json::array({c.gen.answer_len_range.first, c.gen.answer_len_range.second});
                              }}},
        {"subtitle_gap_prob", {[](RunConfig& c, const json& v) { c.gen.subtitle_gap_prob = v.get<double>(); },
                               [](const RunConfig& c) { return json(c.gen.subtitle_gap_prob); }}},
        {"signal_strength", {[](RunConfig& c, const json& v) { c.gen.signal_strength = v.get<double>(); },
                             [](const RunConfig& c) { return json(c.gen.signal_strength); }}},
        {"noise_std", {[](RunConfig& c, const json& v) { c.gen.noise_std = v.get<double>(); },
                       [](const RunConfig& c) { return json(c.gen.noise_std); }}},
        {"seed", {[](RunConfig& c, const json& v) { c.gen.seed = c.train.seed = v.get<std::uint64_t>(); },
                  [](const RunConfig& c) { return json(c.train.seed); }}},
        {"learning_rate", {[](RunConfig& c, const json& v) { c.train.learning_rate = v.get<double>(); },
                           [](const RunConfig& c) { return json(c.train.learning_rate); }}},
        {"batch_size", {[](RunConfig& c, const json& v) { c.train.batch_size = v.get<int>(); },
                        [](const RunConfig& c) { return json(c.train.batch_size); }}},
        {"epochs", {[](RunConfig& c, const json& v) { c.train.epochs = v.get<int>(); },
                    [](const RunConfig& c) { return json(c.train.epochs); }}},
        {"weight_decay", {[](RunConfig& c, const json& v) { c.train.weight_decay = v.get<double>(); },
                          [](const RunConfig& c) { return json(c.train.weight_decay); }}},
        {"mkt_enabled", {[](RunConfig& c, const json& v) { c.train.mkt_enabled = v.get<bool>(); },
                         [](const RunConfig& c) { return json(c.train.mkt_enabled); }}},
        {"d", {[](RunConfig& c, const json& v) { c.train.d = v.get<int>(); },
               [](const RunConfig& c) { return json(c.train.d); }}},
        {"conv_kernel", {[](RunConfig& c, const json& v) { c.train.conv_kernel = v.get<int>(); },
                         [](const RunConfig& c) { return json(c.train.conv_kernel); }}},
        {"max_len", {[](RunConfig& c, const json& v) {
                         if (v.is_null()) c.train.max_len.reset();
                         else c.train.max_len = v.get<int>();
                     },
                     [](const RunConfig& c) { return c.train.max_len ? json(*c.train.max_len) : json(nullptr); }}},
        {"parallel", {[](RunConfig& c, const json& v) { c.train.parallel = v.get<bool>(); },
                      [](const RunConfig& c) { return json(c.train.parallel); }}},
        {"train_frac", {[](RunConfig& c, const json& v) { c.train_frac = v.get<double>(); },
                        [](const RunConfig& c) { return json(c.train_frac); }}},
        {"train_corpus", {[](RunConfig& c, const json& v) { c.train_corpus = v.get<std::string>(); },
                          [](const RunConfig& c) { return json(c.train_corpus); }}},
        {"val_corpus", {[](RunConfig& c, const json& v) { c.val_corpus = v.get<std::string>(); },
                        [](const RunConfig& c) { return json(c.val_corpus); }}},
        {"seeds", {[](RunConfig& c, const json& v) { c.seeds = v.get<std::vector<std::uint64_t>>(); },
                   [](const RunConfig& c) { return json(c.seeds); }}},
    };
    return f;
}

}  // namespace

const std::vector<std::string>& config_keys() {
    static const std::vector<std::string> keys = [] {
        std::vector<std::string> k;
        for (const auto& [name, _] : fields()) k.push_back(name);
        return k;
    }();
    return keys;
}

void set_config_value(RunConfig& cfg, const std::string& key, const json& value) {
    const auto it = fields().find(key);
    if (it == fields().end()) throw ValidationError("unknown config key '" + key + "'");
    try {
        it->second.set(cfg, value);
    } catch (const std::exception& e) {
        throw ValidationError("config key '" + key + "': " + e.what());
    }
}

void set_config_flag(RunConfig& cfg, const std::string& key, const std::string& text) {
    if (key == "train_corpus" || key == "val_corpus") {
        set_config_value(cfg, key, json(text));
        return;
    }
    json v;
    try {
        v = json::parse(text);
    } catch (const json::parse_error&) {
        // "4,10" style lists
        v = json::parse("[" + text + "]", nullptr, false);
        if (v.is_discarded()) throw ValidationError("config key '" + key + "': cannot parse '" + text + "'");
    }
    if (key == "seeds" && v.is_number()) v = json::array({v});
    set_config_value(cfg, key, v);
}

void merge_config(RunConfig& cfg, const json& doc) {
    if (!doc.is_object()) throw ValidationError("config document must be an object");
    for (auto it = doc.begin(); it != doc.end(); ++it) set_config_value(cfg, it.key(), it.value());
}

json config_to_json(const RunConfig& cfg) {
    json j = json::object();
    for (const auto& [name, f] : fields()) j[name] = f.get(cfg);
    return j;
}

json train_config_to_json(const TrainConfig& cfg) {
    return {{"learning_rate", cfg.learning_rate},
            {"batch_size", cfg.batch_size},
            {"epochs", cfg.epochs},
            {"weight_decay", cfg.weight_decay},
            {"seed", cfg.seed},
            {"mkt_enabled", cfg.mkt_enabled},
            {"d", cfg.d},
            {"d_in", cfg.d_in},
            {"vocab_size", cfg.vocab_size},
            {"conv_kernel", cfg.conv_kernel},
            {"max_len", cfg.max_len ? json(*cfg.max_len) : json(nullptr)},
            {"parallel", cfg.parallel}};
}

TrainConfig train_config_from_json(const json& j) {
    TrainConfig c;
    c.learning_rate = j.at("learning_rate").get<double>();
    c.batch_size = j.at("batch_size").get<int>();
    c.epochs = j.at("epochs").get<int>();
    c.weight_decay = j.at("weight_decay").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.mkt_enabled = j.at("mkt_enabled").get<bool>();
    c.d = j.at("d").get<int>();
    c.d_in = j.at("d_in").get<int>();
    c.vocab_size = j.at("vocab_size").get<int>();
    c.conv_kernel = j.at("conv_kernel").get<int>();
    if (!j.at("max_len").is_null()) c.max_len = j.at("max_len").get<int>();
    c.parallel = j.value("parallel", true);
    return c;
}

}  // namespace mutualsl
