// Copyright 2026 The MutualSL Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "mutualsl/engine.hpp"
#include "mutualsl/synthgen.hpp"

namespace mutualsl {

/// Generator + training settings + paths, as read from a config file and flags.
/// `seed`, `d_in` and `vocab_size` are shared by the generator and the model.
struct RunConfig {
    GenConfig gen;
    TrainConfig train;
    double train_frac = 0.8;
    std::string train_corpus;
    std::string val_corpus;
    std::vector<std::uint64_t> seeds{1, 2, 3};
};

/// Every recognised key, in a stable order.
const std::vector<std::string>& config_keys();

/// Throws ValidationError naming the key when it is unknown or its value has the wrong type.
void set_config_value(RunConfig& cfg, const std::string& key, const nlohmann::json& value);
/// Parses a command-line string ("0.5", "true", "4,10", "[1,2]", "path") for `key`.
void set_config_flag(RunConfig& cfg, const std::string& key, const std::string& text);

void merge_config(RunConfig& cfg, const nlohmann::json& doc);
nlohmann::json config_to_json(const RunConfig& cfg);
nlohmann::json train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);

}  // namespace mutualsl
