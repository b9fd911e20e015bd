#pragma once

#include <filesystem>

#include <json.hpp>

#include "d3g/corpus.hpp"
#include "d3g/eval.hpp"
#include "d3g/trainer.hpp"

namespace d3g {

// Experiment file: {"corpus": {...}, "train": {...}, "eval": {...}}. Every
// section and field is optional and falls back to the documented default;
// unknown keys raise Error(config) naming the key.
struct ExperimentConfig {
  CorpusConfig corpus;
  TrainConfig train;
  EvalConfig eval;
};

nlohmann::json to_json(const CorpusConfig& config);
nlohmann::json to_json(const TrainConfig& config);
nlohmann::json to_json(const EvalConfig& config);
nlohmann::json to_json(const ExperimentConfig& config);

// Fields absent from `j` keep the value they have in `base`.
CorpusConfig corpus_config_from_json(const nlohmann::json& j, CorpusConfig base = {});
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});
EvalConfig eval_config_from_json(const nlohmann::json& j, EvalConfig base = {});
ExperimentConfig experiment_from_json(const nlohmann::json& j);

ExperimentConfig load_experiment(const std::filesystem::path& path);

} // namespace d3g
