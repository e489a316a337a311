#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "camflow/dataset.hpp"
#include "camflow/eval.hpp"
#include "camflow/model.hpp"
#include "camflow/train.hpp"

namespace camflow::config {

struct EvalRunConfig {
    std::string checkpoint;
    std::string protocol = "v2v";  // v2v | modes
    std::string data_root = "data";
    std::string out_dir = "eval_out";
    eval::EvalOptions opt;
};

struct SampleRunConfig {
    std::string checkpoint;
    std::string data_root = "data";
    uint64_t scene = 0;        // scene id supplying source video + descriptor
    int source_cam = 0;
    std::string mode = "v2v";  // v2v | i2v | t2v
    std::string trajectory = "arc";  // preset kind name, or "file"
    std::string camera_json;         // world-frame trajectory when trajectory=file
    double speed_a = 0.0;            // easing for presets; 0 = constant speed
    int steps = 50;
    uint64_t seed = 0;
    double condition_noise_t = 0.0;
    std::string out_dir = "sample_out";
};

struct AblationRunConfig {
    std::string kind = "conditioning";  // conditioning | training
    int pretrain_steps = 300;
    int finetune_steps = 300;
    std::vector<uint64_t> seeds = {1, 2, 3};
    std::string base_checkpoint;
    std::string out_dir = "ablation_out";
    std::string eval_split = "val";
    int eval_scenes = 4;
    int eval_steps = 20;
};

// One tree for every subcommand; sections mirror the module configs.
struct RootConfig {
    dataset::DatasetConfig dataset;
    uint64_t dataset_seed = 0;
    model::ModelConfig model;
    train::TrainConfig train;  // train.model kept in sync with `model`
    EvalRunConfig eval;
    SampleRunConfig sample;
    AblationRunConfig ablation;
};

// Strict parse: unknown sections or keys raise ConfigError naming the key.
RootConfig parse(const nlohmann::json& tree);
RootConfig load(const std::string& path);  // empty path = defaults

// Applies one "dotted.key=value" override into the raw tree; the value is
// parsed as JSON when possible, otherwise taken as a string.
void apply_override(nlohmann::json& tree, const std::string& assignment);

nlohmann::json to_json(const RootConfig& cfg);

// Writes the effective config into dir/config.json.
void echo(const RootConfig& cfg, const std::string& dir);

}  // namespace camflow::config
