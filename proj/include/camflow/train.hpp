#pragma once

#include <deque>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "camflow/checkpoint.hpp"
#include "camflow/dataset.hpp"
#include "camflow/model.hpp"

namespace camflow::train {

struct TrainConfig {
    std::string stage = "recam_finetune";  // or "pretrain_base"
    double lr = 1e-4;
    int batch = 8;
    int steps = 2000;
    uint64_t seed = 1;
    int n_lo = 200, n_hi = 500;  // condition-noise window of a 1000-step schedule
    double p_t2v = 0.2, p_i2v = 0.2;
    model::ModelConfig model;
    std::string data_root = "data";
    std::string out_dir;       // metrics + checkpoints; empty = no files
    std::string init_from;     // base checkpoint for fine-tuning
    std::string resume;        // same-stage checkpoint to continue from
    int checkpoint_every = 500;
    bool freeze = true;      // fine-tune only the newly relevant groups
    bool mode_drop = true;   // t2v/i2v/v2v latent dropping
    double clip = 1.0;       // global grad-norm ceiling
    bool condition_noise = true;
    int scene_limit = 0;     // train on the first N train scenes; 0 = all
    int cache_scenes = 32;

    void validate() const;
};

// Groups updated by the optimizer for a given stage/mode. Fine-tuning with
// the freeze policy trains camera_encoder + attn_3d (+ attn_view when that
// path exists); pretraining and unfrozen fine-tuning train everything.
std::set<std::string> trainable_groups(const std::string& stage, model::CondMode mode,
                                       bool freeze);

// Per-parameter trainability; throws ConfigError on an untagged parameter.
std::map<std::string, bool> trainable_mask(const model::Parameters& params,
                                           const std::string& stage, model::CondMode mode,
                                           bool freeze);

struct StepMetrics {
    int step = 0;
    std::string stage;
    std::string mode;
    double loss = 0.0;
    double grad_norm = 0.0;
};

struct Batch {
    Tensor target;  // [B, f, c, h, w] model space
    Tensor source;  // same; noise-replaced per mode for fine-tuning
    Tensor cams;    // [B, f, 12] target poses relative to source first frame
    std::vector<int> desc;
    std::vector<double> t;
    Tensor eps;
    std::string mode;  // pretrain | t2v | i2v | v2v
};

class Trainer {
  public:
    explicit Trainer(const TrainConfig& cfg);

    void run();           // full budget: metrics stream + periodic checkpoints
    StepMetrics step();   // one optimizer step on a fresh batch
    StepMetrics step(const Batch& b);  // one optimizer step on a fixed batch
    Batch make_batch();   // next batch off the trainer's rng stream

    // Mean CFM loss over deterministic batches from a split ("val"/"test").
    double eval_loss(const std::string& split, int batches, uint64_t seed);

    void save_checkpoint(const std::string& path) const;
    void load_state(const std::string& path);  // params + optimizer + rng + step

    model::Model& model() { return model_; }
    const model::Model& model() const { return model_; }
    const TrainConfig& config() const { return cfg_; }
    int current_step() const { return step_; }
    const dataset::Manifest& manifest() const { return manifest_; }
    const dataset::SceneRecord& scene(uint64_t id);

  private:
    Batch build_batch(Rng& rng, const std::vector<uint64_t>& ids, bool for_pretrain,
                      bool drop_modes);

    TrainConfig cfg_;
    dataset::Manifest manifest_;
    std::vector<uint64_t> train_ids_, val_ids_;
    model::Model model_;
    std::map<std::string, bool> mask_;
    std::map<std::string, Tensor> adam_m_, adam_v_;
    int64_t adam_t_ = 0;
    int step_ = 0;
    Rng rng_;
    std::map<uint64_t, dataset::SceneRecord> cache_;
    std::deque<uint64_t> cache_order_;
};

}  // namespace camflow::train
