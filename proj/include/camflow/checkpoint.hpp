#pragma once

#include <map>
#include <string>

#include "camflow/model.hpp"
#include "camflow/tensor.hpp"

namespace camflow::ckpt {

// Named-tensor container: JSON header (model config, tensor table with group
// tags, run metadata) followed by raw little-endian doubles. Round-trips
// bit-exactly.
struct Checkpoint {
    model::ModelConfig config;
    model::Parameters params;
    std::map<std::string, Tensor> opt;  // optimizer slots, keyed by own names
    // Small metadata: step counts, stage, rng state (hex strings), flags.
    std::map<std::string, std::string> meta;
};

void save(const std::string& path, const Checkpoint& ck);
Checkpoint load(const std::string& path);

// Builds a checkpoint view of a model (no optimizer state).
Checkpoint from_model(const model::Model& m);

// Copies checkpoint tensors into an initialized model by name. Missing
// zero-initialized conditioning extras (groups camera_encoder / attn_view)
// keep their init values, so a base checkpoint loads into any conditioning
// mode; any other missing or shape-mismatched tensor is an error. Tensors in
// the file that the model lacks are ignored.
void load_into(const Checkpoint& ck, model::Model& m);

}  // namespace camflow::ckpt
