#pragma once

#include <map>
#include <string>
#include <vector>

#include "camflow/autograd.hpp"
#include "camflow/scenegen.hpp"
#include "camflow/tensor.hpp"

namespace camflow::model {

// How the source video reaches the target stream.
enum class CondMode { FrameDim, ChannelDim, ViewDim };

std::string mode_name(CondMode m);
CondMode mode_from_name(const std::string& name);

struct ModelConfig {
    int d = 128;
    int depth = 4;
    int heads = 4;
    int p = 8;   // spatial patch size
    int f = 16;  // frames
    int c = 3;   // latent channels
    int h = 48;
    int w = 48;
    CondMode mode = CondMode::FrameDim;
    int desc_vocab = scenegen::kDescVocab;
    int desc_len = scenegen::kDescLen;
    // Aligned: source frame i and target frame i share the temporal position
    // index. Off: the target half uses indices f..2f-1 instead.
    bool aligned_time_index = true;

    void validate() const;
    int s() const { return (h / p) * (w / p); }  // patches per frame
    // Tokens attending jointly in one 3D-attention segment.
    int sequence_length() const { return (mode == CondMode::FrameDim ? 2 * f : f) * s(); }
    // Rows a single sample occupies in the packed token matrix (both streams
    // in view mode).
    int rows_per_sample(bool conditioned) const {
        if (!conditioned) return f * s();
        return mode == CondMode::ChannelDim ? f * s() : 2 * f * s();
    }
};

struct Parameters {
    std::map<std::string, Tensor> tensors;  // name order fixes serialization
    std::map<std::string, std::string> group_of;

    void add(const std::string& name, Tensor t, const std::string& group);
    Tensor& at(const std::string& name);
    const Tensor& at(const std::string& name) const;
    bool has(const std::string& name) const { return tensors.count(name) != 0; }
    int64_t scalar_count() const;
};

// Sinusoidal embedding of t in [0,1], one row per entry.
Tensor time_embedding(const std::vector<double>& t, int dim);

// Fixed positional table for one sample: frame/row/col sinusoids in three
// channel chunks, one row per token in packed order.
Tensor positional_table(const ModelConfig& cfg, bool conditioned);

// Per-call parameter bindings. Each parameter becomes exactly one tape leaf,
// so its gradient accumulates in a single slot the trainer can read back.
struct Bindings {
    std::map<std::string, ag::Var> vars;
    // Optional mask; names mapped to false become constant leaves.
    std::function<bool(const std::string&)> trainable;
};

class Model {
  public:
    ModelConfig cfg;
    Parameters params;

    static Model init(const ModelConfig& cfg, uint64_t seed);

    // Velocity prediction. Inputs are batched model-space latents:
    //   noised_target, source: [B, f, c, h, w] (source ignored when
    //   conditioned=false), cams: [B, f, 12], desc: B*desc_len tokens,
    //   t: B. Output var has shape [B, f, c, h, w].
    ag::Var forward(ag::Tape& tape, const Tensor& noised_target, const Tensor& source,
                    const Tensor& cams, const std::vector<int>& desc,
                    const std::vector<double>& t, bool conditioned,
                    Bindings* bind = nullptr) const;

    // Convenience single-sample no-grad prediction.
    Tensor predict(const Tensor& noised_target, const Tensor& source, const Tensor& cams,
                   const std::vector<int>& desc, double t, bool conditioned) const;

    // Affine pose-row encoding [f, 12] -> [f, d]; all-zero until trained.
    Tensor camera_encode(const Tensor& cams) const;
};

}  // namespace camflow::model
