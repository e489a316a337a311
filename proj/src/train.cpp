#include "camflow/train.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>

#include <json.hpp>

#include "camflow/errors.hpp"
#include "camflow/flow.hpp"
#include "camflow/trajgen.hpp"

namespace camflow::train {

namespace fs = std::filesystem;
using nlohmann::json;

void TrainConfig::validate() const {
    model.validate();
    if (stage != "pretrain_base" && stage != "recam_finetune")
        throw ConfigError("train: unknown stage " + stage);
    if (lr <= 0.0 || batch < 1 || steps < 0) throw ConfigError("train: bad lr/batch/steps");
    if (n_lo < 0 || n_hi < n_lo || n_hi > 1000)
        throw ConfigError("train: condition-noise window must satisfy 0 <= lo <= hi <= 1000");
    if (p_t2v < 0.0 || p_i2v < 0.0 || p_t2v + p_i2v > 1.0)
        throw ConfigError("train: mode probabilities must satisfy 0 <= t2v + i2v <= 1");
    if (clip <= 0.0) throw ConfigError("train: clip must be positive");
    if (cache_scenes < 1) throw ConfigError("train: cache_scenes must be >= 1");
}

std::set<std::string> trainable_groups(const std::string& stage, model::CondMode mode,
                                       bool freeze) {
    if (stage == "pretrain_base" || !freeze)
        return {"other", "attn_3d", "camera_encoder", "attn_view"};
    std::set<std::string> g = {"camera_encoder", "attn_3d"};
    if (mode == model::CondMode::ViewDim) g.insert("attn_view");
    return g;
}

std::map<std::string, bool> trainable_mask(const model::Parameters& params,
                                           const std::string& stage, model::CondMode mode,
                                           bool freeze) {
    const auto groups = trainable_groups(stage, mode, freeze);
    std::map<std::string, bool> mask;
    for (const auto& [name, t] : params.tensors) {
        auto it = params.group_of.find(name);
        if (it == params.group_of.end())
            throw ConfigError("parameter " + name + " has no group tag");
        mask[name] = groups.count(it->second) != 0;
    }
    return mask;
}

namespace {
const TrainConfig& validated(const TrainConfig& cfg) {
    cfg.validate();
    return cfg;
}
}  // namespace

Trainer::Trainer(const TrainConfig& cfg)
    : cfg_(validated(cfg)),
      manifest_(dataset::load_manifest(cfg.data_root)),
      model_(model::Model::init(cfg.model, cfg.seed)),
      rng_(stream(cfg.seed, 0x7ea1d)) {
    if (manifest_.frames != cfg_.model.f || manifest_.height != cfg_.model.h ||
        manifest_.width != cfg_.model.w || manifest_.channels != cfg_.model.c)
        throw ConfigError("train: dataset geometry does not match the model config");
    train_ids_ = manifest_.ids("train");
    val_ids_ = manifest_.ids("val");
    if (train_ids_.empty()) throw IoError("train: dataset has no training scenes");
    if (cfg_.scene_limit > 0 &&
        static_cast<size_t>(cfg_.scene_limit) < train_ids_.size())
        train_ids_.resize(static_cast<size_t>(cfg_.scene_limit));
    if (cfg_.stage == "recam_finetune") {
        if (cfg_.init_from.empty() && cfg_.resume.empty())
            throw ConfigError(
                "train: recam_finetune needs init_from (base checkpoint) or resume");
        if (!cfg_.init_from.empty()) ckpt::load_into(ckpt::load(cfg_.init_from), model_);
    }
    mask_ = trainable_mask(model_.params, cfg_.stage, cfg_.model.mode, cfg_.freeze);
    if (!cfg_.resume.empty()) load_state(cfg_.resume);
}

const dataset::SceneRecord& Trainer::scene(uint64_t id) {
    auto it = cache_.find(id);
    if (it != cache_.end()) return it->second;
    if (cache_order_.size() >= static_cast<size_t>(cfg_.cache_scenes)) {
        cache_.erase(cache_order_.front());
        cache_order_.pop_front();
    }
    cache_order_.push_back(id);
    return cache_.emplace(id, dataset::load_scene(cfg_.data_root, id)).first->second;
}

Batch Trainer::build_batch(Rng& rng, const std::vector<uint64_t>& ids, bool for_pretrain,
                           bool drop_modes) {
    const auto& mc = cfg_.model;
    const int64_t B = cfg_.batch;
    const int64_t vol = static_cast<int64_t>(mc.f) * mc.c * mc.h * mc.w;
    Batch b;
    b.target = Tensor({B, mc.f, mc.c, mc.h, mc.w});
    b.eps = Tensor({B, mc.f, mc.c, mc.h, mc.w});
    b.t.resize(static_cast<size_t>(B));
    if (for_pretrain) {
        b.mode = "pretrain";
    } else {
        b.source = Tensor({B, mc.f, mc.c, mc.h, mc.w});
        b.cams = Tensor({B, mc.f, 12});
        b.mode = "v2v";
        if (drop_modes) {
            const double u = rng.uniform();
            if (u < cfg_.p_t2v)
                b.mode = "t2v";
            else if (u < cfg_.p_t2v + cfg_.p_i2v)
                b.mode = "i2v";
        }
    }

    for (int64_t i = 0; i < B; ++i) {
        const uint64_t id = ids[rng.below(ids.size())];
        const dataset::SceneRecord& rec = scene(id);
        const int cams_n = static_cast<int>(rec.videos.size());
        const int kt = static_cast<int>(rng.below(static_cast<uint64_t>(cams_n)));

        const Tensor z0 = dataset::to_model_space(rec.videos[static_cast<size_t>(kt)]);
        std::copy_n(z0.ptr(), vol, b.target.ptr() + i * vol);
        for (int tok : rec.descriptor) b.desc.push_back(tok);
        b.t[static_cast<size_t>(i)] = rng.uniform();
        for (int64_t j = 0; j < vol; ++j) b.eps[i * vol + j] = rng.normal();

        if (for_pretrain) continue;

        int ks = static_cast<int>(rng.below(static_cast<uint64_t>(cams_n - 1)));
        if (ks >= kt) ++ks;  // two distinct cameras of one scene
        const Tensor zs = dataset::to_model_space(rec.videos[static_cast<size_t>(ks)]);
        double* cond = b.source.ptr() + i * vol;
        std::copy_n(zs.ptr(), vol, cond);

        const int64_t frame_vol = static_cast<int64_t>(mc.c) * mc.h * mc.w;
        if (b.mode == "t2v") {
            for (int64_t j = 0; j < vol; ++j) cond[j] = rng.normal();
        } else {
            if (b.mode == "i2v")
                for (int64_t j = frame_vol; j < vol; ++j) cond[j] = rng.normal();
            if (cfg_.condition_noise && cfg_.n_hi > 0) {
                const int n = cfg_.n_lo +
                              static_cast<int>(rng.below(
                                  static_cast<uint64_t>(cfg_.n_hi - cfg_.n_lo + 1)));
                const double tc = n / 1000.0;
                const int64_t kept = b.mode == "i2v" ? frame_vol : vol;
                for (int64_t j = 0; j < kept; ++j)
                    cond[j] = (1.0 - tc) * cond[j] + tc * rng.normal();
            }
        }

        const auto& traj_t = rec.trajectories[static_cast<size_t>(kt)];
        const auto& traj_s = rec.trajectories[static_cast<size_t>(ks)];
        const trajgen::Trajectory rel =
            trajgen::normalize_to_reference(traj_t, traj_s.poses.front());
        const Tensor flat = trajgen::flatten_poses(rel);
        std::copy_n(flat.ptr(), static_cast<int64_t>(mc.f) * 12,
                    b.cams.ptr() + i * mc.f * 12);
    }
    return b;
}

Batch Trainer::make_batch() {
    return build_batch(rng_, train_ids_, cfg_.stage == "pretrain_base", cfg_.mode_drop);
}

StepMetrics Trainer::step() { return step(make_batch()); }

StepMetrics Trainer::step(const Batch& b) {
    const auto& mc = cfg_.model;
    const int64_t vol = static_cast<int64_t>(mc.f) * mc.c * mc.h * mc.w;

    // z_t per item; the regression target is the path derivative eps - z0.
    Tensor zt(b.target.shape());
    Tensor u(b.target.shape());
    for (int64_t i = 0; i < cfg_.batch; ++i) {
        const double t = b.t[static_cast<size_t>(i)];
        for (int64_t j = 0; j < vol; ++j) {
            const int64_t k = i * vol + j;
            zt[k] = (1.0 - t) * b.target[k] + t * b.eps[k];
            u[k] = b.eps[k] - b.target[k];
        }
    }

    ag::Tape tape;
    model::Bindings bind;
    bind.trainable = [this](const std::string& name) { return mask_.at(name); };
    const bool conditioned = cfg_.stage != "pretrain_base";
    ag::Var pred = model_.forward(tape, zt, b.source, b.cams, b.desc, b.t, conditioned, &bind);
    ag::Var loss = ag::mse_to(pred, u);
    const double loss_v = loss.val()[0];
    if (!std::isfinite(loss_v)) {
        char diag[160];
        std::snprintf(diag, sizeof(diag),
                      "train: non-finite loss at step %d (mode %s, t[0]=%.4f)", step_,
                      b.mode.c_str(), b.t.empty() ? -1.0 : b.t[0]);
        throw NumericError(diag);
    }
    tape.backward(loss);

    double sq = 0.0;
    std::map<std::string, Tensor> grads;
    for (const auto& [name, var] : bind.vars) {
        if (!mask_.at(name) || !tape.grad_touched(var.id)) continue;
        const Tensor& g = tape.grad(var.id);
        for (int64_t j = 0; j < g.numel(); ++j) sq += g[j] * g[j];
        grads.emplace(name, g);
    }
    const double gnorm = std::sqrt(sq);
    const double scale = gnorm > cfg_.clip ? cfg_.clip / gnorm : 1.0;

    ++adam_t_;
    const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(adam_t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(adam_t_));
    for (auto& [name, g] : grads) {
        Tensor& p = model_.params.at(name);
        auto mi = adam_m_.find(name);
        if (mi == adam_m_.end()) {
            adam_m_.emplace(name, Tensor::zeros(p.shape()));
            adam_v_.emplace(name, Tensor::zeros(p.shape()));
        }
        Tensor& m = adam_m_.at(name);
        Tensor& v = adam_v_.at(name);
        for (int64_t j = 0; j < p.numel(); ++j) {
            const double gj = g[j] * scale;
            m[j] = b1 * m[j] + (1.0 - b1) * gj;
            v[j] = b2 * v[j] + (1.0 - b2) * gj * gj;
            p[j] -= cfg_.lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + eps);
        }
    }

    ++step_;
    return StepMetrics{step_, cfg_.stage, b.mode, loss_v, gnorm};
}

double Trainer::eval_loss(const std::string& split, int batches, uint64_t seed) {
    std::vector<uint64_t> ids = manifest_.ids(split);
    if (ids.empty()) throw ConfigError("eval_loss: empty split " + split);
    Rng rng = stream(seed, 0xeba1);
    const bool pre = cfg_.stage == "pretrain_base";
    double total = 0.0;
    for (int i = 0; i < batches; ++i) {
        Batch b = build_batch(rng, ids, pre, false);
        Tensor zt(b.target.shape());
        Tensor u(b.target.shape());
        const int64_t vol = b.target.numel() / cfg_.batch;
        for (int64_t bi = 0; bi < cfg_.batch; ++bi)
            for (int64_t j = 0; j < vol; ++j) {
                const int64_t k = bi * vol + j;
                const double t = b.t[static_cast<size_t>(bi)];
                zt[k] = (1.0 - t) * b.target[k] + t * b.eps[k];
                u[k] = b.eps[k] - b.target[k];
            }
        ag::Tape tape(false);
        ag::Var pred = model_.forward(tape, zt, b.source, b.cams, b.desc, b.t, !pre);
        total += ag::mse_to(pred, u).val()[0];
    }
    return total / batches;
}

void Trainer::save_checkpoint(const std::string& path) const {
    ckpt::Checkpoint ck = ckpt::from_model(model_);
    for (const auto& [name, t] : adam_m_) ck.opt.emplace("adam.m." + name, t);
    for (const auto& [name, t] : adam_v_) ck.opt.emplace("adam.v." + name, t);
    ck.meta["stage"] = cfg_.stage;
    ck.meta["step"] = std::to_string(step_);
    ck.meta["adam_t"] = std::to_string(adam_t_);
    ck.meta["mode_drop"] = cfg_.mode_drop ? "1" : "0";
    ck.meta["freeze"] = cfg_.freeze ? "1" : "0";
    const auto st = rng_.save();
    char buf[80];
    std::snprintf(buf, sizeof(buf), "%llx %llx %llx %llx",
                  static_cast<unsigned long long>(st[0]),
                  static_cast<unsigned long long>(st[1]),
                  static_cast<unsigned long long>(st[2]),
                  static_cast<unsigned long long>(st[3]));
    ck.meta["rng"] = buf;
    if (rng_.has_spare()) {
        uint64_t bits;
        const double sp = rng_.spare();
        std::memcpy(&bits, &sp, sizeof bits);
        std::snprintf(buf, sizeof(buf), "%llx", static_cast<unsigned long long>(bits));
        ck.meta["rng_spare"] = buf;
    }
    ckpt::save(path, ck);
}

void Trainer::load_state(const std::string& path) {
    ckpt::Checkpoint ck = ckpt::load(path);
    ckpt::load_into(ck, model_);
    adam_m_.clear();
    adam_v_.clear();
    for (const auto& [name, t] : ck.opt) {
        if (name.rfind("adam.m.", 0) == 0) adam_m_.emplace(name.substr(7), t.clone());
        if (name.rfind("adam.v.", 0) == 0) adam_v_.emplace(name.substr(7), t.clone());
    }
    if (ck.meta.count("step")) step_ = std::stoi(ck.meta.at("step"));
    if (ck.meta.count("adam_t")) adam_t_ = std::stoll(ck.meta.at("adam_t"));
    if (ck.meta.count("rng")) {
        std::array<uint64_t, 4> st{};
        if (std::sscanf(ck.meta.at("rng").c_str(), "%llx %llx %llx %llx",
                        reinterpret_cast<unsigned long long*>(&st[0]),
                        reinterpret_cast<unsigned long long*>(&st[1]),
                        reinterpret_cast<unsigned long long*>(&st[2]),
                        reinterpret_cast<unsigned long long*>(&st[3])) != 4)
            throw IoError("checkpoint rng state is malformed");
        rng_.restore(st);
        if (ck.meta.count("rng_spare")) {
            unsigned long long bits = 0;
            if (std::sscanf(ck.meta.at("rng_spare").c_str(), "%llx", &bits) != 1)
                throw IoError("checkpoint rng state is malformed");
            double sp;
            const uint64_t b64 = bits;
            std::memcpy(&sp, &b64, sizeof sp);
            rng_.set_spare(sp);
        }
    }
}

void Trainer::run() {
    std::ofstream metrics;
    if (!cfg_.out_dir.empty()) {
        fs::create_directories(cfg_.out_dir);
        const bool fresh = cfg_.resume.empty();
        metrics.open(fs::path(cfg_.out_dir) / "metrics.jsonl",
                     fresh ? std::ios::trunc : std::ios::app);
        if (!metrics) throw IoError("cannot write metrics under " + cfg_.out_dir);
    }
    while (step_ < cfg_.steps) {
        const StepMetrics m = step();
        if (metrics) {
            metrics << json{{"step", m.step},
                            {"stage", m.stage},
                            {"mode", m.mode},
                            {"loss", m.loss},
                            {"grad_norm", m.grad_norm}}
                           .dump()
                    << "\n";
            metrics.flush();
        }
        if (!cfg_.out_dir.empty() && cfg_.checkpoint_every > 0 &&
            (m.step % cfg_.checkpoint_every == 0 || m.step == cfg_.steps)) {
            char name[48];
            std::snprintf(name, sizeof(name), "checkpoint_%06d.ckpt", m.step);
            save_checkpoint((fs::path(cfg_.out_dir) / name).string());
        }
    }
    if (!cfg_.out_dir.empty())
        save_checkpoint((fs::path(cfg_.out_dir) / "model.ckpt").string());
}

}  // namespace camflow::train
