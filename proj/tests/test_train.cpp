#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "camflow/dataset.hpp"
#include "camflow/errors.hpp"
#include "camflow/train.hpp"
#include "camflow/trajgen.hpp"

using namespace camflow;
using namespace camflow::train;
namespace fs = std::filesystem;

namespace {

// One tiny rendered dataset shared by every case: scenes 0..5 split into
// test={0}, train={1,2,3,5}, val={4}.
struct Fixture {
    fs::path dir;
    Fixture() {
        dir = fs::temp_directory_path() / "camflow_train_fixture";
        fs::remove_all(dir);
        dataset::DatasetConfig cfg;
        cfg.root = (dir / "data").string();
        cfg.scenes = 6;
        cfg.cameras = 2;
        cfg.scene.frames = 4;
        cfg.scene.height = 8;
        cfg.scene.width = 8;
        dataset::render_dataset(cfg, 11);
    }
    ~Fixture() { fs::remove_all(dir); }
};

std::string data_root() {
    static Fixture fix;
    return (fix.dir / "data").string();
}

model::ModelConfig tiny_model(model::CondMode mode = model::CondMode::FrameDim) {
    model::ModelConfig mc;
    mc.d = 8;
    mc.depth = 1;
    mc.heads = 2;
    mc.p = 4;
    mc.f = 4;
    mc.h = 8;
    mc.w = 8;
    mc.mode = mode;
    return mc;
}

TrainConfig base_config(const std::string& stage) {
    TrainConfig cfg;
    cfg.stage = stage;
    cfg.lr = 1e-3;
    cfg.batch = 2;
    cfg.steps = 0;
    cfg.seed = 5;
    cfg.model = tiny_model();
    cfg.data_root = data_root();
    return cfg;
}

// Writes an untrained base checkpoint for fine-tune runs.
std::string base_checkpoint(const fs::path& dir) {
    Trainer pre(base_config("pretrain_base"));
    const std::string path = (dir / "base.ckpt").string();
    pre.save_checkpoint(path);
    return path;
}

bool matches_video(const Tensor& slice, const Tensor& video_model_space) {
    return bitwise_equal(slice, video_model_space);
}

Tensor item_slice(const Tensor& batch5d, int64_t i) {
    const int64_t vol = batch5d.numel() / batch5d.dim(0);
    Tensor out({batch5d.dim(1), batch5d.dim(2), batch5d.dim(3), batch5d.dim(4)});
    for (int64_t j = 0; j < vol; ++j) out[j] = batch5d[i * vol + j];
    return out;
}

}  // namespace

TEST_CASE("train config validation") {
    TrainConfig cfg = base_config("pretrain_base");
    CHECK_NOTHROW(cfg.validate());
    cfg.stage = "warmup";
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = base_config("pretrain_base");
    cfg.lr = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = base_config("pretrain_base");
    cfg.n_lo = 600;
    cfg.n_hi = 500;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = base_config("pretrain_base");
    cfg.n_hi = 1500;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = base_config("pretrain_base");
    cfg.p_t2v = 0.7;
    cfg.p_i2v = 0.5;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = base_config("pretrain_base");
    cfg.clip = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = base_config("pretrain_base");
    cfg.cache_scenes = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("trainable groups per stage and mode") {
    const std::set<std::string> all = {"other", "attn_3d", "camera_encoder", "attn_view"};
    CHECK(trainable_groups("pretrain_base", model::CondMode::FrameDim, true) == all);
    CHECK(trainable_groups("recam_finetune", model::CondMode::FrameDim, false) == all);
    CHECK(trainable_groups("recam_finetune", model::CondMode::FrameDim, true) ==
          std::set<std::string>{"camera_encoder", "attn_3d"});
    CHECK(trainable_groups("recam_finetune", model::CondMode::ChannelDim, true) ==
          std::set<std::string>{"camera_encoder", "attn_3d"});
    CHECK(trainable_groups("recam_finetune", model::CondMode::ViewDim, true) ==
          std::set<std::string>{"attn_view", "camera_encoder", "attn_3d"});

    const model::Model m = model::Model::init(tiny_model(), 1);
    const auto mask = trainable_mask(m.params, "recam_finetune", model::CondMode::FrameDim, true);
    CHECK_FALSE(mask.at("patch_proj.w"));
    CHECK_FALSE(mask.at("readout.w"));
    CHECK(mask.at("cam_enc.w"));
    CHECK(mask.at("role_embed"));
    CHECK(mask.at("blocks.00.attn3d.wq"));

    model::Parameters orphan;
    orphan.tensors.emplace("stray", Tensor({2}));
    CHECK_THROWS_AS(trainable_mask(orphan, "pretrain_base", model::CondMode::FrameDim, true),
                    ConfigError);
}

TEST_CASE("trainer rejects mismatched or unusable setups") {
    TrainConfig cfg = base_config("pretrain_base");
    cfg.model.f = 3;  // dataset has 4 frames
    CHECK_THROWS_AS(Trainer{cfg}, ConfigError);

    cfg = base_config("recam_finetune");
    CHECK_THROWS_AS(Trainer{cfg}, ConfigError);  // no init_from / resume

    // a single-scene dataset has no train split (scene 0 lands in test)
    {
        const fs::path solo = fs::temp_directory_path() / "camflow_train_solo";
        fs::remove_all(solo);
        dataset::DatasetConfig dc;
        dc.root = solo.string();
        dc.scenes = 1;
        dc.cameras = 2;
        dc.scene.frames = 4;
        dc.scene.height = 8;
        dc.scene.width = 8;
        dataset::render_dataset(dc, 11);
        TrainConfig tc = base_config("pretrain_base");
        tc.data_root = solo.string();
        CHECK_THROWS_AS(Trainer{tc}, IoError);
        fs::remove_all(solo);
    }
}

TEST_CASE("pretrain batches cover training scenes with fresh noise") {
    TrainConfig cfg = base_config("pretrain_base");
    Trainer tr(cfg);
    const Batch b = tr.make_batch();
    CHECK(b.mode == "pretrain");
    REQUIRE(b.target.dim(0) == cfg.batch);
    CHECK(b.source.numel() == 0);
    CHECK(b.desc.size() == static_cast<size_t>(cfg.batch) * cfg.model.desc_len);
    for (double t : b.t) {
        CHECK(t >= 0.0);
        CHECK(t < 1.0);
    }
    // every target is a training video in model space
    const std::vector<uint64_t> train_ids = tr.manifest().ids("train");
    for (int64_t i = 0; i < cfg.batch; ++i) {
        const Tensor z0 = item_slice(b.target, i);
        bool found = false;
        for (uint64_t id : train_ids)
            for (const Tensor& v : tr.scene(id).videos)
                found = found || matches_video(z0, dataset::to_model_space(v));
        CHECK(found);
    }
    // eps is standard-normal-ish, not a copy of anything
    double mean = 0.0, sq = 0.0;
    for (int64_t i = 0; i < b.eps.numel(); ++i) {
        mean += b.eps[i];
        sq += b.eps[i] * b.eps[i];
    }
    mean /= static_cast<double>(b.eps.numel());
    sq /= static_cast<double>(b.eps.numel());
    CHECK(std::abs(mean) < 0.15);
    CHECK(sq == doctest::Approx(1.0).epsilon(0.15));
}

TEST_CASE("v2v batches pair two distinct cameras and relative poses") {
    const fs::path dir = fs::temp_directory_path() / "camflow_train_v2v";
    fs::remove_all(dir);
    fs::create_directories(dir);
    TrainConfig cfg = base_config("recam_finetune");
    cfg.init_from = base_checkpoint(dir);
    cfg.mode_drop = false;        // always v2v
    cfg.condition_noise = false;  // keep the source video exact
    Trainer tr(cfg);

    for (int rep = 0; rep < 8; ++rep) {
        const Batch b = tr.make_batch();
        REQUIRE(b.mode == "v2v");
        for (int64_t i = 0; i < cfg.batch; ++i) {
            const Tensor zt = item_slice(b.target, i);
            const Tensor zs = item_slice(b.source, i);
            int kt = -1, ks = -1;
            uint64_t sid = 0;
            for (uint64_t id : tr.manifest().ids("train")) {
                const auto& rec = tr.scene(id);
                for (size_t k = 0; k < rec.videos.size(); ++k) {
                    const Tensor v = dataset::to_model_space(rec.videos[k]);
                    if (matches_video(zt, v)) {
                        kt = static_cast<int>(k);
                        sid = id;
                    }
                    if (matches_video(zs, v)) ks = static_cast<int>(k);
                }
                if (kt >= 0) break;
            }
            REQUIRE(kt >= 0);
            REQUIRE(ks >= 0);
            CHECK(ks != kt);  // same scene, different camera

            const auto& rec = tr.scene(sid);
            const trajgen::Trajectory rel = trajgen::normalize_to_reference(
                rec.trajectories[static_cast<size_t>(kt)],
                rec.trajectories[static_cast<size_t>(ks)].poses.front());
            const Tensor flat = trajgen::flatten_poses(rel);
            const int64_t n = flat.numel();
            for (int64_t j = 0; j < n; ++j) CHECK(b.cams[i * n + j] == flat[j]);
        }
    }
    fs::remove_all(dir);
}

TEST_CASE("latent dropping builds t2v and i2v sources") {
    const fs::path dir = fs::temp_directory_path() / "camflow_train_drop";
    fs::remove_all(dir);
    fs::create_directories(dir);
    const std::string base = base_checkpoint(dir);

    auto any_video_match = [](Trainer& tr, const Tensor& x) {
        for (uint64_t id : tr.manifest().ids("train"))
            for (const Tensor& v : tr.scene(id).videos)
                if (matches_video(x, dataset::to_model_space(v))) return true;
        return false;
    };

    TrainConfig cfg = base_config("recam_finetune");
    cfg.init_from = base;
    cfg.condition_noise = false;
    cfg.p_t2v = 1.0;
    cfg.p_i2v = 0.0;
    {
        Trainer tr(cfg);
        const Batch b = tr.make_batch();
        REQUIRE(b.mode == "t2v");
        for (int64_t i = 0; i < cfg.batch; ++i) {
            const Tensor zs = item_slice(b.source, i);
            CHECK_FALSE(any_video_match(tr, zs));
            double sq = 0.0;
            for (int64_t j = 0; j < zs.numel(); ++j) sq += zs[j] * zs[j];
            CHECK(sq / static_cast<double>(zs.numel()) == doctest::Approx(1.0).epsilon(0.25));
        }
    }

    cfg.p_t2v = 0.0;
    cfg.p_i2v = 1.0;
    {
        Trainer tr(cfg);
        const Batch b = tr.make_batch();
        REQUIRE(b.mode == "i2v");
        const auto& mc = cfg.model;
        const int64_t frame_vol = static_cast<int64_t>(mc.c) * mc.h * mc.w;
        for (int64_t i = 0; i < cfg.batch; ++i) {
            const Tensor zs = item_slice(b.source, i);
            // first frame survives from a real video; the rest is noise
            bool first_found = false;
            for (uint64_t id : tr.manifest().ids("train"))
                for (const Tensor& v : tr.scene(id).videos) {
                    const Tensor vm = dataset::to_model_space(v);
                    bool eq = true;
                    for (int64_t j = 0; j < frame_vol; ++j) eq = eq && zs[j] == vm[j];
                    first_found = first_found || eq;
                }
            CHECK(first_found);
            CHECK_FALSE(any_video_match(tr, zs));
        }
    }
    fs::remove_all(dir);
}

TEST_CASE("condition noising mixes the source toward unit noise") {
    const fs::path dir = fs::temp_directory_path() / "camflow_train_noise";
    fs::remove_all(dir);
    fs::create_directories(dir);
    TrainConfig cfg = base_config("recam_finetune");
    cfg.init_from = base_checkpoint(dir);
    cfg.mode_drop = false;
    cfg.n_lo = 1000;
    cfg.n_hi = 1000;  // full replacement
    Trainer tr(cfg);

    const Batch b = tr.make_batch();
    double mean = 0.0, sq = 0.0;
    for (int64_t i = 0; i < b.source.numel(); ++i) {
        mean += b.source[i];
        sq += b.source[i] * b.source[i];
    }
    mean /= static_cast<double>(b.source.numel());
    sq /= static_cast<double>(b.source.numel());
    CHECK(std::abs(mean) < 0.15);
    CHECK(sq == doctest::Approx(1.0).epsilon(0.2));
    fs::remove_all(dir);
}

TEST_CASE("empirical mode mix tracks the 20/20/60 split") {
    const fs::path dir = fs::temp_directory_path() / "camflow_train_mix";
    fs::remove_all(dir);
    fs::create_directories(dir);
    TrainConfig cfg = base_config("recam_finetune");
    cfg.init_from = base_checkpoint(dir);
    cfg.batch = 1;
    Trainer tr(cfg);

    const int n = 4000;
    int t2v = 0, i2v = 0, v2v = 0;
    for (int i = 0; i < n; ++i) {
        const std::string mode = tr.make_batch().mode;
        if (mode == "t2v")
            ++t2v;
        else if (mode == "i2v")
            ++i2v;
        else
            ++v2v;
    }
    CHECK(std::abs(t2v / double(n) - 0.2) < 0.025);
    CHECK(std::abs(i2v / double(n) - 0.2) < 0.025);
    CHECK(std::abs(v2v / double(n) - 0.6) < 0.03);
    fs::remove_all(dir);
}

TEST_CASE("an untrained model scores the flow-matching baseline") {
    TrainConfig cfg = base_config("pretrain_base");
    Trainer tr(cfg);
    // readout starts at zero, so the loss is E[(eps - z0)^2] = 1 + E[z0^2]
    const double l = tr.eval_loss("val", 4, 99);
    CHECK(l > 1.0);
    CHECK(l < 2.2);
    CHECK(tr.eval_loss("val", 4, 99) == l);  // deterministic
    CHECK(tr.eval_loss("test", 2, 99) > 0.0);
    CHECK_THROWS_AS(tr.eval_loss("nope", 1, 1), ConfigError);
}

TEST_CASE("repeating one batch overfits it") {
    TrainConfig cfg = base_config("pretrain_base");
    // d >= token rows so the readout can fit the fixed batch at full rank
    cfg.model.d = 16;
    cfg.model.heads = 4;
    cfg.batch = 1;
    cfg.lr = 5e-3;
    Trainer tr(cfg);
    const Batch b = tr.make_batch();
    const double first = tr.step(b).loss;
    StepMetrics last;
    for (int i = 0; i < 400; ++i) last = tr.step(b);
    CHECK(last.step == 401);
    CHECK(last.stage == "pretrain_base");
    CHECK(last.grad_norm >= 0.0);
    CHECK(std::isfinite(last.loss));
    CHECK(last.loss < first / 10.0);
}

TEST_CASE("fine-tuning leaves frozen groups bit-identical") {
    const fs::path dir = fs::temp_directory_path() / "camflow_train_freeze";
    fs::remove_all(dir);
    fs::create_directories(dir);

    // move the base off its init point first so freezing is observable
    TrainConfig pre_cfg = base_config("pretrain_base");
    pre_cfg.lr = 1e-3;
    Trainer pre(pre_cfg);
    for (int i = 0; i < 5; ++i) pre.step();
    const std::string base = (dir / "base.ckpt").string();
    pre.save_checkpoint(base);

    TrainConfig cfg = base_config("recam_finetune");
    cfg.init_from = base;
    Trainer tr(cfg);
    std::map<std::string, Tensor> before;
    for (const auto& [name, t] : tr.model().params.tensors) before.emplace(name, t.clone());
    for (int i = 0; i < 30; ++i) tr.step();

    bool frozen_ok = true, trained_moved = false;
    for (const auto& [name, t] : tr.model().params.tensors) {
        const std::string& group = tr.model().params.group_of.at(name);
        if (group == "other")
            frozen_ok = frozen_ok && bitwise_equal(t, before.at(name));
        else
            trained_moved = trained_moved || !bitwise_equal(t, before.at(name));
    }
    CHECK(frozen_ok);
    CHECK(trained_moved);

    // optimizer state never touches frozen parameters
    const std::string out = (dir / "ft.ckpt").string();
    tr.save_checkpoint(out);
    const ckpt::Checkpoint ck = ckpt::load(out);
    for (const auto& [name, t] : ck.opt) {
        const std::string pname = name.substr(7);
        CHECK(tr.model().params.group_of.at(pname) != "other");
    }
    fs::remove_all(dir);
}

TEST_CASE("resume reproduces an uninterrupted run bit for bit") {
    const fs::path dir = fs::temp_directory_path() / "camflow_train_resume";
    fs::remove_all(dir);
    fs::create_directories(dir);

    TrainConfig cfg = base_config("pretrain_base");
    Trainer a(cfg);
    for (int i = 0; i < 6; ++i) a.step();
    const std::string mid = (dir / "mid.ckpt").string();
    a.save_checkpoint(mid);

    TrainConfig rcfg = cfg;
    rcfg.resume = mid;
    Trainer b(rcfg);
    CHECK(b.current_step() == 6);

    for (int i = 0; i < 4; ++i) {
        const StepMetrics ma = a.step();
        const StepMetrics mb = b.step();
        CHECK(ma.step == mb.step);
        CHECK(ma.loss == mb.loss);
        CHECK(ma.grad_norm == mb.grad_norm);
    }
    for (const auto& [name, t] : a.model().params.tensors)
        CHECK(bitwise_equal(t, b.model().params.at(name)));
    fs::remove_all(dir);
}

TEST_CASE("run writes a metrics stream and checkpoints") {
    const fs::path dir = fs::temp_directory_path() / "camflow_train_run";
    fs::remove_all(dir);
    fs::create_directories(dir);

    TrainConfig cfg = base_config("pretrain_base");
    cfg.steps = 3;
    cfg.checkpoint_every = 2;
    cfg.out_dir = (dir / "run").string();
    Trainer tr(cfg);
    tr.run();

    std::ifstream in(fs::path(cfg.out_dir) / "metrics.jsonl");
    REQUIRE(in.good());
    std::string line;
    int rows = 0;
    while (std::getline(in, line)) {
        const auto row = nlohmann::json::parse(line);
        ++rows;
        CHECK(row.at("step").get<int>() == rows);
        CHECK(row.at("stage").get<std::string>() == "pretrain_base");
        CHECK(std::isfinite(row.at("loss").get<double>()));
        CHECK(row.at("grad_norm").get<double>() >= 0.0);
    }
    CHECK(rows == 3);
    CHECK(fs::exists(fs::path(cfg.out_dir) / "checkpoint_000002.ckpt"));
    CHECK(fs::exists(fs::path(cfg.out_dir) / "model.ckpt"));
    fs::remove_all(dir);
}
