#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "camflow/checkpoint.hpp"
#include "camflow/config.hpp"
#include "camflow/dataset.hpp"
#include "camflow/errors.hpp"
#include "camflow/eval.hpp"
#include "camflow/png_io.hpp"
#include "camflow/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace camflow;

namespace {

struct Common {
    std::string config_path;
    std::vector<std::string> sets;
    std::string out;
    std::optional<uint64_t> seed;
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("--config", c.config_path, "JSON config file");
    cmd->add_option("--set", c.sets, "override, e.g. --set train.steps=100");
    cmd->add_option("--out", c.out, "output directory (overrides the config)");
    cmd->add_option("--seed", c.seed, "seed (overrides the config)");
}

config::RootConfig effective_config(const Common& c) {
    json tree = json::object();
    if (!c.config_path.empty()) {
        std::ifstream in(c.config_path);
        if (!in) throw IoError("cannot open config " + c.config_path);
        try {
            in >> tree;
        } catch (const json::exception& e) {
            throw ConfigError("config: " + c.config_path + " is not valid JSON: " +
                              e.what());
        }
    }
    for (const std::string& s : c.sets) config::apply_override(tree, s);
    return config::parse(tree);
}

model::Model load_model(const std::string& path, std::string* mode_drop = nullptr) {
    if (path.empty()) throw ConfigError("a checkpoint path is required");
    ckpt::Checkpoint ck = ckpt::load(path);
    model::Model m = model::Model::init(ck.config, 0);
    ckpt::load_into(ck, m);
    if (mode_drop) {
        auto it = ck.meta.find("mode_drop");
        *mode_drop = it == ck.meta.end() ? "1" : it->second;
    }
    return m;
}

int cmd_render(const Common& c) {
    config::RootConfig cfg = effective_config(c);
    if (!c.out.empty()) cfg.dataset.root = c.out;
    if (c.seed) cfg.dataset_seed = *c.seed;
    config::echo(cfg, cfg.dataset.root);
    const dataset::Manifest man = dataset::render_dataset(cfg.dataset, cfg.dataset_seed);
    std::printf("rendered %zu scenes x %d cameras (%dx%d, %d frames) into %s\n",
                man.scenes.size(), man.cameras, man.width, man.height, man.frames,
                cfg.dataset.root.c_str());
    return 0;
}

int cmd_train(const Common& c) {
    config::RootConfig cfg = effective_config(c);
    if (!c.out.empty()) cfg.train.out_dir = c.out;
    if (c.seed) cfg.train.seed = *c.seed;
    if (cfg.train.out_dir.empty()) cfg.train.out_dir = "train_out";
    config::echo(cfg, cfg.train.out_dir);
    train::Trainer tr(cfg.train);
    tr.run();
    std::printf("%s finished at step %d; checkpoint %s/model.ckpt\n",
                cfg.train.stage.c_str(), tr.current_step(), cfg.train.out_dir.c_str());
    return 0;
}

int cmd_sample(const Common& c) {
    config::RootConfig cfg = effective_config(c);
    if (!c.out.empty()) cfg.sample.out_dir = c.out;
    if (c.seed) cfg.sample.seed = *c.seed;
    const config::SampleRunConfig& sc = cfg.sample;

    std::string drop;
    const model::Model m = load_model(sc.checkpoint, &drop);
    const dataset::SceneRecord rec = dataset::load_scene(sc.data_root, sc.scene);
    if (sc.source_cam < 0 || sc.source_cam >= static_cast<int>(rec.videos.size()))
        throw ConfigError("sample: source_cam out of range");
    const trajgen::Trajectory& src_traj =
        rec.trajectories[static_cast<size_t>(sc.source_cam)];

    trajgen::Trajectory traj;
    if (sc.trajectory == "file") {
        if (sc.camera_json.empty())
            throw ConfigError("sample: trajectory=file needs camera_json");
        traj = trajgen::load_trajectory(sc.camera_json);
        if (traj.frames() != m.cfg.f)
            throw ShapeError("sample: trajectory length does not match the model frames");
    } else {
        const trajgen::TrajKind kind = trajgen::kind_from_name(sc.trajectory);
        Rng rng = stream(sc.seed, 0x7aa7);
        traj = trajgen::gen_trajectory(kind, src_traj.poses.front(), rec.spec.subject, rng,
                                       m.cfg.f, src_traj.intrinsics);
        if (sc.speed_a != 0.0) traj = trajgen::apply_speed_profile(traj, sc.speed_a);
    }

    const CameraPose ref =
        sc.mode == "t2v" ? traj.poses.front() : src_traj.poses.front();
    const Tensor cams =
        trajgen::flatten_poses(trajgen::normalize_to_reference(traj, ref));

    eval::SampleRequest req;
    req.mode = sc.mode;
    req.steps = sc.steps;
    req.seed = sc.seed;
    req.condition_noise_t = sc.condition_noise_t;
    const Tensor source =
        sc.mode == "t2v" ? Tensor() : rec.videos[static_cast<size_t>(sc.source_cam)];
    const Tensor video = eval::generate(m, source, cams, rec.descriptor, req);
    if ((!drop.empty() && drop == "0") && sc.mode != "v2v")
        std::printf("note: checkpoint was trained without mode dropping; %s output is an "
                    "untrained mode\n",
                    sc.mode.c_str());

    config::echo(cfg, sc.out_dir);
    dataset::write_frames_bin((fs::path(sc.out_dir) / "frames.bin").string(), video);
    trajgen::save_trajectory((fs::path(sc.out_dir) / "camera.json").string(), traj);
    const int64_t frame_vol = video.numel() / m.cfg.f;
    for (int i = 0; i < m.cfg.f; ++i) {
        Tensor frame({m.cfg.c, m.cfg.h, m.cfg.w});
        std::copy_n(video.ptr() + i * frame_vol, frame_vol, frame.ptr());
        char name[32];
        std::snprintf(name, sizeof(name), "frame_%03d.png", i);
        png::write_png((fs::path(sc.out_dir) / name).string(), frame);
    }
    png::write_strip((fs::path(sc.out_dir) / "strip.png").string(), video);
    std::printf("sampled %s video (%d steps) into %s\n", sc.mode.c_str(), sc.steps,
                sc.out_dir.c_str());
    return 0;
}

int cmd_eval(const Common& c) {
    config::RootConfig cfg = effective_config(c);
    if (!c.out.empty()) cfg.eval.out_dir = c.out;
    if (c.seed) cfg.eval.opt.seed = *c.seed;

    std::string drop;
    const model::Model m = load_model(cfg.eval.checkpoint, &drop);
    cfg.eval.opt.checkpoint_mode_drop = drop != "0";
    config::echo(cfg, cfg.eval.out_dir);

    eval::EvalReport rep;
    if (cfg.eval.protocol == "v2v")
        rep = eval::eval_v2v(m, cfg.eval.data_root, cfg.eval.opt);
    else if (cfg.eval.protocol == "modes")
        rep = eval::eval_modes(m, cfg.eval.data_root, cfg.eval.opt);
    else
        throw ConfigError("eval: unknown protocol " + cfg.eval.protocol);
    rep.meta["checkpoint"] = cfg.eval.checkpoint;
    eval::write_report(rep, cfg.eval.out_dir);
    std::printf("evaluated %zu videos; report in %s\n", rep.rows.size(),
                cfg.eval.out_dir.c_str());
    for (const auto& [k, v] : rep.aggregates) std::printf("  %s = %.4f\n", k.c_str(), v);
    return 0;
}

int cmd_ablate(const Common& c) {
    config::RootConfig cfg = effective_config(c);
    if (!c.out.empty()) cfg.ablation.out_dir = c.out;
    if (c.seed) cfg.train.seed = *c.seed;

    eval::AblationOptions opt;
    opt.train = cfg.train;
    opt.pretrain_steps = cfg.ablation.pretrain_steps;
    opt.finetune_steps = cfg.ablation.finetune_steps;
    opt.seeds = cfg.ablation.seeds;
    opt.base_checkpoint = cfg.ablation.base_checkpoint;
    opt.out_dir = cfg.ablation.out_dir;
    opt.eval.split = cfg.ablation.eval_split;
    opt.eval.max_scenes = cfg.ablation.eval_scenes;
    opt.eval.steps = cfg.ablation.eval_steps;
    config::echo(cfg, opt.out_dir);

    eval::AblationTable tab;
    if (cfg.ablation.kind == "conditioning")
        tab = eval::ablate_conditioning(opt);
    else if (cfg.ablation.kind == "training")
        tab = eval::ablate_training(opt);
    else
        throw ConfigError("ablate: unknown kind " + cfg.ablation.kind);

    std::printf("%-16s %10s %10s %10s\n", "variant", "psnr", "reproj", "sync");
    for (const auto& r : tab.rows)
        std::printf("%-16s %10.3f %10.3f %10.3f\n", r.label.c_str(), r.mean_psnr,
                    r.mean_reproj, r.mean_sync);
    std::printf("table written under %s\n", opt.out_dir.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"synchronized multi-camera toy videos, flow-matching training, and "
                 "camera-controlled sampling"};
    app.require_subcommand(1);

    Common c_render, c_train, c_sample, c_eval, c_ablate;
    CLI::App* render =
        app.add_subcommand("render-dataset", "render scenes and write the dataset");
    add_common(render, c_render);
    CLI::App* train_cmd = app.add_subcommand("train", "pretrain or fine-tune a model");
    add_common(train_cmd, c_train);
    CLI::App* sample =
        app.add_subcommand("sample", "generate a video along a camera trajectory");
    add_common(sample, c_sample);
    CLI::App* eval_cmd = app.add_subcommand("eval", "oracle evaluation of a checkpoint");
    add_common(eval_cmd, c_eval);
    CLI::App* ablate = app.add_subcommand("ablate", "conditioning/training comparisons");
    add_common(ablate, c_ablate);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (render->parsed()) return cmd_render(c_render);
        if (train_cmd->parsed()) return cmd_train(c_train);
        if (sample->parsed()) return cmd_sample(c_sample);
        if (eval_cmd->parsed()) return cmd_eval(c_eval);
        if (ablate->parsed()) return cmd_ablate(c_ablate);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const IoError& e) {
        std::fprintf(stderr, "io error: %s\n", e.what());
        return 3;
    } catch (const NumericError& e) {
        std::fprintf(stderr, "numeric error: %s\n", e.what());
        return 4;
    }
    return 0;
}
