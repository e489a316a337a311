#include "camflow/config.hpp"

#include <filesystem>
#include <fstream>
#include <initializer_list>

#include "camflow/errors.hpp"

namespace camflow::config {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void check_keys(const json& j, const std::string& section,
                std::initializer_list<const char*> allowed) {
    if (!j.is_object())
        throw ConfigError("config: section " + section + " must be an object");
    for (const auto& [k, v] : j.items()) {
        bool ok = false;
        for (const char* a : allowed)
            if (k == a) {
                ok = true;
                break;
            }
        if (!ok) throw ConfigError("config: unknown key " + section + "." + k);
    }
}

template <typename T>
void read(const json& j, const std::string& section, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("config: bad value for " + section + "." + key);
    }
}

void parse_scene(const json& j, scenegen::SceneGenConfig& s) {
    check_keys(j, "dataset.scene",
               {"frames", "height", "width", "min_half_size", "max_half_size", "min_xz",
                "max_xz", "min_y", "max_y", "max_speed", "min_prims", "max_prims"});
    const std::string sec = "dataset.scene";
    read(j, sec, "frames", s.frames);
    read(j, sec, "height", s.height);
    read(j, sec, "width", s.width);
    read(j, sec, "min_half_size", s.min_half_size);
    read(j, sec, "max_half_size", s.max_half_size);
    read(j, sec, "min_xz", s.min_xz);
    read(j, sec, "max_xz", s.max_xz);
    read(j, sec, "min_y", s.min_y);
    read(j, sec, "max_y", s.max_y);
    read(j, sec, "max_speed", s.max_speed);
    read(j, sec, "min_prims", s.min_prims);
    read(j, sec, "max_prims", s.max_prims);
}

void parse_dataset(const json& j, dataset::DatasetConfig& d, uint64_t& seed) {
    check_keys(j, "dataset",
               {"root", "scenes", "cameras", "seed", "scene", "fpx_scale",
                "eased_fraction", "speed_a_min", "speed_a_max", "kind_weights"});
    const std::string sec = "dataset";
    read(j, sec, "root", d.root);
    read(j, sec, "scenes", d.scenes);
    read(j, sec, "cameras", d.cameras);
    read(j, sec, "seed", seed);
    read(j, sec, "fpx_scale", d.fpx_scale);
    read(j, sec, "eased_fraction", d.eased_fraction);
    read(j, sec, "speed_a_min", d.speed_a_min);
    read(j, sec, "speed_a_max", d.speed_a_max);
    read(j, sec, "kind_weights", d.kind_weights);
    if (j.contains("scene")) parse_scene(j.at("scene"), d.scene);
}

void parse_model(const json& j, model::ModelConfig& m) {
    check_keys(j, "model",
               {"d", "depth", "heads", "p", "f", "c", "h", "w", "mode",
                "aligned_time_index"});
    const std::string sec = "model";
    read(j, sec, "d", m.d);
    read(j, sec, "depth", m.depth);
    read(j, sec, "heads", m.heads);
    read(j, sec, "p", m.p);
    read(j, sec, "f", m.f);
    read(j, sec, "c", m.c);
    read(j, sec, "h", m.h);
    read(j, sec, "w", m.w);
    read(j, sec, "aligned_time_index", m.aligned_time_index);
    if (j.contains("mode")) {
        std::string name;
        read(j, sec, "mode", name);
        m.mode = model::mode_from_name(name);
    }
}

void parse_train(const json& j, train::TrainConfig& t) {
    check_keys(j, "train",
               {"stage", "lr", "batch", "steps", "seed", "n_lo", "n_hi", "p_t2v", "p_i2v",
                "data_root", "out_dir", "init_from", "resume", "checkpoint_every",
                "freeze", "mode_drop", "clip", "condition_noise", "scene_limit",
                "cache_scenes"});
    const std::string sec = "train";
    read(j, sec, "stage", t.stage);
    read(j, sec, "lr", t.lr);
    read(j, sec, "batch", t.batch);
    read(j, sec, "steps", t.steps);
    read(j, sec, "seed", t.seed);
    read(j, sec, "n_lo", t.n_lo);
    read(j, sec, "n_hi", t.n_hi);
    read(j, sec, "p_t2v", t.p_t2v);
    read(j, sec, "p_i2v", t.p_i2v);
    read(j, sec, "data_root", t.data_root);
    read(j, sec, "out_dir", t.out_dir);
    read(j, sec, "init_from", t.init_from);
    read(j, sec, "resume", t.resume);
    read(j, sec, "checkpoint_every", t.checkpoint_every);
    read(j, sec, "freeze", t.freeze);
    read(j, sec, "mode_drop", t.mode_drop);
    read(j, sec, "clip", t.clip);
    read(j, sec, "condition_noise", t.condition_noise);
    read(j, sec, "scene_limit", t.scene_limit);
    read(j, sec, "cache_scenes", t.cache_scenes);
}

void parse_eval(const json& j, EvalRunConfig& e) {
    check_keys(j, "eval",
               {"checkpoint", "protocol", "data_root", "out_dir", "split", "max_scenes",
                "steps", "seed", "condition_noise_t", "dump_dir"});
    const std::string sec = "eval";
    read(j, sec, "checkpoint", e.checkpoint);
    read(j, sec, "protocol", e.protocol);
    read(j, sec, "data_root", e.data_root);
    read(j, sec, "out_dir", e.out_dir);
    read(j, sec, "split", e.opt.split);
    read(j, sec, "max_scenes", e.opt.max_scenes);
    read(j, sec, "steps", e.opt.steps);
    read(j, sec, "seed", e.opt.seed);
    read(j, sec, "condition_noise_t", e.opt.condition_noise_t);
    read(j, sec, "dump_dir", e.opt.dump_dir);
}

void parse_sample(const json& j, SampleRunConfig& s) {
    check_keys(j, "sample",
               {"checkpoint", "data_root", "scene", "source_cam", "mode", "trajectory",
                "camera_json", "speed_a", "steps", "seed", "condition_noise_t",
                "out_dir"});
    const std::string sec = "sample";
    read(j, sec, "checkpoint", s.checkpoint);
    read(j, sec, "data_root", s.data_root);
    read(j, sec, "scene", s.scene);
    read(j, sec, "source_cam", s.source_cam);
    read(j, sec, "mode", s.mode);
    read(j, sec, "trajectory", s.trajectory);
    read(j, sec, "camera_json", s.camera_json);
    read(j, sec, "speed_a", s.speed_a);
    read(j, sec, "steps", s.steps);
    read(j, sec, "seed", s.seed);
    read(j, sec, "condition_noise_t", s.condition_noise_t);
    read(j, sec, "out_dir", s.out_dir);
}

void parse_ablation(const json& j, AblationRunConfig& a) {
    check_keys(j, "ablation",
               {"kind", "pretrain_steps", "finetune_steps", "seeds", "base_checkpoint",
                "out_dir", "eval_split", "eval_scenes", "eval_steps"});
    const std::string sec = "ablation";
    read(j, sec, "kind", a.kind);
    read(j, sec, "pretrain_steps", a.pretrain_steps);
    read(j, sec, "finetune_steps", a.finetune_steps);
    read(j, sec, "seeds", a.seeds);
    read(j, sec, "base_checkpoint", a.base_checkpoint);
    read(j, sec, "out_dir", a.out_dir);
    read(j, sec, "eval_split", a.eval_split);
    read(j, sec, "eval_scenes", a.eval_scenes);
    read(j, sec, "eval_steps", a.eval_steps);
}

}  // namespace

RootConfig parse(const json& tree) {
    check_keys(tree, "(top level)",
               {"dataset", "model", "train", "eval", "sample", "ablation"});
    RootConfig cfg;
    if (tree.contains("dataset"))
        parse_dataset(tree.at("dataset"), cfg.dataset, cfg.dataset_seed);
    if (tree.contains("model")) parse_model(tree.at("model"), cfg.model);
    if (tree.contains("train")) parse_train(tree.at("train"), cfg.train);
    if (tree.contains("eval")) parse_eval(tree.at("eval"), cfg.eval);
    if (tree.contains("sample")) parse_sample(tree.at("sample"), cfg.sample);
    if (tree.contains("ablation")) parse_ablation(tree.at("ablation"), cfg.ablation);
    cfg.train.model = cfg.model;
    return cfg;
}

RootConfig load(const std::string& path) {
    if (path.empty()) return parse(json::object());
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path);
    json tree;
    try {
        in >> tree;
    } catch (const json::exception& e) {
        throw ConfigError("config: " + path + " is not valid JSON: " + e.what());
    }
    return parse(tree);
}

void apply_override(json& tree, const std::string& assignment) {
    const size_t eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0)
        throw ConfigError("override must look like section.key=value: " + assignment);
    const std::string path = assignment.substr(0, eq);
    const std::string raw = assignment.substr(eq + 1);

    json value = json::parse(raw, nullptr, false);
    if (value.is_discarded()) value = raw;

    json* node = &tree;
    size_t begin = 0;
    for (;;) {
        const size_t dot = path.find('.', begin);
        const std::string key = path.substr(begin, dot - begin);
        if (key.empty()) throw ConfigError("override has an empty path segment: " + path);
        if (dot == std::string::npos) {
            (*node)[key] = value;
            return;
        }
        node = &(*node)[key];
        begin = dot + 1;
    }
}

json to_json(const RootConfig& cfg) {
    json scene{{"frames", cfg.dataset.scene.frames},
               {"height", cfg.dataset.scene.height},
               {"width", cfg.dataset.scene.width},
               {"min_half_size", cfg.dataset.scene.min_half_size},
               {"max_half_size", cfg.dataset.scene.max_half_size},
               {"min_xz", cfg.dataset.scene.min_xz},
               {"max_xz", cfg.dataset.scene.max_xz},
               {"min_y", cfg.dataset.scene.min_y},
               {"max_y", cfg.dataset.scene.max_y},
               {"max_speed", cfg.dataset.scene.max_speed},
               {"min_prims", cfg.dataset.scene.min_prims},
               {"max_prims", cfg.dataset.scene.max_prims}};
    json dataset{{"root", cfg.dataset.root},
                 {"scenes", cfg.dataset.scenes},
                 {"cameras", cfg.dataset.cameras},
                 {"seed", cfg.dataset_seed},
                 {"scene", scene},
                 {"fpx_scale", cfg.dataset.fpx_scale},
                 {"eased_fraction", cfg.dataset.eased_fraction},
                 {"speed_a_min", cfg.dataset.speed_a_min},
                 {"speed_a_max", cfg.dataset.speed_a_max},
                 {"kind_weights", cfg.dataset.kind_weights}};
    json model{{"d", cfg.model.d},
               {"depth", cfg.model.depth},
               {"heads", cfg.model.heads},
               {"p", cfg.model.p},
               {"f", cfg.model.f},
               {"c", cfg.model.c},
               {"h", cfg.model.h},
               {"w", cfg.model.w},
               {"mode", model::mode_name(cfg.model.mode)},
               {"aligned_time_index", cfg.model.aligned_time_index}};
    json train{{"stage", cfg.train.stage},
               {"lr", cfg.train.lr},
               {"batch", cfg.train.batch},
               {"steps", cfg.train.steps},
               {"seed", cfg.train.seed},
               {"n_lo", cfg.train.n_lo},
               {"n_hi", cfg.train.n_hi},
               {"p_t2v", cfg.train.p_t2v},
               {"p_i2v", cfg.train.p_i2v},
               {"data_root", cfg.train.data_root},
               {"out_dir", cfg.train.out_dir},
               {"init_from", cfg.train.init_from},
               {"resume", cfg.train.resume},
               {"checkpoint_every", cfg.train.checkpoint_every},
               {"freeze", cfg.train.freeze},
               {"mode_drop", cfg.train.mode_drop},
               {"clip", cfg.train.clip},
               {"condition_noise", cfg.train.condition_noise},
               {"scene_limit", cfg.train.scene_limit},
               {"cache_scenes", cfg.train.cache_scenes}};
    json eval{{"checkpoint", cfg.eval.checkpoint},
              {"protocol", cfg.eval.protocol},
              {"data_root", cfg.eval.data_root},
              {"out_dir", cfg.eval.out_dir},
              {"split", cfg.eval.opt.split},
              {"max_scenes", cfg.eval.opt.max_scenes},
              {"steps", cfg.eval.opt.steps},
              {"seed", cfg.eval.opt.seed},
              {"condition_noise_t", cfg.eval.opt.condition_noise_t},
              {"dump_dir", cfg.eval.opt.dump_dir}};
    json sample{{"checkpoint", cfg.sample.checkpoint},
                {"data_root", cfg.sample.data_root},
                {"scene", cfg.sample.scene},
                {"source_cam", cfg.sample.source_cam},
                {"mode", cfg.sample.mode},
                {"trajectory", cfg.sample.trajectory},
                {"camera_json", cfg.sample.camera_json},
                {"speed_a", cfg.sample.speed_a},
                {"steps", cfg.sample.steps},
                {"seed", cfg.sample.seed},
                {"condition_noise_t", cfg.sample.condition_noise_t},
                {"out_dir", cfg.sample.out_dir}};
    json ablation{{"kind", cfg.ablation.kind},
                  {"pretrain_steps", cfg.ablation.pretrain_steps},
                  {"finetune_steps", cfg.ablation.finetune_steps},
                  {"seeds", cfg.ablation.seeds},
                  {"base_checkpoint", cfg.ablation.base_checkpoint},
                  {"out_dir", cfg.ablation.out_dir},
                  {"eval_split", cfg.ablation.eval_split},
                  {"eval_scenes", cfg.ablation.eval_scenes},
                  {"eval_steps", cfg.ablation.eval_steps}};
    return json{{"dataset", dataset}, {"model", model},   {"train", train},
                {"eval", eval},       {"sample", sample}, {"ablation", ablation}};
}

void echo(const RootConfig& cfg, const std::string& dir) {
    fs::create_directories(dir);
    std::ofstream out(fs::path(dir) / "config.json");
    if (!out) throw IoError("cannot write effective config under " + dir);
    out << to_json(cfg).dump(2) << "\n";
}

}  // namespace camflow::config
