#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <filesystem>

#include <json.hpp>

#include "camflow/checkpoint.hpp"
#include "camflow/config.hpp"
#include "camflow/dataset.hpp"
#include "camflow/errors.hpp"
#include "camflow/eval.hpp"
#include "camflow/trajgen.hpp"
#include "camflow/train.hpp"

namespace py = pybind11;
namespace fs = std::filesystem;
using nlohmann::json;
using namespace camflow;

namespace {

config::RootConfig make_config(const std::string& config_json,
                               const std::vector<std::string>& overrides) {
    json tree = json::object();
    if (!config_json.empty()) {
        try {
            tree = json::parse(config_json);
        } catch (const json::exception& e) {
            throw ConfigError(std::string("config is not valid JSON: ") + e.what());
        }
    }
    for (const std::string& s : overrides) config::apply_override(tree, s);
    return config::parse(tree);
}

model::Model load_model(const std::string& path, bool* mode_drop = nullptr) {
    ckpt::Checkpoint ck = ckpt::load(path);
    model::Model m = model::Model::init(ck.config, 0);
    ckpt::load_into(ck, m);
    if (mode_drop) {
        auto it = ck.meta.find("mode_drop");
        *mode_drop = it == ck.meta.end() || it->second != "0";
    }
    return m;
}

py::dict manifest_summary(const dataset::Manifest& man) {
    py::dict out;
    out["scenes"] = man.scenes.size();
    out["cameras"] = man.cameras;
    out["frames"] = man.frames;
    out["height"] = man.height;
    out["width"] = man.width;
    out["train"] = man.ids("train").size();
    out["val"] = man.ids("val").size();
    out["test"] = man.ids("test").size();
    return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "synchronized multi-camera toy videos, flow-matching training, and "
              "camera-controlled sampling";

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<IoError>(m, "IoError", PyExc_OSError);
    py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

    m.def("easing_fraction", &trajgen::easing_fraction, py::arg("a"), py::arg("x"),
          "fraction of a path covered at normalized index x under speed shaping a");

    m.def(
        "split_for_id",
        [](uint64_t id) { return dataset::split_for_id(id); },
        py::arg("id"), "deterministic train/val/test assignment of a scene id");

    m.def(
        "sequence_length",
        [](const std::string& mode, int f, int h, int w, int p) {
            model::ModelConfig cfg;
            cfg.mode = model::mode_from_name(mode);
            cfg.f = f;
            cfg.h = h;
            cfg.w = w;
            cfg.p = p;
            return cfg.sequence_length();
        },
        py::arg("mode"), py::arg("f"), py::arg("h"), py::arg("w"), py::arg("p"),
        "conditioned token count per sample for a source-injection mode");

    m.def(
        "psnr",
        [](const std::vector<double>& a, const std::vector<double>& b) {
            if (a.size() != b.size()) throw ShapeError("psnr: length mismatch");
            Tensor ta({static_cast<int64_t>(a.size())});
            Tensor tb({static_cast<int64_t>(b.size())});
            for (size_t i = 0; i < a.size(); ++i) {
                ta[static_cast<int64_t>(i)] = a[i];
                tb[static_cast<int64_t>(i)] = b[i];
            }
            return eval::psnr(ta, tb);
        },
        py::arg("a"), py::arg("b"), "peak signal-to-noise ratio of [0,1] signals, <= 99");

    m.def(
        "render_dataset",
        [](const std::string& config_json, const std::vector<std::string>& overrides) {
            const config::RootConfig cfg = make_config(config_json, overrides);
            return manifest_summary(dataset::render_dataset(cfg.dataset, cfg.dataset_seed));
        },
        py::arg("config_json") = "", py::arg("overrides") = std::vector<std::string>{},
        "render scenes and write the dataset; returns split counts");

    m.def(
        "train",
        [](const std::string& config_json, const std::vector<std::string>& overrides) {
            config::RootConfig cfg = make_config(config_json, overrides);
            if (cfg.train.out_dir.empty()) throw ConfigError("train.out_dir is required");
            train::Trainer tr(cfg.train);
            tr.run();
            py::dict out;
            out["step"] = tr.current_step();
            out["checkpoint"] = (fs::path(cfg.train.out_dir) / "model.ckpt").string();
            return out;
        },
        py::arg("config_json") = "", py::arg("overrides") = std::vector<std::string>{},
        "run a training stage to completion; returns the final checkpoint path");

    m.def(
        "evaluate",
        [](const std::string& checkpoint, const std::string& data_root,
           const std::string& protocol, const std::string& split, int steps, uint64_t seed,
           int max_scenes) {
            bool drop = true;
            const model::Model mdl = load_model(checkpoint, &drop);
            eval::EvalOptions opt;
            opt.split = split;
            opt.steps = steps;
            opt.seed = seed;
            opt.max_scenes = max_scenes;
            opt.checkpoint_mode_drop = drop;
            eval::EvalReport rep;
            if (protocol == "v2v")
                rep = eval::eval_v2v(mdl, data_root, opt);
            else if (protocol == "modes")
                rep = eval::eval_modes(mdl, data_root, opt);
            else
                throw ConfigError("evaluate: unknown protocol " + protocol);
            py::dict out;
            for (const auto& [k, v] : rep.aggregates) out[k.c_str()] = v;
            return out;
        },
        py::arg("checkpoint"), py::arg("data_root"), py::arg("protocol") = "v2v",
        py::arg("split") = "test", py::arg("steps") = 20, py::arg("seed") = 0,
        py::arg("max_scenes") = 0, "oracle evaluation of a checkpoint; returns aggregates");

    m.def(
        "sample_video",
        [](const std::string& checkpoint, const std::string& data_root, uint64_t scene,
           int source_cam, const std::string& mode, int steps, uint64_t seed) {
            const model::Model mdl = load_model(checkpoint);
            const dataset::SceneRecord rec = dataset::load_scene(data_root, scene);
            if (source_cam < 0 || source_cam >= static_cast<int>(rec.videos.size()))
                throw ConfigError("sample_video: source_cam out of range");
            const auto& traj = rec.trajectories[static_cast<size_t>(source_cam)];
            const Tensor cams = trajgen::flatten_poses(
                trajgen::normalize_to_reference(traj, traj.poses.front()));
            eval::SampleRequest req;
            req.mode = mode;
            req.steps = steps;
            req.seed = seed;
            const Tensor source =
                mode == "t2v" ? Tensor() : rec.videos[static_cast<size_t>(source_cam)];
            const Tensor video = eval::generate(mdl, source, cams, rec.descriptor, req);
            std::vector<int64_t> shape = video.shape();
            std::vector<double> data(video.ptr(), video.ptr() + video.numel());
            return py::make_tuple(shape, data);
        },
        py::arg("checkpoint"), py::arg("data_root"), py::arg("scene") = 0,
        py::arg("source_cam") = 0, py::arg("mode") = "v2v", py::arg("steps") = 20,
        py::arg("seed") = 0,
        "regenerate a scene camera's own view; returns (shape, flat pixels in [0,1])");

    m.def(
        "default_config",
        []() { return config::to_json(config::RootConfig{}).dump(2); },
        "the effective default configuration as a JSON string");
}
