#include "camflow/dataset.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace camflow::dataset {

namespace fs = std::filesystem;
using nlohmann::json;

void DatasetConfig::validate() const {
    scene.validate();
    if (scenes < 1) throw ConfigError("dataset: scenes must be >= 1");
    if (cameras < 2) throw ConfigError("dataset: need at least 2 cameras per scene");
    if (eased_fraction < 0.0 || eased_fraction > 1.0)
        throw ConfigError("dataset: eased_fraction must be in [0,1]");
    if (speed_a_min > speed_a_max) throw ConfigError("dataset: speed_a range inverted");
    for (const auto& [name, w] : kind_weights) {
        trajgen::kind_from_name(name);
        if (w < 0.0) throw ConfigError("dataset: negative kind weight for " + name);
    }
}

std::string split_for_id(uint64_t id) {
    uint64_t sm = id ^ 0x51a7e5eedULL;
    const uint64_t h = splitmix64(sm) % 10;
    if (h < 8) return "train";
    return h == 8 ? "val" : "test";
}

std::vector<uint64_t> Manifest::ids(const std::string& split) const {
    std::vector<uint64_t> out;
    for (const auto& e : scenes)
        if (e.split == split) out.push_back(e.id);
    return out;
}

std::string scene_dir(const std::string& root, uint64_t id) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "scene_%05llu", static_cast<unsigned long long>(id));
    return (fs::path(root) / buf).string();
}

void write_frames_bin(const std::string& path, const Tensor& video) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    std::vector<float> buf(video.numel());
    for (int64_t i = 0; i < video.numel(); ++i) buf[i] = static_cast<float>(video[i]);
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!out) throw IoError("short write to " + path);
}

Tensor read_frames_bin(const std::string& path, int f, int c, int h, int w) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path);
    const int64_t n = static_cast<int64_t>(f) * c * h * w;
    std::vector<float> buf(n);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n * sizeof(float)));
    if (in.gcount() != static_cast<std::streamsize>(n * sizeof(float)))
        throw IoError("truncated frames.bin: " + path);
    Tensor video({f, c, h, w});
    for (int64_t i = 0; i < n; ++i) video[i] = buf[i];
    return video;
}

Tensor to_model_space(const Tensor& pixels) {
    Tensor out(pixels.shape());
    for (int64_t i = 0; i < pixels.numel(); ++i) out[i] = pixels[i] * 2.0 - 1.0;
    return out;
}

Tensor to_pixel_space(const Tensor& latent) {
    Tensor out(latent.shape());
    for (int64_t i = 0; i < latent.numel(); ++i)
        out[i] = std::clamp((latent[i] + 1.0) * 0.5, 0.0, 1.0);
    return out;
}

namespace {

json prim_to_json(const scenegen::PrimitiveSpec& p) {
    json j;
    j["shape"] = p.kind == scenegen::ShapeKind::Sphere ? "sphere" : "box";
    j["half_size"] = p.half_size;
    j["color_index"] = p.color_index;
    j["waypoints"] = json::array();
    for (const auto& w : p.waypoints) j["waypoints"].push_back({w.x(), w.y(), w.z()});
    j["waypoint_frames"] = p.waypoint_frames;
    return j;
}

scenegen::PrimitiveSpec prim_from_json(const json& j) {
    scenegen::PrimitiveSpec p;
    p.kind = j.at("shape").get<std::string>() == "box" ? scenegen::ShapeKind::Box
                                                       : scenegen::ShapeKind::Sphere;
    p.half_size = j.at("half_size").get<double>();
    p.color_index = j.at("color_index").get<int>();
    for (const auto& w : j.at("waypoints")) p.waypoints.emplace_back(w[0], w[1], w[2]);
    p.waypoint_frames = j.at("waypoint_frames").get<std::vector<int>>();
    return p;
}

json meta_to_json(const scenegen::SceneSpec& scene, const scenegen::RenderedScene& rendered) {
    json j;
    j["id"] = scene.id;
    j["frames"] = scene.frames;
    if (!rendered.videos.empty()) {
        const auto& s = rendered.videos[0].shape();
        j["height"] = s[2];
        j["width"] = s[3];
    }
    j["descriptor"] = scene.descriptor_tokens();
    j["subject"] = {scene.subject.x(), scene.subject.y(), scene.subject.z()};
    j["checker_a"] = {scene.checker_a.x(), scene.checker_a.y(), scene.checker_a.z()};
    j["checker_b"] = {scene.checker_b.x(), scene.checker_b.y(), scene.checker_b.z()};
    j["sky"] = {scene.sky.x(), scene.sky.y(), scene.sky.z()};
    j["prims"] = json::array();
    for (const auto& p : scene.prims) j["prims"].push_back(prim_to_json(p));
    // [camera][frame][prim] -> [u, v, visibility, pixels]
    json cams = json::array();
    for (const auto& per_cam : rendered.centroids) {
        json frames = json::array();
        for (const auto& per_frame : per_cam) {
            json prims = json::array();
            for (const auto& d : per_frame) prims.push_back({d.u, d.v, d.visibility, d.pixels});
            frames.push_back(std::move(prims));
        }
        cams.push_back(std::move(frames));
    }
    j["centroids"] = std::move(cams);
    return j;
}

}  // namespace

void write_scene(const std::string& root, const scenegen::SceneSpec& scene,
                 const scenegen::RenderedScene& rendered) {
    const fs::path final_dir = scene_dir(root, scene.id);
    const fs::path tmp_dir = final_dir.string() + ".tmp";
    std::error_code ec;
    fs::remove_all(tmp_dir, ec);
    fs::create_directories(tmp_dir);

    for (size_t k = 0; k < rendered.videos.size(); ++k) {
        const fs::path cam_dir = tmp_dir / ("cam_" + std::to_string(k));
        fs::create_directories(cam_dir);
        write_frames_bin((cam_dir / "frames.bin").string(), rendered.videos[k]);
        trajgen::save_trajectory((cam_dir / "camera.json").string(), rendered.trajectories[k]);
    }
    {
        std::ofstream out(tmp_dir / "meta.json");
        if (!out) throw IoError("cannot write meta.json for scene " + std::to_string(scene.id));
        out << meta_to_json(scene, rendered).dump(2) << "\n";
    }
    fs::remove_all(final_dir, ec);
    fs::rename(tmp_dir, final_dir);  // scene directory appears complete or not at all
}

void save_manifest(const std::string& root, const Manifest& manifest) {
    json j;
    j["frames"] = manifest.frames;
    j["channels"] = manifest.channels;
    j["height"] = manifest.height;
    j["width"] = manifest.width;
    j["cameras"] = manifest.cameras;
    j["scenes"] = json::array();
    for (const auto& e : manifest.scenes)
        j["scenes"].push_back({{"id", e.id}, {"split", e.split}});
    std::ofstream out(fs::path(root) / "manifest.json");
    if (!out) throw IoError("cannot write manifest.json under " + root);
    out << j.dump(2) << "\n";
}

Manifest load_manifest(const std::string& root) {
    std::ifstream in(fs::path(root) / "manifest.json");
    if (!in) throw IoError("cannot read manifest.json under " + root);
    json j = json::parse(in);
    Manifest m;
    m.frames = j.at("frames").get<int>();
    m.channels = j.at("channels").get<int>();
    m.height = j.at("height").get<int>();
    m.width = j.at("width").get<int>();
    m.cameras = j.at("cameras").get<int>();
    for (const auto& e : j.at("scenes"))
        m.scenes.push_back({e.at("id").get<uint64_t>(), e.at("split").get<std::string>()});
    return m;
}

std::vector<trajgen::Trajectory> sample_scene_trajectories(const DatasetConfig& config,
                                                           uint64_t seed, uint64_t scene_id,
                                                           const scenegen::SceneSpec& scene) {
    std::vector<std::string> names;
    std::vector<double> weights;
    if (config.kind_weights.empty()) {
        for (const char* n : {"pan", "tilt", "translate", "arc", "random", "static",
                              "zoom_in", "zoom_out"}) {
            names.push_back(n);
            weights.push_back(1.0);
        }
    } else {
        for (const auto& [n, w] : config.kind_weights) {
            names.push_back(n);
            weights.push_back(w);
        }
    }
    double total = 0.0;
    for (double w : weights) total += w;
    if (total <= 0.0) throw ConfigError("dataset: kind weights sum to zero");

    Intrinsics intr;
    intr.fpx = config.fpx_scale * config.scene.width;
    intr.cx = config.scene.width / 2.0;
    intr.cy = config.scene.height / 2.0;

    std::vector<trajgen::Trajectory> trajs;
    trajs.reserve(config.cameras);
    for (int k = 0; k < config.cameras; ++k) {
        Rng rng = stream(seed, scene_id, static_cast<uint64_t>(k), 0x7a4);
        const CameraPose start = trajgen::sample_start_pose(rng, scene.subject);
        double pick = rng.uniform() * total;
        size_t ki = 0;
        while (ki + 1 < weights.size() && pick >= weights[ki]) pick -= weights[ki++];
        trajgen::Trajectory traj = trajgen::gen_trajectory(
            trajgen::kind_from_name(names[ki]), start, scene.subject, rng, scene.frames, intr);
        if (rng.uniform() < config.eased_fraction) {
            const double a = rng.uniform(config.speed_a_min, config.speed_a_max) * rng.sign();
            traj = trajgen::apply_speed_profile(traj, a);
        }
        trajs.push_back(std::move(traj));
    }
    return trajs;
}

Manifest render_dataset(const DatasetConfig& config, uint64_t seed) {
    config.validate();
    fs::create_directories(config.root);
    Manifest manifest;
    manifest.frames = config.scene.frames;
    manifest.height = config.scene.height;
    manifest.width = config.scene.width;
    manifest.cameras = config.cameras;

    for (int si = 0; si < config.scenes; ++si) {
        uint64_t sm = seed ^ 0xd5c0ffeeULL;
        const uint64_t scene_seed = splitmix64(sm) + static_cast<uint64_t>(si);
        scenegen::SceneSpec scene = sample_scene(scene_seed, config.scene);
        scene.id = static_cast<uint64_t>(si);
        const auto trajs = sample_scene_trajectories(config, seed, scene.id, scene);
        const auto rendered =
            scenegen::render_scene(scene, trajs, config.scene.height, config.scene.width);
        write_scene(config.root, scene, rendered);
        manifest.scenes.push_back({scene.id, split_for_id(scene.id)});
    }
    save_manifest(config.root, manifest);
    return manifest;
}

SceneRecord load_scene(const std::string& root, uint64_t id) {
    const fs::path dir = scene_dir(root, id);
    std::ifstream in(dir / "meta.json");
    if (!in) throw IoError("cannot read meta.json in " + dir.string());
    json j = json::parse(in);

    SceneRecord rec;
    rec.spec.id = j.at("id").get<uint64_t>();
    rec.spec.frames = j.at("frames").get<int>();
    auto vec3_of = [](const json& a) { return Vec3(a[0], a[1], a[2]); };
    rec.spec.subject = vec3_of(j.at("subject"));
    rec.spec.checker_a = vec3_of(j.at("checker_a"));
    rec.spec.checker_b = vec3_of(j.at("checker_b"));
    rec.spec.sky = vec3_of(j.at("sky"));
    for (const auto& p : j.at("prims")) rec.spec.prims.push_back(prim_from_json(p));
    rec.descriptor = j.at("descriptor").get<std::vector<int>>();

    for (const auto& per_cam : j.at("centroids")) {
        std::vector<std::vector<scenegen::FrameDetection>> frames;
        for (const auto& per_frame : per_cam) {
            std::vector<scenegen::FrameDetection> prims;
            for (const auto& d : per_frame) {
                scenegen::FrameDetection det;
                det.u = d[0].get<double>();
                det.v = d[1].get<double>();
                det.visibility = d[2].get<double>();
                det.pixels = d[3].get<int>();
                prims.push_back(det);
            }
            frames.push_back(std::move(prims));
        }
        rec.centroids.push_back(std::move(frames));
    }

    const int h = j.at("height").get<int>();
    const int w = j.at("width").get<int>();
    for (int k = 0;; ++k) {
        const fs::path cam_dir = dir / ("cam_" + std::to_string(k));
        if (!fs::exists(cam_dir)) break;
        rec.trajectories.push_back(trajgen::load_trajectory((cam_dir / "camera.json").string()));
        rec.videos.push_back(
            read_frames_bin((cam_dir / "frames.bin").string(), rec.spec.frames, 3, h, w));
    }
    return rec;
}

}  // namespace camflow::dataset
