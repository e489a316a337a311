#pragma once

#include <map>
#include <string>
#include <vector>

#include "camflow/scenegen.hpp"
#include "camflow/trajgen.hpp"

namespace camflow::dataset {

struct DatasetConfig {
    std::string root = "data";
    int scenes = 400;
    int cameras = 10;
    scenegen::SceneGenConfig scene;
    double fpx_scale = 1.0;            // fpx = fpx_scale * width
    double eased_fraction = 0.5;       // share of variable-speed trajectories
    double speed_a_min = 0.5, speed_a_max = 4.0;
    std::map<std::string, double> kind_weights;  // empty = uniform over all kinds

    void validate() const;
};

struct SceneEntry {
    uint64_t id = 0;
    std::string split;  // train | val | test
};

struct Manifest {
    std::vector<SceneEntry> scenes;
    int frames = 0, channels = 3, height = 0, width = 0, cameras = 0;

    std::vector<uint64_t> ids(const std::string& split) const;
};

// Scene split by id hash: 80/10/10.
std::string split_for_id(uint64_t id);

struct SceneRecord {
    scenegen::SceneSpec spec;
    std::vector<Tensor> videos;  // per camera, f x c x h x w
    std::vector<trajgen::Trajectory> trajectories;
    std::vector<std::vector<std::vector<scenegen::FrameDetection>>> centroids;
    std::vector<int> descriptor;
};

// Renders every camera of one scene and writes its directory atomically
// (complete or absent).
void write_scene(const std::string& root, const scenegen::SceneSpec& scene,
                 const scenegen::RenderedScene& rendered);

// Generates scenes+trajectories from the seed and writes the full layout
// plus manifest.json. Returns the manifest.
Manifest render_dataset(const DatasetConfig& config, uint64_t seed);

Manifest load_manifest(const std::string& root);
void save_manifest(const std::string& root, const Manifest& manifest);

SceneRecord load_scene(const std::string& root, uint64_t id);

// Raw float32 little-endian video files (frame-major f x c x h x w).
void write_frames_bin(const std::string& path, const Tensor& video);
Tensor read_frames_bin(const std::string& path, int f, int c, int h, int w);

// Pixel space [0,1] <-> model space [-1,1].
Tensor to_model_space(const Tensor& pixels);
Tensor to_pixel_space(const Tensor& latent);  // clamps into [0,1]

std::string scene_dir(const std::string& root, uint64_t id);

// Samples the per-camera trajectories for a scene (start pose, kind, speed).
std::vector<trajgen::Trajectory> sample_scene_trajectories(const DatasetConfig& config,
                                                           uint64_t seed, uint64_t scene_id,
                                                           const scenegen::SceneSpec& scene);

}  // namespace camflow::dataset
