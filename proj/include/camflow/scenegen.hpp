#pragma once

#include <optional>
#include <string>
#include <vector>

#include "camflow/geometry.hpp"
#include "camflow/rng.hpp"
#include "camflow/tensor.hpp"
#include "camflow/trajgen.hpp"

namespace camflow::scenegen {

enum class ShapeKind { Sphere, Box };

// Fixed color palette for primitives; descriptor color tokens index into it.
// Pairwise RGB distances exceed 0.5 so the eval color segmenter (tolerance
// 0.25) is unambiguous.
const std::vector<Vec3>& palette();

struct PrimitiveSpec {
    ShapeKind kind = ShapeKind::Sphere;
    double half_size = 0.4;  // sphere radius or box half-extent, meters
    int color_index = 0;     // into palette()
    std::vector<Vec3> waypoints;      // >= 1; single waypoint = static
    std::vector<int> waypoint_frames;  // strictly increasing; [0] or 0..f-1 span

    Vec3 color() const { return palette()[color_index]; }
    int motion_class() const;  // 0 static, 1 linear, 2 polyline
};

struct SceneSpec {
    uint64_t id = 0;
    int frames = 16;
    std::vector<PrimitiveSpec> prims;  // 1..4
    Vec3 checker_a = Vec3(0.32, 0.32, 0.34);
    Vec3 checker_b = Vec3(0.55, 0.55, 0.58);
    Vec3 sky = Vec3(0.67, 0.78, 0.90);
    Vec3 subject = Vec3::Zero();  // centroid of primitive positions at frame 0

    std::vector<int> descriptor_tokens() const;  // deterministic scene encoding
};

// Descriptor vocabulary layout (small fixed codes): 0 pad, 1-4 primitive
// count, 5-6 shape, 7-14 color, 15-17 motion class.
inline constexpr int kDescPad = 0;
inline constexpr int kDescCountBase = 1;
inline constexpr int kDescShapeBase = 5;
inline constexpr int kDescColorBase = 7;
inline constexpr int kDescMotionBase = 15;
inline constexpr int kDescVocab = 18;
inline constexpr int kMaxPrims = 4;
inline constexpr int kDescLen = 1 + 3 * kMaxPrims;

struct SceneGenConfig {
    int frames = 16;
    int height = 48;
    int width = 48;
    double min_half_size = 0.25, max_half_size = 0.60;
    double min_xz = -1.6, max_xz = 1.6;   // waypoint horizontal range, meters
    double min_y = 0.35, max_y = 2.0;     // waypoint height range
    double max_speed = 0.15;              // meters per frame
    int min_prims = 1, max_prims = 4;

    void validate() const;  // throws ConfigError when a range is inverted
};

struct FrameDetection {
    double u = 0.0, v = 0.0;    // mean pixel of the primitive's front pixels
    double visibility = 0.0;    // front pixels / solo pixels
    int pixels = 0;             // front pixel count
    bool visible() const { return pixels > 0; }
};

struct RenderedScene {
    uint64_t id = 0;
    std::vector<Tensor> videos;                // per camera, f x c x h x w in [0,1]
    std::vector<trajgen::Trajectory> trajectories;
    // [camera][frame][primitive]
    std::vector<std::vector<std::vector<FrameDetection>>> centroids;
};

// Deterministic scene sampling; the seed alone fixes the result.
SceneSpec sample_scene(uint64_t seed, const SceneGenConfig& config = {});

// Piecewise-linear waypoint interpolation at an integer frame.
std::vector<Vec3> animate(const SceneSpec& scene, int frame);
Vec3 animate_primitive(const PrimitiveSpec& prim, int frame);

// Z-buffered render of checker ground plane + flat-shaded primitives.
Tensor render_frame(const SceneSpec& scene, const CameraPose& pose, const Intrinsics& intr,
                    int frame, int height, int width,
                    std::vector<FrameDetection>* detections = nullptr);

RenderedScene render_scene(const SceneSpec& scene, const std::vector<trajgen::Trajectory>& trajs,
                           int height, int width);

}  // namespace camflow::scenegen
