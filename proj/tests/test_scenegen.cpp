#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "camflow/errors.hpp"
#include "camflow/geometry.hpp"
#include "camflow/scenegen.hpp"
#include "camflow/trajgen.hpp"

using namespace camflow;
using namespace camflow::scenegen;

namespace {

bool specs_equal(const SceneSpec& a, const SceneSpec& b) {
    if (a.id != b.id || a.frames != b.frames || a.prims.size() != b.prims.size()) return false;
    if ((a.subject - b.subject).norm() != 0.0) return false;
    for (size_t i = 0; i < a.prims.size(); ++i) {
        const auto& pa = a.prims[i];
        const auto& pb = b.prims[i];
        if (pa.kind != pb.kind || pa.half_size != pb.half_size ||
            pa.color_index != pb.color_index || pa.waypoint_frames != pb.waypoint_frames ||
            pa.waypoints.size() != pb.waypoints.size())
            return false;
        for (size_t k = 0; k < pa.waypoints.size(); ++k)
            if ((pa.waypoints[k] - pb.waypoints[k]).norm() != 0.0) return false;
    }
    return true;
}

SceneSpec single_sphere_scene(const Vec3& center, double radius, int color_index, int frames = 4) {
    SceneSpec scene;
    scene.frames = frames;
    PrimitiveSpec prim;
    prim.kind = ShapeKind::Sphere;
    prim.half_size = radius;
    prim.color_index = color_index;
    prim.waypoints = {center};
    prim.waypoint_frames = {0};
    scene.prims.push_back(prim);
    scene.subject = center;
    return scene;
}

}  // namespace

TEST_CASE("palette colors are pairwise far apart and clear of the background") {
    const auto& colors = palette();
    REQUIRE(colors.size() >= 8);
    const SceneSpec defaults;
    for (size_t i = 0; i < colors.size(); ++i) {
        for (int k = 0; k < 3; ++k) {
            CHECK(colors[i][k] >= 0.0);
            CHECK(colors[i][k] <= 1.0);
        }
        for (size_t j = i + 1; j < colors.size(); ++j)
            CHECK((colors[i] - colors[j]).norm() > 0.5);
        // a 0.25-tolerance match can never hit ground or sky pixels
        CHECK((colors[i] - defaults.checker_a).norm() > 0.25);
        CHECK((colors[i] - defaults.checker_b).norm() > 0.25);
        CHECK((colors[i] - defaults.sky).norm() > 0.25);
    }
}

TEST_CASE("scene sampling is bit-identical per seed and sensitive to it") {
    const SceneSpec a = sample_scene(0);
    const SceneSpec b = sample_scene(0);
    CHECK(specs_equal(a, b));
    bool any_diff = false;
    for (uint64_t s = 1; s < 8 && !any_diff; ++s) any_diff = !specs_equal(a, sample_scene(s));
    CHECK(any_diff);
}

TEST_CASE("sampled scenes stay inside the configured ranges") {
    const SceneGenConfig cfg;
    for (uint64_t seed = 0; seed < 1000; ++seed) {
        const SceneSpec scene = sample_scene(seed, cfg);
        REQUIRE(scene.prims.size() >= static_cast<size_t>(cfg.min_prims));
        REQUIRE(scene.prims.size() <= static_cast<size_t>(cfg.max_prims));
        Vec3 centroid = Vec3::Zero();
        for (const auto& p : scene.prims) {
            CHECK(p.half_size >= cfg.min_half_size);
            CHECK(p.half_size <= cfg.max_half_size);
            CHECK(p.color_index >= 0);
            CHECK(p.color_index < static_cast<int>(palette().size()));
            REQUIRE(!p.waypoints.empty());
            REQUIRE(p.waypoints.size() == p.waypoint_frames.size());
            CHECK(p.waypoint_frames.front() == 0);
            if (p.waypoint_frames.size() > 1) CHECK(p.waypoint_frames.back() == cfg.frames - 1);
            for (size_t k = 1; k < p.waypoint_frames.size(); ++k)
                CHECK(p.waypoint_frames[k] > p.waypoint_frames[k - 1]);
            for (const auto& w : p.waypoints) {
                CHECK(w.x() >= cfg.min_xz);
                CHECK(w.x() <= cfg.max_xz);
                CHECK(w.z() >= cfg.min_xz);
                CHECK(w.z() <= cfg.max_xz);
                CHECK(w.y() >= p.half_size + 0.05 - 1e-12);
                CHECK(w.y() <= cfg.max_y);
            }
            centroid += p.waypoints.front();
        }
        // distinct colors within a scene keep the segmenter unambiguous
        for (size_t i = 0; i < scene.prims.size(); ++i)
            for (size_t j = i + 1; j < scene.prims.size(); ++j)
                CHECK(scene.prims[i].color_index != scene.prims[j].color_index);
        centroid /= static_cast<double>(scene.prims.size());
        CHECK((scene.subject - centroid).norm() < 1e-12);
    }
}

TEST_CASE("inverted config ranges are rejected") {
    SceneGenConfig bad;
    bad.min_xz = 1.0;
    bad.max_xz = -1.0;
    CHECK_THROWS_AS(sample_scene(0, bad), ConfigError);
    SceneGenConfig one_frame;
    one_frame.frames = 1;
    CHECK_THROWS_AS(sample_scene(0, one_frame), ConfigError);
    SceneGenConfig still;
    still.max_speed = 0.0;
    CHECK_THROWS_AS(sample_scene(0, still), ConfigError);
    SceneGenConfig crowded;
    crowded.max_prims = kMaxPrims + 1;
    CHECK_THROWS_AS(sample_scene(0, crowded), ConfigError);
}

TEST_CASE("animate interpolates waypoints piecewise-linearly") {
    SceneSpec scene;
    scene.frames = 11;
    PrimitiveSpec prim;
    prim.waypoints = {Vec3(0, 0, 0), Vec3(2, 0, 0)};
    prim.waypoint_frames = {0, 10};
    scene.prims.push_back(prim);

    CHECK((animate(scene, 0)[0] - Vec3(0, 0, 0)).norm() == 0.0);
    CHECK((animate(scene, 10)[0] - Vec3(2, 0, 0)).norm() == 0.0);
    CHECK((animate(scene, 5)[0] - Vec3(1, 0, 0)).norm() < 1e-12);
    CHECK((animate(scene, 3)[0] - Vec3(0.6, 0, 0)).norm() < 1e-12);
    CHECK_THROWS_AS(animate(scene, -1), BoundsError);
    CHECK_THROWS_AS(animate(scene, 11), BoundsError);

    // multi-segment path hits every waypoint exactly at its frame
    PrimitiveSpec poly;
    poly.waypoints = {Vec3(0, 1, 0), Vec3(1, 1, 1), Vec3(-1, 2, 0)};
    poly.waypoint_frames = {0, 4, 10};
    for (size_t k = 0; k < poly.waypoints.size(); ++k)
        CHECK((animate_primitive(poly, poly.waypoint_frames[k]) - poly.waypoints[k]).norm() == 0.0);
    CHECK((animate_primitive(poly, 7) - (poly.waypoints[1] * 0.5 + poly.waypoints[2] * 0.5)).norm() <
          1e-12);
}

TEST_CASE("per-frame motion respects the speed bound") {
    const SceneGenConfig cfg;
    for (uint64_t seed = 0; seed < 200; ++seed) {
        const SceneSpec scene = sample_scene(seed, cfg);
        for (int fi = 0; fi + 1 < scene.frames; ++fi) {
            const auto now = animate(scene, fi);
            const auto next = animate(scene, fi + 1);
            for (size_t pi = 0; pi < now.size(); ++pi)
                CHECK((next[pi] - now[pi]).norm() <= cfg.max_speed + 1e-9);
        }
    }
}

TEST_CASE("descriptor tokens encode count, shape, color, and motion") {
    SceneSpec scene;
    scene.frames = 8;
    PrimitiveSpec a;
    a.kind = ShapeKind::Box;
    a.color_index = 2;
    a.waypoints = {Vec3(0, 1, 0)};
    a.waypoint_frames = {0};
    PrimitiveSpec b;
    b.kind = ShapeKind::Sphere;
    b.color_index = 5;
    b.waypoints = {Vec3(0, 1, 0), Vec3(1, 1, 0), Vec3(1, 1, 1)};
    b.waypoint_frames = {0, 3, 7};
    scene.prims = {a, b};

    const std::vector<int> toks = scene.descriptor_tokens();
    REQUIRE(static_cast<int>(toks.size()) == kDescLen);
    const std::vector<int> expect = {kDescCountBase + 1,
                                     kDescShapeBase + 1, kDescColorBase + 2, kDescMotionBase,
                                     kDescShapeBase,     kDescColorBase + 5, kDescMotionBase + 2,
                                     0, 0, 0, 0, 0, 0};
    CHECK(toks == expect);
    for (uint64_t seed = 0; seed < 300; ++seed) {
        const auto t = sample_scene(seed).descriptor_tokens();
        REQUIRE(static_cast<int>(t.size()) == kDescLen);
        for (int v : t) {
            CHECK(v >= 0);
            CHECK(v < kDescVocab);
        }
    }
}

TEST_CASE("a centered sphere colors the principal pixel and its detected centroid") {
    const int color = 3;
    const SceneSpec scene = single_sphere_scene(Vec3(0, 1, 0), 0.4, color);
    const CameraPose pose = look_at_pose(Vec3(0, 1, -3), Vec3(0, 1, 0));
    const Intrinsics intr;

    std::vector<FrameDetection> det;
    const Tensor img = render_frame(scene, pose, intr, 0, 48, 48, &det);
    REQUIRE(img.ndim() == 3);
    REQUIRE(img.dim(0) == 3);

    const int64_t plane = 48 * 48;
    const int64_t idx = 24 * 48 + 24;
    const Vec3 expect = palette()[color];
    CHECK(img[idx] == expect.x());
    CHECK(img[plane + idx] == expect.y());
    CHECK(img[2 * plane + idx] == expect.z());

    REQUIRE(det.size() == 1);
    CHECK(det[0].visible());
    CHECK(det[0].visibility == 1.0);
    CHECK(std::fabs(det[0].u - intr.cx) < 0.2);
    CHECK(std::fabs(det[0].v - intr.cy) < 0.2);
}

TEST_CASE("the z-buffer keeps the nearer primitive in overlap pixels") {
    SceneSpec scene = single_sphere_scene(Vec3(0, 1, 0), 0.4, 0);
    PrimitiveSpec back;
    back.kind = ShapeKind::Box;
    back.half_size = 0.4;
    back.color_index = 1;
    back.waypoints = {Vec3(0, 1, 2)};
    back.waypoint_frames = {0};
    scene.prims.push_back(back);

    const CameraPose pose = look_at_pose(Vec3(0, 1, -3), Vec3(0, 1, 0));
    std::vector<FrameDetection> det;
    const Tensor img = render_frame(scene, pose, Intrinsics{}, 0, 48, 48, &det);

    const int64_t plane = 48 * 48;
    const int64_t idx = 24 * 48 + 24;
    const Vec3 front_color = palette()[0];
    CHECK(img[idx] == front_color.x());
    CHECK(img[plane + idx] == front_color.y());
    CHECK(img[2 * plane + idx] == front_color.z());

    REQUIRE(det.size() == 2);
    CHECK(det[0].visibility == 1.0);
    // the nearer sphere subtends a larger angle, so the box is fully hidden
    CHECK(det[1].pixels == 0);
    CHECK(!det[1].visible());
}

TEST_CASE("rendering is bit-identical and stays inside [0,1]") {
    const SceneSpec scene = sample_scene(17);
    Rng rng = stream(17, 0x77);
    const CameraPose pose = trajgen::sample_start_pose(rng, scene.subject);
    const Tensor a = render_frame(scene, pose, Intrinsics{}, 0, 48, 48);
    const Tensor b = render_frame(scene, pose, Intrinsics{}, 0, 48, 48);
    CHECK(bitwise_equal(a, b));
    for (int64_t i = 0; i < a.numel(); ++i) {
        CHECK(a[i] >= 0.0);
        CHECK(a[i] <= 1.0);
    }
}

TEST_CASE("detected centroids track the analytic projection") {
    // Pixel means of perspective silhouettes are biased away from the
    // projected center for close, large primitives, so the contract is a
    // quantile: at least 95% of unoccluded detections land within a pixel.
    const SceneGenConfig cfg;
    int checked = 0, within = 0;
    for (uint64_t seed = 0; seed < 25; ++seed) {
        const SceneSpec scene = sample_scene(seed, cfg);
        Rng rng = stream(seed, 0x99);
        const CameraPose pose = trajgen::sample_start_pose(rng, scene.subject);
        for (int fi = 0; fi < scene.frames; fi += 5) {
            std::vector<FrameDetection> det;
            render_frame(scene, pose, Intrinsics{}, fi, cfg.height, cfg.width, &det);
            const auto centers = animate(scene, fi);
            for (size_t pi = 0; pi < det.size(); ++pi) {
                if (det[pi].visibility < 0.999 || det[pi].pixels < 4) continue;
                PixelPoint px;
                REQUIRE(try_project(centers[pi], pose, Intrinsics{}, px));
                if (px.u < 3 || px.u > cfg.width - 3 || px.v < 3 || px.v > cfg.height - 3)
                    continue;  // clipped silhouettes bias the pixel mean
                const double err = std::hypot(det[pi].u - px.u, det[pi].v - px.v);
                CHECK(err <= 4.0);
                ++checked;
                if (err <= 1.0) ++within;
            }
        }
    }
    CHECK(checked > 50);
    CHECK(within >= (checked * 95 + 99) / 100);
}

TEST_CASE("render_scene produces synchronized per-camera videos") {
    const SceneSpec scene = sample_scene(5);
    std::vector<trajgen::Trajectory> trajs;
    for (int k = 0; k < 3; ++k) {
        Rng rng = stream(5, 0xca0 + k);
        const CameraPose start = trajgen::sample_start_pose(rng, scene.subject);
        trajs.push_back(trajgen::gen_trajectory(trajgen::TrajKind::Arc, start, scene.subject, rng,
                                                scene.frames));
    }
    const RenderedScene rendered = render_scene(scene, trajs, 32, 32);
    REQUIRE(rendered.videos.size() == 3);
    REQUIRE(rendered.trajectories.size() == 3);
    REQUIRE(rendered.centroids.size() == 3);
    for (int k = 0; k < 3; ++k) {
        REQUIRE(rendered.videos[k].ndim() == 4);
        CHECK(rendered.videos[k].dim(0) == scene.frames);
        CHECK(rendered.videos[k].dim(1) == 3);
        CHECK(rendered.videos[k].dim(2) == 32);
        CHECK(rendered.videos[k].dim(3) == 32);
        REQUIRE(static_cast<int>(rendered.centroids[k].size()) == scene.frames);
        for (const auto& per_frame : rendered.centroids[k])
            CHECK(per_frame.size() == scene.prims.size());
    }

    std::vector<trajgen::Trajectory> bad = trajs;
    bad[1].poses.pop_back();
    CHECK_THROWS_AS(render_scene(scene, bad, 32, 32), ShapeError);
}

TEST_CASE("a static scene renders constant videos from a static camera") {
    SceneSpec scene = single_sphere_scene(Vec3(0.2, 0.9, 0.1), 0.35, 6, 5);
    Rng rng = stream(3, 0x5a);
    const CameraPose start = trajgen::sample_start_pose(rng, scene.subject);
    const auto traj =
        trajgen::gen_trajectory(trajgen::TrajKind::Static, start, scene.subject, rng, scene.frames);
    const RenderedScene rendered = render_scene(scene, {traj, traj}, 24, 24);

    const int64_t frame_elems = 3 * 24 * 24;
    for (const auto& video : rendered.videos)
        for (int fi = 1; fi < scene.frames; ++fi)
            for (int64_t i = 0; i < frame_elems; ++i)
                REQUIRE(video[i] == video[fi * frame_elems + i]);
    CHECK(bitwise_equal(rendered.videos[0], rendered.videos[1]));
}
