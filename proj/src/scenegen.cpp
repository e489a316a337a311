#include "camflow/scenegen.hpp"

#include <algorithm>
#include <cmath>

namespace camflow::scenegen {

const std::vector<Vec3>& palette() {
    // Pairwise distances > 0.5 and > 0.25 from the checker/sky colors, so a
    // 0.25-tolerance nearest-color match is never ambiguous.
    static const std::vector<Vec3> colors = {
        Vec3(0.95, 0.08, 0.08),  // red
        Vec3(0.08, 0.80, 0.08),  // green
        Vec3(0.10, 0.15, 0.95),  // blue
        Vec3(0.95, 0.90, 0.08),  // yellow
        Vec3(0.90, 0.10, 0.90),  // magenta
        Vec3(0.08, 0.90, 0.90),  // cyan
        Vec3(0.95, 0.95, 0.95),  // white
        Vec3(0.05, 0.05, 0.12),  // ink
    };
    return colors;
}

int PrimitiveSpec::motion_class() const {
    if (waypoints.size() <= 1) return 0;
    return waypoints.size() == 2 ? 1 : 2;
}

std::vector<int> SceneSpec::descriptor_tokens() const {
    std::vector<int> toks;
    toks.reserve(kDescLen);
    toks.push_back(kDescCountBase + static_cast<int>(prims.size()) - 1);
    for (const auto& p : prims) {
        toks.push_back(kDescShapeBase + (p.kind == ShapeKind::Box ? 1 : 0));
        toks.push_back(kDescColorBase + p.color_index);
        toks.push_back(kDescMotionBase + p.motion_class());
    }
    toks.resize(kDescLen, kDescPad);
    return toks;
}

void SceneGenConfig::validate() const {
    auto check = [](double lo, double hi, const char* what) {
        if (lo > hi) throw ConfigError(std::string("scene config range inverted: ") + what);
    };
    check(min_half_size, max_half_size, "half_size");
    check(min_xz, max_xz, "xz");
    check(min_y, max_y, "y");
    check(min_prims, max_prims, "prims");
    if (frames < 2) throw ConfigError("scene config: frames must be >= 2");
    if (min_prims < 1 || max_prims > kMaxPrims)
        throw ConfigError("scene config: primitive count must stay in [1,4]");
    if (max_speed <= 0) throw ConfigError("scene config: max_speed must be positive");
}

SceneSpec sample_scene(uint64_t seed, const SceneGenConfig& config) {
    config.validate();
    Rng rng = stream(seed, 0x5ce6e, 0, 0);
    SceneSpec scene;
    scene.id = seed;
    scene.frames = config.frames;

    const int n_prims = static_cast<int>(rng.range(config.min_prims, config.max_prims));
    // distinct palette colors so the eval segmenter can tell primitives apart
    std::vector<int> colors(palette().size());
    for (size_t i = 0; i < colors.size(); ++i) colors[i] = static_cast<int>(i);
    for (size_t i = colors.size(); i > 1; --i)
        std::swap(colors[i - 1], colors[rng.below(i)]);

    for (int pi = 0; pi < n_prims; ++pi) {
        PrimitiveSpec prim;
        prim.kind = rng.coin() ? ShapeKind::Sphere : ShapeKind::Box;
        prim.half_size = rng.uniform(config.min_half_size, config.max_half_size);
        prim.color_index = colors[pi];

        auto sample_point = [&]() {
            return Vec3(rng.uniform(config.min_xz, config.max_xz),
                        rng.uniform(std::max(config.min_y, prim.half_size + 0.05), config.max_y),
                        rng.uniform(config.min_xz, config.max_xz));
        };

        const int n_way = static_cast<int>(rng.range(1, 4));
        prim.waypoints.push_back(sample_point());
        if (n_way == 1) {
            prim.waypoint_frames = {0};
        } else {
            // waypoint frames: strictly increasing, first 0, last f-1
            std::vector<int> frames{0};
            std::vector<int> interior;
            for (int k = 1; k < n_way - 1; ++k)
                interior.push_back(static_cast<int>(rng.range(1, config.frames - 2)));
            std::sort(interior.begin(), interior.end());
            interior.erase(std::unique(interior.begin(), interior.end()), interior.end());
            for (int v : interior) frames.push_back(v);
            frames.push_back(config.frames - 1);
            prim.waypoint_frames = frames;
            for (size_t k = 1; k < prim.waypoint_frames.size(); ++k) {
                Vec3 next = sample_point();
                // cap the per-frame speed along the segment
                const Vec3 prev = prim.waypoints.back();
                const int span = prim.waypoint_frames[k] - prim.waypoint_frames[k - 1];
                const double max_len = config.max_speed * span;
                Vec3 delta = next - prev;
                if (delta.norm() > max_len) next = prev + delta.normalized() * max_len;
                prim.waypoints.push_back(next);
            }
        }
        scene.prims.push_back(std::move(prim));
    }

    Vec3 centroid = Vec3::Zero();
    for (const auto& p : scene.prims) centroid += p.waypoints.front();
    scene.subject = centroid / static_cast<double>(scene.prims.size());
    return scene;
}

Vec3 animate_primitive(const PrimitiveSpec& prim, int frame) {
    const auto& wf = prim.waypoint_frames;
    if (prim.waypoints.size() == 1 || frame <= wf.front()) return prim.waypoints.front();
    if (frame >= wf.back()) return prim.waypoints.back();
    size_t seg = 0;
    while (seg + 1 < wf.size() && wf[seg + 1] <= frame) ++seg;
    if (wf[seg] == frame) return prim.waypoints[seg];
    const double w = static_cast<double>(frame - wf[seg]) / (wf[seg + 1] - wf[seg]);
    return prim.waypoints[seg] * (1.0 - w) + prim.waypoints[seg + 1] * w;
}

std::vector<Vec3> animate(const SceneSpec& scene, int frame) {
    if (frame < 0 || frame >= scene.frames) throw BoundsError("animate: frame out of range");
    std::vector<Vec3> out;
    out.reserve(scene.prims.size());
    for (const auto& p : scene.prims) out.push_back(animate_primitive(p, frame));
    return out;
}

namespace {

struct Hit {
    double depth = -1.0;
    bool ok = false;
};

Hit ray_sphere(const Vec3& origin, const Vec3& dir, const Vec3& center, double radius) {
    const Vec3 oc = origin - center;
    const double b = oc.dot(dir);
    const double c = oc.squaredNorm() - radius * radius;
    const double disc = b * b - c;
    if (disc < 0.0) return {};
    const double sq = std::sqrt(disc);
    double t = -b - sq;
    if (t <= 1e-9) t = -b + sq;
    if (t <= 1e-9) return {};
    return {t, true};
}

Hit ray_box(const Vec3& origin, const Vec3& dir, const Vec3& center, double half) {
    double tmin = -1e30, tmax = 1e30;
    for (int a = 0; a < 3; ++a) {
        const double lo = center[a] - half, hi = center[a] + half;
        if (std::fabs(dir[a]) < 1e-12) {
            if (origin[a] < lo || origin[a] > hi) return {};
            continue;
        }
        double t0 = (lo - origin[a]) / dir[a];
        double t1 = (hi - origin[a]) / dir[a];
        if (t0 > t1) std::swap(t0, t1);
        tmin = std::max(tmin, t0);
        tmax = std::min(tmax, t1);
        if (tmin > tmax) return {};
    }
    double t = tmin;
    if (t <= 1e-9) t = tmax;
    if (t <= 1e-9) return {};
    return {t, true};
}

}  // namespace

Tensor render_frame(const SceneSpec& scene, const CameraPose& pose, const Intrinsics& intr,
                    int frame, int height, int width, std::vector<FrameDetection>* detections) {
    if (frame < 0 || frame >= scene.frames) throw BoundsError("render_frame: frame out of range");
    const auto positions = animate(scene, frame);
    const int np = static_cast<int>(scene.prims.size());

    Tensor img({3, height, width});
    double* rp = img.ptr();
    double* gp = rp + static_cast<int64_t>(height) * width;
    double* bp = gp + static_cast<int64_t>(height) * width;

    struct Acc {
        double su = 0, sv = 0;
        int front = 0, solo = 0;
    };
    std::vector<Acc> acc(np);

    for (int iy = 0; iy < height; ++iy) {
        for (int ix = 0; ix < width; ++ix) {
            // ray through the pixel center, camera frame +Z forward
            const Vec3 dir_cam((ix + 0.5 - intr.cx) / intr.fpx, (iy + 0.5 - intr.cy) / intr.fpx, 1.0);
            const Vec3 dir = (pose.R * dir_cam).normalized();
            const Vec3& origin = pose.t;

            int best = -1;  // -1 none, 0..np-1 primitive, np ground
            double best_t = 1e30;
            for (int pi = 0; pi < np; ++pi) {
                const auto& prim = scene.prims[pi];
                const Hit h = prim.kind == ShapeKind::Sphere
                                  ? ray_sphere(origin, dir, positions[pi], prim.half_size)
                                  : ray_box(origin, dir, positions[pi], prim.half_size);
                if (h.ok) {
                    if (detections) ++acc[pi].solo;
                    if (h.depth < best_t) {
                        best_t = h.depth;
                        best = pi;
                    }
                }
            }
            // ground plane y = 0, 1 m checker cells
            if (std::fabs(dir.y()) > 1e-9) {
                const double t = -origin.y() / dir.y();
                if (t > 1e-9 && t < best_t) {
                    best_t = t;
                    best = np;
                }
            }

            Vec3 color;
            if (best < 0) {
                color = scene.sky;
            } else if (best == np) {
                const Vec3 p = origin + dir * best_t;
                const auto cell = static_cast<int64_t>(std::floor(p.x())) +
                                  static_cast<int64_t>(std::floor(p.z()));
                color = (cell & 1) ? scene.checker_b : scene.checker_a;
            } else {
                color = scene.prims[best].color();
                if (detections) {
                    acc[best].su += ix + 0.5;
                    acc[best].sv += iy + 0.5;
                    ++acc[best].front;
                }
            }
            const int64_t idx = static_cast<int64_t>(iy) * width + ix;
            rp[idx] = color.x();
            gp[idx] = color.y();
            bp[idx] = color.z();
        }
    }

    if (detections) {
        detections->resize(np);
        for (int pi = 0; pi < np; ++pi) {
            FrameDetection d;
            d.pixels = acc[pi].front;
            if (acc[pi].front > 0) {
                d.u = acc[pi].su / acc[pi].front;
                d.v = acc[pi].sv / acc[pi].front;
            }
            d.visibility = acc[pi].solo > 0
                               ? static_cast<double>(acc[pi].front) / acc[pi].solo
                               : 0.0;
            (*detections)[pi] = d;
        }
    }
    return img;
}

RenderedScene render_scene(const SceneSpec& scene, const std::vector<trajgen::Trajectory>& trajs,
                           int height, int width) {
    RenderedScene out;
    out.id = scene.id;
    for (const auto& traj : trajs)
        if (traj.frames() != scene.frames)
            throw ShapeError("render_scene: trajectory length != scene frames");

    for (const auto& traj : trajs) {
        Tensor video({scene.frames, 3, height, width});
        std::vector<std::vector<FrameDetection>> per_frame(scene.frames);
        const int64_t frame_elems = 3 * static_cast<int64_t>(height) * width;
        for (int fi = 0; fi < scene.frames; ++fi) {
            Tensor img = render_frame(scene, traj.poses[fi], traj.intrinsics, fi, height, width,
                                      &per_frame[fi]);
            std::copy(img.ptr(), img.ptr() + frame_elems, video.ptr() + fi * frame_elems);
        }
        out.videos.push_back(std::move(video));
        out.trajectories.push_back(traj);
        out.centroids.push_back(std::move(per_frame));
    }
    return out;
}

}  // namespace camflow::scenegen
