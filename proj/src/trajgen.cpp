#include "camflow/trajgen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

namespace camflow::trajgen {

using nlohmann::json;

const char* kind_name(TrajKind k) {
    switch (k) {
        case TrajKind::Pan: return "pan";
        case TrajKind::Tilt: return "tilt";
        case TrajKind::Translate: return "translate";
        case TrajKind::Arc: return "arc";
        case TrajKind::Random: return "random";
        case TrajKind::Static: return "static";
        case TrajKind::ZoomIn: return "zoom_in";
        case TrajKind::ZoomOut: return "zoom_out";
    }
    return "static";
}

TrajKind kind_from_name(const std::string& name) {
    static const std::pair<const char*, TrajKind> table[] = {
        {"pan", TrajKind::Pan},         {"tilt", TrajKind::Tilt},
        {"translate", TrajKind::Translate}, {"arc", TrajKind::Arc},
        {"random", TrajKind::Random},   {"static", TrajKind::Static},
        {"zoom_in", TrajKind::ZoomIn},  {"zoom_out", TrajKind::ZoomOut},
    };
    for (const auto& [n, k] : table)
        if (name == n) return k;
    throw ConfigError("unknown trajectory kind: " + name);
}

double easing_fraction(double a, double x) {
    if (a == 0.0) return x;
    return std::expm1(-a * x) / std::expm1(-a);
}

CameraPose sample_start_pose(Rng& rng, const Vec3& subject_pos) {
    const double max_pitch = deg2rad(kMaxPitchDeg);
    for (;;) {
        Vec3 off(rng.uniform(-kHemisphereRadius, kHemisphereRadius),
                 rng.uniform(0.0, kHemisphereRadius),
                 rng.uniform(-kHemisphereRadius, kHemisphereRadius));
        const double dist = off.norm();
        if (dist > kHemisphereRadius || dist <= kMinStartDistance) continue;
        const double pitch = std::asin(off.y() / dist);
        if (pitch > max_pitch) continue;
        return look_at_pose(subject_pos + off, subject_pos);
    }
}

CameraPose sample_start_pose(uint64_t seed, const Vec3& subject_pos) {
    Rng rng(seed);
    return sample_start_pose(rng, subject_pos);
}

namespace {

// Centripetal Catmull-Rom segment (Barry-Goldman form).
Vec3 catmull_rom(const Vec3& p0, const Vec3& p1, const Vec3& p2, const Vec3& p3, double t) {
    auto knot = [](double prev, const Vec3& a, const Vec3& b) {
        return prev + std::sqrt((b - a).norm());
    };
    const double t0 = 0.0;
    const double t1 = knot(t0, p0, p1);
    const double t2 = knot(t1, p1, p2);
    const double t3 = knot(t2, p2, p3);
    const double u = t1 + (t2 - t1) * t;
    auto lerp = [](const Vec3& a, const Vec3& b, double ta, double tb, double tu) -> Vec3 {
        if (tb - ta < 1e-12) return a;
        const double w = (tu - ta) / (tb - ta);
        return a * (1.0 - w) + b * w;
    };
    const Vec3 a1 = lerp(p0, p1, t0, t1, u);
    const Vec3 a2 = lerp(p1, p2, t1, t2, u);
    const Vec3 a3 = lerp(p2, p3, t2, t3, u);
    const Vec3 b1 = lerp(a1, a2, t0, t2, u);
    const Vec3 b2 = lerp(a2, a3, t1, t3, u);
    return lerp(b1, b2, t1, t2, u);
}

// Dense samples of the smoothed polyline through `pts` (visited in order).
std::vector<Vec3> smooth_polyline(const std::vector<Vec3>& pts, int samples_per_seg) {
    const int n = static_cast<int>(pts.size());
    std::vector<Vec3> out;
    out.reserve(static_cast<size_t>((n - 1) * samples_per_seg + 1));
    for (int seg = 0; seg < n - 1; ++seg) {
        const Vec3 p0 = seg > 0 ? pts[seg - 1] : pts[0] * 2.0 - pts[1];
        const Vec3 p1 = pts[seg];
        const Vec3 p2 = pts[seg + 1];
        const Vec3 p3 = seg + 2 < n ? pts[seg + 2] : pts[n - 1] * 2.0 - pts[n - 2];
        const int last = (seg == n - 2) ? samples_per_seg : samples_per_seg - 1;
        for (int i = 0; i <= last; ++i)
            out.push_back(catmull_rom(p0, p1, p2, p3, static_cast<double>(i) / samples_per_seg));
    }
    return out;
}

std::vector<double> cumulative_lengths(const std::vector<Vec3>& pts) {
    std::vector<double> cum(pts.size(), 0.0);
    for (size_t i = 1; i < pts.size(); ++i) cum[i] = cum[i - 1] + (pts[i] - pts[i - 1]).norm();
    return cum;
}

Vec3 curve_position(const Trajectory& traj, double u) {
    const double target = u * traj.curve_len.back();
    const auto it = std::lower_bound(traj.curve_len.begin(), traj.curve_len.end(), target);
    size_t hi = static_cast<size_t>(it - traj.curve_len.begin());
    if (hi == 0) return traj.curve.front();
    if (hi >= traj.curve.size()) return traj.curve.back();
    const size_t lo = hi - 1;
    const double span = traj.curve_len[hi] - traj.curve_len[lo];
    const double w = span > 1e-15 ? (target - traj.curve_len[lo]) / span : 0.0;
    return traj.curve[lo] * (1.0 - w) + traj.curve[hi] * w;
}

void sample_poses(Trajectory& traj, int frames) {
    traj.poses.resize(frames);
    for (int i = 0; i < frames; ++i) {
        const double x = static_cast<double>(i) / (frames - 1);
        traj.poses[i] = pose_at(traj, easing_fraction(traj.speed_a, x));
    }
}

}  // namespace

CameraPose pose_at(const Trajectory& traj, double u) {
    switch (traj.kind) {
        case TrajKind::Static:
            return traj.start;
        case TrajKind::Pan: {
            Mat3 R = traj.start.R * axis_angle(Vec3::UnitY(), traj.angle * u);
            return {orthonormalized(R), traj.start.t};
        }
        case TrajKind::Tilt: {
            Mat3 R = traj.start.R * axis_angle(Vec3::UnitX(), traj.angle * u);
            return {orthonormalized(R), traj.start.t};
        }
        case TrajKind::Translate:
        case TrajKind::ZoomIn:
        case TrajKind::ZoomOut: {
            const Vec3 pos = traj.start.t + traj.axis * (traj.distance * u);
            return look_at_pose(pos, traj.subject);
        }
        case TrajKind::Arc: {
            const Vec3 rel = traj.start.t - traj.subject;
            const Vec3 pos = traj.subject + axis_angle(Vec3::UnitY(), traj.angle * u) * rel;
            return look_at_pose(pos, traj.subject);
        }
        case TrajKind::Random:
            return look_at_pose(curve_position(traj, u), traj.subject);
    }
    return traj.start;
}

Trajectory gen_trajectory(TrajKind kind, const CameraPose& start, const Vec3& subject_pos,
                          Rng& rng, int frames, const Intrinsics& intr) {
    if (frames < 2) throw ConfigError("gen_trajectory: need at least 2 frames");
    Trajectory traj;
    traj.kind = kind;
    traj.intrinsics = intr;
    traj.start = start;
    traj.subject = subject_pos;
    const double dist2subject = (start.t - subject_pos).norm();

    switch (kind) {
        case TrajKind::Static:
            break;
        case TrajKind::Pan:
            traj.angle = deg2rad(rng.uniform(kPanMinDeg, kPanMaxDeg)) * rng.sign();
            break;
        case TrajKind::Tilt:
            traj.angle = deg2rad(rng.uniform(kTiltMinDeg, kTiltMaxDeg)) * rng.sign();
            break;
        case TrajKind::Arc:
            traj.angle = deg2rad(rng.uniform(kArcMinDeg, kArcMaxDeg)) * rng.sign();
            break;
        case TrajKind::Translate: {
            for (;;) {
                Vec3 axis = Vec3::Zero();
                axis[rng.range(0, 2)] = static_cast<double>(rng.sign());
                const double dist =
                    rng.uniform(kTranslateMinFrac, kTranslateMaxFrac) * dist2subject;
                // keep the camera above the ground and away from the subject
                const Vec3 end = start.t + axis * dist;
                double min_subj = 1e30, min_y = 1e30;
                for (int i = 0; i <= 16; ++i) {
                    const Vec3 p = start.t + axis * (dist * i / 16.0);
                    min_subj = std::min(min_subj, (p - subject_pos).norm());
                    min_y = std::min(min_y, p.y());
                }
                (void)end;
                if (min_subj > 0.3 && min_y > 0.1) {
                    traj.axis = axis;
                    traj.distance = dist;
                    break;
                }
            }
            break;
        }
        case TrajKind::ZoomIn:
        case TrajKind::ZoomOut: {
            const Vec3 fwd = start.forward();
            traj.axis = (kind == TrajKind::ZoomIn) ? fwd : Vec3(-fwd);
            traj.distance = rng.uniform(kZoomMinFrac, kZoomMaxFrac) * dist2subject;
            break;
        }
        case TrajKind::Random: {
            const double target_len =
                rng.uniform(kRandomMinFrac, kRandomMaxFrac) * dist2subject;
            for (;;) {
                const int waypoints = static_cast<int>(rng.range(1, 3));
                std::vector<Vec3> pts{start.t};
                Vec3 cur = start.t;
                for (int i = 0; i < waypoints; ++i) {
                    Vec3 dir(rng.normal(), rng.normal(), rng.normal());
                    if (dir.norm() < 1e-9) dir = Vec3::UnitX();
                    dir.normalize();
                    cur += dir * rng.uniform(0.3, 1.0) * dist2subject;
                    pts.push_back(cur);
                }
                std::vector<Vec3> dense = smooth_polyline(pts, 64);
                auto cum = cumulative_lengths(dense);
                if (cum.back() < 1e-9) continue;
                // scale around the start so the smoothed path length is exact
                const double scale = target_len / cum.back();
                for (auto& p : dense) p = start.t + (p - start.t) * scale;
                double min_y = 1e30, min_subj = 1e30;
                for (const auto& p : dense) {
                    min_y = std::min(min_y, p.y());
                    min_subj = std::min(min_subj, (p - subject_pos).norm());
                }
                if (min_y < 0.1 || min_subj < 0.3) continue;
                traj.curve = std::move(dense);
                traj.curve_len = cumulative_lengths(traj.curve);
                break;
            }
            break;
        }
    }
    sample_poses(traj, frames);
    return traj;
}

Trajectory gen_trajectory(TrajKind kind, const CameraPose& start, const Vec3& subject_pos,
                          uint64_t seed, int frames, const Intrinsics& intr) {
    Rng rng(seed);
    return gen_trajectory(kind, start, subject_pos, rng, frames, intr);
}

Trajectory apply_speed_profile(const Trajectory& traj, double a) {
    if (std::fabs(a) > kMaxSpeedParam)
        throw ConfigError("apply_speed_profile: |a| > 20 saturates the easing");
    Trajectory out = traj;
    out.speed_a = a;
    sample_poses(out, traj.frames());
    return out;
}

Tensor flatten_poses(const Trajectory& traj) {
    const int f = traj.frames();
    Tensor flat({f, 12});
    for (int i = 0; i < f; ++i) {
        const auto& p = traj.poses[i];
        double* row = flat.ptr() + i * 12;
        for (int r = 0; r < 3; ++r) {
            row[r * 4 + 0] = p.R(r, 0);
            row[r * 4 + 1] = p.R(r, 1);
            row[r * 4 + 2] = p.R(r, 2);
            row[r * 4 + 3] = p.t(r);
        }
    }
    return flat;
}

std::vector<CameraPose> unflatten_poses(const Tensor& flat) {
    if (flat.ndim() != 2 || flat.dim(1) != 12)
        throw ShapeError("unflatten_poses: expected f x 12");
    std::vector<CameraPose> poses(flat.dim(0));
    for (int64_t i = 0; i < flat.dim(0); ++i) {
        const double* row = flat.ptr() + i * 12;
        for (int r = 0; r < 3; ++r) {
            poses[i].R(r, 0) = row[r * 4 + 0];
            poses[i].R(r, 1) = row[r * 4 + 1];
            poses[i].R(r, 2) = row[r * 4 + 2];
            poses[i].t(r) = row[r * 4 + 3];
        }
    }
    return poses;
}

CameraPose relative_pose(const CameraPose& ref, const CameraPose& pose) {
    CameraPose rel = ref.inverse().compose(pose);
    rel.R = orthonormalized(rel.R);
    return rel;
}

Trajectory normalize_to_reference(const Trajectory& traj, const CameraPose& ref) {
    Trajectory out = traj;
    const CameraPose inv = ref.inverse();
    for (auto& p : out.poses) {
        p = inv.compose(p);
        p.R = orthonormalized(p.R);
    }
    out.start = inv.compose(traj.start);
    out.start.R = orthonormalized(out.start.R);
    out.subject = inv.cam_to_world(traj.subject);
    out.curve.clear();
    out.curve_len.clear();
    return out;
}

std::string trajectory_to_json(const Trajectory& traj) {
    json j;
    j["frames"] = json::array();
    const Tensor flat = flatten_poses(traj);
    for (int i = 0; i < traj.frames(); ++i) {
        json row = json::array();
        for (int k = 0; k < 12; ++k) row.push_back(flat[i * 12 + k]);
        j["frames"].push_back(std::move(row));
    }
    j["fpx"] = traj.intrinsics.fpx;
    j["cx"] = traj.intrinsics.cx;
    j["cy"] = traj.intrinsics.cy;
    j["kind"] = kind_name(traj.kind);
    j["speed_a"] = traj.speed_a;
    return j.dump(2);
}

Trajectory trajectory_from_json(const std::string& text) {
    json j = json::parse(text);
    Trajectory traj;
    traj.intrinsics.fpx = j.at("fpx").get<double>();
    traj.intrinsics.cx = j.at("cx").get<double>();
    traj.intrinsics.cy = j.at("cy").get<double>();
    traj.kind = kind_from_name(j.at("kind").get<std::string>());
    traj.speed_a = j.at("speed_a").get<double>();
    const auto& rows = j.at("frames");
    Tensor flat({static_cast<int64_t>(rows.size()), 12});
    for (size_t i = 0; i < rows.size(); ++i)
        for (int k = 0; k < 12; ++k) flat[static_cast<int64_t>(i) * 12 + k] = rows[i][k].get<double>();
    traj.poses = unflatten_poses(flat);
    if (!traj.poses.empty()) traj.start = traj.poses.front();
    return traj;
}

void save_trajectory(const std::string& path, const Trajectory& traj) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << trajectory_to_json(traj) << "\n";
}

Trajectory load_trajectory(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return trajectory_from_json(text);
}

}  // namespace camflow::trajgen
