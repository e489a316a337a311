#pragma once

#include <string>
#include <vector>

#include "camflow/geometry.hpp"
#include "camflow/rng.hpp"
#include "camflow/tensor.hpp"

namespace camflow::trajgen {

enum class TrajKind { Pan, Tilt, Translate, Arc, Random, Static, ZoomIn, ZoomOut };

const char* kind_name(TrajKind k);
TrajKind kind_from_name(const std::string& name);  // throws ConfigError on unknown kind

// Sampling bounds for the trajectory families.
inline constexpr double kHemisphereRadius = 10.0;  // m
inline constexpr double kMinStartDistance = 0.5;   // m
inline constexpr double kMaxPitchDeg = 45.0;
inline constexpr double kPanMinDeg = 5.0, kPanMaxDeg = 60.0;
inline constexpr double kTiltMinDeg = 5.0, kTiltMaxDeg = 45.0;
inline constexpr double kArcMinDeg = 5.0, kArcMaxDeg = 60.0;
inline constexpr double kTranslateMinFrac = 0.25, kTranslateMaxFrac = 1.0;
inline constexpr double kRandomMinFrac = 0.25, kRandomMaxFrac = 1.0;
inline constexpr double kZoomMinFrac = 0.25, kZoomMaxFrac = 0.75;
inline constexpr double kMaxSpeedParam = 20.0;  // |a| beyond this saturates the easing

inline double deg2rad(double d) { return d * 0.017453292519943295; }
inline double rad2deg(double r) { return r * 57.29577951308232; }

// A camera trajectory: f poses sampled from a parametric path, plus the
// parameters needed to re-sample the same path at different speed profiles.
struct Trajectory {
    std::vector<CameraPose> poses;
    Intrinsics intrinsics;
    TrajKind kind = TrajKind::Static;
    double speed_a = 0.0;  // 0 means constant speed

    // Parametric form (generator state).
    CameraPose start;
    Vec3 subject = Vec3::Zero();
    double angle = 0.0;      // signed radians: pan/tilt/arc
    Vec3 axis = Vec3::Zero();  // translate: signed world axis direction
    double distance = 0.0;   // translate/zoom travel in meters
    std::vector<Vec3> curve;       // random: dense arc-length-tabulated path
    std::vector<double> curve_len;  // cumulative length along `curve`

    int frames() const { return static_cast<int>(poses.size()); }
};

// Position/orientation of the parametric path at arc-length fraction
// u in [0,1], per the family's orientation rule.
CameraPose pose_at(const Trajectory& traj, double u);

// Exponential speed-shaping curve: fraction of the path covered at
// normalized index x in [0,1]. a == 0 yields the constant-speed identity.
double easing_fraction(double a, double x);

// Camera start pose: position uniform inside the 10 m hemisphere above the
// subject, distance > 0.5 m, pitch <= 45 degrees, looking at the subject.
CameraPose sample_start_pose(Rng& rng, const Vec3& subject_pos);
CameraPose sample_start_pose(uint64_t seed, const Vec3& subject_pos);

// Constant-speed trajectory of one of the eight families.
Trajectory gen_trajectory(TrajKind kind, const CameraPose& start, const Vec3& subject_pos,
                          Rng& rng, int frames, const Intrinsics& intr = {});
Trajectory gen_trajectory(TrajKind kind, const CameraPose& start, const Vec3& subject_pos,
                          uint64_t seed, int frames, const Intrinsics& intr = {});

// Re-samples the trajectory's path at eased fractions. |a| > 20 is rejected
// as numerically saturated; a == 0 restores constant speed.
Trajectory apply_speed_profile(const Trajectory& traj, double a);

// f x 12 row-major [R|t] per frame.
Tensor flatten_poses(const Trajectory& traj);
std::vector<CameraPose> unflatten_poses(const Tensor& flat);

// Re-expresses every pose in the frame in which `ref` is the identity.
Trajectory normalize_to_reference(const Trajectory& traj, const CameraPose& ref);
CameraPose relative_pose(const CameraPose& ref, const CameraPose& pose);

// camera.json round-trip (schema shared with the dataset writer).
std::string trajectory_to_json(const Trajectory& traj);
Trajectory trajectory_from_json(const std::string& text);
void save_trajectory(const std::string& path, const Trajectory& traj);
Trajectory load_trajectory(const std::string& path);

}  // namespace camflow::trajgen
