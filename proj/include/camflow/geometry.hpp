#pragma once

#include <Eigen/Dense>

#include "camflow/errors.hpp"

namespace camflow {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// Camera extrinsics, camera-to-world convention fixed project-wide:
// x_world = R * x_cam + t. Camera frame is +X right, +Y down, +Z forward
// (view direction), so image v grows downward.
struct CameraPose {
    Mat3 R = Mat3::Identity();
    Vec3 t = Vec3::Zero();

    Vec3 position() const { return t; }
    Vec3 forward() const { return R.col(2); }

    Vec3 world_to_cam(const Vec3& p) const { return R.transpose() * (p - t); }
    Vec3 cam_to_world(const Vec3& p) const { return R * p + t; }

    CameraPose inverse() const { return {R.transpose(), -(R.transpose() * t)}; }

    // this ∘ other as rigid maps (apply other first).
    CameraPose compose(const CameraPose& other) const {
        return {R * other.R, R * other.t + t};
    }
};

struct Intrinsics {
    double fpx = 48.0;  // focal length in pixels
    double cx = 24.0;
    double cy = 24.0;
};

struct PixelPoint {
    double u = 0.0;
    double v = 0.0;
    double depth = 0.0;
};

inline bool rotation_valid(const Mat3& R, double tol = 1e-6) {
    return (R.transpose() * R - Mat3::Identity()).cwiseAbs().maxCoeff() < tol &&
           std::fabs(R.determinant() - 1.0) < tol;
}

// Nearest rotation via Gram-Schmidt on the columns; cheap enough to run after
// every composition so accumulated products stay orthonormal.
inline Mat3 orthonormalized(const Mat3& R) {
    Vec3 x = R.col(0).normalized();
    Vec3 y = (R.col(1) - x * x.dot(R.col(1))).normalized();
    Vec3 z = x.cross(y);
    Mat3 out;
    out.col(0) = x;
    out.col(1) = y;
    out.col(2) = z;
    return out;
}

// Orientation whose +Z axis points from `position` to `target`, with world up
// (0,1,0) and camera +Y pointing down in world. Falls back to an arbitrary
// right vector when the view direction is vertical.
inline Mat3 look_at_rotation(const Vec3& position, const Vec3& target) {
    const Vec3 up(0.0, 1.0, 0.0);
    Vec3 fwd = target - position;
    const double n = fwd.norm();
    if (n < 1e-12) throw NumericError("look_at: target coincides with position");
    fwd /= n;
    Vec3 right = fwd.cross(up);
    if (right.norm() < 1e-9) right = Vec3(1.0, 0.0, 0.0);
    right.normalize();
    const Vec3 down = fwd.cross(right);
    Mat3 R;
    R.col(0) = right;
    R.col(1) = down;
    R.col(2) = fwd;
    return R;
}

inline CameraPose look_at_pose(const Vec3& position, const Vec3& target) {
    return {look_at_rotation(position, target), position};
}

// Rodrigues rotation about a unit axis.
inline Mat3 axis_angle(const Vec3& axis, double angle) {
    return Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix();
}

// Pinhole projection: u = cx + fpx*X/Z, v = cy + fpx*Y/Z in camera
// coordinates. Throws when the point is not in front of the camera.
inline PixelPoint project(const Vec3& point, const CameraPose& pose, const Intrinsics& intr) {
    const Vec3 pc = pose.world_to_cam(point);
    if (pc.z() <= 0.0) throw NumericError("project: point behind camera");
    return {intr.cx + intr.fpx * pc.x() / pc.z(), intr.cy + intr.fpx * pc.y() / pc.z(), pc.z()};
}

// Non-throwing variant used by the renderer and eval oracles.
inline bool try_project(const Vec3& point, const CameraPose& pose, const Intrinsics& intr,
                        PixelPoint& out) {
    const Vec3 pc = pose.world_to_cam(point);
    if (pc.z() <= 0.0) return false;
    out = {intr.cx + intr.fpx * pc.x() / pc.z(), intr.cy + intr.fpx * pc.y() / pc.z(), pc.z()};
    return true;
}

}  // namespace camflow
