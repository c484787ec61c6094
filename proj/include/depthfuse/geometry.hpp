#pragma once

#include <optional>
#include <stdexcept>

#include "depthfuse/math.hpp"
#include "depthfuse/random.hpp"

// Pinhole camera model and rigid poses.
//
// Conventions used by every module in this library:
//   - Pose is world-from-camera: `rotation` maps camera-frame vectors to the
//     world frame and `translation` is the camera origin in world coordinates,
//     so a pixel ray originates at `translation`.
//   - Pixel centers sit at integer coordinates (no half-pixel offset).
//   - Depth means camera-frame z, not distance along the ray.

namespace depthfuse {

struct Intrinsics {
    double fx = 0.0, fy = 0.0;  // focal lengths, pixels
    double cx = 0.0, cy = 0.0;  // principal point, pixels
    int width = 0, height = 0;

    bool valid() const {
        return fx > 0.0 && fy > 0.0 && width > 0 && height > 0 && cx >= 0.0 && cx < width &&
               cy >= 0.0 && cy < height;
    }
};

struct Pose {
    Mat3 rotation = Mat3::identity();  // world-from-camera
    Vec3 translation;                  // camera origin in world frame

    static Pose identity() { return Pose{}; }

    // Max elementwise deviation of R^T R from I.
    double orthonormality_error() const {
        const Mat3 g = rotation.transposed() * rotation;
        double err = 0.0;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                err = std::fmax(err, std::fabs(g(i, j) - (i == j ? 1.0 : 0.0)));
        return err;
    }

    bool valid(double tol = 1e-9) const {
        return orthonormality_error() <= tol && std::fabs(rotation.det() - 1.0) <= tol;
    }
};

struct Ray {
    Vec3 origin;
    Vec3 direction;  // unit length
};

struct PerturbationSpec {
    double max_rotation_deg = 0.0;
    double max_translation_m = 0.0;
    std::uint64_t seed = 0;
};

struct PixelCoord {
    double u = 0.0, v = 0.0;
};

struct Projection {
    double u = 0.0, v = 0.0;
    double depth = 0.0;  // camera-frame z
};

// World-frame ray through a (possibly sub-pixel) image coordinate.
inline Ray pixel_to_ray(const Intrinsics& intr, const Pose& pose, const PixelCoord& px) {
    const Vec3 dir_cam{(px.u - intr.cx) / intr.fx, (px.v - intr.cy) / intr.fy, 1.0};
    return Ray{pose.translation, normalized(pose.rotation * dir_cam)};
}

// Projects a world point into the camera. Empty result means the point lies
// at or behind the camera plane (z <= 0) and the reprojection is invalid.
inline std::optional<Projection> project(const Intrinsics& intr, const Pose& pose,
                                         const Vec3& point) {
    const Vec3 p_cam = pose.rotation.transposed() * (point - pose.translation);
    if (p_cam.z <= 0.0) return std::nullopt;
    return Projection{intr.fx * p_cam.x / p_cam.z + intr.cx,
                      intr.fy * p_cam.y / p_cam.z + intr.cy, p_cam.z};
}

inline Vec3 backproject(const Intrinsics& intr, const Pose& pose, const PixelCoord& px,
                        double depth) {
    if (depth <= 0.0) throw std::invalid_argument("backproject: depth must be positive");
    const Vec3 p_cam{depth * (px.u - intr.cx) / intr.fx, depth * (px.v - intr.cy) / intr.fy,
                     depth};
    return pose.rotation * p_cam + pose.translation;
}

// Relative rotation angle between two poses, radians.
inline double relative_rotation_angle(const Pose& a, const Pose& b) {
    return rotation_angle(a.rotation.transposed() * b.rotation);
}

// Bounded random perturbation of a pose: a rotation of the camera frame about
// its optical center (angle uniform in [0, max], axis uniform on the sphere)
// followed by a translation uniform in the ball of the configured radius.
// Deterministic in (spec.seed, index); rotation and translation are sampled
// independently.
inline Pose perturb_pose(const Pose& base, const PerturbationSpec& spec, std::uint64_t index) {
    if (spec.max_rotation_deg == 0.0 && spec.max_translation_m == 0.0) return base;
    Rng rng(rng_key(spec.seed, index, /*stream=*/0x706f7365ULL));
    const Vec3 axis = rng.unit_vector();
    const double angle = deg_to_rad(spec.max_rotation_deg) * rng.uniform();
    const Vec3 offset = rng.in_ball(spec.max_translation_m);

    Pose out;
    out.rotation = orthonormalized(base.rotation * axis_angle_rotation(axis, angle));
    out.translation = base.translation + offset;
    return out;
}

}  // namespace depthfuse
