#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "depthfuse/geometry.hpp"
#include "test_util.hpp"

using namespace depthfuse;
using depthfuse::testing::close_rel;

namespace {

Intrinsics unit_camera() {
    Intrinsics intr;
    intr.fx = intr.fy = 1.0;
    intr.cx = intr.cy = 0.0;
    intr.width = intr.height = 2;
    return intr;
}

Pose rotation_y_180() {
    Pose pose;
    pose.rotation = axis_angle_rotation({0, 1, 0}, M_PI);
    return pose;
}

}  // namespace

TEST_CASE("pixel_to_ray: principal point looks down +z") {
    const Ray ray = pixel_to_ray(unit_camera(), Pose::identity(), {0, 0});
    CHECK(ray.direction.x == doctest::Approx(0.0));
    CHECK(ray.direction.y == doctest::Approx(0.0));
    CHECK(ray.direction.z == doctest::Approx(1.0));
    CHECK(ray.origin.x == 0.0);
}

TEST_CASE("pixel_to_ray: unit focal gives a 45 degree ray") {
    const Ray ray = pixel_to_ray(unit_camera(), Pose::identity(), {1, 0});
    const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
    CHECK(ray.direction.x == doctest::Approx(inv_sqrt2));
    CHECK(ray.direction.y == doctest::Approx(0.0));
    CHECK(ray.direction.z == doctest::Approx(inv_sqrt2));
}

TEST_CASE("pixel_to_ray: rotated camera flips the principal ray") {
    const Ray ray = pixel_to_ray(unit_camera(), rotation_y_180(), {0, 0});
    CHECK(ray.direction.x == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(ray.direction.z == doctest::Approx(-1.0));
}

TEST_CASE("project: point on the optical axis lands on the principal point") {
    Intrinsics intr;
    intr.fx = intr.fy = 100.0;
    intr.cx = intr.cy = 50.0;
    intr.width = intr.height = 100;
    const auto proj = project(intr, Pose::identity(), {0, 0, 2});
    REQUIRE(proj.has_value());
    CHECK(proj->u == doctest::Approx(50.0));
    CHECK(proj->v == doctest::Approx(50.0));
    CHECK(proj->depth == doctest::Approx(2.0));
}

TEST_CASE("project: points behind the camera are rejected") {
    const Intrinsics intr = testing::small_camera();
    CHECK_FALSE(project(intr, Pose::identity(), {0, 0, -1}).has_value());
    CHECK_FALSE(project(intr, Pose::identity(), {0.5, 0.5, 0.0}).has_value());
}

TEST_CASE("backproject: principal pixel recovers the optical axis") {
    Intrinsics intr;
    intr.fx = intr.fy = 100.0;
    intr.cx = intr.cy = 50.0;
    intr.width = intr.height = 100;
    const Vec3 p = backproject(intr, Pose::identity(), {50, 50}, 3.0);
    CHECK(p.x == doctest::Approx(0.0));
    CHECK(p.y == doctest::Approx(0.0));
    CHECK(p.z == doctest::Approx(3.0));
}

TEST_CASE("backproject: translation shifts the world point") {
    const Intrinsics intr = testing::small_camera();
    Pose moved;
    moved.translation = {1, 0, 0};
    const Vec3 a = backproject(intr, Pose::identity(), {40, 30}, 2.5);
    const Vec3 b = backproject(intr, moved, {40, 30}, 2.5);
    CHECK(b.x == doctest::Approx(a.x + 1.0));
    CHECK(b.y == doctest::Approx(a.y));
    CHECK(b.z == doctest::Approx(a.z));
}

TEST_CASE("backproject: non-positive depth is rejected") {
    const Intrinsics intr = testing::small_camera();
    CHECK_THROWS_AS(backproject(intr, Pose::identity(), {10, 10}, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(backproject(intr, Pose::identity(), {10, 10}, -1.0), std::invalid_argument);
}

// The forward map is the oracle: project(backproject(px, d)) must give back
// (px, d) for any pose, sub-pixel coordinate and positive depth.
TEST_CASE("project/backproject roundtrip on random pixels and poses") {
    const Intrinsics intr = testing::small_camera();
    Rng rng(20240601);
    PerturbationSpec spec{30.0, 1.0, 77};
    for (int i = 0; i < 100; ++i) {
        const Pose pose = perturb_pose(Pose::identity(), spec, i);
        const PixelCoord px{rng.uniform(0.0, intr.width - 1.0),
                            rng.uniform(0.0, intr.height - 1.0)};
        const double depth = rng.uniform(0.2, 9.0);
        const Vec3 world = backproject(intr, pose, px, depth);
        const auto proj = project(intr, pose, world);
        REQUIRE(proj.has_value());
        CHECK(close_rel(proj->u, px.u, 1e-9, 1e-9));
        CHECK(close_rel(proj->v, px.v, 1e-9, 1e-9));
        CHECK(close_rel(proj->depth, depth, 1e-9));
    }
}

TEST_CASE("perturb_pose: zero bounds return the base pose exactly") {
    Pose base;
    base.rotation = axis_angle_rotation(normalized(Vec3{1, 2, 3}), 0.7);
    base.translation = {0.4, -0.2, 1.0};
    const Pose out = perturb_pose(base, PerturbationSpec{0.0, 0.0, 42}, 5);
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) CHECK(out.rotation(r, c) == base.rotation(r, c));
    CHECK(out.translation.x == base.translation.x);
    CHECK(out.translation.y == base.translation.y);
    CHECK(out.translation.z == base.translation.z);
}

TEST_CASE("perturb_pose: deterministic in (seed, index)") {
    const PerturbationSpec spec{2.0, 0.02, 1234};
    const Pose a = perturb_pose(Pose::identity(), spec, 3);
    const Pose b = perturb_pose(Pose::identity(), spec, 3);
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) CHECK(a.rotation(r, c) == b.rotation(r, c));
    CHECK(a.translation.x == b.translation.x);
    CHECK(a.translation.y == b.translation.y);
    CHECK(a.translation.z == b.translation.z);

    const Pose c = perturb_pose(Pose::identity(), spec, 4);
    CHECK(relative_rotation_angle(a, c) > 0.0);
}

// Measure the relative rotation angle and translation offset of many draws
// against the configured bounds.
TEST_CASE("perturb_pose: draws respect the bounds and stay orthonormal") {
    Pose base;
    base.rotation = axis_angle_rotation(normalized(Vec3{-1, 0.5, 2}), 0.3);
    base.translation = {1, 2, 3};
    const PerturbationSpec spec{2.0, 0.02, 99};
    const double max_angle = deg_to_rad(2.0);
    bool any_rotation = false;
    for (int i = 0; i < 1000; ++i) {
        const Pose p = perturb_pose(base, spec, i);
        const double angle = relative_rotation_angle(base, p);
        CHECK(angle <= max_angle + 1e-12);
        CHECK(norm(p.translation - base.translation) <= 0.02 + 1e-15);
        CHECK(p.orthonormality_error() <= 1e-9);
        CHECK(std::fabs(p.rotation.det() - 1.0) <= 1e-9);
        any_rotation = any_rotation || angle > 1e-4;
    }
    CHECK(any_rotation);
}
