#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "depthfuse/geometry.hpp"
#include "depthfuse/image.hpp"
#include "depthfuse/volume.hpp"

// View synthesis and reprojection. Depth maps are forward-warped between
// poses by backproject -> project with nearest-pixel splatting and a
// z-buffer; holes stay invalid (no inpainting). Reprojection of rendered
// (depth, variance) views into the reference frame builds the per-pixel
// candidate sets that fusion aggregates. Variance is transported unchanged;
// depth is re-expressed in the target camera's z.

namespace depthfuse {

// Forward-warp a depth map from src_pose into dst_pose. Within the target,
// collisions resolve to the nearest depth; ties keep the earlier source
// pixel (row-major), so the result is independent of traversal order.
inline DepthMap warp_depth(const DepthMap& src, const Intrinsics& intr, const Pose& src_pose,
                           const Pose& dst_pose, double* hole_fraction = nullptr) {
    DepthMap out(src.width, src.height);
    for (int y = 0; y < src.height; ++y) {
        for (int x = 0; x < src.width; ++x) {
            if (!src.is_valid(x, y)) continue;
            const double d = src.at(x, y);
            const Vec3 world =
                backproject(intr, src_pose, {static_cast<double>(x), static_cast<double>(y)}, d);
            const auto proj = project(intr, dst_pose, world);
            if (!proj) continue;
            const int u = static_cast<int>(std::lround(proj->u));
            const int v = static_cast<int>(std::lround(proj->v));
            if (!out.in_bounds(u, v)) continue;
            if (!out.is_valid(u, v) || proj->depth < out.at(u, v)) out.set(u, v, proj->depth);
        }
    }
    if (hole_fraction) *hole_fraction = 1.0 - out.valid_fraction();
    return out;
}

struct SynthesizedView {
    Pose pose;
    DepthMap depth;
    double hole_fraction = 0.0;
};

// Warp one depth map into `count` perturbed poses (the pseudo multi-view
// set). Perturbation indices start at index_offset so successive refinement
// iterations draw fresh poses.
inline std::vector<SynthesizedView> synthesize_views(const DepthMap& depth,
                                                     const Intrinsics& intr, const Pose& base,
                                                     int count, const PerturbationSpec& spec,
                                                     std::uint64_t index_offset = 0) {
    if (count < 1) throw std::invalid_argument("synthesize_views: need at least one view");
    if (depth.valid_count() == 0)
        throw std::invalid_argument("synthesize_views: source depth has no valid pixels");
    std::vector<SynthesizedView> views;
    views.reserve(count);
    for (int i = 0; i < count; ++i) {
        SynthesizedView v;
        v.pose = perturb_pose(base, spec, index_offset + i);
        v.depth = warp_depth(depth, intr, base, v.pose, &v.hole_fraction);
        views.push_back(std::move(v));
    }
    return views;
}

struct RenderedView {
    Pose pose;
    DepthMap depth;
    VarianceMap variance;
};

struct Candidate {
    double mu = 0.0;   // depth in the reference camera's z, m
    double var = 0.0;  // transported variance, m^2
};

// Per-pixel candidate estimates from the views that project validly there.
struct CandidateSet {
    int width = 0, height = 0;
    std::vector<std::vector<Candidate>> pixels;

    CandidateSet() = default;
    CandidateSet(int w, int h) : width(w), height(h), pixels(static_cast<size_t>(w) * h) {}

    const std::vector<Candidate>& at(int x, int y) const {
        return pixels[static_cast<size_t>(y) * width + x];
    }
    std::vector<Candidate>& at(int x, int y) {
        return pixels[static_cast<size_t>(y) * width + x];
    }
};

// Warp every rendered view into the reference camera. Collisions within one
// view keep the nearest depth; candidates from distinct views accumulate in
// view order. Pixels no view reaches end up with an empty list.
inline CandidateSet reproject_to_reference(std::span<const RenderedView> views,
                                           const Intrinsics& intr, const Pose& ref,
                                           double variance_floor = kVarianceFloor) {
    CandidateSet cands(intr.width, intr.height);
    const size_t n = static_cast<size_t>(intr.width) * intr.height;
    std::vector<double> depth_buf(n), var_buf(n);
    std::vector<std::uint8_t> filled(n);
    for (const RenderedView& view : views) {
        if (view.depth.width != intr.width || view.depth.height != intr.height ||
            !view.depth.same_shape(view.variance))
            throw std::invalid_argument("reproject_to_reference: view shape mismatch");
        std::fill(filled.begin(), filled.end(), 0);
        for (int y = 0; y < view.depth.height; ++y) {
            for (int x = 0; x < view.depth.width; ++x) {
                if (!view.depth.is_valid(x, y) || !view.variance.is_valid(x, y)) continue;
                const double d = view.depth.at(x, y);
                const Vec3 world = backproject(
                    intr, view.pose, {static_cast<double>(x), static_cast<double>(y)}, d);
                const auto proj = project(intr, ref, world);
                if (!proj) continue;
                const int u = static_cast<int>(std::lround(proj->u));
                const int v = static_cast<int>(std::lround(proj->v));
                if (u < 0 || u >= intr.width || v < 0 || v >= intr.height) continue;
                const size_t idx = static_cast<size_t>(v) * intr.width + u;
                if (!filled[idx] || proj->depth < depth_buf[idx]) {
                    filled[idx] = 1;
                    depth_buf[idx] = proj->depth;
                    var_buf[idx] = view.variance.at(x, y);
                }
            }
        }
        for (size_t idx = 0; idx < n; ++idx) {
            if (filled[idx])
                cands.pixels[idx].push_back(
                    Candidate{depth_buf[idx], std::fmax(variance_floor, var_buf[idx])});
        }
    }
    return cands;
}

}  // namespace depthfuse
