#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "depthfuse/geometry.hpp"
#include "depthfuse/image.hpp"
#include "depthfuse/random.hpp"
#include "depthfuse/scene.hpp"

// Volume rendering of depth: ray sampling against a density field, the ray
// termination distribution, and its first two moments. Per-ray quantities
// live in the ray parameter t; render_depth_map converts means/variances to
// camera-frame z so depth maps compose with project/backproject.

namespace depthfuse {

// Rays whose accumulated weight falls below this are treated as
// non-terminating: the termination distribution is conditional on the ray
// stopping inside [near, far], and a floor makes that condition operational.
inline constexpr double kWeightFloor = 1e-3;

// Smallest representable variance (m^2); applied before any reciprocal.
inline constexpr double kVarianceFloor = 1e-12;

struct SamplingParams {
    double near = 0.1;  // m
    double far = 10.0;  // m
    int samples = 64;
    bool jitter = true;
};

struct RaySamples {
    std::vector<double> t;      // sample distances, strictly increasing
    std::vector<double> delta;  // interval lengths, last one = bin width
    std::vector<double> sigma;  // densities at the samples
};

// Stratified sampling of [near, far]: one sample per bin, at the midpoint or
// jittered uniformly within the bin. Jitter is keyed so the same key yields
// the same samples.
inline RaySamples sample_ray(const DensityField& field, const Ray& ray,
                             const SamplingParams& params, std::uint64_t key = 0) {
    if (params.near < 0.0 || !(params.far > params.near))
        throw std::invalid_argument("sample_ray: need 0 <= near < far");
    if (params.samples < 2) throw std::invalid_argument("sample_ray: need at least 2 samples");

    const int m = params.samples;
    const double bin = (params.far - params.near) / m;
    Rng rng(key);

    RaySamples out;
    out.t.resize(m);
    out.delta.resize(m);
    out.sigma.resize(m);
    for (int i = 0; i < m; ++i) {
        const double frac = params.jitter ? rng.uniform() : 0.5;
        out.t[i] = params.near + (i + frac) * bin;
    }
    for (int i = 0; i + 1 < m; ++i) out.delta[i] = out.t[i + 1] - out.t[i];
    out.delta[m - 1] = bin;
    for (int i = 0; i < m; ++i)
        out.sigma[i] = field.density(ray.origin + ray.direction * out.t[i]);
    return out;
}

struct TerminationStats {
    std::vector<double> weights;  // w_i = T_i * alpha_i
    double total_weight = 0.0;    // sum of w_i, in [0, 1]
    std::vector<double> p;        // normalized; empty when !terminates
    bool terminates = false;
};

// Standard volume-rendering weights: alpha_i = 1 - exp(-sigma_i * delta_i),
// T_i the transmittance surviving past all earlier samples, w_i = T_i *
// alpha_i. When the total weight clears the floor, p is the discrete
// termination distribution.
inline TerminationStats termination_weights(const RaySamples& samples,
                                            double weight_floor = kWeightFloor) {
    const size_t m = samples.t.size();
    if (samples.delta.size() != m || samples.sigma.size() != m)
        throw std::invalid_argument("termination_weights: ragged samples");

    TerminationStats stats;
    stats.weights.resize(m);
    double transmittance = 1.0;
    double total = 0.0;
    for (size_t i = 0; i < m; ++i) {
        const double alpha = 1.0 - std::exp(-samples.sigma[i] * samples.delta[i]);
        stats.weights[i] = transmittance * alpha;
        total += stats.weights[i];
        transmittance *= 1.0 - alpha;
    }
    stats.total_weight = total;
    stats.terminates = total >= weight_floor;
    if (stats.terminates) {
        stats.p.resize(m);
        for (size_t i = 0; i < m; ++i) stats.p[i] = stats.weights[i] / total;
    }
    return stats;
}

struct DepthMoments {
    double mu = 0.0;   // expected termination distance
    double var = 0.0;  // termination variance, clamped at 0
};

inline DepthMoments depth_moments(const TerminationStats& stats, std::span<const double> t) {
    if (!stats.terminates)
        throw std::logic_error("depth_moments: ray does not terminate");
    if (stats.p.size() != t.size())
        throw std::invalid_argument("depth_moments: size mismatch");
    double mu = 0.0, m2 = 0.0;
    for (size_t i = 0; i < t.size(); ++i) {
        mu += stats.p[i] * t[i];
        m2 += stats.p[i] * t[i] * t[i];
    }
    return DepthMoments{mu, std::fmax(0.0, m2 - mu * mu)};
}

struct RenderResult {
    DepthMap depth;
    VarianceMap variance;  // shares the depth map's validity
};

// Per-pixel volume render. Non-terminating rays leave the pixel invalid.
// The sampler runs in ray-parameter t; outputs are converted to camera-frame
// z by the ray's direction cosine so that depth and variance line up with
// the projection model.
//
// The per-ray variance is clamped from below at the sampler's bin
// quantization variance, bin^2/12: a termination distribution concentrated
// on a single sample says nothing about where inside that bin the surface
// sits, and without the clamp such rays claim near-infinite precision and
// dominate every downstream precision-weighted sum.
inline RenderResult render_depth_map(const DensityField& field, const Intrinsics& intr,
                                     const Pose& pose, const SamplingParams& params,
                                     std::uint64_t rng_seed = 0) {
    RenderResult out{DepthMap(intr.width, intr.height), VarianceMap(intr.width, intr.height)};
    const double bin = (params.far - params.near) / params.samples;
    const double quantization_var = bin * bin / 12.0;
    for (int y = 0; y < intr.height; ++y) {
        for (int x = 0; x < intr.width; ++x) {
            const PixelCoord px{static_cast<double>(x), static_cast<double>(y)};
            const Ray ray = pixel_to_ray(intr, pose, px);
            const std::uint64_t key =
                rng_key(rng_seed, static_cast<std::uint64_t>(y) * intr.width + x,
                        /*stream=*/0x73616d70ULL);
            const RaySamples samples = sample_ray(field, ray, params, key);
            const TerminationStats stats = termination_weights(samples);
            if (!stats.terminates) continue;
            const DepthMoments m = depth_moments(stats, samples.t);
            // cos of the angle between the ray and the camera forward axis
            const Vec3 dir_cam{(px.u - intr.cx) / intr.fx, (px.v - intr.cy) / intr.fy, 1.0};
            const double cos_f = 1.0 / norm(dir_cam);
            const double var_t = std::fmax(m.var, quantization_var);
            out.depth.set(x, y, m.mu * cos_f);
            out.variance.set(x, y, std::fmax(kVarianceFloor, var_t * cos_f * cos_f));
        }
    }
    return out;
}

// Exact depth of the nearest primitive surface along each pixel ray. This is
// the analytic limit of rendering the same scene with a vanishing density
// band, and serves as ground truth for it.
inline DepthMap render_true_depth(const AnalyticScene& scene, const Intrinsics& intr,
                                  const Pose& pose, double near, double far) {
    DepthMap out(intr.width, intr.height);
    for (int y = 0; y < intr.height; ++y) {
        for (int x = 0; x < intr.width; ++x) {
            const PixelCoord px{static_cast<double>(x), static_cast<double>(y)};
            const Ray ray = pixel_to_ray(intr, pose, px);
            const auto t = scene.first_hit(ray, near, far);
            if (!t) continue;
            const Vec3 dir_cam{(px.u - intr.cx) / intr.fx, (px.v - intr.cy) / intr.fy, 1.0};
            out.set(x, y, *t / norm(dir_cam));
        }
    }
    return out;
}

}  // namespace depthfuse
