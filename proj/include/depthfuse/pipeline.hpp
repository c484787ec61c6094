#pragma once

#include <cmath>
#include <vector>

#include "depthfuse/fusion.hpp"
#include "depthfuse/image.hpp"
#include "depthfuse/metrics.hpp"
#include "depthfuse/random.hpp"
#include "depthfuse/scene.hpp"
#include "depthfuse/volume.hpp"

// Experiment plumbing: the monocular-estimator stand-in (ground truth
// degraded by blur, noise and an affine scale/shift, reproducing the smooth
// scale-ambiguous character of monocular depth) and the metric evaluation of
// a refined map against ground truth.

namespace depthfuse {

struct CorruptionSpec {
    double blur_sigma_px = 0.0;
    double noise_sigma_m = 0.0;
    double affine_scale = 1.0;
    double affine_shift_m = 0.0;
};

// Mask-aware separable Gaussian blur; kernel taps renormalize over valid
// pixels so holes do not bleed. Invalid pixels stay invalid.
inline FloatMap gaussian_blur(const FloatMap& map, double sigma_px) {
    if (sigma_px <= 0.0) return map;
    const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma_px)));
    std::vector<double> kernel(2 * radius + 1);
    for (int i = -radius; i <= radius; ++i)
        kernel[i + radius] = std::exp(-0.5 * (i * i) / (sigma_px * sigma_px));

    const auto pass = [&](const FloatMap& src, bool horizontal) {
        FloatMap dst(src.width, src.height);
        for (int y = 0; y < src.height; ++y) {
            for (int x = 0; x < src.width; ++x) {
                if (!src.is_valid(x, y)) continue;
                double sum = 0.0, wsum = 0.0;
                for (int i = -radius; i <= radius; ++i) {
                    const int xx = horizontal ? x + i : x;
                    const int yy = horizontal ? y : y + i;
                    if (!src.in_bounds(xx, yy) || !src.is_valid(xx, yy)) continue;
                    sum += kernel[i + radius] * src.at(xx, yy);
                    wsum += kernel[i + radius];
                }
                dst.set(x, y, sum / wsum);
            }
        }
        return dst;
    };
    return pass(pass(map, true), false);
}

inline FloatMap add_noise(const FloatMap& map, double sigma_m, std::uint64_t key) {
    if (sigma_m <= 0.0) return map;
    FloatMap out = map;
    Rng rng(rng_key(key, 0x6e6f697365ULL));
    for (int y = 0; y < out.height; ++y)
        for (int x = 0; x < out.width; ++x) {
            const double n = rng.normal();  // consume one draw per pixel regardless of mask
            if (out.is_valid(x, y)) out.at(x, y) = std::fmax(1e-6, out.at(x, y) + sigma_m * n);
        }
    return out;
}

inline FloatMap affine_distort(const FloatMap& map, double scale, double shift_m) {
    if (scale == 1.0 && shift_m == 0.0) return map;
    FloatMap out = map;
    for (size_t i = 0; i < out.values.size(); ++i)
        if (out.valid[i]) out.values[i] = std::fmax(1e-6, scale * out.values[i] + shift_m);
    return out;
}

// Monocular estimator stand-in: blur, then noise, then affine distortion.
inline FloatMap simulate_monocular(const FloatMap& gt, const CorruptionSpec& spec,
                                   std::uint64_t key) {
    return affine_distort(add_noise(gaussian_blur(gt, spec.blur_sigma_px), spec.noise_sigma_m, key),
                          spec.affine_scale, spec.affine_shift_m);
}

struct EvalParams {
    double grad_threshold = 0.0;          // 0 picks the default from the gt range
    double grad_threshold_fraction = 0.05;
    double match_radius = 2.0;
};

// Full evaluation of a prediction against ground truth with a baseline as
// the sharpness/F1 reference. Both prediction and baseline are median-scale
// aligned to gt first, so scale-ambiguous inputs compare fairly.
inline MetricsReport evaluate(const FloatMap& pred, const FloatMap& variance, const FloatMap& gt,
                              const FloatMap& baseline, const EvalParams& params = {}) {
    MetricsReport report;
    const FloatMap pred_aligned = median_align(pred, gt);
    const FloatMap base_aligned = median_align(baseline, gt);

    report.grad_threshold = params.grad_threshold > 0.0
                                ? params.grad_threshold
                                : default_grad_threshold(gt, params.grad_threshold_fraction);
    report.match_radius = params.match_radius;

    report.mse = mse(pred_aligned, gt, &report.mse_pixels);
    mean_gradient(pred_aligned, &report.sharpness_pixels);
    report.edge_sharpness_ratio = edge_sharpness(pred_aligned, base_aligned);
    report.edge_f1 = edge_f1(pred_aligned, gt, report.grad_threshold, report.match_radius);

    FloatMap abs_error(gt.width, gt.height);
    for (int y = 0; y < gt.height; ++y)
        for (int x = 0; x < gt.width; ++x)
            if (pred_aligned.is_valid(x, y) && gt.is_valid(x, y))
                abs_error.set(x, y, std::fabs(pred_aligned.at(x, y) - gt.at(x, y)));
    const CorrelationResult corr = uncertainty_error_correlation(variance, abs_error);
    report.uncertainty_error_spearman = corr.spearman;
    report.uncertainty_curve = corr.curve;
    report.correlation_pixels = corr.pixels;
    return report;
}

}  // namespace depthfuse
