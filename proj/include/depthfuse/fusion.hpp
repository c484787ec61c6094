#pragma once

#include <algorithm>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "depthfuse/image.hpp"
#include "depthfuse/views.hpp"
#include "depthfuse/volume.hpp"

// The statistical core of the pipeline: multi-view candidates are fused by
// precision weighting, the fused depth is calibrated to the monocular frame
// with a variance-weighted affine fit, the monocular noise level is estimated
// by moment matching, and the two observations combine into a Gaussian
// posterior per pixel. A driver iterates the whole cycle, feeding each
// refined output back in as the next prior.

namespace depthfuse {

struct FusionConfig {
    int iterations = 2;

    // Ablation switches; each removes a single component from the full model.
    bool constant_nerf_variance = false;           // variance map -> its mean
    bool min_aggregation = false;                  // nearest candidate instead of fusion
    bool skip_calibration = false;                 // a = 1, b = 0
    std::optional<double> fixed_prior_variance;    // m^2; bypasses the estimate
    bool drop_monocular_prior = false;             // ignore the prior where supported

    double variance_floor = kVarianceFloor;  // m^2, applied before reciprocals
    double degeneracy_floor = 1e-12;         // relative, on the WLS denominator
};

// Per-pixel precision-weighted fusion of the candidate views. Valid pixels
// are those with positive total precision tau; var = 1/tau there.
struct AggregatedDepth {
    FloatMap mu;   // precision-weighted mean depth
    FloatMap var;  // 1/tau
    FloatMap tau;  // total precision, sum of candidate inverse variances

    double support_fraction() const { return mu.valid_fraction(); }
};

inline AggregatedDepth aggregate_views(const CandidateSet& cands, const FusionConfig& config) {
    AggregatedDepth agg{FloatMap(cands.width, cands.height), FloatMap(cands.width, cands.height),
                        FloatMap(cands.width, cands.height)};
    for (int y = 0; y < cands.height; ++y) {
        for (int x = 0; x < cands.width; ++x) {
            const auto& list = cands.at(x, y);
            if (list.empty()) continue;  // no view reaches this pixel: tau = 0
            if (config.min_aggregation) {
                // Heuristic baseline: keep the nearest candidate outright.
                const Candidate* best = &list[0];
                for (const Candidate& c : list)
                    if (c.mu < best->mu) best = &c;
                const double v = std::fmax(config.variance_floor, best->var);
                agg.mu.set(x, y, best->mu);
                agg.var.set(x, y, v);
                agg.tau.set(x, y, 1.0 / v);
            } else {
                double tau = 0.0, weighted = 0.0;
                for (const Candidate& c : list) {
                    const double v = std::fmax(config.variance_floor, c.var);
                    tau += 1.0 / v;
                    weighted += c.mu / v;
                }
                agg.mu.set(x, y, weighted / tau);
                agg.var.set(x, y, 1.0 / tau);
                agg.tau.set(x, y, tau);
            }
        }
    }
    return agg;
}

// constant_nerf_variance ablation: replace the per-pixel aggregated variance
// with its mean over the fit region (supported pixels with a valid prior).
inline void apply_constant_nerf_variance(AggregatedDepth& agg, const DepthMap& prior) {
    double sum = 0.0;
    size_t n = 0;
    for (int y = 0; y < agg.var.height; ++y)
        for (int x = 0; x < agg.var.width; ++x)
            if (agg.var.is_valid(x, y) && prior.is_valid(x, y)) {
                sum += agg.var.at(x, y);
                ++n;
            }
    if (n == 0) return;
    const double mean = sum / static_cast<double>(n);
    for (int y = 0; y < agg.var.height; ++y)
        for (int x = 0; x < agg.var.width; ++x)
            if (agg.var.is_valid(x, y)) {
                agg.var.at(x, y) = mean;
                agg.tau.at(x, y) = 1.0 / mean;
            }
}

struct AffineCalibration {
    double a = 1.0;  // scale
    double b = 0.0;  // shift, m
    bool valid = false;
};

// Closed-form weighted least squares for prior ~ a * mu + b, weighted by the
// aggregated precision. Sums run in a fixed row-major order so results are
// identical run to run. Degenerate fits (constant or empty mu) are flagged
// invalid; the caller reverts to the monocular estimate.
inline AffineCalibration fit_affine_wls(const AggregatedDepth& agg, const DepthMap& prior,
                                        double degeneracy_floor = 1e-12) {
    if (!agg.mu.same_shape(prior))
        throw std::invalid_argument("fit_affine_wls: shape mismatch");
    double s_p = 0.0, s_pu = 0.0, s_pv = 0.0, s_puu = 0.0, s_puv = 0.0;
    for (int y = 0; y < prior.height; ++y) {
        for (int x = 0; x < prior.width; ++x) {
            if (!agg.mu.is_valid(x, y) || !prior.is_valid(x, y)) continue;
            const double w = 1.0 / agg.var.at(x, y);
            const double u = agg.mu.at(x, y);
            const double v = prior.at(x, y);
            s_p += w;
            s_pu += w * u;
            s_pv += w * v;
            s_puu += w * u * u;
            s_puv += w * u * v;
        }
    }
    AffineCalibration calib;
    if (s_p <= 0.0) return calib;
    const double denom = s_p * s_puu - s_pu * s_pu;
    if (std::fabs(denom) <= degeneracy_floor * s_p * s_puu) return calib;
    calib.a = (s_p * s_puv - s_pu * s_pv) / denom;
    calib.b = (s_pv - calib.a * s_pu) / s_p;
    calib.valid = std::isfinite(calib.a) && std::isfinite(calib.b);
    return calib;
}

// Moment-matching estimate of the prior noise variance: the mean excess of
// the squared calibrated residual over the (scaled) aggregated variance,
// clamped at zero. Returns 0 when the fit region is empty.
inline double estimate_prior_variance(const DepthMap& prior, const AggregatedDepth& agg,
                                      double a, double b) {
    double sum = 0.0;
    size_t n = 0;
    for (int y = 0; y < prior.height; ++y) {
        for (int x = 0; x < prior.width; ++x) {
            if (!agg.mu.is_valid(x, y) || !prior.is_valid(x, y)) continue;
            const double calibrated = a * agg.mu.at(x, y) + b;
            const double delta = prior.at(x, y) - calibrated;
            sum += delta * delta - a * a * agg.var.at(x, y);
            ++n;
        }
    }
    if (n == 0) return 0.0;
    return std::fmax(0.0, sum / static_cast<double>(n));
}

struct RefinedDepth {
    DepthMap depth;
    VarianceMap variance;
};

// Gaussian posterior per pixel: the prior (precision 1/sigma_o2) against the
// calibrated aggregate (precision 1/(a^2 var)). Unsupported pixels pass the
// prior through with its variance.
inline RefinedDepth bayes_fuse(const DepthMap& prior, double sigma_o2,
                               const AggregatedDepth& agg, const AffineCalibration& calib,
                               const FusionConfig& config) {
    if (!(sigma_o2 >= config.variance_floor))
        throw std::invalid_argument("bayes_fuse: prior variance below floor");
    RefinedDepth out{DepthMap(prior.width, prior.height),
                     VarianceMap(prior.width, prior.height)};
    for (int y = 0; y < prior.height; ++y) {
        for (int x = 0; x < prior.width; ++x) {
            const bool supported = agg.mu.is_valid(x, y);
            const bool has_prior = prior.is_valid(x, y);
            if (supported) {
                const double calibrated = calib.a * agg.mu.at(x, y) + calib.b;
                const double var_r =
                    std::fmax(config.variance_floor, calib.a * calib.a * agg.var.at(x, y));
                const double prec_r = 1.0 / var_r;
                const double prec_o =
                    (config.drop_monocular_prior || !has_prior) ? 0.0 : 1.0 / sigma_o2;
                const double post_var = 1.0 / (prec_o + prec_r);
                const double post_mu =
                    (prec_o * (has_prior ? prior.at(x, y) : 0.0) + prec_r * calibrated) *
                    post_var;
                out.depth.set(x, y, post_mu);
                out.variance.set(x, y, post_var);
            } else if (has_prior) {
                out.depth.set(x, y, prior.at(x, y));
                out.variance.set(x, y, sigma_o2);
            }
        }
    }
    return out;
}

struct ViewSynthesisParams {
    PerturbationSpec perturbation;
    int num_views = 10;    // N: warped views per iteration
    int num_rendered = 0;  // K: rendered views; 0 means K = N
};

struct IterationDiagnostics {
    int iteration = 0;
    double a = 1.0;
    double b = 0.0;
    double sigma_o2 = 0.0;        // value used in fusion (after flooring)
    double support_fraction = 0.0;
    double hole_fraction = 0.0;
    bool degenerate = false;
};

struct RefineResult {
    DepthMap depth;
    VarianceMap variance;
    std::vector<IterationDiagnostics> diagnostics;

    bool all_degenerate() const {
        for (const auto& d : diagnostics)
            if (!d.degenerate) return false;
        return !diagnostics.empty();
    }
};

// Where rendered views come from: a density field rendered at perturbed
// poses, or injected per-view (pose, depth, variance) triples. Injected
// views win when both are present.
struct RefineSource {
    const DensityField* field = nullptr;
    std::span<const RenderedView> injected;
};

// One full refinement cycle per iteration: synthesize/render views ->
// reproject -> aggregate -> calibrate -> estimate prior noise -> fuse. The
// fused depth seeds the next iteration's warping source and acts as its
// prior; the prior noise is re-estimated every iteration. A degenerate
// calibration turns that iteration into a pass-through.
inline RefineResult refine(const DepthMap& mono, const RefineSource& source,
                           const Intrinsics& intr, const Pose& ref_pose,
                           const SamplingParams& sampling, const ViewSynthesisParams& views,
                           const FusionConfig& config, std::uint64_t seed = 0) {
    if (config.iterations < 1) throw std::invalid_argument("refine: iterations must be >= 1");
    if (mono.width != intr.width || mono.height != intr.height)
        throw std::invalid_argument("refine: prior shape does not match intrinsics");
    if (!source.field && source.injected.empty())
        throw std::invalid_argument("refine: no density field and no injected views");

    RefineResult result;
    DepthMap prior = mono;
    VarianceMap prior_var;

    for (int it = 0; it < config.iterations; ++it) {
        std::vector<RenderedView> rendered;
        double hole_fraction = 0.0;

        if (!source.injected.empty()) {
            rendered.assign(source.injected.begin(), source.injected.end());
            for (const auto& v : rendered) hole_fraction += 1.0 - v.depth.valid_fraction();
            hole_fraction /= static_cast<double>(rendered.size());
        } else {
            const int n = views.num_views;
            const int k = views.num_rendered > 0 ? views.num_rendered : n;
            const std::uint64_t index_base =
                static_cast<std::uint64_t>(it) * static_cast<std::uint64_t>(std::max(n, k));
            const auto synthesized =
                synthesize_views(prior, intr, ref_pose, n, views.perturbation, index_base);
            for (const auto& v : synthesized) hole_fraction += v.hole_fraction;
            hole_fraction /= static_cast<double>(synthesized.size());
            rendered.reserve(k);
            for (int j = 0; j < k; ++j) {
                const Pose pose = perturb_pose(ref_pose, views.perturbation, index_base + j);
                RenderResult rr = render_depth_map(*source.field, intr, pose, sampling,
                                                   rng_key(seed, it, j));
                rendered.push_back(
                    RenderedView{pose, std::move(rr.depth), std::move(rr.variance)});
            }
        }

        const CandidateSet cands =
            reproject_to_reference(rendered, intr, ref_pose, config.variance_floor);
        AggregatedDepth agg = aggregate_views(cands, config);
        if (config.constant_nerf_variance) apply_constant_nerf_variance(agg, prior);

        AffineCalibration calib;
        if (config.skip_calibration) {
            calib = AffineCalibration{1.0, 0.0, true};
        } else {
            calib = fit_affine_wls(agg, prior, config.degeneracy_floor);
        }
        const bool degenerate = !calib.valid;
        if (degenerate) calib = AffineCalibration{1.0, 0.0, false};

        double sigma_raw = config.fixed_prior_variance
                               ? *config.fixed_prior_variance
                               : estimate_prior_variance(prior, agg, calib.a, calib.b);
        const double sigma_o2 = std::fmax(config.variance_floor, sigma_raw);

        RefinedDepth refined;
        if (degenerate) {
            // Revert to the current prior for this cycle.
            refined.depth = prior;
            if (prior_var.width == prior.width && prior_var.height == prior.height) {
                refined.variance = prior_var;
            } else {
                refined.variance = VarianceMap(prior.width, prior.height);
                for (int y = 0; y < prior.height; ++y)
                    for (int x = 0; x < prior.width; ++x)
                        if (prior.is_valid(x, y)) refined.variance.set(x, y, sigma_o2);
            }
        } else {
            refined = bayes_fuse(prior, sigma_o2, agg, calib, config);
        }

        result.diagnostics.push_back(IterationDiagnostics{it, calib.a, calib.b, sigma_o2,
                                                          agg.support_fraction(), hole_fraction,
                                                          degenerate});
        prior = std::move(refined.depth);
        prior_var = std::move(refined.variance);
    }

    result.depth = std::move(prior);
    result.variance = std::move(prior_var);
    return result;
}

}  // namespace depthfuse
