#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

#include "depthfuse/image.hpp"

// Evaluation metrics: median-scale-aligned MSE, edge sharpness relative to a
// baseline, edge F1 under tolerant matching, and the Spearman correlation
// between predicted uncertainty and true error. Reductions run in fixed
// row-major order.

namespace depthfuse {

class MetricsError : public std::runtime_error {
  public:
    explicit MetricsError(const std::string& what) : std::runtime_error(what) {}
};

inline size_t overlap_count(const FloatMap& a, const FloatMap& b) {
    size_t n = 0;
    for (size_t i = 0; i < a.valid.size(); ++i) n += a.valid[i] && b.valid[i];
    return n;
}

// Median of the given values; even counts average the two central order
// statistics.
inline double median(std::vector<double> values) {
    if (values.empty()) throw MetricsError("median of empty set");
    const size_t mid = values.size() / 2;
    std::nth_element(values.begin(), values.begin() + mid, values.end());
    double m = values[mid];
    if (values.size() % 2 == 0) {
        std::nth_element(values.begin(), values.begin() + mid - 1, values.begin() + mid);
        m = 0.5 * (m + values[mid - 1]);
    }
    return m;
}

// Rescale pred by median(gt)/median(pred), medians taken over mutually valid
// pixels. Multiplicative only: the standard evaluation-time alignment for
// scale-ambiguous depth.
inline FloatMap median_align(const FloatMap& pred, const FloatMap& gt,
                             double* scale_out = nullptr) {
    if (!pred.same_shape(gt)) throw MetricsError("median_align: shape mismatch");
    std::vector<double> pv, gv;
    for (size_t i = 0; i < pred.valid.size(); ++i) {
        if (pred.valid[i] && gt.valid[i]) {
            pv.push_back(pred.values[i]);
            gv.push_back(gt.values[i]);
        }
    }
    if (pv.empty()) throw MetricsError("median_align: no overlapping valid pixels");
    const double mp = median(std::move(pv));
    const double mg = median(std::move(gv));
    if (!(mp > 0.0)) throw MetricsError("median_align: non-positive prediction median");
    const double scale = mg / mp;
    if (scale_out) *scale_out = scale;
    FloatMap aligned = pred;
    for (size_t i = 0; i < aligned.values.size(); ++i)
        if (aligned.valid[i]) aligned.values[i] *= scale;
    return aligned;
}

inline double mse(const FloatMap& pred, const FloatMap& gt, size_t* pixels_out = nullptr) {
    if (!pred.same_shape(gt)) throw MetricsError("mse: shape mismatch");
    double sum = 0.0;
    size_t n = 0;
    for (size_t i = 0; i < pred.valid.size(); ++i) {
        if (!pred.valid[i] || !gt.valid[i]) continue;
        const double d = pred.values[i] - gt.values[i];
        sum += d * d;
        ++n;
    }
    if (n == 0) throw MetricsError("mse: no overlapping valid pixels");
    if (pixels_out) *pixels_out = n;
    return sum / static_cast<double>(n);
}

// Central-difference gradient magnitude; defined only where the pixel and
// all four neighbors are valid, so mask boundaries do not leak into edges.
inline FloatMap gradient_magnitude(const FloatMap& map) {
    FloatMap g(map.width, map.height);
    for (int y = 1; y + 1 < map.height; ++y) {
        for (int x = 1; x + 1 < map.width; ++x) {
            if (!map.is_valid(x, y) || !map.is_valid(x - 1, y) || !map.is_valid(x + 1, y) ||
                !map.is_valid(x, y - 1) || !map.is_valid(x, y + 1))
                continue;
            const double gx = 0.5 * (map.at(x + 1, y) - map.at(x - 1, y));
            const double gy = 0.5 * (map.at(x, y + 1) - map.at(x, y - 1));
            g.set(x, y, std::hypot(gx, gy));
        }
    }
    return g;
}

inline double mean_gradient(const FloatMap& map, size_t* pixels_out = nullptr) {
    const FloatMap g = gradient_magnitude(map);
    double sum = 0.0;
    size_t n = 0;
    for (size_t i = 0; i < g.valid.size(); ++i)
        if (g.valid[i]) {
            sum += g.values[i];
            ++n;
        }
    if (pixels_out) *pixels_out = n;
    return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

// Mean gradient magnitude of pred over mean gradient magnitude of baseline.
inline double edge_sharpness(const FloatMap& pred, const FloatMap& baseline) {
    if (!pred.same_shape(baseline)) throw MetricsError("edge_sharpness: shape mismatch");
    const double denom = mean_gradient(baseline);
    if (denom <= 0.0) throw MetricsError("edge_sharpness: baseline has no gradient");
    return mean_gradient(pred) / denom;
}

// Default edge threshold: a fraction of the ground-truth depth range.
inline double default_grad_threshold(const FloatMap& gt, double fraction = 0.05) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < gt.valid.size(); ++i)
        if (gt.valid[i]) {
            lo = std::fmin(lo, gt.values[i]);
            hi = std::fmax(hi, gt.values[i]);
        }
    if (!(hi > lo)) throw MetricsError("default_grad_threshold: degenerate depth range");
    return fraction * (hi - lo);
}

namespace detail {

inline std::vector<std::pair<int, int>> edge_pixels(const FloatMap& map, double threshold) {
    const FloatMap g = gradient_magnitude(map);
    std::vector<std::pair<int, int>> edges;
    for (int y = 0; y < g.height; ++y)
        for (int x = 0; x < g.width; ++x)
            if (g.is_valid(x, y) && g.at(x, y) > threshold) edges.emplace_back(x, y);
    return edges;
}

// Fraction of `from` pixels with a `to` pixel within the radius.
inline double matched_fraction(const std::vector<std::pair<int, int>>& from,
                               const std::vector<std::uint8_t>& to_mask, int width, int height,
                               double radius) {
    const int r = static_cast<int>(std::ceil(radius));
    const double r2 = radius * radius;
    size_t matched = 0;
    for (const auto& [x, y] : from) {
        bool hit = false;
        for (int dy = -r; dy <= r && !hit; ++dy) {
            const int yy = y + dy;
            if (yy < 0 || yy >= height) continue;
            for (int dx = -r; dx <= r; ++dx) {
                const int xx = x + dx;
                if (xx < 0 || xx >= width) continue;
                if (dx * dx + dy * dy > r2) continue;
                if (to_mask[static_cast<size_t>(yy) * width + xx]) {
                    hit = true;
                    break;
                }
            }
        }
        matched += hit;
    }
    return from.empty() ? 0.0 : static_cast<double>(matched) / from.size();
}

}  // namespace detail

// F1 of thresholded gradient edges under bidirectional Chamfer-style
// matching within match_radius. No edges on either side counts as perfect
// agreement; edges on exactly one side as total disagreement.
inline double edge_f1(const FloatMap& pred, const FloatMap& gt, double grad_threshold,
                      double match_radius = 2.0) {
    if (!pred.same_shape(gt)) throw MetricsError("edge_f1: shape mismatch");
    const auto pred_edges = detail::edge_pixels(pred, grad_threshold);
    const auto gt_edges = detail::edge_pixels(gt, grad_threshold);
    if (pred_edges.empty() && gt_edges.empty()) return 1.0;
    if (pred_edges.empty() || gt_edges.empty()) return 0.0;

    std::vector<std::uint8_t> pred_mask(static_cast<size_t>(pred.width) * pred.height, 0);
    std::vector<std::uint8_t> gt_mask(pred_mask.size(), 0);
    for (const auto& [x, y] : pred_edges) pred_mask[static_cast<size_t>(y) * pred.width + x] = 1;
    for (const auto& [x, y] : gt_edges) gt_mask[static_cast<size_t>(y) * pred.width + x] = 1;

    const double precision =
        detail::matched_fraction(pred_edges, gt_mask, pred.width, pred.height, match_radius);
    const double recall =
        detail::matched_fraction(gt_edges, pred_mask, pred.width, pred.height, match_radius);
    if (precision + recall == 0.0) return 0.0;
    return 2.0 * precision * recall / (precision + recall);
}

// Fractional (average-on-ties) ranks, 1-based.
inline std::vector<double> fractional_ranks(const std::vector<double>& v) {
    std::vector<size_t> order(v.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(v.size());
    size_t i = 0;
    while (i < order.size()) {
        size_t j = i;
        while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
        const double rank = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
        for (size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
        i = j + 1;
    }
    return ranks;
}

// Spearman rank correlation; empty when either side is constant (ranks carry
// no information).
inline std::optional<double> spearman(const std::vector<double>& a,
                                      const std::vector<double>& b) {
    if (a.size() != b.size()) throw MetricsError("spearman: size mismatch");
    if (a.size() < 2) throw MetricsError("spearman: need at least two samples");
    const auto ra = fractional_ranks(a);
    const auto rb = fractional_ranks(b);
    const double n = static_cast<double>(a.size());
    double ma = 0.0, mb = 0.0;
    for (size_t i = 0; i < ra.size(); ++i) {
        ma += ra[i];
        mb += rb[i];
    }
    ma /= n;
    mb /= n;
    double num = 0.0, da = 0.0, db = 0.0;
    for (size_t i = 0; i < ra.size(); ++i) {
        num += (ra[i] - ma) * (rb[i] - mb);
        da += (ra[i] - ma) * (ra[i] - ma);
        db += (rb[i] - mb) * (rb[i] - mb);
    }
    if (da == 0.0 || db == 0.0) return std::nullopt;
    return num / std::sqrt(da * db);
}

struct UncertaintyBin {
    double percentile = 0.0;  // upper edge of the uncertainty percentile bin
    double mean_abs_error = 0.0;
    size_t pixels = 0;
};

struct CorrelationResult {
    std::optional<double> spearman;  // empty when undefined (constant input)
    std::vector<UncertaintyBin> curve;
    size_t pixels = 0;
};

// Spearman correlation between predicted variance and absolute error over
// mutually valid pixels, plus the mean absolute error per uncertainty
// decile.
inline CorrelationResult uncertainty_error_correlation(const FloatMap& variance,
                                                       const FloatMap& abs_error,
                                                       int bins = 10) {
    if (!variance.same_shape(abs_error))
        throw MetricsError("uncertainty_error_correlation: shape mismatch");
    std::vector<double> var, err;
    for (size_t i = 0; i < variance.valid.size(); ++i) {
        if (variance.valid[i] && abs_error.valid[i]) {
            var.push_back(variance.values[i]);
            err.push_back(abs_error.values[i]);
        }
    }
    if (var.size() < 10)
        throw MetricsError("uncertainty_error_correlation: fewer than 10 valid pixels");

    CorrelationResult result;
    result.pixels = var.size();
    result.spearman = spearman(var, err);

    std::vector<size_t> order(var.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return var[a] < var[b]; });
    const size_t n = order.size();
    for (int b = 0; b < bins; ++b) {
        const size_t lo = n * b / bins;
        const size_t hi = n * (b + 1) / bins;
        if (hi <= lo) continue;
        double sum = 0.0;
        for (size_t k = lo; k < hi; ++k) sum += err[order[k]];
        result.curve.push_back(UncertaintyBin{100.0 * (b + 1) / bins,
                                              sum / static_cast<double>(hi - lo), hi - lo});
    }
    return result;
}

struct MetricsReport {
    double mse = 0.0;
    double edge_sharpness_ratio = 0.0;
    double edge_f1 = 0.0;
    std::optional<double> uncertainty_error_spearman;
    std::vector<UncertaintyBin> uncertainty_curve;
    size_t mse_pixels = 0;
    size_t sharpness_pixels = 0;
    size_t correlation_pixels = 0;
    double grad_threshold = 0.0;
    double match_radius = 0.0;
};

}  // namespace depthfuse
