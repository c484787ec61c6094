#pragma once

#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

#include "depthfuse/geometry.hpp"
#include "depthfuse/math.hpp"

// Volumetric density fields and the analytic scenes that stand in for a
// trained radiance field. Each primitive carries a density bump of width
// `softness` around its surface with plateau `peak_density`:
//
//     density(p) = peak_density * max(0, 1 - |signed_distance(p)| / softness)
//
// Scenes compose primitives by pointwise maximum. The zero level set of each
// primitive is also intersectable in closed form, which gives exact
// ground-truth depth for the same geometry the field renders.

namespace depthfuse {

class DensityField {
  public:
    virtual ~DensityField() = default;
    // Non-negative density (1/m) at a world point. Must be deterministic and
    // safe for concurrent read-only evaluation.
    virtual double density(const Vec3& point) const = 0;
};

struct Primitive {
    enum class Kind { Plane, Sphere, Box };

    Kind kind = Kind::Plane;
    // Plane: dot(normal, p) = offset, normal unit length.
    Vec3 normal{0, 0, 1};
    double offset = 0.0;
    // Sphere / box.
    Vec3 center;
    double radius = 0.0;
    Vec3 half_extents;

    double peak_density = 0.0;  // 1/m
    double softness = 0.0;      // m, half-width of the falloff band

    double signed_distance(const Vec3& p) const {
        switch (kind) {
            case Kind::Plane:
                return dot(normal, p) - offset;
            case Kind::Sphere:
                return norm(p - center) - radius;
            case Kind::Box: {
                const Vec3 q = cwise_abs(p - center) - half_extents;
                const Vec3 outside = cwise_max(q, Vec3{0, 0, 0});
                const double inside = std::fmin(max_component(q), 0.0);
                return norm(outside) + inside;
            }
        }
        return std::numeric_limits<double>::infinity();
    }

    double density(const Vec3& p) const {
        const double d = std::fabs(signed_distance(p));
        return d >= softness ? 0.0 : peak_density * (1.0 - d / softness);
    }

    // Smallest t in [t_min, t_max] where the ray crosses the zero level set.
    std::optional<double> first_hit(const Ray& ray, double t_min, double t_max) const {
        switch (kind) {
            case Kind::Plane: {
                const double denom = dot(normal, ray.direction);
                if (std::fabs(denom) < 1e-12) return std::nullopt;
                const double t = (offset - dot(normal, ray.origin)) / denom;
                if (t >= t_min && t <= t_max) return t;
                return std::nullopt;
            }
            case Kind::Sphere: {
                const Vec3 oc = ray.origin - center;
                const double b = dot(ray.direction, oc);
                const double c = dot(oc, oc) - radius * radius;
                const double disc = b * b - c;
                if (disc < 0.0) return std::nullopt;
                const double s = std::sqrt(disc);
                for (double t : {-b - s, -b + s})
                    if (t >= t_min && t <= t_max) return t;
                return std::nullopt;
            }
            case Kind::Box: {
                double entry = -std::numeric_limits<double>::infinity();
                double exit = std::numeric_limits<double>::infinity();
                const double o[3] = {ray.origin.x - center.x, ray.origin.y - center.y,
                                     ray.origin.z - center.z};
                const double d[3] = {ray.direction.x, ray.direction.y, ray.direction.z};
                const double h[3] = {half_extents.x, half_extents.y, half_extents.z};
                for (int i = 0; i < 3; ++i) {
                    if (std::fabs(d[i]) < 1e-15) {
                        if (std::fabs(o[i]) > h[i]) return std::nullopt;
                        continue;
                    }
                    double t0 = (-h[i] - o[i]) / d[i];
                    double t1 = (h[i] - o[i]) / d[i];
                    if (t0 > t1) std::swap(t0, t1);
                    entry = std::fmax(entry, t0);
                    exit = std::fmin(exit, t1);
                }
                if (entry > exit) return std::nullopt;
                for (double t : {entry, exit})
                    if (t >= t_min && t <= t_max) return t;
                return std::nullopt;
            }
        }
        return std::nullopt;
    }
};

class AnalyticScene : public DensityField {
  public:
    AnalyticScene() = default;
    explicit AnalyticScene(std::vector<Primitive> primitives)
        : primitives_(std::move(primitives)) {
        for (const auto& p : primitives_) {
            if (p.peak_density < 0.0) throw std::invalid_argument("primitive: negative density");
            if (p.softness <= 0.0) throw std::invalid_argument("primitive: softness must be > 0");
        }
    }

    void add(const Primitive& p) { primitives_.push_back(p); }
    const std::vector<Primitive>& primitives() const { return primitives_; }
    bool empty() const { return primitives_.empty(); }

    double density(const Vec3& point) const override {
        double d = 0.0;
        for (const auto& p : primitives_) d = std::fmax(d, p.density(point));
        return d;
    }

    // Nearest surface crossing along the ray, or empty if nothing is hit.
    std::optional<double> first_hit(const Ray& ray, double t_min, double t_max) const {
        std::optional<double> best;
        for (const auto& p : primitives_) {
            const auto t = p.first_hit(ray, t_min, t_max);
            if (t && (!best || *t < *best)) best = t;
        }
        return best;
    }

  private:
    std::vector<Primitive> primitives_;
};

// Fixed density everywhere; handy in tests.
class ConstantField : public DensityField {
  public:
    explicit ConstantField(double value) : value_(value) {}
    double density(const Vec3&) const override { return value_; }

  private:
    double value_;
};

}  // namespace depthfuse
