#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

// Per-pixel float grid with a validity mask: the currency of the pipeline.
// Used for both depth (meters) and variance (meters^2); row 0 is the top of
// the image.

namespace depthfuse {

struct FloatMap {
    int width = 0, height = 0;
    std::vector<double> values;
    std::vector<std::uint8_t> valid;

    FloatMap() = default;
    FloatMap(int w, int h, double fill = 0.0, bool valid_fill = false)
        : width(w), height(h), values(static_cast<size_t>(w) * h, fill),
          valid(static_cast<size_t>(w) * h, valid_fill ? 1 : 0) {
        if (w <= 0 || h <= 0) throw std::invalid_argument("FloatMap: non-positive size");
    }

    size_t index(int x, int y) const { return static_cast<size_t>(y) * width + x; }
    bool in_bounds(int x, int y) const { return x >= 0 && x < width && y >= 0 && y < height; }

    double at(int x, int y) const { return values[index(x, y)]; }
    double& at(int x, int y) { return values[index(x, y)]; }
    bool is_valid(int x, int y) const { return valid[index(x, y)] != 0; }

    void set(int x, int y, double v) {
        values[index(x, y)] = v;
        valid[index(x, y)] = 1;
    }
    void set_invalid(int x, int y) {
        values[index(x, y)] = 0.0;
        valid[index(x, y)] = 0;
    }

    size_t pixel_count() const { return values.size(); }

    size_t valid_count() const {
        size_t n = 0;
        for (auto v : valid) n += v != 0;
        return n;
    }

    double valid_fraction() const {
        return pixel_count() == 0 ? 0.0 : static_cast<double>(valid_count()) / pixel_count();
    }

    bool same_shape(const FloatMap& o) const { return width == o.width && height == o.height; }
};

using DepthMap = FloatMap;
using VarianceMap = FloatMap;

}  // namespace depthfuse
