#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "qdm/errors.hpp"

namespace qdm {

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Scalar field sampled on a regular grid. Row-major storage, row 0 at
// y = y0. Invalid pixels are NaN; there is no separate mask.
struct Map2D {
    std::size_t rows = 0;
    std::size_t cols = 0;
    double pixel_size = 0.0;  // m
    std::vector<double> data;

    Map2D() = default;
    Map2D(std::size_t r, std::size_t c, double px, double fill = 0.0)
        : rows(r), cols(c), pixel_size(px), data(r * c, fill) {}

    double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
    std::size_t size() const { return rows * cols; }
    bool valid(std::size_t r, std::size_t c) const { return std::isfinite(at(r, c)); }
    bool same_shape(const Map2D& o) const { return rows == o.rows && cols == o.cols; }
};

// Three Cartesian components on a shared grid.
struct VectorFieldMap {
    Map2D bx, by, bz;  // T

    std::size_t rows() const { return bx.rows; }
    std::size_t cols() const { return bx.cols; }
    double pixel_size() const { return bx.pixel_size; }

    static VectorFieldMap zeros(std::size_t r, std::size_t c, double px) {
        VectorFieldMap m;
        m.bx = Map2D(r, c, px);
        m.by = Map2D(r, c, px);
        m.bz = Map2D(r, c, px);
        return m;
    }
};

// Summary statistics over the valid pixels of a region. `floor` is only
// meaningful on results from the noise-floor estimators, where it holds the
// headline per-pixel noise figure (T).
struct MapStats {
    double mean = 0.0;
    double stddev = 0.0;
    double min = 0.0;
    double max = 0.0;
    std::size_t n = 0;
    double floor = 0.0;
};

MapStats map_stats(const Map2D& m);

}  // namespace qdm
