#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace gibbsflow {

/// Uniform 1D grid with n >= 3 nodes on [lo, hi].
struct Grid1D {
    double lo = 0.0;
    double hi = 1.0;
    int n = 3;

    Grid1D() = default;
    Grid1D(double lo_, double hi_, int n_) : lo(lo_), hi(hi_), n(n_) {
        if (n < 3) throw std::invalid_argument("Grid1D: need n >= 3, got " + std::to_string(n));
        if (!(hi > lo)) throw std::invalid_argument("Grid1D: need hi > lo");
    }

    double spacing() const { return (hi - lo) / static_cast<double>(n - 1); }
    double node(int i) const { return lo + spacing() * static_cast<double>(i); }

    bool contains(double x) const { return x >= lo && x <= hi; }

    /// Index of the nearest node to x; throws if x lies outside the grid.
    int nearest_index(double x) const {
        if (!contains(x)) {
            throw std::invalid_argument("Grid1D: point " + std::to_string(x) + " outside [" +
                                        std::to_string(lo) + ", " + std::to_string(hi) + "]");
        }
        int i = static_cast<int>(std::lround((x - lo) / spacing()));
        if (i < 0) i = 0;
        if (i > n - 1) i = n - 1;
        return i;
    }

    std::vector<double> nodes() const {
        std::vector<double> out(static_cast<size_t>(n));
        for (int i = 0; i < n; ++i) out[static_cast<size_t>(i)] = node(i);
        return out;
    }

    /// Linear interpolation of tabulated values at x (clamped to the grid ends).
    double interpolate(const std::vector<double>& values, double x) const {
        if (x <= lo) return values.front();
        if (x >= hi) return values.back();
        const double h = spacing();
        const double u = (x - lo) / h;
        int i = static_cast<int>(u);
        if (i > n - 2) i = n - 2;
        const double frac = u - static_cast<double>(i);
        return values[static_cast<size_t>(i)] * (1.0 - frac) + values[static_cast<size_t>(i) + 1] * frac;
    }
};

/// Trapezoid quadrature of grid-tabulated values.
inline double trapezoid(const std::vector<double>& values, double h) {
    if (values.size() < 2) return 0.0;
    double sum = 0.5 * (values.front() + values.back());
    for (size_t i = 1; i + 1 < values.size(); ++i) sum += values[i];
    return sum * h;
}

}  // namespace gibbsflow
