#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "fkdv/field.hpp"
#include "fkdv/spectral.hpp"

namespace fkdv {

namespace detail {

/// Local Lagrange interpolation on a periodic uniform 1D sample array.
inline double lagrange_periodic(std::span<const double> v, double x0, double h, double x, int order) {
    const auto n = static_cast<long>(v.size());
    const double t = (x - x0) / h;
    const long base = static_cast<long>(std::floor(t)) - order / 2 + 1;
    double acc = 0.0;
    for (int a = 0; a < order; ++a) {
        double w = 1.0;
        for (int b = 0; b < order; ++b) {
            if (b != a) w *= (t - static_cast<double>(base + b)) / static_cast<double>(a - b);
        }
        long idx = (base + a) % n;
        if (idx < 0) idx += n;
        acc += w * v[static_cast<std::size_t>(idx)];
    }
    return acc;
}

}  // namespace detail

/// Evaluates a field at off-grid points: spectral refinement by `refine`
/// followed by local Lagrange interpolation of the given order.
class Interpolator {
public:
    explicit Interpolator(const Field& f, std::size_t refine = 8, int order = 8)
        : fine_(pad(f, refine)), order_(order) {}

    [[nodiscard]] double operator()(double x1, double x2 = 0.0) const {
        const Grid& g = fine_.grid();
        if (g.dim() == 1) {
            return detail::lagrange_periodic(fine_.samples(), g.coordinate(0, 0), g.spacing(0), x1, order_);
        }
        const std::size_t n0 = g.size(0);
        const std::size_t n1 = g.size(1);
        const double h0 = g.spacing(0);
        const double t0 = (x1 - g.coordinate(0, 0)) / h0;
        const long base = static_cast<long>(std::floor(t0)) - order_ / 2 + 1;
        std::vector<double> column(static_cast<std::size_t>(order_));
        std::vector<double> nodes(static_cast<std::size_t>(order_));
        for (int a = 0; a < order_; ++a) {
            long i = (base + a) % static_cast<long>(n0);
            if (i < 0) i += static_cast<long>(n0);
            const auto row = fine_.samples().subspan(static_cast<std::size_t>(i) * n1, n1);
            column[static_cast<std::size_t>(a)] =
                detail::lagrange_periodic(row, g.coordinate(1, 0), g.spacing(1), x2, order_);
        }
        double acc = 0.0;
        for (int a = 0; a < order_; ++a) {
            double w = 1.0;
            for (int b = 0; b < order_; ++b) {
                if (b != a) w *= (t0 - static_cast<double>(base + b)) / static_cast<double>(a - b);
            }
            acc += w * column[static_cast<std::size_t>(a)];
        }
        return acc;
    }

private:
    Field fine_;
    int order_;
};

/// g(x) = amp * f(scale * x) on the grid of f. Points mapped outside the box
/// take the value on the box boundary along the same ray, damped by
/// (r_edge / r)^tail_power (zero when tail_power <= 0).
inline Field resample_scaled(const Field& f, double scale, double amp, double tail_power) {
    const Grid& g = f.grid();
    const Interpolator interp(f);
    const double half0 = 0.5 * g.length(0);
    const double half1 = g.dim() == 2 ? 0.5 * g.length(1) : 0.0;
    auto eval = [&](double y1, double y2) {
        double t = 1.0;
        if (std::abs(y1) > half0) t = std::min(t, half0 / std::abs(y1));
        if (g.dim() == 2 && std::abs(y2) > half1) t = std::min(t, half1 / std::abs(y2));
        if (t >= 1.0) return interp(y1, y2);
        if (tail_power <= 0.0) return 0.0;
        return interp(t * y1, t * y2) * std::pow(t, tail_power);
    };
    if (g.dim() == 1) {
        return Field::from_function(f.grid_ptr(), [&](double x) { return amp * eval(scale * x, 0.0); });
    }
    return Field::from_function(f.grid_ptr(),
                                [&](double x, double y) { return amp * eval(scale * x, scale * y); });
}

}  // namespace fkdv
