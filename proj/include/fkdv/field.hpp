#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <utility>
#include <vector>

#include "fkdv/error.hpp"
#include "fkdv/fft.hpp"
#include "fkdv/grid.hpp"

namespace fkdv {

/// Real periodic grid function. Immutable after construction; may carry the
/// spectrum it was built from so repeated transforms are skipped.
class Field {
public:
    Field() = default;

    Field(GridPtr grid, std::vector<double> samples) : grid_(std::move(grid)), samples_(std::move(samples)) {
        if (!grid_) throw ConfigError("field without grid");
        if (samples_.size() != grid_->points()) throw ConfigError("field sample count does not match grid");
        for (double v : samples_) {
            if (!std::isfinite(v)) throw DomainError("field sample is not finite");
        }
    }

    static Field zeros(GridPtr grid) {
        std::vector<double> s(grid->points(), 0.0);
        return Field(std::move(grid), std::move(s));
    }

    /// Samples f(x) for a callable of x (1D) or (x1, x2) (2D).
    template <class Fn>
    static Field from_function(GridPtr grid, Fn&& fn) {
        std::vector<double> s(grid->points());
        if (grid->dim() == 1) {
            for (std::size_t i = 0; i < s.size(); ++i) {
                if constexpr (std::is_invocable_v<Fn, double>) {
                    s[i] = fn(grid->coordinate(0, i));
                } else {
                    s[i] = fn(grid->coordinate(0, i), 0.0);
                }
            }
        } else {
            const std::size_t n1 = grid->size(1);
            for (std::size_t i = 0; i < grid->size(0); ++i) {
                for (std::size_t j = 0; j < n1; ++j) {
                    if constexpr (std::is_invocable_v<Fn, double, double>) {
                        s[i * n1 + j] = fn(grid->coordinate(0, i), grid->coordinate(1, j));
                    } else {
                        s[i * n1 + j] = fn(std::hypot(grid->coordinate(0, i), grid->coordinate(1, j)));
                    }
                }
            }
        }
        return Field(std::move(grid), std::move(s));
    }

    /// Builds the field from half-layout modes and keeps them cached.
    static Field from_spectrum(GridPtr grid, Spectrum spec) {
        auto samples = fft_inverse(grid->dim(), grid->size(0), grid->dim() == 2 ? grid->size(1) : 1, spec);
        Field f(std::move(grid), std::move(samples));
        f.spectrum_ = std::make_shared<const Spectrum>(std::move(spec));
        return f;
    }

    [[nodiscard]] const GridPtr& grid_ptr() const { return grid_; }
    [[nodiscard]] const Grid& grid() const { return *grid_; }
    [[nodiscard]] std::span<const double> samples() const { return samples_; }
    [[nodiscard]] double operator[](std::size_t i) const { return samples_[i]; }
    [[nodiscard]] std::size_t size() const { return samples_.size(); }
    [[nodiscard]] bool has_cached_spectrum() const { return static_cast<bool>(spectrum_); }

    [[nodiscard]] Spectrum spectrum() const {
        if (spectrum_) return *spectrum_;
        return fft_forward(grid_->dim(), grid_->size(0), grid_->dim() == 2 ? grid_->size(1) : 1, samples_);
    }

    /// Pointwise map to a new field.
    template <class Fn>
    [[nodiscard]] Field map(Fn&& fn) const {
        std::vector<double> s(samples_.size());
        std::transform(samples_.begin(), samples_.end(), s.begin(), fn);
        return Field(grid_, std::move(s));
    }

    [[nodiscard]] double sup_norm() const {
        double m = 0.0;
        for (double v : samples_) m = std::max(m, std::abs(v));
        return m;
    }
    [[nodiscard]] double max() const { return *std::max_element(samples_.begin(), samples_.end()); }
    [[nodiscard]] std::size_t argmax() const {
        return static_cast<std::size_t>(std::max_element(samples_.begin(), samples_.end()) - samples_.begin());
    }
    /// h^d-weighted sum (periodic trapezoid rule).
    [[nodiscard]] double integral() const {
        return grid_->cell_volume() * static_cast<double>(std::accumulate(samples_.begin(), samples_.end(), 0.0L));
    }

    friend Field operator+(const Field& a, const Field& b) { return combine(a, b, 1.0, 1.0); }
    friend Field operator-(const Field& a, const Field& b) { return combine(a, b, 1.0, -1.0); }
    friend Field operator*(double s, const Field& a) { return a.map([s](double v) { return s * v; }); }
    friend Field operator*(const Field& a, double s) { return s * a; }

    /// a_coef * a + b_coef * b
    static Field combine(const Field& a, const Field& b, double a_coef, double b_coef) {
        check_same_grid(a, b);
        std::vector<double> s(a.samples_.size());
        for (std::size_t i = 0; i < s.size(); ++i) s[i] = a_coef * a.samples_[i] + b_coef * b.samples_[i];
        return Field(a.grid_, std::move(s));
    }

    /// Pointwise (aliased) product; only for already resolved, non-spectral uses.
    friend Field pointwise_product(const Field& a, const Field& b) {
        check_same_grid(a, b);
        std::vector<double> s(a.samples_.size());
        for (std::size_t i = 0; i < s.size(); ++i) s[i] = a.samples_[i] * b.samples_[i];
        return Field(a.grid_, std::move(s));
    }

    static void check_same_grid(const Field& a, const Field& b) {
        if (a.grid_ != b.grid_ && !(*a.grid_ == *b.grid_)) throw ConfigError("fields live on different grids");
    }

private:
    GridPtr grid_;
    std::vector<double> samples_;
    std::shared_ptr<const Spectrum> spectrum_;
};

/// L^2 inner product by the periodic Riemann sum.
inline double inner(const Field& a, const Field& b) {
    Field::check_same_grid(a, b);
    long double s = 0.0;
    const auto x = a.samples();
    const auto y = b.samples();
    for (std::size_t i = 0; i < x.size(); ++i) s += static_cast<long double>(x[i]) * y[i];
    return static_cast<double>(s) * a.grid().cell_volume();
}

inline double l2_norm(const Field& a) { return std::sqrt(inner(a, a)); }

}  // namespace fkdv
