#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <memory>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "fkdv/error.hpp"

namespace fkdv {

/// Periodic box [-L/2, L/2)^d sampled on a uniform tensor grid.
///
/// Axis 0 is the propagation direction x_1. Samples are stored row-major
/// with axis 1 (when present) contiguous. Spectra use the real-to-complex
/// half layout: axis 0 keeps all N_0 modes, the last axis keeps N/2+1.
class Grid {
public:
    Grid(int dim, std::array<double, 2> length, std::array<std::size_t, 2> size)
        : dim_(dim), length_(length), size_(size) {
        build_tables();
    }

    [[nodiscard]] int dim() const noexcept { return dim_; }
    [[nodiscard]] double length(int axis) const { return length_[static_cast<std::size_t>(axis)]; }
    [[nodiscard]] std::size_t size(int axis) const { return size_[static_cast<std::size_t>(axis)]; }
    [[nodiscard]] double spacing(int axis) const { return length(axis) / static_cast<double>(size(axis)); }

    /// Total number of physical samples.
    [[nodiscard]] std::size_t points() const noexcept { return dim_ == 1 ? size_[0] : size_[0] * size_[1]; }
    /// Number of stored complex modes in the half layout.
    [[nodiscard]] std::size_t modes() const noexcept { return mode_count_; }
    /// Quadrature weight h^d.
    [[nodiscard]] double cell_volume() const noexcept {
        return dim_ == 1 ? spacing(0) : spacing(0) * spacing(1);
    }

    /// Physical coordinate of sample i along an axis; the origin sits at i = N/2.
    [[nodiscard]] double coordinate(int axis, std::size_t i) const {
        return (static_cast<double>(i) - static_cast<double>(size(axis) / 2)) * spacing(axis);
    }

    /// Signed integer frequency of FFT index k on an axis (Nyquist reported as -N/2).
    [[nodiscard]] long signed_index(int axis, std::size_t k) const {
        const auto n = static_cast<long>(size(axis));
        const auto kk = static_cast<long>(k);
        return kk < n / 2 ? kk : kk - n;
    }

    [[nodiscard]] double wavenumber(int axis, std::size_t k) const {
        return 2.0 * std::numbers::pi * static_cast<double>(signed_index(axis, k)) / length(axis);
    }

    [[nodiscard]] double max_wavenumber() const {
        double m = 0.0;
        for (int a = 0; a < dim_; ++a) {
            m = std::max(m, std::numbers::pi * static_cast<double>(size(a)) / length(a));
        }
        return m;
    }

    // Per-mode tables in the half layout.
    [[nodiscard]] std::span<const double> xi1() const { return xi1_; }
    [[nodiscard]] std::span<const double> xi2() const { return xi2_; }
    [[nodiscard]] std::span<const double> xi_abs() const { return xi_abs_; }
    /// True when the mode sits on a Nyquist line of any axis.
    [[nodiscard]] std::span<const char> nyquist() const { return nyquist_; }
    /// True when the mode sits on the Nyquist line of axis 0.
    [[nodiscard]] std::span<const char> nyquist_x1() const { return nyquist_x1_; }
    /// Multiplicity of each stored mode in the full spectrum (1 or 2).
    [[nodiscard]] std::span<const double> multiplicity() const { return multiplicity_; }

    bool operator==(const Grid& other) const {
        return dim_ == other.dim_ && size_ == other.size_ && length_ == other.length_;
    }

private:
    void build_tables() {
        const std::size_t n0 = size_[0];
        const std::size_t last = dim_ == 1 ? n0 : size_[1];
        const std::size_t half = last / 2 + 1;
        mode_count_ = dim_ == 1 ? half : n0 * half;
        xi1_.resize(mode_count_);
        xi2_.assign(mode_count_, 0.0);
        xi_abs_.resize(mode_count_);
        nyquist_.assign(mode_count_, 0);
        nyquist_x1_.assign(mode_count_, 0);
        multiplicity_.resize(mode_count_);
        if (dim_ == 1) {
            for (std::size_t k = 0; k < half; ++k) {
                const double xi = 2.0 * std::numbers::pi * static_cast<double>(k) / length_[0];
                xi1_[k] = k == n0 / 2 ? -xi : xi;
                xi_abs_[k] = xi;
                nyquist_[k] = nyquist_x1_[k] = (k == n0 / 2);
                multiplicity_[k] = (k == 0 || k == n0 / 2) ? 1.0 : 2.0;
            }
            return;
        }
        for (std::size_t i = 0; i < n0; ++i) {
            const double a = wavenumber(0, i);
            for (std::size_t k = 0; k < half; ++k) {
                const std::size_t idx = i * half + k;
                const double b = 2.0 * std::numbers::pi * static_cast<double>(k) / length_[1];
                xi1_[idx] = a;
                xi2_[idx] = k == last / 2 ? -b : b;
                xi_abs_[idx] = std::hypot(a, b);
                nyquist_x1_[idx] = (i == n0 / 2);
                nyquist_[idx] = (i == n0 / 2) || (k == last / 2);
                multiplicity_[idx] = (k == 0 || k == last / 2) ? 1.0 : 2.0;
            }
        }
    }

    int dim_;
    std::array<double, 2> length_;
    std::array<std::size_t, 2> size_;
    std::size_t mode_count_ = 0;
    std::vector<double> xi1_, xi2_, xi_abs_, multiplicity_;
    std::vector<char> nyquist_, nyquist_x1_;
};

using GridPtr = std::shared_ptr<const Grid>;

inline bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

/// Validated grid construction: d in {1,2}, every N a power of two >= 32, every L > 0.
inline GridPtr make_grid(int dim, std::span<const double> lengths, std::span<const std::size_t> sizes) {
    if (dim != 1 && dim != 2) {
        throw ConfigError("grid dimension must be 1 or 2, got " + std::to_string(dim));
    }
    if (lengths.size() < static_cast<std::size_t>(dim) || sizes.size() < static_cast<std::size_t>(dim)) {
        throw ConfigError("grid needs one length and one size per axis");
    }
    std::array<double, 2> l{1.0, 1.0};
    std::array<std::size_t, 2> n{1, 1};
    for (int a = 0; a < dim; ++a) {
        const auto ua = static_cast<std::size_t>(a);
        if (!(lengths[ua] > 0.0) || !std::isfinite(lengths[ua])) {
            throw ConfigError("grid length must be positive, got " + std::to_string(lengths[ua]));
        }
        if (!is_power_of_two(sizes[ua]) || sizes[ua] < 32) {
            throw ConfigError("grid size must be a power of two >= 32, got " + std::to_string(sizes[ua]));
        }
        l[ua] = lengths[ua];
        n[ua] = sizes[ua];
    }
    return std::make_shared<const Grid>(dim, l, n);
}

inline GridPtr make_grid_1d(double length, std::size_t size) {
    const double l[] = {length};
    const std::size_t n[] = {size};
    return make_grid(1, l, n);
}

inline GridPtr make_grid_2d(double l0, double l1, std::size_t n0, std::size_t n1) {
    const double l[] = {l0, l1};
    const std::size_t n[] = {n0, n1};
    return make_grid(2, l, n);
}

/// Same box, every axis refined by an integer factor (no power-of-two check).
inline GridPtr refined_grid(const Grid& g, std::size_t factor) {
    std::array<double, 2> l{g.length(0), g.dim() == 2 ? g.length(1) : 1.0};
    std::array<std::size_t, 2> n{g.size(0) * factor, g.dim() == 2 ? g.size(1) * factor : 1};
    return std::make_shared<const Grid>(g.dim(), l, n);
}

}  // namespace fkdv
