#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <numbers>
#include <span>
#include <vector>

#include "fkdv/error.hpp"
#include "fkdv/fft.hpp"
#include "fkdv/field.hpp"
#include "fkdv/grid.hpp"

namespace fkdv {

/// Multiplies the half-layout spectrum by sym(k), k the stored mode index.
template <class Symbol>
Field apply_symbol(const Field& f, Symbol&& sym) {
    Spectrum s = f.spectrum();
    for (std::size_t k = 0; k < s.size(); ++k) s[k] *= sym(k);
    return Field::from_spectrum(f.grid_ptr(), std::move(s));
}

/// Real radial multiplier m(|xi|).
template <class Radial>
Field apply_radial(const Field& f, Radial&& mult) {
    const auto xa = f.grid().xi_abs();
    return apply_symbol(f, [&](std::size_t k) { return cplx(mult(xa[k]), 0.0); });
}

/// D^s f, symbol |xi|^s. Negative orders must go through a fused symbol.
inline Field fractional_derivative(const Field& f, double s) {
    if (s < 0.0) throw DomainError("fractional_derivative: negative order needs a fused symbol");
    if (s == 0.0) return f;
    return apply_radial(f, [s](double xi) { return xi == 0.0 ? 0.0 : std::pow(xi, s); });
}

/// Spectral partial derivative of integer order along an axis. Odd orders
/// drop the Nyquist line of that axis.
inline Field derivative(const Field& f, int axis = 0, int order = 1) {
    const Grid& g = f.grid();
    const auto xi = axis == 0 ? g.xi1() : g.xi2();
    const auto nyq = axis == 0 ? g.nyquist_x1() : g.nyquist();
    const bool odd = order % 2 != 0;
    std::vector<char> on_line(g.modes(), 0);
    if (axis == 0) {
        std::copy(nyq.begin(), nyq.end(), on_line.begin());
    } else {
        const std::size_t half = g.size(1) / 2 + 1;
        for (std::size_t k = 0; k < g.modes(); ++k) on_line[k] = (k % half) == half - 1;
    }
    cplx unit(0.0, 1.0);
    cplx factor = std::pow(unit, order);
    return apply_symbol(f, [&](std::size_t k) {
        if (odd && on_line[k]) return cplx(0.0, 0.0);
        return factor * std::pow(xi[k], order);
    });
}

/// Bessel-weighted norm (sum (1+|xi|^2)^s |f^|^2)^{1/2}, scaled so s = 0 gives L^2.
/// Negative s gives the dual norms used for residuals.
inline double sobolev_norm(const Field& f, double s) {
    const Grid& g = f.grid();
    const Spectrum spec = f.spectrum();
    const auto xa = g.xi_abs();
    const auto w = g.multiplicity();
    long double acc = 0.0;
    for (std::size_t k = 0; k < spec.size(); ++k) {
        const double weight = s == 0.0 ? 1.0 : std::pow(1.0 + xa[k] * xa[k], s);
        acc += w[k] * weight * std::norm(spec[k]);
    }
    return std::sqrt(static_cast<double>(acc) * g.cell_volume() / static_cast<double>(g.points()));
}

/// Sobolev inner product matching sobolev_norm.
inline double sobolev_inner(const Field& a, const Field& b, double s) {
    Field::check_same_grid(a, b);
    const Grid& g = a.grid();
    const Spectrum sa = a.spectrum();
    const Spectrum sb = b.spectrum();
    const auto xa = g.xi_abs();
    const auto w = g.multiplicity();
    long double acc = 0.0;
    for (std::size_t k = 0; k < sa.size(); ++k) {
        const double weight = s == 0.0 ? 1.0 : std::pow(1.0 + xa[k] * xa[k], s);
        acc += w[k] * weight * (sa[k] * std::conj(sb[k])).real();
    }
    return static_cast<double>(acc) * g.cell_volume() / static_cast<double>(g.points());
}

/// f(. + z) by a spectral phase shift. The Nyquist mode keeps its real part.
inline Field translate(const Field& f, std::span<const double> z) {
    const Grid& g = f.grid();
    const double z1 = z.empty() ? 0.0 : z[0];
    const double z2 = (g.dim() == 2 && z.size() > 1) ? z[1] : 0.0;
    const auto x1 = g.xi1();
    const auto x2 = g.xi2();
    const auto nyq = g.nyquist();
    return apply_symbol(f, [&](std::size_t k) {
        const double phase = x1[k] * z1 + x2[k] * z2;
        if (nyq[k]) return cplx(std::cos(phase), 0.0);
        return std::polar(1.0, phase);
    });
}

inline Field translate(const Field& f, double z1) {
    const double z[] = {z1, 0.0};
    return translate(f, std::span<const double>(z, 2));
}

/// Coordinate field x_axis.
inline Field coordinate_field(const GridPtr& g, int axis) {
    if (g->dim() == 1) return Field::from_function(g, [](double x) { return x; });
    if (axis == 0) return Field::from_function(g, [](double x, double) { return x; });
    return Field::from_function(g, [](double, double y) { return y; });
}

/// Largest |f| over the outer 10% of the box relative to sup|f|.
inline double edge_fraction(const Field& f) {
    const Grid& g = f.grid();
    const double sup = f.sup_norm();
    if (sup == 0.0) return 0.0;
    double edge = 0.0;
    const std::size_t n0 = g.size(0);
    const std::size_t n1 = g.dim() == 2 ? g.size(1) : 1;
    for (std::size_t i = 0; i < n0; ++i) {
        for (std::size_t j = 0; j < n1; ++j) {
            bool outer = std::abs(g.coordinate(0, i)) > 0.4 * g.length(0);
            if (g.dim() == 2) outer = outer || std::abs(g.coordinate(1, j)) > 0.4 * g.length(1);
            if (outer) edge = std::max(edge, std::abs(f[i * n1 + j]));
        }
    }
    return edge / sup;
}

struct CommutatorCheck {
    double residual = 0.0;  ///< max over axes of relative L^2 residual
    bool edge_warning = false;
};

/// Checks [D^s, x_j] d_j f = -s D^{s-2} d_j^2 f for every axis j, with the
/// right side built from the fused symbol s |xi|^{s-2} xi_j^2.
inline CommutatorCheck commutator_check(const Field& f, double s) {
    const Grid& g = f.grid();
    CommutatorCheck out;
    out.edge_warning = edge_fraction(f) > 1e-10;
    for (int axis = 0; axis < g.dim(); ++axis) {
        const Field xj = coordinate_field(f.grid_ptr(), axis);
        const Field df = derivative(f, axis, 1);
        const Field lhs = fractional_derivative(pointwise_product(xj, df), s) -
                          pointwise_product(xj, fractional_derivative(df, s));
        const auto xi = axis == 0 ? g.xi1() : g.xi2();
        const auto xa = g.xi_abs();
        const Field rhs = apply_symbol(f, [&](std::size_t k) {
            if (xa[k] == 0.0) return cplx(0.0, 0.0);
            return cplx(s * std::pow(xa[k], s - 2.0) * xi[k] * xi[k], 0.0);
        });
        const double scale = l2_norm(rhs);
        const double diff = l2_norm(lhs - rhs);
        out.residual = std::max(out.residual, scale > 0.0 ? diff / scale : diff);
    }
    return out;
}

/// Delta^2 exp(-|x|^2), sampled in closed form. Four vanishing moments make D^s of its
/// derivatives decay like |x|^{-(d+s+5)}, so the x-weighted commutator terms stay small at the box edge.
inline Field commutator_test_field(const GridPtr& g) {
    if (g->dim() == 1) {
        return Field::from_function(g, [](double x) {
            const double r2 = x * x;
            return (16.0 * r2 * r2 - 48.0 * r2 + 12.0) * std::exp(-r2);
        });
    }
    return Field::from_function(g, [](double x, double y) {
        const double r2 = x * x + y * y;
        return (16.0 * r2 * r2 - 64.0 * r2 + 32.0) * std::exp(-r2);
    });
}

/// Padding factor that keeps a degree-k pointwise product alias-free after truncation.
inline std::size_t product_padding(int degree) { return static_cast<std::size_t>((degree + 2) / 2); }

/// Padding factor that keeps the integral of a degree-k product exact.
inline std::size_t integral_padding(int degree) { return static_cast<std::size_t>((degree + 1) / 2); }

namespace detail {

inline std::size_t mode_index(const Grid& g, long k0, long k1) {
    const long n0 = static_cast<long>(g.size(0));
    if (g.dim() == 1) return static_cast<std::size_t>(k0);
    const std::size_t half = g.size(1) / 2 + 1;
    const long i = k0 >= 0 ? k0 : k0 + n0;
    return static_cast<std::size_t>(i) * half + static_cast<std::size_t>(k1);
}

/// Moves modes between a coarse and a refined half-layout spectrum. Modes on a
/// coarse Nyquist line are dropped in both directions.
template <class Op>
void for_each_shared_mode(const Grid& coarse, const Grid& fine, Op&& op) {
    const long n0 = static_cast<long>(coarse.size(0));
    if (coarse.dim() == 1) {
        for (long k = 0; k < n0 / 2; ++k) op(static_cast<std::size_t>(k), static_cast<std::size_t>(k));
        return;
    }
    const long n1 = static_cast<long>(coarse.size(1));
    for (long k0 = -n0 / 2 + 1; k0 < n0 / 2; ++k0) {
        for (long k1 = 0; k1 < n1 / 2; ++k1) op(mode_index(coarse, k0, k1), mode_index(fine, k0, k1));
    }
}

}  // namespace detail

/// Spectral interpolation of f onto the grid refined by factor p.
inline Field pad(const Field& f, std::size_t p) {
    if (p == 1) return f;
    const GridPtr fine = refined_grid(f.grid(), p);
    const Spectrum s = f.spectrum();
    Spectrum big(fine->modes(), cplx(0.0, 0.0));
    const double scale = std::pow(static_cast<double>(p), f.grid().dim());
    detail::for_each_shared_mode(f.grid(), *fine, [&](std::size_t c, std::size_t b) { big[b] = scale * s[c]; });
    return Field::from_spectrum(fine, std::move(big));
}

/// Projects a refined-grid field back onto the coarse grid (spectral truncation).
inline Field truncate(const Field& fine_field, const GridPtr& coarse) {
    const std::size_t p = fine_field.grid().size(0) / coarse->size(0);
    const Spectrum s = fine_field.spectrum();
    Spectrum small(coarse->modes(), cplx(0.0, 0.0));
    const double scale = 1.0 / std::pow(static_cast<double>(p), coarse->dim());
    detail::for_each_shared_mode(*coarse, fine_field.grid(),
                                 [&](std::size_t c, std::size_t b) { small[c] = scale * s[b]; });
    return Field::from_spectrum(coarse, std::move(small));
}

/// Alias-free evaluation of a polynomial map of several fields: every input is
/// padded, fn is applied pointwise on the refined grid and the result truncated.
template <class Fn>
Field dealiased_map(std::span<const Field> inputs, int degree, Fn&& fn) {
    const std::size_t p = product_padding(degree);
    std::vector<Field> fine;
    fine.reserve(inputs.size());
    for (const auto& f : inputs) fine.push_back(pad(f, p));
    std::vector<double> out(fine.front().size());
    std::vector<double> vals(inputs.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        for (std::size_t j = 0; j < fine.size(); ++j) vals[j] = fine[j][i];
        out[i] = fn(std::span<const double>(vals));
    }
    return truncate(Field(fine.front().grid_ptr(), std::move(out)), inputs.front().grid_ptr());
}

/// Exact quadrature of a degree-k polynomial map of several fields.
template <class Fn>
double dealiased_integral(std::span<const Field> inputs, int degree, Fn&& fn) {
    const std::size_t p = integral_padding(degree);
    std::vector<Field> fine;
    fine.reserve(inputs.size());
    for (const auto& f : inputs) fine.push_back(pad(f, p));
    std::vector<double> vals(inputs.size());
    long double acc = 0.0;
    const std::size_t n = fine.front().size();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < fine.size(); ++j) vals[j] = fine[j][i];
        acc += fn(std::span<const double>(vals));
    }
    return static_cast<double>(acc) * fine.front().grid().cell_volume();
}

/// Alias-free f^k.
inline Field dealiased_power(const Field& f, int k) {
    if (k == 1) return f;
    const Field in[] = {f};
    return dealiased_map(std::span<const Field>(in), k, [k](std::span<const double> v) { return std::pow(v[0], k); });
}

/// Exact integral of f^k.
inline double power_integral(const Field& f, int k) {
    const Field in[] = {f};
    return dealiased_integral(std::span<const Field>(in), k,
                              [k](std::span<const double> v) { return std::pow(v[0], k); });
}

/// Largest |f^| over modes beyond 7/8 of the cutoff, relative to the largest |f^|.
inline double spectral_tail_ratio(const Field& f) {
    const Grid& g = f.grid();
    const Spectrum s = f.spectrum();
    const auto x1 = g.xi1();
    const auto x2 = g.xi2();
    const double c1 = 0.875 * std::numbers::pi / g.spacing(0);
    const double c2 = g.dim() == 2 ? 0.875 * std::numbers::pi / g.spacing(1) : 0.0;
    double top = 0.0, all = 0.0;
    for (std::size_t k = 0; k < s.size(); ++k) {
        const double a = std::abs(s[k]);
        all = std::max(all, a);
        if (std::abs(x1[k]) > c1 || (g.dim() == 2 && std::abs(x2[k]) > c2)) top = std::max(top, a);
    }
    return all > 0.0 ? top / all : 0.0;
}

/// Trigonometric interpolant of a 1D field at an arbitrary point.
inline double sample_at(const Field& f, double x) {
    const Grid& g = f.grid();
    if (g.dim() != 1) throw DomainError("sample_at is one-dimensional");
    const Spectrum s = f.spectrum();
    const double x0 = g.coordinate(0, 0);
    const auto xi = g.xi1();
    const auto nyq = g.nyquist();
    const auto w = g.multiplicity();
    double acc = 0.0;
    for (std::size_t k = 0; k < s.size(); ++k) {
        const cplx e = std::polar(1.0, xi[k] * (x - x0));
        if (nyq[k]) {
            acc += s[k].real() * std::cos(xi[k] * (x - x0));
        } else {
            acc += w[k] * (s[k] * e).real();
        }
    }
    return acc / static_cast<double>(g.points());
}

}  // namespace fkdv
