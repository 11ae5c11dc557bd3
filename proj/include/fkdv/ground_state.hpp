#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "fkdv/error.hpp"
#include "fkdv/field.hpp"
#include "fkdv/functionals.hpp"
#include "fkdv/params.hpp"
#include "fkdv/resample.hpp"
#include "fkdv/spectral.hpp"

namespace fkdv {

/// Converged solitary-wave profile of c Q + D^alpha Q - Q^m / m = 0.
struct GroundState {
    ModelParams params;
    Field Q;
    double residual = 0.0;
    int iterations = 0;
    double peak_value = 0.0;
    std::array<double, 2> peak_location{0.0, 0.0};
    double min_value = 0.0;
};

struct PetviashviliOptions {
    double tol = 1e-11;          ///< target relative residual
    double accept_tol = 1e-10;   ///< accepted when the target stalls
    int max_iter = 20000;
    bool recentre = true;
};

/// Relative L^2 residual ||c Q + D^a Q - Q^m/m|| / ||Q^m/m||, product alias-free.
inline double ground_state_residual(const Field& Q, const ModelParams& p) {
    const Field nl = (1.0 / p.m) * dealiased_power(Q, p.m);
    const Field lin = apply_radial(Q, [&](double xi) { return p.c + (xi == 0.0 ? 0.0 : std::pow(xi, p.alpha)); });
    const double denom = l2_norm(nl);
    if (denom == 0.0) return std::numeric_limits<double>::infinity();
    return l2_norm(lin - nl) / denom;
}

namespace detail {

/// Sub-grid location of the maximum by a three-point parabola on each axis.
inline std::array<double, 2> peak_position(const Field& f) {
    const Grid& g = f.grid();
    const std::size_t idx = f.argmax();
    std::array<double, 2> pos{0.0, 0.0};
    const std::size_t n1 = g.dim() == 2 ? g.size(1) : 1;
    const std::size_t i0 = idx / n1;
    const std::size_t i1 = idx % n1;
    auto vertex = [](double fm, double f0, double fp) {
        const double den = fm - 2.0 * f0 + fp;
        return den == 0.0 ? 0.0 : 0.5 * (fm - fp) / den;
    };
    {
        const std::size_t n0 = g.size(0);
        const double fm = f[((i0 + n0 - 1) % n0) * n1 + i1];
        const double fp = f[((i0 + 1) % n0) * n1 + i1];
        pos[0] = g.coordinate(0, i0) + vertex(fm, f[idx], fp) * g.spacing(0);
    }
    if (g.dim() == 2) {
        const double fm = f[i0 * n1 + (i1 + n1 - 1) % n1];
        const double fp = f[i0 * n1 + (i1 + 1) % n1];
        pos[1] = g.coordinate(1, i1) + vertex(fm, f[idx], fp) * g.spacing(1);
    }
    return pos;
}

inline Field default_initial_guess(const GridPtr& g) {
    const double w = g->length(0) / 20.0;
    if (g->dim() == 1) return Field::from_function(g, [w](double x) { return std::exp(-(x * x) / (w * w)); });
    return Field::from_function(g, [w](double x, double y) { return std::exp(-(x * x + y * y) / (w * w)); });
}

inline GroundState finish_ground_state(const ModelParams& p, Field Q, int iterations, bool recentre) {
    GroundState gs;
    gs.params = p;
    if (recentre) {
        for (int pass = 0; pass < 2; ++pass) {
            const auto pos = peak_position(Q);
            const double z[] = {pos[0], pos[1]};
            Q = translate(Q, std::span<const double>(z, 2));
        }
    }
    gs.peak_location = peak_position(Q);
    gs.peak_value = Q.max();
    gs.min_value = *std::min_element(Q.samples().begin(), Q.samples().end());
    gs.residual = ground_state_residual(Q, p);
    gs.iterations = iterations;
    gs.Q = std::move(Q);
    return gs;
}

}  // namespace detail

/// Petviashvili iteration Q <- S^gamma (c + D^a)^{-1} (Q^m / m) with
/// S = <(c + D^a)Q, Q> / <Q^m/m, Q>, gamma = m/(m-1); stops on the residual.
inline GroundState petviashvili_solve(const ModelParams& p, const GridPtr& g, std::optional<Field> init = std::nullopt,
                                      const PetviashviliOptions& opt = {}) {
    validate(p);
    if (p.d != g->dim()) throw ConfigError("petviashvili_solve: parameter and grid dimensions differ");
    Field Q = init ? *init : detail::default_initial_guess(g);
    Field::check_same_grid(Q, Field::zeros(g));
    const double gamma = static_cast<double>(p.m) / (p.m - 1);
    const auto xa = g->xi_abs();
    const auto w = g->multiplicity();
    std::vector<double> sym(g->modes());
    for (std::size_t k = 0; k < sym.size(); ++k) sym[k] = p.c + (xa[k] == 0.0 ? 0.0 : std::pow(xa[k], p.alpha));

    double best = std::numeric_limits<double>::infinity();
    int since_best = 0;
    for (int it = 0; it < opt.max_iter; ++it) {
        const Spectrum qs = Q.spectrum();
        const Spectrum ns = ((1.0 / p.m) * dealiased_power(Q, p.m)).spectrum();
        double lin_q = 0.0, nl_q = 0.0, res = 0.0, nrm = 0.0;
        for (std::size_t k = 0; k < qs.size(); ++k) {
            lin_q += w[k] * sym[k] * std::norm(qs[k]);
            nl_q += w[k] * (ns[k] * std::conj(qs[k])).real();
            res += w[k] * std::norm(sym[k] * qs[k] - ns[k]);
            nrm += w[k] * std::norm(ns[k]);
        }
        if (!(nrm > 0.0) || !(nl_q > 0.0) || !std::isfinite(lin_q)) {
            throw ConvergenceError("petviashvili_solve: iterate collapsed (degenerate initial guess)");
        }
        const double rel = std::sqrt(res / nrm);
        if (rel < opt.tol) return detail::finish_ground_state(p, std::move(Q), it, opt.recentre);
        if (rel < 0.5 * best) {
            best = rel;
            since_best = 0;
        } else if (++since_best > 200 && best < opt.accept_tol) {
            return detail::finish_ground_state(p, std::move(Q), it, opt.recentre);
        }
        const double S = lin_q / nl_q;
        const double factor = std::pow(S, gamma);
        Spectrum next(qs.size());
        for (std::size_t k = 0; k < qs.size(); ++k) next[k] = factor * ns[k] / sym[k];
        Q = Field::from_spectrum(g, std::move(next));
        if (Q.sup_norm() < 1e-12) throw ConvergenceError("petviashvili_solve: iterate collapsed to zero");
    }
    const double r = ground_state_residual(Q, p);
    if (r < opt.accept_tol) return detail::finish_ground_state(p, std::move(Q), opt.max_iter, opt.recentre);
    throw ConvergenceError("petviashvili_solve: no convergence in " + std::to_string(opt.max_iter) +
                           " iterations, residual " + std::to_string(r));
}

/// Q_c(x) = c^{1/(m-1)} Q(c^{1/a} x) resampled on the same grid; optionally
/// polished by a seeded Petviashvili solve at the new speed.
inline GroundState rescale(const GroundState& gs, double c_new, bool polish = true) {
    if (!(c_new > 0.0)) throw ConfigError("rescale: speed must be positive");
    const ModelParams& p0 = gs.params;
    const double ratio = c_new / p0.c;
    const double scale = std::pow(ratio, 1.0 / p0.alpha);
    const double amp = std::pow(ratio, 1.0 / (p0.m - 1));
    ModelParams p = p0;
    p.c = c_new;
    const double tail = p.alpha < 2.0 ? p.d + p.alpha : 0.0;
    Field Q = ratio == 1.0 ? gs.Q : resample_scaled(gs.Q, scale, amp, tail);
    const double ratio_hi = spectral_tail_ratio(Q);
    if (ratio_hi > 1e-5) {
        throw ResolutionError("rescale: spectral tail ratio " + std::to_string(ratio_hi) +
                              " at speed " + std::to_string(c_new) + ", refine the grid");
    }
    if (polish && ratio != 1.0) {
        PetviashviliOptions opt;
        return petviashvili_solve(p, gs.Q.grid_ptr(), Q, opt);
    }
    return detail::finish_ground_state(p, std::move(Q), 0, false);
}

/// Power-law tail fit.
struct DecayFit {
    double window_lo = 0.0;
    double window_hi = 0.0;
    double exponent = 0.0;        ///< fitted with periodic images accounted for
    double naive_exponent = 0.0;  ///< plain log-log least-squares slope
    double target = 0.0;
    double constant = 0.0;
    double r2 = 0.0;
    bool floor_hit = false;
    bool out_of_scope = false;

    [[nodiscard]] double relative_error() const { return std::abs(exponent / target - 1.0); }
};

namespace detail {

/// Sum over periodic images of s(y) |y|^{-q}, y = (x1 + j L, j2 L), with an
/// integral tail estimate beyond the truncated lattice. odd selects s = sign(y1).
inline double image_sum(double x, double L, double q, int dim, bool odd) {
    constexpr int J = 60;
    double acc = 0.0;
    if (dim == 1) {
        for (int j = -J; j <= J; ++j) {
            const double y = x + j * L;
            const double t = std::pow(std::abs(y), -q);
            acc += odd ? std::copysign(t, y) : t;
        }
        if (!odd) {
            const double a = (J + 0.5) * L;
            acc += (std::pow(a + x, 1.0 - q) + std::pow(a - x, 1.0 - q)) / ((q - 1.0) * L);
        }
        return acc;
    }
    constexpr int J2 = 24;
    for (int j = -J2; j <= J2; ++j) {
        for (int k = -J2; k <= J2; ++k) {
            const double y1 = x + j * L;
            const double y2 = k * L;
            const double t = std::pow(std::hypot(y1, y2), -q);
            acc += odd ? t * y1 / std::hypot(y1, y2) : t;
        }
    }
    if (!odd) {
        const double R = (J2 + 0.5) * L * 2.0 / std::sqrt(std::numbers::pi);
        acc += 2.0 * std::numbers::pi * std::pow(R, 2.0 - q) / ((q - 2.0) * L * L);
    }
    return acc;
}

inline double slope_fit(const std::vector<double>& lx, const std::vector<double>& ly, double* r2 = nullptr) {
    const double n = static_cast<double>(lx.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
        sx += lx[i];
        sy += ly[i];
        sxx += lx[i] * lx[i];
        sxy += lx[i] * ly[i];
        syy += ly[i] * ly[i];
    }
    const double cov = sxy - sx * sy / n;
    const double vx = sxx - sx * sx / n;
    const double vy = syy - sy * sy / n;
    if (r2) *r2 = vy > 0 ? cov * cov / (vx * vy) : 1.0;
    return cov / vx;
}

}  // namespace detail

/// Tail exponent of |d^k f / dx_1^k| along the positive x_1 axis through the
/// origin. The fit model is C * sum over periodic images of s(y)|y|^{-q}.
inline DecayFit decay_fit(const Field& f, int k, double alpha) {
    const Grid& g = f.grid();
    DecayFit fit;
    fit.target = -(g.dim() + alpha + k);
    if (alpha >= 2.0) {
        fit.out_of_scope = true;
        return fit;
    }
    // An order-8 exponential filter removes truncation ringing; it is 1 - O(|xi|^8)
    // at the origin, so the algebraic tail is unchanged.
    const double xi_cut = std::numbers::pi / std::max(g.spacing(0), g.dim() == 2 ? g.spacing(1) : 0.0);
    const Field filtered = apply_radial(f, [xi_cut](double xi) { return std::exp(-36.0 * std::pow(xi / xi_cut, 8)); });
    const Field fk = k == 0 ? filtered : derivative(filtered, 0, k);
    const double L = g.length(0);
    fit.window_lo = std::max(5.0, L / 16.0);
    fit.window_hi = 0.9 * L / 2.0;
    const double sup = fk.sup_norm();
    const std::size_t n1 = g.dim() == 2 ? g.size(1) : 1;
    const std::size_t j0 = g.dim() == 2 ? g.size(1) / 2 : 0;
    std::vector<double> xs, ys;
    for (std::size_t i = g.size(0) / 2; i < g.size(0); ++i) {
        const double x = g.coordinate(0, i);
        if (x < fit.window_lo || x > fit.window_hi) continue;
        const double v = std::abs(fk[i * n1 + j0]);
        if (v < 1e-13 * sup || v == 0.0) {
            fit.floor_hit = true;
            break;
        }
        xs.push_back(x);
        ys.push_back(v);
    }
    if (fit.floor_hit) fit.window_hi = xs.empty() ? fit.window_lo : xs.back();
    if (xs.size() < 8) throw DomainError("decay_fit: window holds fewer than 8 usable samples");
    std::vector<double> lx(xs.size()), ly(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        lx[i] = std::log(xs[i]);
        ly[i] = std::log(ys[i]);
    }
    fit.naive_exponent = detail::slope_fit(lx, ly, &fit.r2);
    const bool odd = k % 2 != 0;
    // Thin the window for the image model; its cost is per sample.
    const std::size_t stride = std::max<std::size_t>(1, xs.size() / 400);
    auto misfit = [&](double q, double* logc) {
        double mean = 0.0;
        std::size_t cnt = 0;
        std::vector<double> model;
        for (std::size_t i = 0; i < xs.size(); i += stride) {
            const double s = std::abs(detail::image_sum(xs[i], L, q, g.dim(), odd));
            model.push_back(std::log(s));
            mean += ly[i] - model.back();
            ++cnt;
        }
        mean /= static_cast<double>(cnt);
        double ss = 0.0;
        std::size_t t = 0;
        for (std::size_t i = 0; i < xs.size(); i += stride, ++t) {
            const double e = ly[i] - model[t] - mean;
            ss += e * e;
        }
        if (logc) *logc = mean;
        return ss;
    };
    double a = std::max(g.dim() + 0.05, -fit.naive_exponent - 1.5);
    double b = -fit.naive_exponent + 1.5;
    const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double c1 = b - phi * (b - a), c2 = a + phi * (b - a);
    double f1 = misfit(c1, nullptr), f2 = misfit(c2, nullptr);
    for (int it = 0; it < 80; ++it) {
        if (f1 < f2) {
            b = c2;
            c2 = c1;
            f2 = f1;
            c1 = b - phi * (b - a);
            f1 = misfit(c1, nullptr);
        } else {
            a = c1;
            c1 = c2;
            f1 = f2;
            c2 = a + phi * (b - a);
            f2 = misfit(c2, nullptr);
        }
    }
    const double q = 0.5 * (a + b);
    double logc = 0.0;
    misfit(q, &logc);
    fit.exponent = -q;
    fit.constant = std::exp(logc);
    return fit;
}

/// Kernel of (lam + D^a)^{-1} (or of a composite symbol) and the flatness of
/// |x|^{d+a} G(x) on a far window.
struct KernelProfile {
    DecayFit fit;
    double plateau = 0.0;        ///< mean of |x|^{d+a} G over the window
    double plateau_slope = 0.0;  ///< log-log slope of |x|^{d+a} |G|
    double bound = 0.0;          ///< max of |G| <x>^{d+a} over the window
    bool converged = true;       ///< |plateau_slope| < 0.1
    std::vector<double> x, weighted;
};

enum class KernelSymbol { resolvent, composite };

inline KernelProfile bessel_kernel_profile(double alpha, double lam, const GridPtr& g,
                                           KernelSymbol which = KernelSymbol::resolvent) {
    if (!(lam > 0.0)) throw DomainError("bessel_kernel_profile: lambda must be positive");
    const auto xa = g->xi_abs();
    const double cutoff = g->max_wavenumber();
    Spectrum spec(g->modes());
    const std::size_t half = g->dim() == 2 ? g->size(1) / 2 + 1 : g->modes();
    const double scale = static_cast<double>(g->points()) /
                         (g->dim() == 2 ? g->length(0) * g->length(1) : g->length(0));
    for (std::size_t k = 0; k < spec.size(); ++k) {
        const double r = xa[k];
        const double ra = r == 0.0 ? 0.0 : std::pow(r, alpha);
        double symbol = which == KernelSymbol::resolvent ? 1.0 / (lam + ra) : ra / ((lam + ra) * (lam + ra));
        symbol *= std::exp(-36.0 * std::pow(r / cutoff, 16.0));
        const std::size_t i0 = k / half;
        const std::size_t i1 = k % half;
        const double sign = ((i0 + i1) % 2 == 0) ? 1.0 : -1.0;
        spec[k] = cplx(scale * sign * symbol, 0.0);
    }
    const Field G = Field::from_spectrum(g, std::move(spec));
    KernelProfile out;
    const double L = g->length(0);
    const double lo = std::max(10.0, L / 64.0);
    const double hi = L / 8.0;
    const std::size_t n1 = g->dim() == 2 ? g->size(1) : 1;
    const std::size_t j0 = g->dim() == 2 ? g->size(1) / 2 : 0;
    const double pw = g->dim() + alpha;
    std::vector<double> lx, ly;
    double sum = 0.0;
    for (std::size_t i = g->size(0) / 2; i < g->size(0); ++i) {
        const double x = g->coordinate(0, i);
        if (x < lo || x > hi) continue;
        const double v = G[i * n1 + j0];
        const double wv = std::pow(x, pw) * v;
        out.x.push_back(x);
        out.weighted.push_back(wv);
        out.bound = std::max(out.bound, std::abs(v) * std::pow(1.0 + x * x, 0.5 * pw));
        sum += wv;
        lx.push_back(std::log(x));
        ly.push_back(std::log(std::abs(wv)));
    }
    out.plateau = sum / static_cast<double>(out.x.size());
    out.plateau_slope = detail::slope_fit(lx, ly);
    out.converged = std::abs(out.plateau_slope) < 0.1;
    out.fit.window_lo = lo;
    out.fit.window_hi = hi;
    out.fit.target = -pw;
    out.fit.naive_exponent = out.plateau_slope - pw;
    out.fit.exponent = out.fit.naive_exponent;
    out.fit.constant = out.plateau;
    return out;
}

struct MinimizerOptions {
    double h0 = 1.0;
    double grad_tol = 1e-8;
    int max_iter = 20000;
};

struct MinimizerResult {
    Field v;
    double energy = 0.0;
    double grad_norm = 0.0;
    double fitted_c = 0.0;  ///< minus the Lagrange multiplier
    int iterations = 0;
};

/// Minimizes E on the sphere M[v] = q by a preconditioned gradient flow:
/// explicit step, rescale to the sphere, halve the step on energy increase.
/// The preconditioner is (s + D^a)^{-1} with s the current speed estimate.
inline MinimizerResult constrained_minimize(double q, const ModelParams& p, const GridPtr& g,
                                            const MinimizerOptions& opt = {}) {
    validate(p);
    if (criticality(p).cls != Criticality::subcritical) {
        throw ConfigError("constrained_minimize requires the subcritical class");
    }
    if (!(q > 0.0)) throw ConfigError("constrained_minimize: mass level must be positive");
    auto to_sphere = [q](const Field& v) { return std::sqrt(q / mass(v)) * v; };
    Field v = to_sphere(detail::default_initial_guess(g));
    double shift = 1.0;
    const auto precond = [&](const Field& f) {
        return apply_radial(f, [&](double xi) { return 1.0 / (shift + (xi == 0.0 ? 0.0 : std::pow(xi, p.alpha))); });
    };
    const auto gradient = [&](const Field& f) {
        return fractional_derivative(f, p.alpha) - (1.0 / p.m) * dealiased_power(f, p.m);
    };
    // Energy changes below this band are round-off, not increases.
    const auto noise = [&](const Field& f) {
        return 1e-13 * (0.5 * dispersive_seminorm_sq(f, p.alpha) +
                        std::abs(power_integral(f, p.m + 1)) / (p.m * (p.m + 1.0)));
    };
    double e = energy(v, p);
    double h = opt.h0;
    MinimizerResult res;
    bool converged = false;
    for (int it = 0; it < opt.max_iter; ++it) {
        const Field grad = gradient(v);
        const double mu_l2 = inner(grad, v) / inner(v, v);
        const Field proj = grad - mu_l2 * v;
        res.grad_norm = l2_norm(proj);
        res.iterations = it;
        res.fitted_c = -mu_l2;
        if (res.grad_norm < opt.grad_tol) {
            converged = true;
            break;
        }
        shift = std::clamp(-mu_l2, 1e-3, 1e3);
        const Field pg = precond(grad);
        const Field pv = precond(v);
        const double mu = inner(pg, v) / inner(pv, v);
        const Field dir = pg - mu * pv;
        bool accepted = false;
        for (int bt = 0; bt < 60; ++bt) {
            Field trial = to_sphere(v - h * dir);
            const double et = energy(trial, p);
            if (et <= e + noise(trial)) {
                v = std::move(trial);
                e = et;
                accepted = true;
                break;
            }
            h *= 0.5;
        }
        if (!accepted) throw ConvergenceError("constrained_minimize: energy not decreasing after backtracking");
        h = std::min(opt.h0, 2.0 * h);
    }
    if (!converged) {
        throw ConvergenceError("constrained_minimize: projected gradient " + std::to_string(res.grad_norm) +
                               " above tolerance after " + std::to_string(opt.max_iter) + " iterations");
    }
    res.v = std::move(v);
    res.energy = e;
    return res;
}

}  // namespace fkdv
