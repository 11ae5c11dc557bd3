#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <utility>
#include <string>
#include <vector>

#include "fkdv/error.hpp"
#include "fkdv/evolution.hpp"
#include "fkdv/field.hpp"
#include "fkdv/functionals.hpp"
#include "fkdv/ground_state.hpp"
#include "fkdv/linearized.hpp"
#include "fkdv/params.hpp"
#include "fkdv/resample.hpp"
#include "fkdv/spectral.hpp"

namespace fkdv {

namespace detail {

/// Weighted modal sum (h^d/N) sum w_k B_k Re(a_k e^{i xi.z} conj(b_k)); equals
/// <a(. + z), b> in the inner product with Fourier weight B.
inline double shifted_inner(const Grid& g, const Spectrum& a, const Spectrum& b, const std::vector<double>& weight,
                            double z1, double z2) {
    const auto x1 = g.xi1();
    const auto x2 = g.xi2();
    const auto w = g.multiplicity();
    const auto nyq = g.nyquist();
    long double acc = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        const double phase = x1[k] * z1 + x2[k] * z2;
        const cplx p = a[k] * std::conj(b[k]);
        const double wk = w[k] * (weight.empty() ? 1.0 : weight[k]);
        if (nyq[k]) {
            acc += wk * p.real() * std::cos(phase);
        } else {
            acc += wk * (p * std::polar(1.0, phase)).real();
        }
    }
    return static_cast<double>(acc) * g.cell_volume() / static_cast<double>(g.points());
}

/// First and second derivative of shifted_inner in z_axis (Nyquist lines dropped).
inline std::pair<double, double> shifted_inner_axis_derivs(const Grid& g, const Spectrum& a, const Spectrum& b,
                                                           const std::vector<double>& weight, double z1, double z2,
                                                           int axis) {
    const auto x1 = g.xi1();
    const auto x2 = g.xi2();
    const auto xs = axis == 0 ? x1 : x2;
    const auto w = g.multiplicity();
    const auto nyq = g.nyquist();
    long double d1 = 0.0, d2 = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        if (nyq[k]) continue;
        const double wk = w[k] * (weight.empty() ? 1.0 : weight[k]);
        const cplx v = a[k] * std::conj(b[k]) * std::polar(1.0, x1[k] * z1 + x2[k] * z2);
        d1 += wk * (-xs[k] * v.imag());
        d2 += wk * (-xs[k] * xs[k] * v.real());
    }
    const double s = g.cell_volume() / static_cast<double>(g.points());
    return {static_cast<double>(d1) * s, static_cast<double>(d2) * s};
}

inline std::vector<double> bessel_weights(const Grid& g, double s) {
    std::vector<double> w(g.modes());
    const auto xa = g.xi_abs();
    for (std::size_t k = 0; k < w.size(); ++k) w[k] = std::pow(1.0 + xa[k] * xa[k], s);
    return w;
}

}  // namespace detail

struct TranslationFit {
    std::array<double, 2> z{0.0, 0.0};
    Field eps;
    std::array<double, 2> ortho{0.0, 0.0};  ///< |(eps, d_j Q)|
    int iterations = 0;
};

class OutOfTube : public Error {
public:
    using Error::Error;
};

/// Newton iteration on g_j(z) = <u(. + z), d_j Q> = 0 with Jacobian
/// ||d_j Q||^2 delta_jl - <eps, d_j d_l Q>; all inner products are modal sums.
/// With cylindrical = true only z_1 is solved.
inline TranslationFit fit_translation(const Field& u, const GroundState& gs, std::array<double, 2> z_init = {0.0, 0.0},
                                      bool cylindrical = true) {
    const Grid& g = u.grid();
    Field::check_same_grid(u, gs.Q);
    const int d = g.dim();
    const int nz = cylindrical ? 1 : d;
    const Spectrum us = u.spectrum();
    const Spectrum qs = gs.Q.spectrum();
    std::vector<Spectrum> dq, ddq;
    std::vector<double> dqn;
    for (int j = 0; j < nz; ++j) {
        const Field dj = derivative(gs.Q, j, 1);
        dq.push_back(dj.spectrum());
        dqn.push_back(inner(dj, dj));
        for (int l = 0; l < nz; ++l) ddq.push_back(derivative(dj, l, 1).spectrum());
    }
    const std::vector<double> none;
    std::array<double, 2> z = z_init;
    TranslationFit fit;
    const double unorm = l2_norm(u);
    bool converged = false;
    for (int it = 0; it < 50; ++it) {
        Eigen::Vector2d gvec = Eigen::Vector2d::Zero();
        Eigen::Matrix2d J = Eigen::Matrix2d::Identity();
        for (int j = 0; j < nz; ++j) {
            gvec(j) = detail::shifted_inner(g, us, dq[static_cast<std::size_t>(j)], none, z[0], z[1]);
            for (int l = 0; l < nz; ++l) {
                // d/dz_l <u(.+z), d_j Q> = -<u(.+z), d_l d_j Q>
                J(j, l) = -detail::shifted_inner(g, us, ddq[static_cast<std::size_t>(j * nz + l)], none, z[0], z[1]);
            }
        }
        fit.iterations = it + 1;
        const double jmin = nz == 1 ? std::abs(J(0, 0)) : J.topLeftCorner(nz, nz).jacobiSvd().singularValues().minCoeff();
        if (jmin < 0.1 * dqn[0]) throw OutOfTube("fit_translation: Jacobian near singular, tube too large");
        Eigen::Vector2d step = Eigen::Vector2d::Zero();
        if (nz == 1) {
            step(0) = -gvec(0) / J(0, 0);
        } else {
            step = -J.lu().solve(gvec);
        }
        z[0] += step(0);
        if (nz == 2) z[1] += step(1);
        if (std::abs(step(0)) + std::abs(step(1)) < 1e-14 * (1.0 + std::abs(z[0]) + std::abs(z[1])) ||
            gvec.norm() < 1e-15 * unorm * std::sqrt(dqn[0])) {
            converged = true;
            break;
        }
    }
    if (!converged) throw OutOfTube("fit_translation: Newton did not converge in 50 iterations");
    fit.z = z;
    const double zz[] = {z[0], z[1]};
    fit.eps = translate(u, std::span<const double>(zz, 2)) - gs.Q;
    for (int j = 0; j < d; ++j) fit.ortho[static_cast<std::size_t>(j)] = std::abs(inner(fit.eps, derivative(gs.Q, j, 1)));
    return fit;
}

struct TubeDistance {
    double distance = 0.0;
    std::array<double, 2> z{0.0, 0.0};
};

/// inf_z ||u - Q(. + z)||_{H^{a/2}}: FFT cross-correlation over all grid shifts,
/// then golden-section refinement of the exact modal correlation.
inline TubeDistance tube_distance_full(const Field& u, const GroundState& gs) {
    const Grid& g = u.grid();
    Field::check_same_grid(u, gs.Q);
    const double s = 0.5 * gs.params.alpha;
    const std::vector<double> B = detail::bessel_weights(g, s);
    const Spectrum us = u.spectrum();
    const Spectrum qs = gs.Q.spectrum();
    // C(z) = <u, Q(. + z)>_H: coarse scan over z on the grid.
    Spectrum corr(us.size());
    for (std::size_t k = 0; k < us.size(); ++k) corr[k] = B[k] * us[k] * std::conj(qs[k]);
    const std::vector<double> c = fft_inverse(g.dim(), g.size(0), g.dim() == 2 ? g.size(1) : 1, corr);
    // c[i] = (1/N) sum_k corr_k e^{i xi_k x_i'} with x_i' = i h, i.e. <u(. + i h), Q>.
    const std::size_t best = static_cast<std::size_t>(std::max_element(c.begin(), c.end()) - c.begin());
    const std::size_t n1 = g.dim() == 2 ? g.size(1) : 1;
    auto wrap = [](std::size_t i, std::size_t n, double h) {
        const auto si = static_cast<long>(i);
        const auto sn = static_cast<long>(n);
        return static_cast<double>(si < sn / 2 ? si : si - sn) * h;
    };
    std::array<double, 2> z{wrap(best / n1, g.size(0), g.spacing(0)), g.dim() == 2 ? wrap(best % n1, n1, g.spacing(1)) : 0.0};
    auto C = [&](double a, double b) { return detail::shifted_inner(g, us, qs, B, a, b); };
    const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
    auto golden = [&](int axis) {
        const double h = g.spacing(axis);
        double lo = z[static_cast<std::size_t>(axis)] - h, hi = z[static_cast<std::size_t>(axis)] + h;
        auto eval = [&](double v) {
            std::array<double, 2> t = z;
            t[static_cast<std::size_t>(axis)] = v;
            return -C(t[0], t[1]);
        };
        double x1 = hi - phi * (hi - lo), x2 = lo + phi * (hi - lo);
        double f1 = eval(x1), f2 = eval(x2);
        for (int it = 0; it < 80 && hi - lo > 1e-13 * (1.0 + std::abs(lo)); ++it) {
            if (f1 < f2) {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - phi * (hi - lo);
                f1 = eval(x1);
            } else {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + phi * (hi - lo);
                f2 = eval(x2);
            }
        }
        z[static_cast<std::size_t>(axis)] = 0.5 * (lo + hi);
    };
    for (int round = 0; round < (g.dim() == 2 ? 4 : 1); ++round) {
        for (int axis = 0; axis < g.dim(); ++axis) golden(axis);
    }
    // Golden section stalls near sqrt(eps) in z; Newton on C'(z) = 0 finishes.
    for (int it = 0; it < 6; ++it) {
        double moved = 0.0;
        for (int axis = 0; axis < g.dim(); ++axis) {
            const auto [d1, d2] = detail::shifted_inner_axis_derivs(g, us, qs, B, z[0], z[1], axis);
            if (!(d2 < 0.0)) continue;
            const double step = std::clamp(-d1 / d2, -g.spacing(axis), g.spacing(axis));
            z[static_cast<std::size_t>(axis)] += step;
            moved = std::max(moved, std::abs(step));
        }
        if (moved < 1e-15 * (1.0 + std::abs(z[0]) + std::abs(z[1]))) break;
    }
    // Direct evaluation of the minimizing difference avoids cancellation.
    // <u(. + z), Q>: the optimal shift of u is z; Q(. + z) against u means u(. - z).
    const double zz[] = {-z[0], -z[1]};
    const Field diff = u - translate(gs.Q, std::span<const double>(zz, 2));
    TubeDistance out;
    out.distance = sobolev_norm(diff, s);
    out.z = {-z[0], -z[1]};
    return out;
}

inline double tube_distance(const Field& u, const GroundState& gs) { return tube_distance_full(u, gs).distance; }

struct ModulationTrack {
    std::vector<double> times;
    std::vector<std::array<double, 2>> z;
    std::vector<Field> eps;
    std::vector<double> eps_l2;
    std::vector<double> eps_hs;
    std::vector<std::array<double, 2>> ortho_residuals;
    std::vector<std::array<double, 2>> zdot;
    bool truncated = false;  ///< modulation failed before the end of the trajectory
};

/// Fits z(t) along a trajectory; stops at the first snapshot outside the modulation tube.
inline ModulationTrack build_modulation_track(const Trajectory& tr, const GroundState& gs) {
    ModulationTrack mt;
    const double s = 0.5 * gs.params.alpha;
    std::array<double, 2> guess{0.0, 0.0};
    if (!tr.snapshots.empty()) {
        // The tube minimizer z has u ~ Q(. + z); the fit solves u(. + z) ~ Q.
        const auto tz = tube_distance_full(tr.snapshots.front(), gs).z;
        guess = {-tz[0], -tz[1]};
    }
    for (std::size_t i = 0; i < tr.snapshots.size(); ++i) {
        if (i > 0) guess[0] = mt.z.back()[0] + gs.params.c * (tr.times[i] - tr.times[i - 1]);
        TranslationFit fit;
        try {
            fit = fit_translation(tr.snapshots[i], gs, guess);
        } catch (const OutOfTube&) {
            mt.truncated = true;
            break;
        }
        if (!mt.z.empty() && std::abs(fit.z[0] - guess[0]) > 5.0 * tr.snapshots[i].grid().spacing(0) +
                                                                 std::abs(guess[0] - mt.z.back()[0])) {
            mt.truncated = true;
            break;
        }
        mt.times.push_back(tr.times[i]);
        mt.z.push_back(fit.z);
        mt.eps_l2.push_back(l2_norm(fit.eps));
        mt.eps_hs.push_back(sobolev_norm(fit.eps, s));
        mt.ortho_residuals.push_back(fit.ortho);
        mt.eps.push_back(std::move(fit.eps));
    }
    const std::size_t n = mt.times.size();
    mt.zdot.assign(n, {0.0, 0.0});
    for (std::size_t i = 0; i < n && n > 1; ++i) {
        const std::size_t a = i == 0 ? 0 : i - 1;
        const std::size_t b = i + 1 == n ? i : i + 1;
        for (std::size_t j = 0; j < 2; ++j) mt.zdot[i][j] = (mt.z[b][j] - mt.z[a][j]) / (mt.times[b] - mt.times[a]);
    }
    return mt;
}

/// R(eps) = (1/m) d_{x1} sum_{k=2}^m C(m,k) Q^{m-k} eps^k, alias-free.
inline Field remainder_R(const Field& Q, const Field& eps, int m) {
    const Field in[] = {Q, eps};
    const Field poly = dealiased_map(std::span<const Field>(in), m, [m](std::span<const double> v) {
        double acc = 0.0, binom = 1.0;
        for (int k = 1; k <= m; ++k) {
            binom = binom * (m + 1 - k) / k;
            if (k >= 2) acc += binom * std::pow(v[0], m - k) * std::pow(v[1], k);
        }
        return acc;
    });
    return (1.0 / m) * derivative(poly, 0, 1);
}

struct EpsilonResidual {
    std::vector<double> times;
    std::vector<double> absolute;  ///< H^{-(1+a)} norm of the residual
    std::vector<double> relative;  ///< divided by the largest term norm
    bool stride_flag = false;      ///< snapshot spacing too coarse for the time derivative
};

/// Residual of eps_t - d_{x1} L eps - (z'_1 - c) d_{x1}(Q + eps) + R(eps) at
/// interior track times, with eps_t by centered differences.
inline EpsilonResidual epsilon_equation_residual(const ModulationTrack& mt, const GroundState& gs) {
    EpsilonResidual out;
    const ModelParams& p = gs.params;
    const double s = -0.5 * (1.0 + p.alpha);
    const LinearizedOperator op(gs);
    for (std::size_t i = 1; i + 1 < mt.times.size(); ++i) {
        const double dt = mt.times[i + 1] - mt.times[i - 1];
        const Field et = (1.0 / dt) * (mt.eps[i + 1] - mt.eps[i - 1]);
        const Field& e = mt.eps[i];
        const Field dle = derivative(op.apply(e), 0, 1);
        const Field mod = (mt.zdot[i][0] - p.c) * derivative(gs.Q + e, 0, 1);
        const Field rr = remainder_R(gs.Q, e, p.m);
        const Field res = et - dle - mod + rr;
        const double scale = std::max({sobolev_norm(et, s), sobolev_norm(dle, s), sobolev_norm(mod, s), sobolev_norm(rr, s)});
        out.times.push_back(mt.times[i]);
        out.absolute.push_back(sobolev_norm(res, s));
        out.relative.push_back(scale > 0.0 ? out.absolute.back() / scale : 0.0);
        if (std::abs(mt.zdot[i][0]) * 0.5 * dt > 2.0 * gs.Q.grid().length(0) / 20.0) out.stride_flag = true;
    }
    return out;
}

struct ModulationRates {
    std::vector<double> times;
    std::vector<double> ratio;
    double c2 = 0.0;  ///< max ratio
};

/// (|z'_1 - c| + sum_{j>=2} |z'_j|) / ||eps||_{H^{a/2}}, skipping ||eps|| < 1e-12.
inline ModulationRates modulation_rate_check(const ModulationTrack& mt, double c) {
    ModulationRates r;
    for (std::size_t i = 0; i < mt.times.size(); ++i) {
        if (mt.eps_hs[i] < 1e-12) continue;
        const double num = std::abs(mt.zdot[i][0] - c) + std::abs(mt.zdot[i][1]);
        r.times.push_back(mt.times[i]);
        r.ratio.push_back(num / mt.eps_hs[i]);
        r.c2 = std::max(r.c2, r.ratio.back());
    }
    return r;
}

/// Smooth cutoff: 1 on |s| <= 1, 0 on |s| >= 2, C-infinity transition in between.
inline double cutoff(double s) {
    const double t = std::abs(s) - 1.0;
    if (t <= 0.0) return 1.0;
    if (t >= 1.0) return 0.0;
    const double a = std::exp(-1.0 / t);
    const double b = std::exp(-1.0 / (1.0 - t));
    return b / (a + b);
}

/// Derivative of the cutoff with respect to s.
inline double cutoff_derivative(double s) {
    const double t = std::abs(s) - 1.0;
    if (t <= 0.0 || t >= 1.0) return 0.0;
    const double a = std::exp(-1.0 / t);
    const double b = std::exp(-1.0 / (1.0 - t));
    const double da = a / (t * t);
    const double db = -b / ((1.0 - t) * (1.0 - t));
    const double dv = (db * (a + b) - b * (da + db)) / ((a + b) * (a + b));
    return s < 0.0 ? -dv : dv;
}

struct VirialInputs {
    double A = 0.0;
    double beta = 0.0;
    double lambda0 = 0.0;
    Field chi0;        ///< L^2-normalized, positive
    Field F;           ///< x_1-primitive of Lambda Q + beta chi0 from the left box edge
    Field F_A;         ///< F sigma_A
    Field sigma_A;     ///< cutoff(x_1 / A)
    Field dsigma_A;    ///< cutoff'(x_1 / A)
    Field g;                     ///< Lambda Q + beta chi0
    double edge_variation = 0.0; ///< max |F - F(right edge)| on the last tenth of the box, over sup|F|
    double left_tail = 0.0;      ///< majorant of the neglected integral of g beyond the left edge
};

/// x_1-primitive with F(-L/2) = 0: ramp for the x_1-mean, (i xi_1)^{-1} elsewhere.
inline Field primitive_x1(const Field& f) {
    const Grid& g = f.grid();
    const Spectrum s = f.spectrum();
    const auto x1 = g.xi1();
    const auto nyq = g.nyquist_x1();
    Spectrum periodic(s.size(), cplx(0.0, 0.0));
    Spectrum mean(s.size(), cplx(0.0, 0.0));
    for (std::size_t k = 0; k < s.size(); ++k) {
        if (nyq[k]) continue;
        if (x1[k] == 0.0) {
            mean[k] = s[k];
        } else {
            periodic[k] = s[k] / cplx(0.0, x1[k]);
        }
    }
    const Field per = Field::from_spectrum(f.grid_ptr(), std::move(periodic));
    const Field avg = Field::from_spectrum(f.grid_ptr(), std::move(mean));
    const std::size_t n0 = g.size(0);
    const std::size_t n1 = g.dim() == 2 ? g.size(1) : 1;
    const double left = g.coordinate(0, 0);
    std::vector<double> out(f.size());
    for (std::size_t i = 0; i < n0; ++i) {
        for (std::size_t j = 0; j < n1; ++j) {
            out[i * n1 + j] = per[i * n1 + j] - per[j] + avg[i * n1 + j] * (g.coordinate(0, i) - left);
        }
    }
    return Field(f.grid_ptr(), std::move(out));
}

/// F, F_A and beta = -int Q Lambda Q / int Q chi0.
inline VirialInputs build_virial(const GroundState& gs, const SpectralReport& sr, double A) {
    const ModelParams& p = gs.params;
    if (criticality(p).cls != Criticality::supercritical) throw ConfigError("build_virial requires the supercritical class");
    const Grid& g = gs.Q.grid();
    if (!(A >= 1.0)) throw ConfigError("build_virial: A must be at least 1");
    if (2.0 * A > 0.5 * g.length(0) + 1e-12) throw ConfigError("build_virial: cutoff leak, 2A exceeds half the box");
    VirialInputs v;
    v.A = A;
    v.lambda0 = sr.lambda0;
    v.chi0 = (1.0 / l2_norm(sr.chi0)) * sr.chi0;
    const Field lq = scaling_generator(gs.Q, p);
    v.beta = -inner(gs.Q, lq) / inner(gs.Q, v.chi0);
    v.g = lq + v.beta * v.chi0;
    v.F = primitive_x1(v.g);
    auto x1_field = [&](auto fn) {
        if (g.dim() == 1) return Field::from_function(gs.Q.grid_ptr(), [&](double x) { return fn(x); });
        return Field::from_function(gs.Q.grid_ptr(), [&](double x, double) { return fn(x); });
    };
    v.sigma_A = x1_field([A](double x) { return cutoff(x / A); });
    v.dsigma_A = x1_field([A](double x) { return cutoff_derivative(x / A); });
    v.F_A = pointwise_product(v.F, v.sigma_A);
    const double sup = v.F.sup_norm();
    const std::size_t n0 = g.size(0);
    const std::size_t n1 = g.dim() == 2 ? g.size(1) : 1;
    double var = 0.0, edge_g = 0.0;
    for (std::size_t j = 0; j < n1; ++j) {
        const double right = v.F[(n0 - 1) * n1 + j];
        for (std::size_t i = n0 - n0 / 10; i < n0; ++i) var = std::max(var, std::abs(v.F[i * n1 + j] - right));
        edge_g = std::max(edge_g, std::abs(v.g[j]));
    }
    v.edge_variation = sup > 0.0 ? var / sup : 0.0;
    // |g| <~ |x_1|^{-(d+a)} past the edge integrates to |g(edge)| (L/2) / (d + a - 1).
    const double decay = g.dim() + p.alpha - 1.0;
    v.left_tail = decay > 0.0 ? edge_g * 0.5 * g.length(0) / decay : std::numeric_limits<double>::infinity();
    return v;
}

struct VirialSeries {
    double A = 0.0, beta = 0.0, lambda0 = 0.0;
    std::vector<double> times;
    std::vector<double> J;
    std::vector<double> dJ_fd;        ///< centered differences (NaN at the ends)
    std::vector<double> dJ_analytic;  ///< beta lambda0 int eps chi0 sigma_A + R_1
    std::vector<double> main_term;    ///< beta lambda0 int eps chi0 sigma_A
    std::vector<double> theta;        ///< int eps chi0
    double bound_M0 = 0.0;            ///< sup |J| / sqrt(A)
};

/// dJ/dt = -int eps L(d F_A) + (z'-c) int (Q+eps)(-d F_A) + int R-terms, expanded as
/// beta lambda0 int eps chi0 sigma_A + c int eps Q sigma_A - int eps [D^a, sigma_A] g
///   - (1/A) int eps L(F sigma'(./A)) - (z'-c) int (Q+eps) dF_A
///   + (1/m) sum_{k>=2} C(m,k) int Q^{m-k} eps^k dF_A.
inline VirialSeries virial_series(const ModulationTrack& mt, const GroundState& gs, const VirialInputs& v) {
    const ModelParams& p = gs.params;
    const LinearizedOperator op(gs);
    VirialSeries vs;
    vs.A = v.A;
    vs.beta = v.beta;
    vs.lambda0 = v.lambda0;
    const Field dFA = pointwise_product(v.g, v.sigma_A) + (1.0 / v.A) * pointwise_product(v.F, v.dsigma_A);
    const Field gs_sig = pointwise_product(v.g, v.sigma_A);
    const Field comm = fractional_derivative(gs_sig, p.alpha) - pointwise_product(v.sigma_A, fractional_derivative(v.g, p.alpha));
    const Field lfs = op.apply(pointwise_product(v.F, v.dsigma_A));
    const Field chi_sig = pointwise_product(v.chi0, v.sigma_A);
    const Field q_sig = pointwise_product(gs.Q, v.sigma_A);
    const int m = p.m;
    for (std::size_t i = 0; i < mt.times.size(); ++i) {
        const Field& e = mt.eps[i];
        vs.times.push_back(mt.times[i]);
        vs.J.push_back(inner(e, v.F_A));
        vs.theta.push_back(inner(e, v.chi0));
        const double main = v.beta * v.lambda0 * inner(e, chi_sig);
        const Field in[] = {gs.Q, e, dFA};
        const double nl = dealiased_integral(std::span<const Field>(in), m + 1, [m](std::span<const double> x) {
            double acc = 0.0, binom = 1.0;
            for (int k = 1; k <= m; ++k) {
                binom = binom * (m + 1 - k) / k;
                if (k >= 2) acc += binom * std::pow(x[0], m - k) * std::pow(x[1], k);
            }
            return acc * x[2];
        });
        const double r1 = p.c * inner(e, q_sig) - inner(e, comm) - inner(e, lfs) / v.A -
                          (mt.zdot[i][0] - p.c) * inner(gs.Q + e, dFA) + nl / m;
        vs.main_term.push_back(main);
        vs.dJ_analytic.push_back(main + r1);
    }
    const std::size_t n = vs.times.size();
    vs.dJ_fd.assign(n, std::numeric_limits<double>::quiet_NaN());
    for (std::size_t i = 1; i + 1 < n; ++i) {
        vs.dJ_fd[i] = (vs.J[i + 1] - vs.J[i - 1]) / (vs.times[i + 1] - vs.times[i - 1]);
    }
    for (double j : vs.J) vs.bound_M0 = std::max(vs.bound_M0, std::abs(j) / std::sqrt(v.A));
    return vs;
}

/// u_{0,n} = lambda Q_c(lambda^{2/d} x), lambda = 1 + 1/n.
inline Field instability_sequence(int n, const GroundState& gs) {
    if (n < 1) throw ConfigError("instability_sequence: n must be positive");
    const double lam = 1.0 + 1.0 / n;
    const int d = gs.Q.grid().dim();
    // Zero outside the compressed box keeps the mass identity exact in the continuum.
    return resample_scaled(gs.Q, std::pow(lam, 2.0 / d), lam, 0.0);
}

/// f(lambda) in E[u_{0,n}] - E[Q] = f(lambda) int Q^{m+1} / (m(m+1)).
inline double energy_gap_factor(double lam, const ModelParams& p) {
    return p.d * (p.m - 1) / (2.0 * p.alpha) * (std::pow(lam, 2.0 * p.alpha / p.d) - 1.0) - (std::pow(lam, p.m - 1) - 1.0);
}

enum class Verdict { stayed, exited, blew_up };

inline const char* to_string(Verdict v) {
    switch (v) {
        case Verdict::stayed: return "stayed";
        case Verdict::exited: return "exited";
        case Verdict::blew_up: return "blew_up";
    }
    return "unknown";
}

struct ExperimentReport {
    std::string scenario;
    int n = 0;
    double delta = 0.0;
    std::vector<double> times;
    std::vector<double> distance;
    double initial_distance = 0.0;
    double sup_distance = 0.0;
    double omega = 0.0;
    std::optional<double> exit_time;
    Verdict verdict = Verdict::stayed;
    bool resolution_lost = false;
    DriftSummary drift;
    double mass_gap = 0.0;    ///< (M[u0] - M[Q]) / M[Q]
    double energy_gap = 0.0;  ///< E[u0] - E[Q]
};

struct StabilityConfig {
    std::string scenario = "stability";
    double delta = 1e-2;     ///< target initial tube distance of the noise
    double amplitude = 1.0;  ///< u0 = amplitude * Q + noise
    int lambda_n = 0;        ///< > 0: use instability_sequence(n) instead of noise
    double T = 50.0;
    double dt = 0.0;         ///< 0: default_dt
    double sample_dt = 0.5;  ///< spacing of tube-distance samples
    std::uint64_t seed = 1;
};

/// Smooth band-limited random perturbation with unit H^{a/2} norm.
inline Field random_perturbation(const GroundState& gs, std::uint64_t seed) {
    const GridPtr& g = gs.Q.grid_ptr();
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    std::vector<double> raw(g->points());
    for (double& v : raw) v = nd(rng);
    Field f = apply_radial(Field(g, std::move(raw)), [](double xi) { return std::exp(-0.5 * xi * xi); });
    const double w = 5.0;
    const Field env = g->dim() == 1 ? Field::from_function(g, [w](double x) { return std::exp(-x * x / (w * w)); })
                                    : Field::from_function(g, [w](double x, double y) { return std::exp(-(x * x + y * y) / (w * w)); });
    f = pointwise_product(f, env);
    return (1.0 / sobolev_norm(f, 0.5 * gs.params.alpha)) * f;
}

inline std::size_t steps_between(double sample_dt, double dt) {
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(sample_dt / dt)));
}

/// Evolves perturbed data of a subcritical ground state and records the tube distance.
inline ExperimentReport run_stability_experiment(const GroundState& gs, const StabilityConfig& cfg) {
    const ModelParams& p = gs.params;
    if (criticality(p).cls != Criticality::subcritical) throw ConfigError("stability experiment requires the subcritical class");
    Field u0 = cfg.lambda_n > 0 ? instability_sequence(cfg.lambda_n, gs) : cfg.amplitude * gs.Q;
    if (cfg.delta > 0.0 && cfg.lambda_n == 0) u0 = u0 + cfg.delta * random_perturbation(gs, cfg.seed);
    const double dt = cfg.dt > 0.0 ? cfg.dt : default_dt(p, u0.grid(), u0.sup_norm());
    ExperimentReport rep;
    rep.scenario = cfg.scenario;
    rep.n = cfg.lambda_n;
    rep.delta = cfg.delta;
    EvolveOptions opt;
    opt.stride = steps_between(cfg.sample_dt, dt);
    opt.monitor_stride = opt.stride;
    opt.observer = [&](double t, const Field& f) {
        rep.times.push_back(t);
        rep.distance.push_back(tube_distance(f, gs));
        return true;
    };
    const Trajectory tr = evolve(u0, p, cfg.T, dt, opt);
    rep.drift = conservation_report(tr);
    rep.resolution_lost = tr.resolution_lost;
    rep.initial_distance = rep.distance.front();
    rep.sup_distance = *std::max_element(rep.distance.begin(), rep.distance.end());
    rep.verdict = tr.blew_up ? Verdict::blew_up : Verdict::stayed;
    rep.mass_gap = (mass(u0) - mass(gs.Q)) / mass(gs.Q);
    rep.energy_gap = energy(u0, p) - energy(gs.Q, p);
    return rep;
}

struct InstabilityConfig {
    std::string scenario = "instability";
    double omega = 0.0;     ///< 0: half the H^{a/2} distance between Q and 2Q(4.) (d = 1 form)
    double T = 60.0;
    double dt = 0.0;
    double sample_dt = 0.002;
    bool keep_trajectory = true;
};

/// Default tube radius: half of || lambda_1 Q(lambda_1^{2/d} .) - Q ||_{H^{a/2}} minimized over translations.
inline double default_omega(const GroundState& gs) { return 0.5 * tube_distance(instability_sequence(1, gs), gs); }

struct InstabilityRun {
    ExperimentReport report;
    Trajectory trajectory;  ///< snapshots up to exit (or T)
};

/// Evolves u_{0,n} until it leaves the tube of radius omega (or blows up).
inline InstabilityRun run_instability_experiment(const GroundState& gs, int n, const InstabilityConfig& cfg,
                                                 double post_exit = 0.0) {
    const ModelParams& p = gs.params;
    if (criticality(p).cls != Criticality::supercritical) {
        throw ConfigError("instability experiment requires the supercritical class");
    }
    if (!(p.alpha > std::max(1.0 - p.d / 2.0, 0.0))) throw ConfigError("instability experiment requires alpha > max(1 - d/2, 0)");
    const double omega = cfg.omega > 0.0 ? cfg.omega : default_omega(gs);
    const Field u0 = instability_sequence(n, gs);
    const double dt = cfg.dt > 0.0 ? cfg.dt : default_dt(p, u0.grid(), 1.5 * u0.sup_norm());
    InstabilityRun run;
    ExperimentReport& rep = run.report;
    rep.scenario = cfg.scenario;
    rep.n = n;
    rep.omega = omega;
    rep.mass_gap = (mass(u0) - mass(gs.Q)) / mass(gs.Q);
    rep.energy_gap = energy(u0, p) - energy(gs.Q, p);
    EvolveOptions opt;
    opt.stride = steps_between(cfg.sample_dt, dt);
    opt.monitor_stride = opt.stride;
    opt.stop_on_resolution_loss = true;
    double stop_at = std::numeric_limits<double>::infinity();
    opt.observer = [&](double t, const Field& f) {
        rep.times.push_back(t);
        rep.distance.push_back(tube_distance(f, gs));
        if (!rep.exit_time && rep.distance.back() >= omega) {
            rep.exit_time = t;
            stop_at = t + post_exit;
        }
        return t < stop_at;
    };
    run.trajectory = evolve(u0, p, cfg.T, dt, opt);
    rep.drift = conservation_report(run.trajectory);
    rep.resolution_lost = run.trajectory.resolution_lost;
    rep.initial_distance = rep.distance.front();
    rep.sup_distance = *std::max_element(rep.distance.begin(), rep.distance.end());
    if (run.trajectory.blew_up || (rep.resolution_lost && !rep.exit_time)) {
        rep.verdict = Verdict::blew_up;
        if (!rep.exit_time) rep.exit_time = run.trajectory.final_time;
    } else if (rep.exit_time) {
        rep.verdict = Verdict::exited;
    } else {
        rep.verdict = Verdict::stayed;
    }
    if (!cfg.keep_trajectory) run.trajectory.snapshots.clear();
    return run;
}

}  // namespace fkdv
