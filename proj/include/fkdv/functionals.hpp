#pragma once

#include <cmath>

#include "fkdv/error.hpp"
#include "fkdv/field.hpp"
#include "fkdv/params.hpp"
#include "fkdv/spectral.hpp"

namespace fkdv {

struct ConservedTriple {
    double mass = 0.0;
    double energy = 0.0;
    double l1 = 0.0;
};

/// M[u] = (1/2) int u^2.
inline double mass(const Field& u) { return 0.5 * inner(u, u); }

/// ||D^{s/2} u||^2 evaluated as a spectral sum.
inline double dispersive_seminorm_sq(const Field& u, double alpha) {
    const Grid& g = u.grid();
    const Spectrum s = u.spectrum();
    const auto xa = g.xi_abs();
    const auto w = g.multiplicity();
    long double acc = 0.0;
    for (std::size_t k = 0; k < s.size(); ++k) {
        if (xa[k] == 0.0) continue;
        acc += w[k] * std::pow(xa[k], alpha) * std::norm(s[k]);
    }
    return static_cast<double>(acc) * g.cell_volume() / static_cast<double>(g.points());
}

/// E[u] = (1/2)||D^{alpha/2}u||^2 - int u^{m+1} / (m(m+1)), nonlinear term alias-free.
inline double energy(const Field& u, const ModelParams& p) {
    return 0.5 * dispersive_seminorm_sq(u, p.alpha) - power_integral(u, p.m + 1) / (p.m * (p.m + 1.0));
}

/// int u.
inline double l1_invariant(const Field& u) { return u.integral(); }

inline ConservedTriple conserved(const Field& u, const ModelParams& p) {
    return {mass(u), energy(u, p), l1_invariant(u)};
}

/// W_c[u] = E[u] + c M[u].
inline double action(const Field& u, const ModelParams& p) { return energy(u, p) + p.c * mass(u); }

/// Weinstein quotient ||D^{a/2}u||^{d(m-1)/a} ||u||^{m+1-d(m-1)/a} / int u^{m+1}.
inline double weinstein(const Field& u, const ModelParams& p) {
    const double num_pow = p.d * (p.m - 1) / p.alpha;
    const double denom = power_integral(u, p.m + 1);
    const double l2 = l2_norm(u);
    if (l2 == 0.0) throw DomainError("weinstein: zero field");
    double abs_sum = 0.0;
    for (double v : u.samples()) abs_sum += std::pow(std::abs(v), p.m + 1);
    abs_sum *= u.grid().cell_volume();
    if (!(denom > 1e-12 * abs_sum)) {
        throw DomainError("weinstein: int u^{m+1} must be positive");
    }
    const double dnorm = std::sqrt(dispersive_seminorm_sq(u, p.alpha));
    return std::pow(dnorm, num_pow) * std::pow(l2, p.m + 1 - num_pow) / denom;
}

/// 2d - (d - alpha)(m + 1); vanishes on the energy-critical boundary.
inline double pohozaev_denominator(const ModelParams& p) { return 2.0 * p.d - (p.d - p.alpha) * (p.m + 1); }

/// Closed-form sharp Gagliardo-Nirenberg constant from ||Q_c||_{L^2}.
inline double sharp_gn_constant(const Field& Qc, const ModelParams& p) {
    const double D = pohozaev_denominator(p);
    if (D <= 0.0) throw DomainError("sharp_gn_constant: energy-critical or beyond");
    const double e1 = (2.0 * p.alpha - p.d * (p.m - 1)) / (2.0 * p.alpha);
    const double e2 = p.d * (p.m - 1) / (2.0 * p.alpha);
    const double num = p.m * p.alpha * (p.m + 1) * std::pow(p.c, e1);
    const double den = std::pow(p.d, e2) * std::pow(p.m - 1.0, e2) * std::pow(D, e1);
    return num / den / std::pow(l2_norm(Qc), p.m - 1);
}

struct PohozaevResiduals {
    double r1 = 0.0;  ///< ||D^{a/2}Q||^2 identity
    double r2 = 0.0;  ///< int Q^{m+1} identity
    double r3 = 0.0;  ///< energy identity, relative to the size of its two terms
    bool degenerate = false;
};

inline PohozaevResiduals pohozaev_residuals(const Field& Q, const ModelParams& p) {
    PohozaevResiduals r;
    const double D = pohozaev_denominator(p);
    if (std::abs(D) < 1e-12) {
        r.degenerate = true;
        return r;
    }
    const double q2 = inner(Q, Q);
    const double dq = dispersive_seminorm_sq(Q, p.alpha);
    const double qm = power_integral(Q, p.m + 1);
    const double sc = p.d / 2.0 - p.alpha / (p.m - 1);
    const double t1 = p.d * p.c * (p.m - 1) / D * q2;
    const double t2 = p.alpha * p.c * p.m * (p.m + 1) / D * q2;
    const double t3 = sc * p.c * (p.m - 1) / D * q2;
    const double e = 0.5 * dq - qm / (p.m * (p.m + 1.0));
    r.r1 = std::abs(dq - t1) / std::abs(t1);
    r.r2 = std::abs(qm - t2) / std::abs(t2);
    r.r3 = std::abs(e - t3) / (0.5 * dq + qm / (p.m * (p.m + 1.0)));
    return r;
}

}  // namespace fkdv
