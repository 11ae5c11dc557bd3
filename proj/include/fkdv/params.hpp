#pragma once

#include <cmath>
#include <limits>
#include <string>

#include "fkdv/error.hpp"

namespace fkdv {

enum class Criticality { subcritical, critical, supercritical, energy_critical };

inline const char* to_string(Criticality c) {
    switch (c) {
        case Criticality::subcritical: return "subcritical";
        case Criticality::critical: return "critical";
        case Criticality::supercritical: return "supercritical";
        case Criticality::energy_critical: return "energy-critical";
    }
    return "unknown";
}

/// Dimension, dispersion order, nonlinearity power and wave speed.
struct ModelParams {
    int d = 1;
    double alpha = 1.0;
    int m = 2;
    double c = 1.0;

    /// Exponent 1/(m-1) of the amplitude in the speed scaling.
    [[nodiscard]] double amp_exponent() const { return 1.0 / (m - 1); }
};

/// Critical power m_* = (d+alpha)/(d-alpha) for alpha < d, else infinity.
inline double critical_power(int d, double alpha) {
    if (alpha < d) return (d + alpha) / (d - alpha);
    return std::numeric_limits<double>::infinity();
}

struct CriticalityReport {
    double s_c = 0.0;
    double m_star = 0.0;
    Criticality cls = Criticality::subcritical;
};

inline CriticalityReport criticality(const ModelParams& p) {
    CriticalityReport r;
    r.s_c = p.d / 2.0 - p.alpha / (p.m - 1);
    r.m_star = critical_power(p.d, p.alpha);
    constexpr double tol = 1e-12;
    if (r.s_c < -tol) {
        r.cls = Criticality::subcritical;
    } else if (std::abs(r.s_c) <= tol) {
        r.cls = Criticality::critical;
    } else if (std::isfinite(r.m_star) && std::abs(p.m - r.m_star) <= tol) {
        r.cls = Criticality::energy_critical;
    } else {
        r.cls = Criticality::supercritical;
    }
    return r;
}

/// Throws ConfigError unless d in {1,2}, 0 < alpha <= 2, m >= 2, c > 0 and m < m_*.
/// alpha = 2 is admitted as the local (generalized KdV) endpoint.
inline void validate(const ModelParams& p) {
    if (p.d != 1 && p.d != 2) throw ConfigError("d must be 1 or 2, got " + std::to_string(p.d));
    if (!(p.alpha > 0.0 && p.alpha <= 2.0)) {
        throw ConfigError("alpha must satisfy 0 < alpha <= 2, got " + std::to_string(p.alpha));
    }
    if (p.m < 2) throw ConfigError("m must be an integer >= 2, got " + std::to_string(p.m));
    if (!(p.c > 0.0) || !std::isfinite(p.c)) throw ConfigError("c must be positive, got " + std::to_string(p.c));
    const double ms = critical_power(p.d, p.alpha);
    if (!(p.m < ms - 1e-12)) {
        throw ConfigError("m = " + std::to_string(p.m) + " must be below m_* = " + std::to_string(ms));
    }
}

}  // namespace fkdv
