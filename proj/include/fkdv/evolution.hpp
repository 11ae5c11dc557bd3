#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "fkdv/error.hpp"
#include "fkdv/fft.hpp"
#include "fkdv/field.hpp"
#include "fkdv/functionals.hpp"
#include "fkdv/params.hpp"
#include "fkdv/spectral.hpp"

namespace fkdv {

/// Integrating-factor RK4 for u_t = d_{x1} D^a u - (1/m) d_{x1}(u^m) in the
/// Fourier variables: v^_t = i xi_1 |xi|^a v^ - (i xi_1/m) (u^m)^.
class Stepper {
public:
    Stepper(const ModelParams& p, GridPtr g) : params_(p), grid_(std::move(g)) {
        pad_ = product_padding(p.m);
        fine_ = refined_grid(*grid_, pad_);
        const auto x1 = grid_->xi1();
        const auto xa = grid_->xi_abs();
        const auto nyq = grid_->nyquist_x1();
        lin_.resize(grid_->modes());
        dx_.resize(grid_->modes());
        for (std::size_t k = 0; k < lin_.size(); ++k) {
            const double s = nyq[k] ? 0.0 : x1[k];
            dx_[k] = s;
            lin_[k] = s * (xa[k] == 0.0 ? 0.0 : std::pow(xa[k], p.alpha));
        }
    }

    [[nodiscard]] const GridPtr& grid() const { return grid_; }
    [[nodiscard]] std::size_t padding() const { return pad_; }

    /// -(i xi_1/m) (u^m)^ with the power formed on the padded grid.
    [[nodiscard]] Spectrum nonlinear(const Spectrum& u) const {
        const Grid& g = *grid_;
        const Grid& f = *fine_;
        Spectrum big(f.modes(), cplx(0.0, 0.0));
        const double up = std::pow(static_cast<double>(pad_), g.dim());
        detail::for_each_shared_mode(g, f, [&](std::size_t c, std::size_t b) { big[b] = up * u[c]; });
        std::vector<double> phys = fft_inverse(f.dim(), f.size(0), f.dim() == 2 ? f.size(1) : 1, big);
        const int m = params_.m;
        for (double& v : phys) {
            double r = v;
            for (int i = 1; i < m; ++i) r *= v;
            v = r;
        }
        const Spectrum pw = fft_forward(f.dim(), f.size(0), f.dim() == 2 ? f.size(1) : 1, phys);
        Spectrum out(g.modes(), cplx(0.0, 0.0));
        const double down = 1.0 / (up * m);
        detail::for_each_shared_mode(g, f, [&](std::size_t c, std::size_t b) {
            out[c] = cplx(0.0, -dx_[c]) * down * pw[b];
        });
        return out;
    }

    /// One step of size dt (negative dt integrates backwards).
    [[nodiscard]] Spectrum step(const Spectrum& u, double dt) const {
        const std::size_t n = u.size();
        Spectrum e(n), e2(n);
        for (std::size_t k = 0; k < n; ++k) {
            e[k] = std::polar(1.0, 0.5 * dt * lin_[k]);
            e2[k] = e[k] * e[k];
        }
        Spectrum a = nonlinear(u);
        Spectrum tmp(n);
        for (std::size_t k = 0; k < n; ++k) {
            a[k] *= dt;
            tmp[k] = e[k] * (u[k] + 0.5 * a[k]);
        }
        Spectrum b = nonlinear(tmp);
        for (std::size_t k = 0; k < n; ++k) {
            b[k] *= dt;
            tmp[k] = e[k] * u[k] + 0.5 * b[k];
        }
        Spectrum c = nonlinear(tmp);
        for (std::size_t k = 0; k < n; ++k) {
            c[k] *= dt;
            tmp[k] = e2[k] * u[k] + e[k] * c[k];
        }
        Spectrum d = nonlinear(tmp);
        Spectrum out(n);
        for (std::size_t k = 0; k < n; ++k) {
            out[k] = e2[k] * u[k] + (e2[k] * a[k] + 2.0 * e[k] * (b[k] + c[k]) + dt * d[k]) / 6.0;
        }
        return out;
    }

    [[nodiscard]] Field step(const Field& u, double dt) const {
        return Field::from_spectrum(grid_, step(u.spectrum(), dt));
    }

private:
    ModelParams params_;
    GridPtr grid_;
    GridPtr fine_;
    std::size_t pad_ = 1;
    std::vector<double> lin_;
    std::vector<double> dx_;
};

/// One integrating-factor RK4 step.
inline Field step(const Field& u, const ModelParams& p, double dt) {
    if (dt == 0.0 || !std::isfinite(dt)) throw ConfigError("step: dt must be finite and nonzero");
    const Stepper s(p, u.grid_ptr());
    Spectrum next = s.step(u.spectrum(), dt);
    for (const auto& v : next) {
        if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) throw DomainError("step: non-finite state (blow-up)");
    }
    return Field::from_spectrum(u.grid_ptr(), std::move(next));
}

/// Step size from the nonlinear stability limit of RK4 on the padded
/// transport term: dt = safety * 2.8 / (xi_max * max(1, |u|_inf^{m-1})).
inline double default_dt(const ModelParams& p, const Grid& g, double sup_u, double safety = 0.25) {
    const double amp = std::max(1.0, std::pow(sup_u, p.m - 1));
    return safety * 2.8 / (g.max_wavenumber() * amp);
}

struct Trajectory {
    ModelParams params;
    double dt = 0.0;
    std::size_t dealias_pad = 1;
    std::vector<double> times;              ///< snapshot times
    std::vector<Field> snapshots;
    std::vector<double> monitor_times;      ///< conserved-quantity times
    std::vector<ConservedTriple> conserved;
    std::vector<double> supnorm;
    bool blew_up = false;
    bool resolution_lost = false;
    bool tainted = false;  ///< relative mass drift above 1e-8
    double final_time = 0.0;
};

struct EvolveOptions {
    std::size_t stride = 1;          ///< steps between snapshots
    std::size_t monitor_stride = 1;  ///< steps between conserved-quantity records
    double blowup_factor = 1e6;
    double resolution_tol = 1e-4;    ///< spectral tail ratio that flags lost resolution
    bool stop_on_resolution_loss = false;
    std::function<bool(double, const Field&)> observer = nullptr;  ///< called at every snapshot; false stops the run
};

/// Repeated stepping to time T with snapshot striding and conservation monitoring.
inline Trajectory evolve(const Field& u0, const ModelParams& p, double T, double dt, const EvolveOptions& opt = {}) {
    if (!(T > 0.0)) throw ConfigError("evolve: T must be positive");
    if (dt == 0.0 || !std::isfinite(dt)) throw ConfigError("evolve: dt must be finite and nonzero");
    const Stepper stepper(p, u0.grid_ptr());
    Trajectory tr;
    tr.params = p;
    tr.dt = dt;
    tr.dealias_pad = stepper.padding();
    const auto nsteps = static_cast<std::size_t>(std::llround(T / std::abs(dt)));
    const double sup0 = std::max(u0.sup_norm(), 1e-300);
    Spectrum u = u0.spectrum();
    Field uf = u0;
    auto record = [&](std::size_t n, const Field& f) {
        const double t = static_cast<double>(n) * dt;
        if (n % opt.monitor_stride == 0 || n == nsteps) {
            tr.monitor_times.push_back(t);
            tr.conserved.push_back(conserved(f, p));
            tr.supnorm.push_back(f.sup_norm());
        }
        if (n % opt.stride == 0 || n == nsteps) {
            tr.times.push_back(t);
            tr.snapshots.push_back(f);
            if (opt.observer && !opt.observer(t, f)) return false;
        }
        return true;
    };
    bool go = record(0, uf);
    for (std::size_t n = 1; n <= nsteps && go; ++n) {
        Spectrum next = stepper.step(u, dt);
        bool finite = true;
        for (const auto& v : next) {
            if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) {
                finite = false;
                break;
            }
        }
        if (!finite) {
            tr.blew_up = true;
            break;
        }
        Field nf = Field::from_spectrum(u0.grid_ptr(), next);
        if (nf.sup_norm() > opt.blowup_factor * sup0) {
            tr.blew_up = true;
            break;
        }
        u = std::move(next);
        uf = std::move(nf);
        tr.final_time = static_cast<double>(n) * dt;
        const bool check = n % opt.monitor_stride == 0 || n % opt.stride == 0 || n == nsteps;
        if (check && spectral_tail_ratio(uf) > opt.resolution_tol) {
            tr.resolution_lost = true;
            if (opt.stop_on_resolution_loss) break;
        }
        go = record(n, uf);
    }
    if (tr.times.empty() || tr.times.back() != tr.final_time) {
        tr.times.push_back(tr.final_time);
        tr.snapshots.push_back(uf);
    }
    if (tr.monitor_times.empty() || tr.monitor_times.back() != tr.final_time) {
        tr.monitor_times.push_back(tr.final_time);
        tr.conserved.push_back(conserved(uf, p));
        tr.supnorm.push_back(uf.sup_norm());
    }
    const double m0 = tr.conserved.front().mass;
    for (const auto& c : tr.conserved) {
        if (m0 > 0.0 && std::abs(c.mass - m0) > 1e-8 * m0) tr.tainted = true;
    }
    return tr;
}

struct DriftSummary {
    double mass = 0.0;    ///< max relative drift
    double energy = 0.0;  ///< max relative drift (relative to the size of the energy terms when E(0) ~ 0)
    double l1 = 0.0;      ///< max absolute drift
};

inline DriftSummary conservation_report(const Trajectory& tr) {
    DriftSummary d;
    if (tr.conserved.empty()) return d;
    const ConservedTriple& c0 = tr.conserved.front();
    const double escale = std::abs(c0.energy) > 0.0 ? std::abs(c0.energy) : 1.0;
    for (const auto& c : tr.conserved) {
        if (c0.mass > 0.0) d.mass = std::max(d.mass, std::abs(c.mass - c0.mass) / c0.mass);
        if (c0.energy != 0.0 || c.energy != 0.0) d.energy = std::max(d.energy, std::abs(c.energy - c0.energy) / escale);
        d.l1 = std::max(d.l1, std::abs(c.l1 - c0.l1));
    }
    return d;
}

}  // namespace fkdv
