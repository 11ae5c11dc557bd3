#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

#include "fkdv/error.hpp"
#include "fkdv/field.hpp"
#include "fkdv/functionals.hpp"
#include "fkdv/ground_state.hpp"
#include "fkdv/params.hpp"
#include "fkdv/spectral.hpp"

namespace fkdv {

/// L_c = D^alpha + c - Q_c^{m-1} with the potential kept on the padded grid.
class LinearizedOperator {
public:
    explicit LinearizedOperator(const GroundState& gs) : params_(gs.params), grid_(gs.Q.grid_ptr()) {
        pad_ = product_padding(params_.m);
        const Field qf = pad(gs.Q, pad_);
        fine_ = qf.grid_ptr();
        potential_.resize(qf.size());
        for (std::size_t i = 0; i < qf.size(); ++i) potential_[i] = std::pow(qf[i], params_.m - 1);
        potential_max_ = *std::max_element(potential_.begin(), potential_.end());
        const auto xa = grid_->xi_abs();
        symbol_.resize(grid_->modes());
        for (std::size_t k = 0; k < symbol_.size(); ++k) {
            symbol_[k] = params_.c + (xa[k] == 0.0 ? 0.0 : std::pow(xa[k], params_.alpha));
        }
    }

    [[nodiscard]] const GridPtr& grid() const { return grid_; }
    [[nodiscard]] const ModelParams& params() const { return params_; }
    [[nodiscard]] double potential_max() const { return potential_max_; }
    [[nodiscard]] std::span<const double> symbol() const { return symbol_; }

    /// Q^{m-1} v, alias-free.
    [[nodiscard]] Field potential_times(const Field& v) const {
        const Field vf = pad(v, pad_);
        std::vector<double> prod(vf.size());
        for (std::size_t i = 0; i < prod.size(); ++i) prod[i] = potential_[i] * vf[i];
        return truncate(Field(fine_, std::move(prod)), grid_);
    }

    [[nodiscard]] Field apply(const Field& v) const {
        Field::check_same_grid(v, Field::zeros(grid_));
        const Field lin = apply_symbol(v, [&](std::size_t k) { return cplx(symbol_[k], 0.0); });
        return lin - potential_times(v);
    }

    /// (L + shift) v.
    [[nodiscard]] Field apply_shifted(const Field& v, double shift) const {
        const Field lin = apply_symbol(v, [&](std::size_t k) { return cplx(symbol_[k] + shift, 0.0); });
        return lin - potential_times(v);
    }

private:
    ModelParams params_;
    GridPtr grid_;
    GridPtr fine_;
    std::size_t pad_ = 1;
    std::vector<double> potential_;
    std::vector<double> symbol_;
    double potential_max_ = 0.0;
};

inline Field apply_L(const GroundState& gs, const Field& v) { return LinearizedOperator(gs).apply(v); }

struct EigenPair {
    double eigenvalue = 0.0;
    Field eigenfield;
    double residual = 0.0;
};

struct SpectralReport {
    double lambda0 = 0.0;  ///< L chi0 = -lambda0 chi0
    Field chi0;
    double chi0_residual = 0.0;
    std::vector<double> kernel_residuals;  ///< ||L d_j Q|| / ||d_j Q||
    std::vector<double> low_ritz;          ///< lowest Ritz values of L
    int negative_count = 0;
    int kernel_count = 0;
    double kernel_angle = 0.0;  ///< largest principal angle between Ritz kernel and span{d_j Q}
    double gap = 0.0;           ///< smallest Ritz value above the kernel
    double c0 = 0.0;
    int krylov_dim = 0;
};

namespace detail {

/// Grid vectors as Eigen columns with the h^d inner product folded into a weight.
inline Eigen::VectorXd to_vec(const Field& f) {
    return Eigen::Map<const Eigen::VectorXd>(f.samples().data(), static_cast<Eigen::Index>(f.size()));
}

inline Field to_field(const GridPtr& g, const Eigen::VectorXd& v) {
    return Field(g, std::vector<double>(v.data(), v.data() + v.size()));
}

/// Preconditioned CG for (L + shift) x = b, preconditioner (D^a + c + shift)^{-1}.
inline Field solve_shifted(const LinearizedOperator& op, const Field& b, double shift, double tol, int max_iter,
                           int* iterations = nullptr) {
    const auto sym = op.symbol();
    auto precond = [&](const Field& r) {
        return apply_symbol(r, [&](std::size_t k) { return cplx(1.0 / (sym[k] + shift), 0.0); });
    };
    Field x = precond(b);
    Field r = b - op.apply_shifted(x, shift);
    Field z = precond(r);
    Field p = z;
    double rz = inner(r, z);
    const double bn = l2_norm(b);
    int it = 0;
    for (; it < max_iter; ++it) {
        if (l2_norm(r) <= tol * bn) break;
        const Field ap = op.apply_shifted(p, shift);
        const double alpha = rz / inner(p, ap);
        x = Field::combine(x, p, 1.0, alpha);
        r = Field::combine(r, ap, 1.0, -alpha);
        z = precond(r);
        const double rz_new = inner(r, z);
        p = Field::combine(z, p, 1.0, rz_new / rz);
        rz = rz_new;
    }
    if (iterations) *iterations = it;
    if (l2_norm(r) > 1e3 * tol * bn) throw ConvergenceError("inner CG solve did not converge");
    return x;
}

/// Orthonormalizes the columns of block against basis (first `used` columns)
/// and within itself; returns the number of surviving columns.
inline int orthonormalize_block(Eigen::MatrixXd& basis, int used, Eigen::MatrixXd& block, double weight) {
    int kept = 0;
    for (int j = 0; j < block.cols(); ++j) {
        Eigen::VectorXd v = block.col(j);
        const double before = std::sqrt(weight) * v.norm();
        for (int pass = 0; pass < 2; ++pass) {
            if (used > 0) {
                const Eigen::VectorXd coef = weight * (basis.leftCols(used).transpose() * v);
                v -= basis.leftCols(used) * coef;
            }
            for (int i = 0; i < kept; ++i) v -= weight * block.col(i).dot(v) * block.col(i);
        }
        const double n = std::sqrt(weight) * v.norm();
        if (n > 1e-10 * before && n > 0.0) block.col(kept++) = v / n;
    }
    block.conservativeResize(Eigen::NoChange, kept);
    return kept;
}

inline std::vector<Field> initial_block(const GroundState& gs, int extra, std::uint64_t seed) {
    const Field& Q = gs.Q;
    const int m = gs.params.m;
    std::vector<Field> out;
    out.push_back(Q.map([m](double v) { return std::pow(std::max(v, 0.0), 0.5 * (m + 1)); }));
    for (int j = 0; j < Q.grid().dim(); ++j) out.push_back(derivative(Q, j, 1));
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    const double width = Q.grid().length(0) / 8.0;
    for (int e = 0; e < extra; ++e) {
        std::vector<double> s(Q.size());
        for (double& v : s) v = nd(rng);
        Field r(Q.grid_ptr(), std::move(s));
        // Smooth and localize the random start.
        r = apply_radial(r, [](double xi) { return std::exp(-xi * xi); });
        Field env = gs.Q.grid().dim() == 1
                        ? Field::from_function(Q.grid_ptr(), [width](double x) { return std::exp(-x * x / (width * width)); })
                        : Field::from_function(Q.grid_ptr(), [width](double x, double y) {
                              return std::exp(-(x * x + y * y) / (width * width));
                          });
        out.push_back(pointwise_product(r, env));
    }
    return out;
}

}  // namespace detail

struct SpectrumOptions {
    int max_blocks = 40;
    int min_blocks = 8;
    double eig_tol = 1e-9;      ///< residual target for the wanted Ritz pairs
    double inner_tol = 1e-13;
    int inner_max_iter = 2000;
    double zero_tol = 1e-6;     ///< Ritz values within this of 0 count as kernel
    int extra_vectors = 3;
    std::uint64_t seed = 7;
};

/// Low spectrum of L by block Lanczos on (L + sigma)^{-1}, sigma = max Q^{m-1} - c/2
/// so the shifted operator is positive definite, with Rayleigh-Ritz on L itself.
inline SpectralReport analyze_spectrum(const GroundState& gs, const SpectrumOptions& opt = {}) {
    const LinearizedOperator op(gs);
    const GridPtr& g = op.grid();
    const int d = g->dim();
    const double sigma = op.potential_max() - 0.5 * gs.params.c;
    const double weight = g->cell_volume();
    const auto n = static_cast<Eigen::Index>(g->points());
    const auto start = detail::initial_block(gs, opt.extra_vectors, opt.seed);
    const int bsize = static_cast<int>(start.size());
    const int cap = bsize * opt.max_blocks;
    Eigen::MatrixXd V(n, cap);
    Eigen::MatrixXd LV(n, cap);
    Eigen::MatrixXd block(n, bsize);
    for (int j = 0; j < bsize; ++j) block.col(j) = detail::to_vec(start[static_cast<std::size_t>(j)]);
    int used = 0;
    SpectralReport rep;
    const int wanted = 1 + d;
    Eigen::VectorXd theta;
    Eigen::MatrixXd Y;
    for (int b = 0; b < opt.max_blocks; ++b) {
        const int kept = detail::orthonormalize_block(V, used, block, weight);
        if (kept == 0) break;
        for (int j = 0; j < kept; ++j) {
            V.col(used + j) = block.col(j);
            LV.col(used + j) = detail::to_vec(op.apply(detail::to_field(g, block.col(j))));
        }
        used += kept;
        const Eigen::MatrixXd H = weight * (V.leftCols(used).transpose() * LV.leftCols(used));
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (H + H.transpose()));
        theta = es.eigenvalues();
        Y = es.eigenvectors();
        bool done = b + 1 >= opt.min_blocks;
        for (int i = 0; i < std::min<int>(wanted + 1, used) && done; ++i) {
            const Eigen::VectorXd x = V.leftCols(used) * Y.col(i);
            const Eigen::VectorXd r = LV.leftCols(used) * Y.col(i) - theta(i) * x;
            if (std::sqrt(weight) * r.norm() > opt.eig_tol * std::max(1.0, std::abs(theta(i)))) done = false;
        }
        if (done || used + bsize > cap) break;
        Eigen::MatrixXd next(n, kept);
        for (int j = 0; j < kept; ++j) {
            next.col(j) = detail::to_vec(detail::solve_shifted(op, detail::to_field(g, block.col(j)), sigma,
                                                               opt.inner_tol, opt.inner_max_iter));
        }
        block = std::move(next);
    }
    rep.krylov_dim = used;
    const Eigen::MatrixXd ritz_vecs = V.leftCols(used) * Y;
    const Eigen::MatrixXd ritz_lv = LV.leftCols(used) * Y;
    rep.negative_count = 0;
    rep.kernel_count = 0;
    for (int i = 0; i < used; ++i) {
        const double t = theta(i);
        if (i < 8) rep.low_ritz.push_back(t);
        if (t < -opt.zero_tol) {
            ++rep.negative_count;
        } else if (std::abs(t) <= opt.zero_tol) {
            ++rep.kernel_count;
        } else if (rep.gap == 0.0) {
            rep.gap = t;
        }
    }
    const double sign = ritz_vecs.col(0).sum() < 0.0 ? -1.0 : 1.0;
    const Eigen::VectorXd chi = sign * ritz_vecs.col(0);
    const Eigen::VectorXd r0 = ritz_lv.col(0) - theta(0) * ritz_vecs.col(0);
    rep.lambda0 = -theta(0);
    rep.chi0 = detail::to_field(g, chi);
    rep.chi0_residual = std::sqrt(weight) * r0.norm();
    for (int j = 0; j < d; ++j) {
        const Field dq = derivative(gs.Q, j, 1);
        rep.kernel_residuals.push_back(l2_norm(op.apply(dq)) / l2_norm(dq));
    }
    // Principal angle between the Ritz kernel vectors and span{d_j Q}.
    if (rep.kernel_count > 0) {
        Eigen::MatrixXd D(n, d);
        for (int j = 0; j < d; ++j) D.col(j) = detail::to_vec(derivative(gs.Q, j, 1));
        Eigen::HouseholderQR<Eigen::MatrixXd> qr(D);
        const Eigen::MatrixXd Qd = qr.householderQ() * Eigen::MatrixXd::Identity(n, d);
        const int first = rep.negative_count;
        double worst = 0.0;
        for (int i = first; i < first + rep.kernel_count; ++i) {
            const Eigen::VectorXd v = ritz_vecs.col(i).normalized();
            const Eigen::VectorXd perp = v - Qd * (Qd.transpose() * v);
            worst = std::max(worst, std::asin(std::min(1.0, perp.norm())));
        }
        rep.kernel_angle = worst;
    }
    return rep;
}

/// Ground eigenpair (-lambda0, chi0), chi0 positive with unit L^2 norm.
inline EigenPair negative_eigenpair(const GroundState& gs, const SpectrumOptions& opt = {}) {
    const SpectralReport rep = analyze_spectrum(gs, opt);
    if (rep.negative_count != 1) {
        throw SpectralAnomaly("expected exactly one negative eigenvalue, found " + std::to_string(rep.negative_count));
    }
    EigenPair ep;
    ep.eigenvalue = -rep.lambda0;
    ep.eigenfield = (1.0 / l2_norm(rep.chi0)) * rep.chi0;
    ep.residual = rep.chi0_residual;
    return ep;
}

/// Dense matrix of L on a 1D grid, assembled column by column.
inline Eigen::MatrixXd assemble_dense(const GroundState& gs) {
    if (gs.Q.grid().dim() != 1) throw DomainError("dense assembly is one-dimensional");
    const LinearizedOperator op(gs);
    const auto n = static_cast<Eigen::Index>(gs.Q.size());
    if (n > 4096) throw ConfigError("dense assembly limited to N <= 4096");
    Eigen::MatrixXd A(n, n);
    std::vector<double> e(static_cast<std::size_t>(n), 0.0);
    for (Eigen::Index j = 0; j < n; ++j) {
        e[static_cast<std::size_t>(j)] = 1.0;
        A.col(j) = detail::to_vec(op.apply(Field(op.grid(), e)));
        e[static_cast<std::size_t>(j)] = 0.0;
    }
    return 0.5 * (A + A.transpose());
}

/// Eigenvalues of the dense 1D matrix (ascending).
inline Eigen::VectorXd dense_eigenvalues(const GroundState& gs) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(assemble_dense(gs), Eigen::EigenvaluesOnly);
    return es.eigenvalues();
}

/// Lambda f = f/(m-1) + (x . grad f)/alpha.
inline Field scaling_generator(const Field& v, const ModelParams& p) {
    Field out = (1.0 / (p.m - 1)) * v;
    for (int j = 0; j < v.grid().dim(); ++j) {
        const Field xj = coordinate_field(v.grid_ptr(), j);
        out = out + (1.0 / p.alpha) * pointwise_product(xj, derivative(v, j, 1));
    }
    return out;
}

/// ||L(Lambda Q) + c Q|| / ||c Q||.
inline double lambda_identity_residual(const GroundState& gs) {
    const Field lq = scaling_generator(gs.Q, gs.params);
    const Field r = apply_L(gs, lq) + gs.params.c * gs.Q;
    return l2_norm(r) / (gs.params.c * l2_norm(gs.Q));
}

struct QLambdaQ {
    double value = 0.0;
    double formula = 0.0;
    double residual = 0.0;  ///< |value - formula| / max(|formula|, ||Q||^2 * 1e-3)
    int sign = 0;
};

inline QLambdaQ q_lambda_q(const GroundState& gs) {
    const ModelParams& p = gs.params;
    QLambdaQ out;
    const double q2 = inner(gs.Q, gs.Q);
    out.value = inner(gs.Q, scaling_generator(gs.Q, p));
    out.formula = (2.0 * p.alpha - p.d * (p.m - 1)) / (2.0 * p.alpha * (p.m - 1)) * q2;
    const double scale = std::abs(out.formula) > 1e-12 * q2 ? std::abs(out.formula) : q2;
    out.residual = std::abs(out.value - out.formula) / scale;
    const double tiny = 1e-9 * q2;
    out.sign = out.value > tiny ? 1 : (out.value < -tiny ? -1 : 0);
    return out;
}

/// Decay of chi0 (as decay_fit with k = 0).
inline DecayFit chi_decay_fit(const SpectralReport& sr, double alpha) {
    return decay_fit((sr.chi0.max() >= -sr.chi0.samples()[0] ? 1.0 : -1.0) * sr.chi0, 0, alpha);
}

struct CoercivityConstants {
    double c0 = 0.0;
    double k1 = 0.0;
    double k2 = 0.0;            ///< constructive
    double k2_empirical = 0.0;  ///< sup over random fields orthogonal to d_j Q
    double min_random_quotient = 0.0;
    int lanczos_steps = 0;
};

struct CoercivityOptions {
    int max_steps = 600;
    double tol = 1e-6;  ///< relative change of the smallest Ritz value between checks
    int samples = 1000;
    std::uint64_t seed = 11;
};

/// c0 = min (Lf,f)/||f||^2_{H^{a/2}} over f orthogonal to chi0 and d_j Q, by
/// Lanczos on B^{-1/2} L B^{-1/2} (B = (1+|xi|^2)^{a/2}) with full
/// reorthogonalization and re-projection every step.
inline CoercivityConstants coercivity_constants(const GroundState& gs, const SpectralReport& sr,
                                                const CoercivityOptions& opt = {}) {
    const LinearizedOperator op(gs);
    const GridPtr& g = op.grid();
    const double a = gs.params.alpha;
    const double weight = g->cell_volume();
    const auto n = static_cast<Eigen::Index>(g->points());
    auto bpow = [&](const Field& f, double e) {
        return apply_radial(f, [&](double xi) { return std::pow(1.0 + xi * xi, 0.5 * a * e); });
    };
    std::vector<Field> cons;
    cons.push_back(bpow(sr.chi0, -0.5));
    for (int j = 0; j < g->dim(); ++j) cons.push_back(bpow(derivative(gs.Q, j, 1), -0.5));
    Eigen::MatrixXd C(n, static_cast<Eigen::Index>(cons.size()));
    for (std::size_t j = 0; j < cons.size(); ++j) C.col(static_cast<Eigen::Index>(j)) = detail::to_vec(cons[j]);
    Eigen::MatrixXd Cb = C;
    Eigen::MatrixXd none(n, 0);
    detail::orthonormalize_block(none, 0, Cb, weight);
    auto project = [&](Eigen::VectorXd& v) {
        for (int pass = 0; pass < 2; ++pass) v -= Cb * (weight * (Cb.transpose() * v));
    };
    auto apply_m = [&](const Eigen::VectorXd& v) {
        const Field f = bpow(detail::to_field(g, v), -0.5);
        Eigen::VectorXd out = detail::to_vec(bpow(op.apply(f), -0.5));
        project(out);
        return out;
    };
    std::mt19937_64 rng(opt.seed);
    std::normal_distribution<double> nd;
    Eigen::VectorXd v0 = detail::to_vec(
        apply_radial(Field(g, [&] {
                         std::vector<double> s(static_cast<std::size_t>(n));
                         for (double& x : s) x = nd(rng);
                         return s;
                     }()),
                     [](double xi) { return std::exp(-0.5 * xi * xi); }));
    v0 += detail::to_vec(gs.Q);
    project(v0);
    v0 /= std::sqrt(weight) * v0.norm();
    std::vector<Eigen::VectorXd> basis{v0};
    std::vector<double> alphas, betas;
    double prev = std::numeric_limits<double>::infinity();
    double ritz_min = 0.0;
    int steps = 0;
    for (int k = 0; k < opt.max_steps; ++k) {
        Eigen::VectorXd w = apply_m(basis.back());
        alphas.push_back(weight * basis.back().dot(w));
        for (int pass = 0; pass < 2; ++pass) {
            for (const auto& b : basis) w -= weight * b.dot(w) * b;
            project(w);
        }
        const double beta = std::sqrt(weight) * w.norm();
        steps = k + 1;
        if ((k + 1) % 10 == 0 || beta < 1e-12) {
            Eigen::MatrixXd T = Eigen::MatrixXd::Zero(steps, steps);
            for (int i = 0; i < steps; ++i) {
                T(i, i) = alphas[static_cast<std::size_t>(i)];
                if (i + 1 < steps) T(i, i + 1) = T(i + 1, i) = betas[static_cast<std::size_t>(i)];
            }
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(T, Eigen::EigenvaluesOnly);
            ritz_min = es.eigenvalues()(0);
            if (std::abs(ritz_min - prev) <= opt.tol * std::abs(ritz_min)) break;
            prev = ritz_min;
        }
        if (beta < 1e-12) break;
        betas.push_back(beta);
        basis.push_back(w / beta);
    }
    CoercivityConstants cc;
    cc.c0 = ritz_min;
    cc.lanczos_steps = steps;
    if (!(cc.c0 > 0.0)) throw SpectralAnomaly("coercivity constant is not positive: " + std::to_string(cc.c0));
    cc.k1 = 0.5 * cc.c0;
    const double chi2 = inner(sr.chi0, sr.chi0);
    const double chih = std::pow(sobolev_norm(sr.chi0, 0.5 * a), 2);
    cc.k2 = (cc.c0 * chih + sr.lambda0 * chi2) / (chi2 * chi2);

    // Random smooth fields: quotient on the full complement and k2 on the d_j Q complement.
    cc.min_random_quotient = std::numeric_limits<double>::infinity();
    std::vector<Field> dq;
    for (int j = 0; j < g->dim(); ++j) dq.push_back(derivative(gs.Q, j, 1));
    for (int s = 0; s < opt.samples; ++s) {
        const double width = std::exp(std::uniform_real_distribution<double>(std::log(0.3), std::log(3.0))(rng));
        std::vector<double> raw(static_cast<std::size_t>(n));
        for (double& x : raw) x = nd(rng);
        Field f = apply_radial(Field(g, std::move(raw)), [&](double xi) { return std::exp(-0.5 * xi * xi * width * width); });
        const double envw = std::exp(std::uniform_real_distribution<double>(std::log(2.0), std::log(20.0))(rng));
        f = pointwise_product(f, g->dim() == 1 ? Field::from_function(g, [&](double x) { return std::exp(-x * x / (envw * envw)); })
                                                : Field::from_function(g, [&](double x, double y) {
                                                      return std::exp(-(x * x + y * y) / (envw * envw));
                                                  }));
        for (const auto& d : dq) f = f - (inner(f, d) / inner(d, d)) * d;
        const double fl = inner(op.apply(f), f);
        const double fh = std::pow(sobolev_norm(f, 0.5 * a), 2);
        const double fc = inner(f, sr.chi0);
        if (fc * fc > 1e-10 * fh * chi2) cc.k2_empirical = std::max(cc.k2_empirical, (cc.k1 * fh - fl) / (fc * fc));
        const Field fp = f - (fc / chi2) * sr.chi0;
        Field fperp = fp;
        for (const auto& d : dq) fperp = fperp - (inner(fperp, d) / inner(d, d)) * d;
        cc.min_random_quotient =
            std::min(cc.min_random_quotient, inner(op.apply(fperp), fperp) / std::pow(sobolev_norm(fperp, 0.5 * a), 2));
    }
    return cc;
}

struct ExpansionRemainder {
    double direct = 0.0;
    double binomial = 0.0;
    double agreement = 0.0;  ///< |direct - binomial| / |binomial|
    double bound_ratio = 0.0;
};

/// K[eps] = W[Q+eps] - W[Q] - <W'(Q), eps> - (1/2)(L eps, eps), computed
/// directly and as -1/(m(m+1)) sum_{k=3}^{m+1} C(m+1,k) int Q^{m+1-k} eps^k.
inline ExpansionRemainder expansion_remainder(const GroundState& gs, const Field& eps) {
    const ModelParams& p = gs.params;
    const Field& Q = gs.Q;
    ExpansionRemainder out;
    const Field wprime = apply_radial(Q, [&](double xi) { return p.c + (xi == 0.0 ? 0.0 : std::pow(xi, p.alpha)); }) -
                         (1.0 / p.m) * dealiased_power(Q, p.m);
    const Field qe = Q + eps;
    const double quad = 0.5 * inner(apply_L(gs, eps), eps);
    out.direct = action(qe, p) - action(Q, p) - inner(wprime, eps) - quad;
    const Field in[] = {Q, eps};
    const int m = p.m;
    out.binomial = dealiased_integral(std::span<const Field>(in), m + 1, [m](std::span<const double> v) {
        double acc = 0.0;
        double binom = 1.0;  // C(m+1, k)
        for (int k = 1; k <= m + 1; ++k) {
            binom = binom * (m + 2 - k) / k;
            if (k >= 3) acc += binom * std::pow(v[0], m + 1 - k) * std::pow(v[1], k);
        }
        return acc;
    });
    out.binomial *= -1.0 / (m * (m + 1.0));
    out.agreement = out.binomial != 0.0 ? std::abs(out.direct - out.binomial) / std::abs(out.binomial)
                                        : std::abs(out.direct);
    const double dn = std::sqrt(dispersive_seminorm_sq(eps, p.alpha));
    const double ln = l2_norm(eps);
    double bound = 0.0;
    for (int k = 3; k <= m + 1; ++k) {
        const double e = p.d * (k - 2) / p.alpha;
        bound += std::pow(dn, e) * std::pow(ln, k - e);
    }
    out.bound_ratio = bound > 0.0 ? std::abs(out.binomial) / bound : 0.0;
    return out;
}

}  // namespace fkdv
