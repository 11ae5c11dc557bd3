#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "fkdv/functionals.hpp"
#include "fkdv/ground_state.hpp"
#include "fkdv/spectral.hpp"
#include "fkdv/stability.hpp"

using namespace fkdv;

namespace {

constexpr double pi = std::numbers::pi;

double sech2(double x) {
    const double s = 1.0 / std::cosh(x);
    return s * s;
}

const ModelParams kdv{1, 2.0, 2, 1.0};
const ModelParams bo{1, 1.0, 2, 1.0};

const GroundState& kdv_state() {
    static const GroundState gs = petviashvili_solve(kdv, make_grid_1d(80.0, 2048));
    return gs;
}

const GroundState& bo_state() {
    static const GroundState gs = petviashvili_solve(bo, make_grid_1d(800.0, 16384));
    return gs;
}

double max_diff(const Field& a, const Field& b) { return (a - b).sup_norm(); }

}  // namespace

TEST(Petviashvili, KdvClosedForm) {
    const auto& gs = kdv_state();
    const Field exact = Field::from_function(gs.Q.grid_ptr(), [](double x) { return 3.0 * sech2(x / 2.0); });
    EXPECT_LT(max_diff(gs.Q, exact), 1e-6);
    EXPECT_LT(gs.residual, 1e-10);
}

TEST(Petviashvili, BenjaminOnoClosedForm) {
    const auto& gs = bo_state();
    const Field exact = Field::from_function(gs.Q.grid_ptr(), [](double x) { return 4.0 / (1.0 + x * x); });
    EXPECT_LT(max_diff(gs.Q, exact), 1e-3);
}

TEST(Petviashvili, SupercriticalQuarticPohozaev) {
    // The sharp core needs h ~ 0.01; the tail error then falls like L^{-2}.
    const ModelParams p{1, 1.0, 4, 1.0};
    const auto gs = petviashvili_solve(p, make_grid_1d(6400.0, 1 << 19));
    const auto r = pohozaev_residuals(gs.Q, p);
    EXPECT_LT(r.r1, 1e-6);
    EXPECT_LT(r.r2, 1e-6);
    EXPECT_LT(r.r3, 1e-6);
}

TEST(Petviashvili, ProfileShapeInvariants) {
    for (const GroundState* gs : {&kdv_state(), &bo_state()}) {
        const Field& Q = gs->Q;
        const Grid& g = Q.grid();
        const std::size_t n = g.size(0);
        const std::size_t c = n / 2;
        // The KdV tail reaches round-off inside the box.
        EXPECT_GT(gs->min_value, gs->params.alpha < 2.0 ? 0.0 : -1e-14 * gs->peak_value);
        double asym = 0.0;
        for (std::size_t i = 1; i < c; ++i) asym = std::max(asym, std::abs(Q[c + i] - Q[c - i]));
        EXPECT_LT(asym, 1e-8 * Q.sup_norm());
        const double edge = 0.45 * g.length(0);
        for (std::size_t i = c; i + 1 < n && g.coordinate(0, i + 1) < edge; ++i) EXPECT_GT(Q[i], Q[i + 1]) << i;
    }
}

TEST(Petviashvili, IdempotentWhenSeededWithSolution) {
    const auto& gs = kdv_state();
    const auto again = petviashvili_solve(kdv, gs.Q.grid_ptr(), gs.Q);
    EXPECT_LE(again.iterations, 3);
    EXPECT_LT(max_diff(again.Q, gs.Q), 1e-9);
}

TEST(Petviashvili, GridRefinementChangesLittle) {
    const ModelParams p{1, 1.5, 3, 1.0};
    const auto a = petviashvili_solve(p, make_grid_1d(200.0, 2048));
    const auto b = petviashvili_solve(p, make_grid_1d(200.0, 4096));
    double worst = 0.0;
    for (std::size_t i = 0; i < a.Q.size(); ++i) worst = std::max(worst, std::abs(a.Q[i] - b.Q[2 * i]));
    EXPECT_LT(worst, 1e-6);
}

TEST(Rescale, BenjaminOnoSpeedFour) {
    const auto g4 = rescale(bo_state(), 4.0);
    EXPECT_NEAR(g4.peak_value, 16.0, 1e-3);
    const Field exact = Field::from_function(g4.Q.grid_ptr(), [](double x) { return 16.0 / (1.0 + 16.0 * x * x); });
    EXPECT_LT(max_diff(g4.Q, exact), 1e-3);
}

TEST(Rescale, UnitSpeedIsIdentity) {
    const auto& gs = kdv_state();
    EXPECT_EQ(max_diff(rescale(gs, 1.0).Q, gs.Q), 0.0);
}

TEST(Rescale, KdvSpeedTwo) {
    const auto g2 = rescale(kdv_state(), 2.0);
    const Field exact =
        Field::from_function(g2.Q.grid_ptr(), [](double x) { return 6.0 * sech2(x / std::sqrt(2.0)); });
    EXPECT_LT(g2.residual, 1e-6);
    EXPECT_LT(max_diff(g2.Q, exact), 1e-6);
}

TEST(Rescale, RoundTripIsIdentity) {
    const auto& gs = kdv_state();
    const auto back = rescale(rescale(gs, 2.0), 1.0);
    EXPECT_LT(max_diff(back.Q, gs.Q), 1e-8);
}

TEST(Rescale, RejectsBadSpeed) { EXPECT_THROW(rescale(kdv_state(), -1.0), ConfigError); }

TEST(Rescale, UnderResolvedSpeedRejected) {
    const auto gs = petviashvili_solve(kdv, make_grid_1d(80.0, 256));
    EXPECT_THROW(rescale(gs, 400.0), ResolutionError);
}

TEST(DecayFit, LorentzianProfileAndDerivative) {
    const auto& gs = bo_state();
    const auto f0 = decay_fit(gs.Q, 0, 1.0);
    EXPECT_NEAR(f0.exponent, -2.0, 0.02);
    EXPECT_DOUBLE_EQ(f0.target, -2.0);
    const auto f1 = decay_fit(gs.Q, 1, 1.0);
    EXPECT_NEAR(f1.exponent, -3.0, 0.15);
}

TEST(DecayFit, QuarticBenjaminOno) {
    const ModelParams p{1, 1.0, 4, 1.0};
    const auto gs = petviashvili_solve(p, make_grid_1d(800.0, 16384));
    EXPECT_LT(decay_fit(gs.Q, 0, 1.0).relative_error(), 0.05);
}

TEST(DecayFit, LocalCaseOutOfScope) { EXPECT_TRUE(decay_fit(kdv_state().Q, 0, 2.0).out_of_scope); }

TEST(ConstrainedMinimize, BenjaminOnoMassLevel) {
    const auto g = make_grid_1d(800.0, 16384);
    const auto res = constrained_minimize(4.0 * pi, bo, g);
    EXPECT_LT(res.grad_norm, 1e-8);
    EXPECT_NEAR(res.fitted_c, 1.0, 1e-3);
    EXPECT_LT(tube_distance(res.v, bo_state()), 1e-3);
}

TEST(ConstrainedMinimize, KdvMassLevel) {
    const auto& gs = kdv_state();
    const auto res = constrained_minimize(12.0, kdv, gs.Q.grid_ptr());
    EXPECT_LT(tube_distance(res.v, gs), 1e-3);
}

TEST(ConstrainedMinimize, GeneralMassMatchesScaling) {
    // M[Q_c] = c^{2/(m-1) - d/a} M[Q].
    const auto& gs = kdv_state();
    const double q = 20.0;
    const auto res = constrained_minimize(q, kdv, gs.Q.grid_ptr());
    const double expo = 2.0 / (kdv.m - 1) - kdv.d / kdv.alpha;
    const double c = std::pow(q / mass(gs.Q), 1.0 / expo);
    EXPECT_LT(std::abs(res.fitted_c - c) / c, 1e-4);
    const auto qc = rescale(gs, c);
    EXPECT_LT(tube_distance(res.v, qc), 1e-3);
}

TEST(ConstrainedMinimize, RejectsNonSubcritical) {
    EXPECT_THROW(constrained_minimize(1.0, {1, 1.0, 4, 1.0}, make_grid_1d(80.0, 256)), ConfigError);
}

TEST(KernelProfile, ResolventDecay) {
    const auto g = make_grid_1d(4000.0, 1 << 15);
    const auto k1 = bessel_kernel_profile(1.0, 1.0, g);
    EXPECT_LT(k1.fit.relative_error(), 0.05);
    EXPECT_GT(k1.plateau, 0.0);
    EXPECT_TRUE(k1.converged);
    const auto k15 = bessel_kernel_profile(1.5, 1.0, g);
    EXPECT_LT(k15.fit.relative_error(), 0.05);
    EXPECT_NEAR(k15.fit.target, -2.5, 1e-15);
}

TEST(KernelProfile, CompositeSymbolBounded) {
    const auto g = make_grid_1d(4000.0, 1 << 15);
    const auto k = bessel_kernel_profile(1.0, 1.0, g, KernelSymbol::composite);
    EXPECT_TRUE(std::isfinite(k.bound));
    EXPECT_GT(k.bound, 0.0);
    EXPECT_LT(k.bound, 10.0);
}

TEST(KernelProfile, RejectsNonPositiveLambda) {
    EXPECT_THROW(bessel_kernel_profile(1.0, 0.0, make_grid_1d(100.0, 1024)), DomainError);
}
