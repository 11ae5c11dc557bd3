#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "fkdv/evolution.hpp"
#include "fkdv/ground_state.hpp"
#include "fkdv/stability.hpp"

using namespace fkdv;

namespace {

constexpr double pi = std::numbers::pi;

const ModelParams kdv{1, 2.0, 2, 1.0};
const ModelParams bo{1, 1.0, 2, 1.0};

const GroundState& kdv_state() {
    static const GroundState gs = petviashvili_solve(kdv, make_grid_1d(80.0, 2048));
    return gs;
}

const GroundState& bo_state() {
    static const GroundState gs = petviashvili_solve(bo, make_grid_1d(200.0, 1024));
    return gs;
}

double hs_distance(const Field& a, const Field& b, double alpha) { return sobolev_norm(a - b, alpha / 2.0); }

Field noise(const GridPtr& g, unsigned seed) {
    std::mt19937 rng(seed);
    std::normal_distribution<double> nd;
    std::vector<double> v(g->points());
    for (double& x : v) x = nd(rng);
    const Field f = apply_radial(Field(g, std::move(v)), [](double xi) { return std::exp(-xi * xi); });
    return (1.0 / f.sup_norm()) * f;
}

double peak_position(const Field& u) {
    // Parabolic refinement of the discrete maximum.
    const Grid& g = u.grid();
    const std::size_t n = g.size(0);
    const std::size_t i = u.argmax();
    const double a = u[(i + n - 1) % n], b = u[i], c = u[(i + 1) % n];
    const double off = 0.5 * (a - c) / (a - 2.0 * b + c);
    return g.coordinate(0, i) + off * g.spacing(0);
}

}  // namespace

TEST(Step, ZeroStaysZero) {
    const auto g = make_grid_1d(50.0, 256);
    EXPECT_EQ(step(Field::zeros(g), bo, 0.1).sup_norm(), 0.0);
}

TEST(Step, LinearPhaseRotation) {
    const double L = 50.0;
    const auto g = make_grid_1d(L, 256);
    const double k = 2.0 * pi * 5.0 / L;
    const double amp = 1e-9;
    const double dt = 0.01;
    for (double alpha : {0.7, 1.0, 1.5, 2.0}) {
        const ModelParams p{1, alpha, 2, 1.0};
        const Field u = Field::from_function(g, [&](double x) { return amp * std::cos(k * x); });
        const double w = std::pow(k, 1.0 + alpha);
        const Field exact = Field::from_function(g, [&](double x) { return amp * std::cos(k * x + w * dt); });
        EXPECT_LT((step(u, p, dt) - exact).sup_norm(), 1e-10 * amp) << alpha;
    }
}

TEST(Step, RejectsZeroStep) { EXPECT_THROW(step(kdv_state().Q, kdv, 0.0), ConfigError); }

TEST(Evolve, KdvSolitonTravelsRight) {
    const auto& gs = kdv_state();
    const auto tr = evolve(gs.Q, kdv, 1.0, 1e-3, {.stride = 1000});
    // Q(x - cT) = translate(Q, -cT).
    const Field expected = translate(gs.Q, -1.0);
    EXPECT_LT(hs_distance(tr.snapshots.back(), expected, kdv.alpha), 1e-6);
}

TEST(Evolve, RejectsBadTimes) {
    EXPECT_THROW(evolve(kdv_state().Q, kdv, 0.0, 1e-3), ConfigError);
    EXPECT_THROW(evolve(kdv_state().Q, kdv, 1.0, 0.0), ConfigError);
}

TEST(Evolve, BenjaminOnoSolitonConservation) {
    const auto& gs = bo_state();
    const auto tr = evolve(gs.Q, bo, 20.0, 0.00125, {.stride = 16000, .monitor_stride = 40});
    EXPECT_FALSE(tr.tainted);
    EXPECT_FALSE(tr.blew_up);
    const auto d = conservation_report(tr);
    EXPECT_LT(d.mass, 1e-9);
    EXPECT_LT(d.energy, 1e-7);
    EXPECT_LT(d.l1, 1e-9);
    for (std::size_t i = 1; i < tr.times.size(); ++i) EXPECT_GT(tr.times[i], tr.times[i - 1]);
}

TEST(Evolve, NoisySubcriticalRunCompletes) {
    const auto& gs = bo_state();
    const Field u0 = gs.Q + 0.01 * noise(gs.Q.grid_ptr(), 4);
    const auto tr = evolve(u0, bo, 10.0, 0.00125, {.stride = 800, .monitor_stride = 40});
    EXPECT_FALSE(tr.tainted);
    EXPECT_FALSE(tr.blew_up);
    EXPECT_NEAR(tr.final_time, 10.0, 1e-9);
    const auto d = conservation_report(tr);
    EXPECT_LT(d.mass, 1e-9);
    EXPECT_LT(d.energy, 1e-7);
}

TEST(Evolve, SupercriticalScaledDataLeavesTube) {
    const ModelParams p{1, 1.0, 4, 1.0};
    const auto gs = petviashvili_solve(p, make_grid_1d(100.0, 16384));
    const Field u0 = instability_sequence(1, gs);
    const double omega = default_omega(gs);
    bool exited = false;
    EvolveOptions opt{.stride = 40};
    opt.stop_on_resolution_loss = true;
    opt.observer = [&](double, const Field& u) {
        exited = tube_distance(u, gs) >= omega;
        return !exited;
    };
    const auto tr = evolve(u0, p, 20.0, default_dt(p, *gs.Q.grid_ptr(), u0.sup_norm()), opt);
    EXPECT_TRUE(exited || tr.blew_up || tr.resolution_lost);
    EXPECT_LT(tr.final_time, 20.0);
}

TEST(ConservationReport, ZeroFieldHasNoDrift) {
    const auto tr = evolve(Field::zeros(make_grid_1d(50.0, 256)), bo, 1.0, 0.01);
    const auto d = conservation_report(tr);
    EXPECT_EQ(d.mass, 0.0);
    EXPECT_EQ(d.energy, 0.0);
    EXPECT_EQ(d.l1, 0.0);
}

TEST(ConservationReport, FourthOrderGlobalError) {
    // Solution error against a dt/8 reference falls 16x per halving.
    const auto& gs = bo_state();
    const Field u0 = gs.Q + 0.05 * noise(gs.Q.grid_ptr(), 8);
    const double T = 2.0;
    const auto ref = evolve(u0, bo, T, 0.0125 / 8.0, {.stride = 100000}).snapshots.back();
    const double e1 = l2_norm(evolve(u0, bo, T, 0.0125, {.stride = 100000}).snapshots.back() - ref);
    const double e2 = l2_norm(evolve(u0, bo, T, 0.00625, {.stride = 100000}).snapshots.back() - ref);
    EXPECT_NEAR(e1 / e2, 16.0, 3.0);
}

TEST(ConservationReport, EnergyDriftShrinksAtLeastFourthOrder) {
    // The drift ratio exceeds 16 because the leading error term is nearly energy-neutral.
    const auto& gs = bo_state();
    const double T = 5.0;
    const auto a = conservation_report(evolve(gs.Q, bo, T, 0.01, {.stride = 100000}));
    const auto b = conservation_report(evolve(gs.Q, bo, T, 0.005, {.stride = 100000}));
    EXPECT_GT(a.energy / b.energy, 13.0);
}

TEST(Invariants, TimeReversal) {
    const ModelParams p{1, 1.5, 2, 1.0};
    const auto gs = petviashvili_solve(p, make_grid_1d(100.0, 1024));
    const Field u0 = gs.Q + 0.05 * noise(gs.Q.grid_ptr(), 5);
    const Field fwd = evolve(u0, p, 2.0, 0.002, {.stride = 100000}).snapshots.back();
    const Field back = evolve(fwd, p, 2.0, -0.002, {.stride = 100000}).snapshots.back();
    EXPECT_LT(hs_distance(back, u0, p.alpha), 1e-6);
}

TEST(Invariants, TravelingWaveSpeed) {
    struct Case {
        double alpha;
        int m;
        double c;
    };
    for (const Case cs : {Case{2.0, 2, 1.0}, Case{1.0, 2, 1.0}, Case{1.5, 3, 1.0}, Case{1.0, 2, 2.0}}) {
        const ModelParams p{1, cs.alpha, cs.m, 1.0};
        auto gs = petviashvili_solve(p, make_grid_1d(200.0, 2048));
        if (cs.c != 1.0) gs = rescale(gs, cs.c);
        const double T = 10.0;
        const double dt = default_dt(gs.params, gs.Q.grid(), gs.Q.sup_norm());
        const auto tr = evolve(gs.Q, gs.params, T, dt, {.stride = static_cast<std::size_t>(std::llround(1.0 / dt))});
        // Least-squares slope of the peak path.
        double st = 0, sx = 0, stt = 0, stx = 0;
        const double n = static_cast<double>(tr.times.size());
        for (std::size_t i = 0; i < tr.times.size(); ++i) {
            const double t = tr.times[i], x = peak_position(tr.snapshots[i]);
            st += t, sx += x, stt += t * t, stx += t * x;
        }
        const double slope = (n * stx - st * sx) / (n * stt - st * st);
        EXPECT_NEAR(slope, cs.c, 0.01 * cs.c) << cs.alpha << " " << cs.m;
    }
}

TEST(Invariants, ZeroModeConstant) {
    const auto& gs = bo_state();
    const Field u0 = gs.Q + 0.1 * noise(gs.Q.grid_ptr(), 6);
    const auto tr = evolve(u0, bo, 2.0, 0.005, {.stride = 40});
    const double l0 = tr.snapshots.front().integral();
    for (const Field& f : tr.snapshots) EXPECT_NEAR(f.integral(), l0, 1e-12 * std::abs(l0));
}
