#pragma once

#include <cmath>
#include <cstdio>
#include <iostream>
#include <limits>
#include <string>
#include <vector>

#include "fkdv/evolution.hpp"
#include "fkdv/functionals.hpp"
#include "fkdv/ground_state.hpp"
#include "fkdv/io.hpp"
#include "fkdv/linearized.hpp"
#include "fkdv/spectral.hpp"
#include "fkdv/stability.hpp"

namespace fkdv::io {

/// Rebuilds a scenario from the "config" object of a manifest.
inline Scenario scenario_from_json(const json& cfg) {
    std::vector<std::pair<std::string, std::string>> kv;
    for (auto it = cfg.begin(); it != cfg.end(); ++it) {
        const json& v = it.value();
        std::string text;
        if (v.is_array()) {
            for (std::size_t i = 0; i < v.size(); ++i) {
                text += (i ? "," : "");
                text += v[i].is_number_float() ? format_number(v[i].get<double>()) : v[i].dump();
            }
        } else if (v.is_string()) {
            text = v.get<std::string>();
        } else if (v.is_number_float()) {
            text = format_number(v.get<double>());
        } else {
            text = v.dump();
        }
        kv.emplace_back(it.key(), text);
    }
    return apply_settings(Scenario{}, kv);
}

inline Scenario scenario_from_manifest(const fs::path& manifest) {
    std::ifstream is(manifest);
    if (!is) throw IoError("cannot open manifest " + manifest.string());
    const json m = json::parse(is);
    if (!m.contains("config")) throw IoError("manifest has no config");
    return scenario_from_json(m.at("config"));
}

struct RunResult {
    fs::path dir;
    json summary;
};

namespace detail {

inline json decay_json(const DecayFit& f) {
    return {{"exponent", f.exponent}, {"naive_exponent", f.naive_exponent}, {"target", f.target},
            {"relative_error", f.relative_error()}, {"window", {f.window_lo, f.window_hi}}, {"r2", f.r2},
            {"floor_hit", f.floor_hit}, {"out_of_scope", f.out_of_scope}};
}

inline json ground_state_json(const GroundState& gs) {
    const ModelParams& p = gs.params;
    const auto crit = criticality(p);
    const auto poh = pohozaev_residuals(gs.Q, p);
    json j{{"residual", gs.residual},
           {"iterations", gs.iterations},
           {"peak_value", gs.peak_value},
           {"peak_location", gs.peak_location},
           {"min_value", gs.min_value},
           {"criticality", to_string(crit.cls)},
           {"s_c", crit.s_c},
           {"m_star", crit.m_star},
           {"mass", mass(gs.Q)},
           {"energy", energy(gs.Q, p)},
           {"pohozaev", {{"r1", poh.r1}, {"r2", poh.r2}, {"r3", poh.r3}, {"degenerate", poh.degenerate}}},
           {"spectral_tail", spectral_tail_ratio(gs.Q)}};
    if (p.alpha < 2.0) {
        j["decay_Q"] = decay_json(decay_fit(gs.Q, 0, p.alpha));
        j["decay_dQ"] = decay_json(decay_fit(derivative(gs.Q, 0, 1), 1, p.alpha));
    }
    return j;
}

/// Values of f along the x_1 axis (the x_2 = 0 line in 2D).
inline std::pair<std::vector<double>, std::vector<double>> axis_line(const Field& f) {
    const Grid& g = f.grid();
    const std::size_t n0 = g.size(0);
    const std::size_t n1 = g.dim() == 2 ? g.size(1) : 1;
    std::vector<double> x(n0), v(n0);
    for (std::size_t i = 0; i < n0; ++i) {
        x[i] = g.coordinate(0, i);
        v[i] = f[i * n1 + n1 / 2];
    }
    return {x, v};
}

inline GroundState solve(const Scenario& s) {
    PetviashviliOptions opt;
    opt.tol = s.tol;
    opt.accept_tol = std::max(10.0 * s.tol, 1e-10);
    return petviashvili_solve(s.params, scenario_grid(s), std::nullopt, opt);
}

inline std::vector<double> nan_column(std::size_t n) {
    return std::vector<double>(n, std::numeric_limits<double>::quiet_NaN());
}

}  // namespace detail

inline json run_groundstate(const Scenario& s, const fs::path& dir) {
    const GroundState gs = detail::solve(s);
    write_field(dir / "Q.bin", gs.Q, s.params);
    const json j = detail::ground_state_json(gs);
    write_json(dir / "Q.json", j);
    const auto [x, v] = detail::axis_line(gs.Q);
    write_csv(dir / "profile.csv", {"x", "Q"}, {x, v});
    return j;
}

inline json run_spectrum(const Scenario& s, const fs::path& dir) {
    const GroundState gs = detail::solve(s);
    const SpectralReport sr = analyze_spectrum(gs);
    const CoercivityConstants cc = coercivity_constants(gs, sr);
    json j{{"ground_state", detail::ground_state_json(gs)},
           {"lambda0", sr.lambda0},
           {"chi0_residual", sr.chi0_residual},
           {"negative_count", sr.negative_count},
           {"kernel_count", sr.kernel_count},
           {"kernel_residuals", sr.kernel_residuals},
           {"kernel_angle", sr.kernel_angle},
           {"gap", sr.gap},
           {"low_ritz", sr.low_ritz},
           {"krylov_dim", sr.krylov_dim},
           {"coercivity",
            {{"c0", cc.c0}, {"k1", cc.k1}, {"k2", cc.k2}, {"k2_empirical", cc.k2_empirical},
             {"min_random_quotient", cc.min_random_quotient}}}};
    if (s.params.alpha < 2.0) j["decay_chi0"] = detail::decay_json(chi_decay_fit(sr, s.params.alpha));
    write_field(dir / "Q.bin", gs.Q, s.params);
    write_field(dir / "chi0.bin", sr.chi0, s.params);
    write_json(dir / "spectrum.json", j);
    const auto [x, q] = detail::axis_line(gs.Q);
    const auto [x2, chi] = detail::axis_line(sr.chi0);
    write_csv(dir / "chi0.csv", {"x", "Q", "chi0"}, {x, q, chi});
    return j;
}

inline json run_evolve(const Scenario& s, const fs::path& dir) {
    const GroundState gs = detail::solve(s);
    Field u0 = s.amplitude * gs.Q;
    if (s.init == "perturbed") u0 = u0 + s.delta * random_perturbation(gs, s.seed);
    if (s.init == "lambda") u0 = instability_sequence(s.n, gs);
    const double dt = s.dt > 0.0 ? s.dt : default_dt(s.params, u0.grid(), u0.sup_norm());
    EvolveOptions opt;
    opt.stride = steps_between(s.sample_dt, dt);
    opt.monitor_stride = opt.stride;
    std::vector<double> dist;
    opt.observer = [&](double, const Field& f) {
        dist.push_back(tube_distance(f, gs));
        return true;
    };
    const Trajectory tr = evolve(u0, s.params, s.T, dt, opt);
    if (dist.size() < tr.times.size()) dist.push_back(tube_distance(tr.snapshots.back(), gs));
    std::vector<double> mass_c, energy_c, l1_c;
    for (const auto& c : tr.conserved) {
        mass_c.push_back(c.mass);
        energy_c.push_back(c.energy);
        l1_c.push_back(c.l1);
    }
    write_csv(dir / "trajectory.csv", {"t", "mass", "energy", "l1", "supnorm", "tube_distance"},
              {tr.monitor_times, mass_c, energy_c, l1_c, tr.supnorm, dist});
    if (s.save_snapshots) {
        fs::create_directories(dir / "snapshots");
        for (std::size_t i = 0; i < tr.snapshots.size(); ++i) {
            char name[32];
            std::snprintf(name, sizeof name, "u_%06zu.bin", i);
            write_field(dir / "snapshots" / name, tr.snapshots[i], s.params);
        }
    }
    const DriftSummary d = conservation_report(tr);
    return {{"dt", dt},
            {"dealias_pad", tr.dealias_pad},
            {"final_time", tr.final_time},
            {"blew_up", tr.blew_up},
            {"resolution_lost", tr.resolution_lost},
            {"tainted", tr.tainted},
            {"drift", {{"mass", d.mass}, {"energy", d.energy}, {"l1", d.l1}}},
            {"sup_tube_distance", *std::max_element(dist.begin(), dist.end())}};
}

inline json run_stability(const Scenario& s, const fs::path& dir) {
    const GroundState gs = detail::solve(s);
    StabilityConfig cfg;
    cfg.delta = s.delta;
    cfg.amplitude = s.amplitude;
    cfg.T = s.T;
    cfg.dt = s.dt;
    cfg.sample_dt = s.sample_dt;
    cfg.seed = s.seed;
    if (s.init == "lambda") cfg.lambda_n = s.n;
    const ExperimentReport r = run_stability_experiment(gs, cfg);
    write_csv(dir / "stability.csv", {"t", "tube_distance"}, {r.times, r.distance});
    return {{"delta", r.delta},
            {"initial_distance", r.initial_distance},
            {"sup_distance", r.sup_distance},
            {"K", r.initial_distance > 0.0 ? r.sup_distance / r.initial_distance : 0.0},
            {"verdict", to_string(r.verdict)},
            {"resolution_lost", r.resolution_lost},
            {"drift", {{"mass", r.drift.mass}, {"energy", r.drift.energy}, {"l1", r.drift.l1}}}};
}

inline json run_instability(const Scenario& s, const fs::path& dir) {
    const GroundState gs = detail::solve(s);
    const SpectralReport sr = analyze_spectrum(gs);
    const double A = s.A > 0.0 ? s.A : s.L[0] / 8.0;
    const VirialInputs vin = build_virial(gs, sr, A);
    InstabilityConfig cfg;
    cfg.omega = s.omega > 0.0 ? s.omega : default_omega(gs);
    cfg.T = s.T;
    cfg.dt = s.dt;
    cfg.sample_dt = s.sample_dt;
    const double fq = power_integral(gs.Q, s.params.m + 1) / (s.params.m * (s.params.m + 1.0));
    json runs = json::array();
    for (int n = s.n_first; n <= s.n_last; ++n) {
        InstabilityRun run = run_instability_experiment(gs, n, cfg);
        const ExperimentReport& r = run.report;
        // Pre-exit window for the modulation and virial diagnostics.
        Trajectory pre = run.trajectory;
        std::size_t keep = pre.times.size();
        if (r.exit_time) {
            keep = 0;
            while (keep < pre.times.size() && pre.times[keep] < *r.exit_time) ++keep;
        }
        pre.times.resize(keep);
        pre.snapshots.resize(keep);
        const ModulationTrack mt = build_modulation_track(pre, gs);
        const VirialSeries vs = virial_series(mt, gs, vin);
        const std::size_t rows = r.times.size();
        auto col = detail::nan_column(rows);
        std::vector<double> J = col, fd = col, an = col, th = col, z1 = col, el2 = col, ehs = col;
        for (std::size_t i = 0; i < vs.times.size() && i < rows; ++i) {
            J[i] = vs.J[i];
            fd[i] = vs.dJ_fd[i];
            an[i] = vs.dJ_analytic[i];
            th[i] = vs.theta[i];
            z1[i] = mt.z[i][0];
            el2[i] = mt.eps_l2[i];
            ehs[i] = mt.eps_hs[i];
        }
        char name[32];
        std::snprintf(name, sizeof name, "instability_n%02d.csv", n);
        write_csv(dir / name, {"t", "tube_distance", "J", "dJ_fd", "dJ_analytic", "theta", "z1", "eps_l2", "eps_hs"},
                  {r.times, r.distance, J, fd, an, th, z1, el2, ehs});
        const double lam = 1.0 + 1.0 / n;
        runs.push_back({{"n", n},
                        {"verdict", to_string(r.verdict)},
                        {"exit_time", r.exit_time ? json(*r.exit_time) : json(nullptr)},
                        {"initial_distance", r.initial_distance},
                        {"mass_gap", r.mass_gap},
                        {"energy_gap", r.energy_gap},
                        {"energy_gap_formula", energy_gap_factor(lam, s.params) * fq},
                        {"resolution_lost", r.resolution_lost},
                        {"drift", {{"mass", r.drift.mass}, {"energy", r.drift.energy}}},
                        {"virial_points", vs.times.size()},
                        {"virial_M0", vs.bound_M0}});
    }
    return {{"omega", cfg.omega},
            {"A", A},
            {"beta", vin.beta},
            {"lambda0", vin.lambda0},
            {"F_edge_variation", vin.edge_variation},
            {"F_left_tail", vin.left_tail},
            {"runs", runs}};
}

inline json run_kernel(const Scenario& s, const fs::path& dir) {
    const KernelProfile kp = bessel_kernel_profile(s.params.alpha, s.lambda, scenario_grid(s));
    write_csv(dir / "kernel.csv", {"x", "weighted"}, {kp.x, kp.weighted});
    return {{"fit", detail::decay_json(kp.fit)},
            {"plateau", kp.plateau},
            {"plateau_slope", kp.plateau_slope},
            {"bound", kp.bound},
            {"converged", kp.converged}};
}

inline json run_identities(const Scenario& s, const fs::path& dir) {
    const GroundState gs = detail::solve(s);
    const ModelParams& p = s.params;
    const auto poh = pohozaev_residuals(gs.Q, p);
    const double lq = lambda_identity_residual(gs);
    const QLambdaQ ql = q_lambda_q(gs);
    const Field bump = commutator_test_field(gs.Q.grid_ptr());
    const CommutatorCheck cm = commutator_check(bump, p.alpha);
    json j{{"pohozaev_r1", poh.r1},
           {"pohozaev_r2", poh.r2},
           {"pohozaev_r3", poh.r3},
           {"lambda_identity", lq},
           {"q_lambda_q", ql.value},
           {"q_lambda_q_formula", ql.formula},
           {"q_lambda_q_residual", ql.residual},
           {"commutator", cm.residual},
           {"commutator_edge_warning", cm.edge_warning}};
    const double wq = weinstein(gs.Q, p);
    const double cgn = sharp_gn_constant(gs.Q, p);
    j["weinstein"] = wq;
    j["sharp_gn_constant"] = cgn;
    j["sharp_constant_residual"] = std::abs(wq * cgn - 1.0);
    std::vector<double> values;
    std::vector<std::string> names;
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (it.value().is_number()) {
            names.push_back(it.key());
            values.push_back(it.value().get<double>());
        }
    }
    std::ofstream os(dir / "identities.csv");
    os << "identity,value\n";
    for (std::size_t i = 0; i < names.size(); ++i) os << names[i] << ',' << format_number(values[i]) << '\n';
    return j;
}

/// Runs a scenario into a fresh run directory and writes its manifest.
inline RunResult run_scenario(const Scenario& s) {
    RunResult res;
    res.dir = make_run_directory(run_root(s), s.kind);
    if (s.kind == "groundstate") {
        res.summary = run_groundstate(s, res.dir);
    } else if (s.kind == "spectrum") {
        res.summary = run_spectrum(s, res.dir);
    } else if (s.kind == "evolve") {
        res.summary = run_evolve(s, res.dir);
    } else if (s.kind == "stability") {
        res.summary = run_stability(s, res.dir);
    } else if (s.kind == "instability") {
        res.summary = run_instability(s, res.dir);
    } else if (s.kind == "kernel") {
        res.summary = run_kernel(s, res.dir);
    } else if (s.kind == "identities") {
        res.summary = run_identities(s, res.dir);
    } else {
        throw ConfigError("unknown scenario kind '" + s.kind + "'");
    }
    write_json(res.dir / "summary.json", res.summary);
    write_manifest(res.dir, s);
    return res;
}

}  // namespace fkdv::io
