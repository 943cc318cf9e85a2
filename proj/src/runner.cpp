#include "pcs/runner.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "pcs/dynamics.hpp"
#include "pcs/format.hpp"
#include "pcs/observables.hpp"
#include "pcs/operators.hpp"
#include "pcs/states.hpp"

namespace pcs {

using nlohmann::json;

namespace {

// NaN marks an undefined channel; it becomes an empty CSV cell.
std::string cell(double v) { return std::isnan(v) ? std::string() : format_double(v); }

void write_text(const std::filesystem::path& path, std::string_view content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw SimError(ErrorCode::io, "cannot open " + path.string() + " for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw SimError(ErrorCode::io, "write failed for " + path.string());
}

std::string series_csv(const ObservableSeries& s) {
    std::string out = "t,sz,pol_re,pol_im,trace,purity,q_mean,leak,fidelity_pcs\n";
    for (size_t i = 0; i < s.size(); ++i) {
        out += cell(s.times[i]) + ',' + cell(s.sz[i]) + ',' + cell(s.pol_re[i]) + ',' +
               cell(s.pol_im[i]) + ',' + cell(s.trace[i]) + ',' + cell(s.purity[i]) + ',' +
               cell(s.q_mean[i]) + ',' + cell(s.leak[i]) + ',' + cell(s.fidelity_pcs[i]) + '\n';
    }
    return out;
}

std::string pnm_label(double t) {
    std::string s = "t" + format_double(t);
    for (char& c : s)
        if (c == '.') c = 'p';
    return s;
}

std::string distribution_csv(const MotionalDistribution& d) {
    std::ostringstream out;
    d.write_csv(out);
    return std::move(out).str();
}

StateVector build_initial(const SpaceConfig& space, const InitialState& init) {
    if (init.is_fock) return fock_state(space, init.atom, init.n, init.m);
    return pcs_state(space, init.pcs, init.atom);
}

struct Emitter {
    const RunConfig& cfg;
    RunArtifacts& art;

    void file(const std::string& name, const std::string& content) const {
        write_text(art.dir / name, content);
        art.files.push_back(name);
    }

    void snapshot(double t, const DensityOperator& rho) const {
        if (!cfg.write_csv) return;
        file("pnm_" + pnm_label(t) + ".csv", distribution_csv(motional_marginal(rho)));
    }

    void series(const std::string& name, const ObservableSeries& s) const {
        if (cfg.write_csv) file(name, series_csv(s));
    }
};

json final_from_density(const DensityOperator& rho, double t, const SimParams& p) {
    const Polarization pol = polarization(rho);
    const ChargeStats q = charge_stats(rho);
    json f;
    f["t"] = t;
    f["sz"] = inversion(rho);
    f["pol_re"] = pol.re;
    f["pol_im"] = pol.im;
    f["trace"] = rho.trace().real();
    f["purity"] = purity(rho);
    f["q_mean"] = q.mean;
    f["leak"] = rho.leak();
    if (p.fidelity_target) {
        const StateVector target =
            pcs_state(rho.space(), *p.fidelity_target, AtomLevel::ground);
        f["fidelity_pcs"] = fidelity_density(rho, target);
    } else {
        f["fidelity_pcs"] = nullptr;
    }
    return f;
}

json final_from_series(const ObservableSeries& s) {
    const size_t i = s.size() - 1;
    const auto num = [](double v) { return std::isnan(v) ? json() : json(v); };
    json f;
    f["t"] = s.times[i];
    f["sz"] = s.sz[i];
    f["pol_re"] = s.pol_re[i];
    f["pol_im"] = s.pol_im[i];
    f["trace"] = s.trace[i];
    f["purity"] = num(s.purity[i]);
    f["q_mean"] = s.q_mean[i];
    f["leak"] = s.leak[i];
    f["fidelity_pcs"] = num(s.fidelity_pcs[i]);
    return f;
}

}  // namespace

RunArtifacts run_scenario(const RunConfig& cfg) {
    validate_run_config(cfg);

    RunArtifacts art;
    art.dir = cfg.output_dir;
    std::error_code ec;
    std::filesystem::create_directories(art.dir, ec);
    if (ec)
        throw SimError(ErrorCode::io,
                       "cannot create output directory " + art.dir.string() + ": " + ec.message());

    const SpaceConfig space{cfg.cutoff};
    const Emitter emit{cfg, art};

    json summary;
    summary["scenario"] = std::string(scenario_name(cfg.scenario));
    summary["config"] = json::parse(resolved_config_json(cfg));
    summary["seeds"] = {{"master_seed", cfg.params.master_seed},
                        {"derivation", "counter stream keyed by (master_seed, trajectory index)"}};

    SnapshotSink sink{cfg.snapshots.times,
                      [&emit](double t, const DensityOperator& rho) { emit.snapshot(t, rho); }};
    const SnapshotSink* sink_ptr =
        (cfg.write_csv && !cfg.snapshots.times.empty()) ? &sink : nullptr;

    switch (cfg.scenario) {
        case Scenario::relax_me: {
            const StateVector psi0 = build_initial(space, cfg.initial);
            const DensityOperator rho0 = DensityOperator::pure(psi0);
            const MasterResult res = integrate_master_equation(rho0, cfg.params, sink_ptr);
            emit.series("series.csv", res.series);
            const auto H = build_model_hamiltonian(space, cfg.params);
            constexpr double kSteadyTol = 1e-4;
            summary["final"] = final_from_density(res.final_rho, cfg.params.t_final, cfg.params);
            summary["steady_state"] =
                detect_steady_state(res.final_rho, H, cfg.params.gamma, kSteadyTol);
            summary["steady_state_tol"] = kSteadyTol;
            break;
        }
        case Scenario::relax_mc: {
            const StateVector psi0 = build_initial(space, cfg.initial);
            const EnsembleResult ens = mc_ensemble(psi0, cfg.params, sink_ptr);
            emit.series("series.csv", ens.mean);
            emit.series("series_stderr.csv", ens.std_err);
            summary["final"] = final_from_density(ens.rho_final, cfg.params.t_final, cfg.params);
            summary["jumps"] = {{"mean_per_traj", ens.jumps.mean_per_traj},
                                {"min_per_traj", ens.jumps.min_per_traj},
                                {"max_per_traj", ens.jumps.max_per_traj},
                                {"total", ens.jumps.total}};
            break;
        }
        case Scenario::quench: {
            const StateVector psi0 = build_initial(space, cfg.initial);
            ObservableSeries series;
            if (cfg.params.gamma == 0.0) {
                series = quench_carrier(psi0, cfg.params, sink_ptr);
            } else {
                series = quench_carrier(DensityOperator::pure(psi0), cfg.params, sink_ptr);
            }
            emit.series("series.csv", series);
            summary["final"] = final_from_series(series);
            break;
        }
        case Scenario::pcs_build: {
            const StateVector psi = pcs_state(space, cfg.initial.pcs, cfg.initial.atom);
            if (cfg.write_csv)
                emit.file("pnm_state.csv", distribution_csv(motional_marginal(psi)));
            // eigenvalue residual ||ab psi - xi psi||
            StateVector shifted = apply_to_state(pair_annihilation(space), psi);
            const Complex xi = cfg.initial.pcs.xi;
            double res2 = 0.0;
            for (int i = 0; i < space.dim(); ++i) {
                const Complex d = shifted[i] - xi * psi[i];
                res2 += std::norm(d);
            }
            summary["pcs_residual"] = std::sqrt(res2);
            summary["norm"] = psi.norm();
            break;
        }
        case Scenario::reduction_check: {
            const double h_max = build_full_hamiltonian(space, cfg.params.drive).max_abs_entry();
            const double diff = reduction_check(space, cfg.params.drive);
            const double ratio = h_max > 0.0 ? diff / h_max : 0.0;
            summary["difference"] = diff;
            summary["h_max"] = h_max;
            summary["ratio"] = ratio;
            summary["pass"] = ratio < 1e-12;
            break;
        }
    }

    art.summary = summary.dump(2) + "\n";
    if (cfg.write_json) emit.file("summary.json", art.summary);
    return art;
}

}  // namespace pcs
