#include "pcs/config.hpp"

#include <cmath>
#include <set>
#include <sstream>

#include <json.hpp>

namespace pcs {

using nlohmann::json;

namespace {

[[noreturn]] void bad_field(const std::string& path, const std::string& why) {
    throw SimError(ErrorCode::validation, "config field " + path + ": " + why);
}

void check_keys(const json& obj, const std::string& path,
                const std::set<std::string>& allowed) {
    std::string unknown;
    for (const auto& [key, _] : obj.items()) {
        if (allowed.count(key)) continue;
        if (!unknown.empty()) unknown += ", ";
        unknown += path.empty() ? key : path + "." + key;
    }
    if (!unknown.empty())
        throw SimError(ErrorCode::validation, "unknown config keys: " + unknown);
}

double get_num(const json& j, const std::string& path) {
    if (!j.is_number()) bad_field(path, "expected a number");
    return j.get<double>();
}

int get_int(const json& j, const std::string& path) {
    if (!j.is_number_integer()) bad_field(path, "expected an integer");
    return j.get<int>();
}

// Accepted spellings: plain number (real value), [modulus, phase], or
// {"re": x, "im": y}. The resolved form is always re/im, which round-trips
// exactly; the polar pair is a convenience for hand-written configs.
Complex get_complex(const json& j, const std::string& path) {
    if (j.is_number()) return Complex(j.get<double>(), 0.0);
    if (j.is_array()) {
        if (j.size() != 2 || !j[0].is_number() || !j[1].is_number())
            bad_field(path, "polar form must be [modulus, phase]");
        return std::polar(j[0].get<double>(), j[1].get<double>());
    }
    if (j.is_object()) {
        check_keys(j, path, {"re", "im"});
        if (!j.contains("re") || !j.contains("im"))
            bad_field(path, "cartesian form needs both re and im");
        return Complex(get_num(j["re"], path + ".re"), get_num(j["im"], path + ".im"));
    }
    bad_field(path, "expected number, [modulus, phase], or {re, im}");
}

AtomLevel get_atom(const json& j, const std::string& path) {
    if (j.is_string()) {
        const auto s = j.get<std::string>();
        if (s == "g" || s == "ground") return AtomLevel::ground;
        if (s == "e" || s == "excited") return AtomLevel::excited;
    }
    bad_field(path, "expected \"g\" or \"e\"");
}

void parse_drive(const json& j, DriveParams& d) {
    check_keys(j, "params.drive",
               {"omega0", "omega1", "omega2", "phi0", "phi1", "phi2", "eta", "j_max"});
    if (j.contains("omega0")) d.omega0 = get_num(j["omega0"], "params.drive.omega0");
    if (j.contains("omega1")) d.omega1 = get_num(j["omega1"], "params.drive.omega1");
    if (j.contains("omega2")) d.omega2 = get_num(j["omega2"], "params.drive.omega2");
    if (j.contains("phi0")) d.phi0 = get_num(j["phi0"], "params.drive.phi0");
    if (j.contains("phi1")) d.phi1 = get_num(j["phi1"], "params.drive.phi1");
    if (j.contains("phi2")) d.phi2 = get_num(j["phi2"], "params.drive.phi2");
    if (j.contains("eta")) d.eta = get_num(j["eta"], "params.drive.eta");
    if (j.contains("j_max")) d.j_max = get_int(j["j_max"], "params.drive.j_max");
}

RunConfig parse_impl(std::string_view text, std::optional<Scenario> forced) {
    json doc;
    if (text.find_first_not_of(" \t\r\n") == std::string_view::npos) {
        doc = json::object();
    } else {
        try {
            doc = json::parse(text);
        } catch (const json::exception& e) {
            throw SimError(ErrorCode::validation, std::string("config is not valid JSON: ") +
                                                      e.what());
        }
    }
    if (!doc.is_object())
        throw SimError(ErrorCode::validation, "config root must be a JSON object");
    check_keys(doc, "", {"scenario", "space", "params", "initial", "snapshots", "output"});

    RunConfig cfg;
    if (forced) {
        cfg.scenario = *forced;
    } else if (doc.contains("scenario")) {
        if (!doc["scenario"].is_string()) bad_field("scenario", "expected a string");
        cfg.scenario = scenario_from_name(doc["scenario"].get<std::string>());
    }

    if (doc.contains("space")) {
        const json& sp = doc["space"];
        check_keys(sp, "space", {"cutoff"});
        if (sp.contains("cutoff")) cfg.cutoff = get_int(sp["cutoff"], "space.cutoff");
    }

    // Scenario presets applied before explicit keys: the reduction diagnostic
    // needs a concrete drive, and a bare quench starts from the drive's own
    // dark state.
    if (cfg.scenario == Scenario::reduction_check) {
        cfg.params.drive.omega0 = 0.005;
        cfg.params.drive.omega1 = 1.0;
        cfg.params.drive.omega2 = 1.0;
        cfg.params.drive.phi2 = std::acos(-1.0);
        cfg.params.drive.eta = 0.05;
    }

    bool target_given = false;
    if (doc.contains("params")) {
        const json& pj = doc["params"];
        check_keys(pj, "params",
                   {"model", "alpha", "xi", "gamma", "dt", "t_final", "n_traj", "master_seed",
                    "output_every", "drive", "target"});
        if (pj.contains("model")) {
            const auto s = pj["model"].is_string() ? pj["model"].get<std::string>() : "";
            if (s == "effective")
                cfg.params.model = ModelKind::effective;
            else if (s == "full")
                cfg.params.model = ModelKind::full;
            else
                bad_field("params.model", "expected \"effective\" or \"full\"");
        }
        if (pj.contains("alpha"))
            cfg.params.effective.alpha = get_num(pj["alpha"], "params.alpha");
        if (pj.contains("xi")) cfg.params.effective.xi = get_complex(pj["xi"], "params.xi");
        if (pj.contains("gamma")) cfg.params.gamma = get_num(pj["gamma"], "params.gamma");
        if (pj.contains("dt")) cfg.params.dt = get_num(pj["dt"], "params.dt");
        if (pj.contains("t_final")) cfg.params.t_final = get_num(pj["t_final"], "params.t_final");
        if (pj.contains("n_traj")) cfg.params.n_traj = get_int(pj["n_traj"], "params.n_traj");
        if (pj.contains("master_seed")) {
            if (!pj["master_seed"].is_number_integer())
                bad_field("params.master_seed", "expected an integer");
            cfg.params.master_seed = pj["master_seed"].get<std::uint64_t>();
        }
        if (pj.contains("output_every"))
            cfg.params.output_every = get_int(pj["output_every"], "params.output_every");
        if (pj.contains("drive")) parse_drive(pj["drive"], cfg.params.drive);
        if (pj.contains("target")) {
            target_given = true;
            const json& tj = pj["target"];
            if (tj.is_null()) {
                cfg.params.fidelity_target.reset();
            } else {
                check_keys(tj, "params.target", {"xi", "q"});
                PcsLabel label;
                if (tj.contains("xi")) label.xi = get_complex(tj["xi"], "params.target.xi");
                if (tj.contains("q")) label.q = get_int(tj["q"], "params.target.q");
                cfg.params.fidelity_target = label;
            }
        }
    }

    if (!doc.contains("initial")) {
        // Bare quench starts from the drive's own dark state (charge 0 is the
        // exactly periodic case); bare pcs_build targets the reference state.
        if (cfg.scenario == Scenario::quench) {
            cfg.initial.is_fock = false;
            cfg.initial.atom = AtomLevel::ground;
            cfg.initial.pcs = PcsLabel{cfg.params.effective.xi, 0};
        } else if (cfg.scenario == Scenario::pcs_build) {
            cfg.initial.is_fock = false;
            cfg.initial.atom = AtomLevel::ground;
            cfg.initial.pcs = PcsLabel{cfg.params.effective.xi, 1};
        }
    }
    if (doc.contains("initial")) {
        const json& ij = doc["initial"];
        check_keys(ij, "initial", {"fock", "pcs"});
        if (ij.contains("fock") && ij.contains("pcs"))
            bad_field("initial", "give either fock or pcs, not both");
        if (ij.contains("fock")) {
            const json& fj = ij["fock"];
            check_keys(fj, "initial.fock", {"s", "n", "m"});
            cfg.initial.is_fock = true;
            if (fj.contains("s")) cfg.initial.atom = get_atom(fj["s"], "initial.fock.s");
            if (fj.contains("n")) cfg.initial.n = get_int(fj["n"], "initial.fock.n");
            if (fj.contains("m")) cfg.initial.m = get_int(fj["m"], "initial.fock.m");
        } else if (ij.contains("pcs")) {
            const json& sj = ij["pcs"];
            check_keys(sj, "initial.pcs", {"xi", "q", "atom"});
            cfg.initial.is_fock = false;
            cfg.initial.atom = AtomLevel::ground;
            if (sj.contains("xi")) cfg.initial.pcs.xi = get_complex(sj["xi"], "initial.pcs.xi");
            if (sj.contains("q")) cfg.initial.pcs.q = get_int(sj["q"], "initial.pcs.q");
            if (sj.contains("atom")) cfg.initial.atom = get_atom(sj["atom"], "initial.pcs.atom");
        }
    }

    bool snapshots_given = false;
    if (doc.contains("snapshots")) {
        const json& sj = doc["snapshots"];
        check_keys(sj, "snapshots", {"times"});
        if (sj.contains("times")) {
            snapshots_given = true;
            if (!sj["times"].is_array()) bad_field("snapshots.times", "expected an array");
            cfg.snapshots.times.clear();
            for (const auto& v : sj["times"])
                cfg.snapshots.times.push_back(get_num(v, "snapshots.times[]"));
        }
    }
    if (!snapshots_given) {
        // Reference snapshot times for the relaxation runs; other scenarios
        // dump nothing unless asked. Times past a shortened run are dropped.
        if (cfg.scenario == Scenario::relax_me || cfg.scenario == Scenario::relax_mc) {
            for (double t : {0.0, 12.5, 50.0, 200.0})
                if (t <= cfg.params.t_final) cfg.snapshots.times.push_back(t);
        }
    }

    if (doc.contains("output")) {
        const json& oj = doc["output"];
        check_keys(oj, "output", {"dir", "formats"});
        if (oj.contains("dir")) {
            if (!oj["dir"].is_string()) bad_field("output.dir", "expected a string");
            cfg.output_dir = oj["dir"].get<std::string>();
        }
        if (oj.contains("formats")) {
            if (!oj["formats"].is_array()) bad_field("output.formats", "expected an array");
            cfg.write_csv = false;
            cfg.write_json = false;
            for (const auto& v : oj["formats"]) {
                const auto s = v.is_string() ? v.get<std::string>() : "";
                if (s == "csv")
                    cfg.write_csv = true;
                else if (s == "json")
                    cfg.write_json = true;
                else
                    bad_field("output.formats", "entries must be \"csv\" or \"json\"");
            }
        }
    }

    // Default fidelity target: the dark state the run should relax toward,
    // with the drive eigenvalue and the conserved charge of the initial
    // state. Only derivable when that charge is a nonnegative definite value.
    if (!target_given) {
        const int q0 = cfg.initial.is_fock ? cfg.initial.n - cfg.initial.m : cfg.initial.pcs.q;
        Complex xi;
        bool have_xi = false;
        if (cfg.params.model == ModelKind::effective) {
            xi = cfg.params.effective.xi;
            have_xi = true;
        } else if (cfg.params.drive.omega1 > 0.0 && cfg.params.drive.eta > 0.0) {
            xi = std::polar(cfg.params.drive.omega0 /
                                (cfg.params.drive.omega1 * cfg.params.drive.eta *
                                 cfg.params.drive.eta),
                            -cfg.params.drive.phi0);
            have_xi = true;
        }
        if (q0 >= 0 && have_xi && cfg.scenario != Scenario::reduction_check &&
            cfg.cutoff >= 1) {
            // Only adopt the default when it is constructible at this cutoff;
            // an explicit target still fails loudly.
            try {
                pcs_state(SpaceConfig(cfg.cutoff), PcsLabel{xi, q0}, AtomLevel::ground);
                cfg.params.fidelity_target = PcsLabel{xi, q0};
            } catch (const SimError&) {
            }
        }
    }

    validate_run_config(cfg);
    return cfg;
}

}  // namespace

std::string_view scenario_name(Scenario s) {
    switch (s) {
        case Scenario::relax_me: return "relax_me";
        case Scenario::relax_mc: return "relax_mc";
        case Scenario::quench: return "quench";
        case Scenario::pcs_build: return "pcs_build";
        case Scenario::reduction_check: return "reduction_check";
    }
    throw SimError(ErrorCode::validation, "unknown scenario value");
}

Scenario scenario_from_name(std::string_view name) {
    if (name == "relax_me") return Scenario::relax_me;
    if (name == "relax_mc") return Scenario::relax_mc;
    if (name == "quench") return Scenario::quench;
    if (name == "pcs_build") return Scenario::pcs_build;
    if (name == "reduction_check") return Scenario::reduction_check;
    throw SimError(ErrorCode::validation,
                   "unknown scenario \"" + std::string(name) +
                       "\" (expected relax_me, relax_mc, quench, pcs_build, reduction_check)");
}

RunConfig parse_config(std::string_view text) { return parse_impl(text, std::nullopt); }

RunConfig parse_config(std::string_view text, Scenario scenario) {
    return parse_impl(text, scenario);
}

void validate_run_config(const RunConfig& cfg) {
    if (cfg.cutoff < 1) throw SimError(ErrorCode::validation, "space.cutoff must be >= 1");
    if (cfg.initial.is_fock) {
        if (cfg.initial.n < 0 || cfg.initial.n > cfg.cutoff || cfg.initial.m < 0 ||
            cfg.initial.m > cfg.cutoff)
            throw SimError(ErrorCode::validation,
                           "initial.fock occupations must lie within the cutoff");
    } else {
        if (cfg.initial.pcs.q < 0)
            throw SimError(ErrorCode::validation, "initial.pcs.q must be nonnegative");
        if (cfg.initial.pcs.q > cfg.cutoff)
            throw SimError(ErrorCode::validation, "initial.pcs.q exceeds the cutoff");
    }
    if (cfg.scenario == Scenario::pcs_build && cfg.initial.is_fock)
        throw SimError(ErrorCode::validation, "pcs_build needs an initial.pcs block");
    if (cfg.params.fidelity_target && cfg.params.fidelity_target->q < 0)
        throw SimError(ErrorCode::validation, "params.target.q must be nonnegative");
    double prev = -1.0;
    for (double t : cfg.snapshots.times) {
        if (t < 0.0)
            throw SimError(ErrorCode::validation, "snapshots.times must be nonnegative");
        if (t <= prev)
            throw SimError(ErrorCode::validation, "snapshots.times must be strictly increasing");
        if (t > cfg.params.t_final)
            throw SimError(ErrorCode::validation, "snapshots.times must not exceed t_final");
        prev = t;
    }
}

std::string resolved_config_json(const RunConfig& cfg) {
    json doc;
    doc["scenario"] = std::string(scenario_name(cfg.scenario));
    doc["space"]["cutoff"] = cfg.cutoff;

    json& pj = doc["params"];
    pj["model"] = cfg.params.model == ModelKind::effective ? "effective" : "full";
    pj["alpha"] = cfg.params.effective.alpha;
    pj["xi"] = {{"re", cfg.params.effective.xi.real()}, {"im", cfg.params.effective.xi.imag()}};
    pj["gamma"] = cfg.params.gamma;
    pj["dt"] = cfg.params.dt;
    pj["t_final"] = cfg.params.t_final;
    pj["n_traj"] = cfg.params.n_traj;
    pj["master_seed"] = cfg.params.master_seed;
    pj["output_every"] = cfg.params.output_every;
    pj["drive"] = {{"omega0", cfg.params.drive.omega0}, {"omega1", cfg.params.drive.omega1},
                   {"omega2", cfg.params.drive.omega2}, {"phi0", cfg.params.drive.phi0},
                   {"phi1", cfg.params.drive.phi1},     {"phi2", cfg.params.drive.phi2},
                   {"eta", cfg.params.drive.eta},       {"j_max", cfg.params.drive.j_max}};
    if (cfg.params.fidelity_target) {
        pj["target"] = {{"xi",
                         {{"re", cfg.params.fidelity_target->xi.real()},
                          {"im", cfg.params.fidelity_target->xi.imag()}}},
                        {"q", cfg.params.fidelity_target->q}};
    } else {
        pj["target"] = nullptr;
    }

    json& ij = doc["initial"];
    if (cfg.initial.is_fock) {
        ij["fock"] = {{"s", cfg.initial.atom == AtomLevel::excited ? "e" : "g"},
                      {"n", cfg.initial.n},
                      {"m", cfg.initial.m}};
    } else {
        ij["pcs"] = {{"xi",
                      {{"re", cfg.initial.pcs.xi.real()}, {"im", cfg.initial.pcs.xi.imag()}}},
                     {"q", cfg.initial.pcs.q},
                     {"atom", cfg.initial.atom == AtomLevel::excited ? "e" : "g"}};
    }

    doc["snapshots"]["times"] = cfg.snapshots.times;

    doc["output"]["dir"] = cfg.output_dir;
    json formats = json::array();
    if (cfg.write_csv) formats.push_back("csv");
    if (cfg.write_json) formats.push_back("json");
    doc["output"]["formats"] = formats;

    return doc.dump(2);
}

}  // namespace pcs
