#pragma once

#include <string>
#include <string_view>

#include "pcs/dynamics.hpp"
#include "pcs/observables.hpp"
#include "pcs/states.hpp"

namespace pcs {

enum class Scenario { relax_me, relax_mc, quench, pcs_build, reduction_check };

std::string_view scenario_name(Scenario s);
Scenario scenario_from_name(std::string_view name);

struct InitialState {
    bool is_fock = true;
    AtomLevel atom = AtomLevel::excited;
    int n = 7;  // fock occupation numbers
    int m = 6;
    PcsLabel pcs;  // used when is_fock is false
};

struct RunConfig {
    Scenario scenario = Scenario::relax_me;
    int cutoff = 20;
    SimParams params;
    InitialState initial;
    SnapshotRequest snapshots;
    std::string output_dir = "out";
    bool write_csv = true;
    bool write_json = true;
};

// Parses the JSON configuration document and applies defaults (the default
// run is the relaxation scenario at the reference parameter set). Unknown
// keys are an error listing their paths; invariant violations name the
// offending field. An empty document or "{}" yields the full default config.
RunConfig parse_config(std::string_view text);

// Same, but the scenario is fixed by the caller (the CLI positional) and any
// "scenario" key in the document is overridden. Scenario-dependent defaults
// (snapshot times) follow the caller's choice.
RunConfig parse_config(std::string_view text, Scenario scenario);

// Re-checks the cross-field invariants after programmatic edits (flag
// overrides). parse_config runs this internally.
void validate_run_config(const RunConfig& cfg);

// The fully resolved document: parse_config(resolved_config_json(cfg)) yields
// an equivalent config, which is what makes summary.json round-trippable.
std::string resolved_config_json(const RunConfig& cfg);

}  // namespace pcs
