#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "pcs/config.hpp"

namespace pcs {

struct RunArtifacts {
    std::filesystem::path dir;
    std::vector<std::string> files;  // names written, relative to dir
    std::string summary;             // summary document text (also on disk when json is enabled)
};

// Executes the configured scenario and writes its outputs under
// cfg.output_dir (created if missing). Emits series.csv (plus
// series_stderr.csv for ensemble runs), pnm_<label>.csv snapshots, and
// summary.json carrying the resolved config, final observables, and
// scenario-specific results. Throws SimError on any failure.
RunArtifacts run_scenario(const RunConfig& cfg);

}  // namespace pcs
