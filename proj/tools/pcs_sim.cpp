#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "pcs/config.hpp"
#include "pcs/runner.hpp"

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw pcs::SimError(pcs::ErrorCode::io, "cannot open config file " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    if (in.bad()) throw pcs::SimError(pcs::ErrorCode::io, "read failed for " + path);
    return std::move(buf).str();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Two-mode trapped-ion dissipative state preparation simulator"};
    app.get_formatter()->column_width(28);

    std::string scenario_arg;
    app.add_option("scenario", scenario_arg,
                   "relax_me | relax_mc | quench | pcs_build | reduction_check")
        ->required();

    std::string config_path;
    app.add_option("--config", config_path, "JSON config file (defaults apply when omitted)");

    std::optional<std::uint64_t> seed;
    app.add_option("--seed", seed, "override params.master_seed");
    std::optional<std::string> out_dir;
    app.add_option("--out", out_dir, "override output.dir");
    std::optional<int> traj;
    app.add_option("--traj", traj, "override params.n_traj");
    std::optional<int> cutoff;
    app.add_option("--cutoff", cutoff, "override space.cutoff");

    CLI11_PARSE(app, argc, argv);

    try {
        const pcs::Scenario scenario = pcs::scenario_from_name(scenario_arg);
        const std::string text = config_path.empty() ? std::string("{}") : read_file(config_path);
        pcs::RunConfig cfg = pcs::parse_config(text, scenario);

        if (seed) cfg.params.master_seed = *seed;
        if (out_dir) cfg.output_dir = *out_dir;
        if (traj) cfg.params.n_traj = *traj;
        if (cutoff) cfg.cutoff = *cutoff;
        pcs::validate_run_config(cfg);

        const pcs::RunArtifacts art = pcs::run_scenario(cfg);
        for (const auto& name : art.files)
            std::cout << (art.dir / name).string() << '\n';
        if (!cfg.write_json) std::cout << art.summary;
        return 0;
    } catch (const pcs::SimError& e) {
        std::cerr << "error category=" << e.category() << ": " << e.what() << '\n';
        return e.exit_code();
    } catch (const std::exception& e) {
        std::cerr << "error category=internal: " << e.what() << '\n';
        return 1;
    }
}
