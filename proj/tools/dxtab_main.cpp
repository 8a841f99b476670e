// dxtab command line: runs single pipeline stages or the whole pipeline from
// a JSON run configuration.

#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "dxtab/pipeline.hpp"

namespace {

int load_and_run(const std::string& stage, const std::string& config_path,
                 const std::string& out_dir, std::optional<std::uint64_t> seed) {
    nlohmann::json j = nlohmann::json::object();
    if (!config_path.empty()) {
        std::ifstream in(config_path, std::ios::binary);
        if (!in) {
            std::cerr << "error: cannot read config file: " << config_path << "\n";
            return 1;
        }
        j = nlohmann::json::parse(in, nullptr, false);
        if (j.is_discarded()) {
            std::cerr << "error: config is not valid JSON: " << config_path << "\n";
            return 1;
        }
    }
    dxtab::pipeline::RunConfig cfg;
    try {
        cfg = dxtab::pipeline::RunConfig::from_json(j);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    if (seed.has_value()) cfg.seed = *seed;
    return dxtab::pipeline::run_subcommand(stage, cfg);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"DXA + clinical tabular pipeline for T2DM risk prediction"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    std::optional<std::uint64_t> seed;

    std::string chosen;
    for (const auto& stage : dxtab::pipeline::stage_names()) {
        auto* sub = app.add_subcommand(stage, "Run the " + stage + " stage");
        sub->add_option("--config", config_path, "JSON run configuration");
        sub->add_option("--out", out_dir, "Run output directory");
        sub->add_option("--seed", seed, "Override the config seed");
        sub->callback([&chosen, stage] { chosen = stage; });
    }
    // Flag form: `dxtab run --stage <name>`.
    std::string stage_flag;
    auto* run = app.add_subcommand("run", "Run a stage named by --stage");
    run->add_option("--stage", stage_flag, "Stage name")->required();
    run->add_option("--config", config_path, "JSON run configuration");
    run->add_option("--out", out_dir, "Run output directory");
    run->add_option("--seed", seed, "Override the config seed");
    run->callback([&chosen, &stage_flag] { chosen = stage_flag; });

    CLI11_PARSE(app, argc, argv);
    const auto& names = dxtab::pipeline::stage_names();
    if (std::find(names.begin(), names.end(), chosen) == names.end()) {
        std::cerr << "error: unknown stage \"" << chosen << "\"\n";
        return 1;
    }
    return load_and_run(chosen, config_path, out_dir, seed);
}
