#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <map>

#include "dxtab/pipeline.hpp"

using namespace dxtab;
using namespace dxtab::pipeline;
namespace fs = std::filesystem;

namespace {

// Small but complete configuration: quick transformer, quick t-SNE.
RunConfig mini_config(const std::string& out_dir, std::uint64_t seed = 11) {
    nlohmann::json j = {
        {"seed", seed},
        {"out_dir", out_dir},
        {"synthetic",
         {{"n_male_control", 90},
          {"n_male_case", 25},
          {"n_female_control", 80},
          {"n_female_case", 22},
          {"missingness_rate", 0.04}}},
        {"selection", {{"run_tsne", true}, {"tsne", {{"perplexity", 10}, {"iterations", 60}}}}},
        {"tabtrans",
         {{"max_epochs", 8}, {"patience", 4}, {"batch_size", 32}, {"n_layers", 1},
          {"lr", 1e-3}}},
        {"llm", {{"max_subjects", 24}}},
        {"evaluation", {{"importance_repeats", 2}}},
    };
    return RunConfig::from_json(j);
}

std::map<std::string, std::string> read_tree(const std::string& root) {
    std::map<std::string, std::string> files;
    for (const auto& entry : fs::recursive_directory_iterator(root)) {
        if (!entry.is_regular_file()) continue;
        std::ifstream in(entry.path(), std::ios::binary);
        std::ostringstream buf;
        buf << in.rdbuf();
        files[fs::relative(entry.path(), root).string()] = buf.str();
    }
    return files;
}

}  // namespace

TEST_CASE("config validation reports the offending field") {
    nlohmann::json both = {{"synthetic", {{"n_male_control", 5}}},
                           {"input", {{"baseline_csv", "a.csv"}, {"followup_csv", "b.csv"}}}};
    CHECK_THROWS_WITH_AS(RunConfig::from_json(both), doctest::Contains("exactly one"),
                         std::runtime_error);

    nlohmann::json bad_field = {{"split", {{"test_fraction", 1.7}}}};
    CHECK_THROWS_WITH_AS(RunConfig::from_json(bad_field),
                         doctest::Contains("test_fraction"), std::runtime_error);

    nlohmann::json bad_type = {{"selection", {{"alpha", "lots"}}}};
    CHECK_THROWS_WITH_AS(RunConfig::from_json(bad_type), doctest::Contains("selection.alpha"),
                         std::runtime_error);

    nlohmann::json bad_strategy = {{"resampling", {{"strategies", {"smote", "bogus"}}}}};
    CHECK_THROWS_WITH_AS(RunConfig::from_json(bad_strategy), doctest::Contains("bogus"),
                         std::runtime_error);
}

TEST_CASE("config hash changes when any field changes") {
    auto a = mini_config("/tmp/x");
    auto b = mini_config("/tmp/x");
    CHECK(a.config_hash() == b.config_hash());
    b.test_fraction = 0.25;
    CHECK(a.config_hash() != b.config_hash());
}

TEST_CASE("missing prerequisites exit 1 and name the missing path") {
    const auto dir = (fs::temp_directory_path() / "dxtab_noprereq").string();
    fs::remove_all(dir);
    auto cfg = mini_config(dir);
    CHECK(run_subcommand("preprocess", cfg) == 1);  // generate has not run
}

TEST_CASE("full mini pipeline: outputs, row count, stage independence, determinism") {
    const auto dir = (fs::temp_directory_path() / "dxtab_mini").string();
    fs::remove_all(dir);
    auto cfg = mini_config(dir);
    REQUIRE(run_subcommand("pipeline", cfg) == 0);

    // The six documented report files.
    for (const char* name : {"metrics.json", "comparison.csv", "roc_points.csv",
                             "confusion.csv", "importance.csv", "manifest.json"})
        CHECK(fs::exists(fs::path(dir) / "report" / name));

    // Comparison table carries the transformer, eight baselines, the vote and
    // the llm rows.
    std::ifstream in(fs::path(dir) / "report" / "comparison.csv");
    std::string line;
    std::getline(in, line);
    std::size_t rows = 0;
    while (std::getline(in, line))
        if (!line.empty()) ++rows;
    CHECK(rows >= 9);

    auto first = read_tree(dir);

    // Stage independence: re-running the stages one by one onto a clean
    // directory reproduces the pipeline byte for byte.
    fs::remove_all(dir);
    for (const auto& stage : stage_names()) {
        if (stage == "pipeline") continue;
        REQUIRE(run_subcommand(stage, cfg) == 0);
    }
    auto second = read_tree(dir);
    REQUIRE(first.size() == second.size());
    for (const auto& [path, content] : first) {
        REQUIRE(second.count(path) == 1);
        CHECK_MESSAGE(second[path] == content, "file differs: ", path);
    }

    // Determinism: a fresh pipeline run reproduces the same bytes.
    fs::remove_all(dir);
    REQUIRE(run_subcommand("pipeline", cfg) == 0);
    auto third = read_tree(dir);
    CHECK(third["report/comparison.csv"] == first["report/comparison.csv"]);
    CHECK(third["report/metrics.json"] == first["report/metrics.json"]);

    // Write-once discipline: re-running a late stage leaves every earlier
    // stage's directory untouched.
    auto before = read_tree(dir);
    REQUIRE(run_subcommand("evaluate", cfg) == 0);
    auto after = read_tree(dir);
    for (const auto& [path, content] : before) {
        if (path.rfind("report/", 0) == 0 || path.rfind("evaluate/", 0) == 0 ||
            path == "manifest.json")
            continue;
        REQUIRE(after.count(path) == 1);
        CHECK_MESSAGE(after[path] == content, "stage rewrote earlier output: ", path);
    }
}

TEST_CASE("external-input configs run the ingestion path end to end") {
    const auto dir = (fs::temp_directory_path() / "dxtab_extrun").string();
    const auto data_dir = fs::temp_directory_path() / "dxtab_extdata";
    fs::remove_all(dir);
    fs::create_directories(data_dir);

    // Export a small synthetic cohort and feed it back in as external CSVs.
    cohort::SyntheticSpec spec;
    spec.n_male_control = 60;
    spec.n_male_case = 18;
    spec.n_female_control = 55;
    spec.n_female_case = 16;
    spec.seed = 77;
    auto gen = cohort::generate_synthetic_cohort(spec);
    const auto base_csv = (data_dir / "baseline.csv").string();
    const auto follow_csv = (data_dir / "followup.csv").string();
    cohort::save_cohort(base_csv, gen.baseline);
    cohort::save_cohort(follow_csv, gen.followup);

    nlohmann::json j = {
        {"seed", 5},
        {"out_dir", dir},
        {"input", {{"baseline_csv", base_csv}, {"followup_csv", follow_csv}}},
        {"selection", {{"run_tsne", false}}},
    };
    auto cfg = RunConfig::from_json(j);
    for (const char* stage : {"preprocess", "engineer", "select", "resample"})
        REQUIRE(run_subcommand(stage, cfg) == 0);
    CHECK(fs::exists(fs::path(dir) / "select" / "train.csv"));
    CHECK(fs::exists(fs::path(dir) / "resample" / "train_resampled.csv"));
    CHECK_FALSE(fs::exists(fs::path(dir) / "generate"));
}

TEST_CASE("generate stage refuses external-input configs") {
    nlohmann::json j = {{"input", {{"baseline_csv", "/tmp/nope_base.csv"},
                                   {"followup_csv", "/tmp/nope_follow.csv"}}},
                        {"out_dir", "/tmp/dxtab_ext"}};
    auto cfg = RunConfig::from_json(j);
    CHECK(run_subcommand("generate", cfg) == 1);
}
