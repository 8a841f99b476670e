#pragma once

// End-to-end orchestration: a single JSON run configuration, per-stage
// derived seeds, a write-once run-directory layout, and stage functions that
// read their prerequisites from disk so each can run standalone.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dxtab/importance.hpp"
#include "dxtab/llm.hpp"
#include "dxtab/report.hpp"
#include "dxtab/resample.hpp"
#include "dxtab/selection.hpp"
#include "dxtab/synthetic.hpp"
#include "dxtab/tabtrans.hpp"
#include "json.hpp"

namespace dxtab::pipeline {

inline constexpr const char* kVersion = "0.1.0";

struct RunConfig {
    std::uint64_t seed = 42;
    std::string out_dir = "run";

    // Exactly one input source: external CSVs or the synthetic generator.
    std::optional<std::string> baseline_csv;
    std::optional<std::string> followup_csv;
    cohort::SyntheticSpec synthetic;
    bool use_synthetic = true;

    double sparse_threshold = 0.5;
    double test_fraction = 0.2;

    selection::SelectionConfig selection;
    selection::TsneConfig tsne;
    bool run_tsne = true;

    std::vector<resample::StrategyKind> strategies;  // empty = the full ensemble
    resample::AugmentConfig augment;
    // The 5x augmentation already rebalances the classes; stacking the 10:1
    // sampler weights on top drives batches ~85% minority and the recall-based
    // early stop then freezes a degenerate all-positive model at epoch 1.
    bool tabtrans_weighted_sampling = false;

    tabtrans::TabTransConfig tabtrans;

    int grid_top_models = 3;  // CV-ranked models entering grid search + voting

    llm::LlmEndpoint llm_endpoint;
    llm::PromptStrategy llm_strategy = llm::PromptStrategy::few_shot;
    std::size_t llm_examples_per_class = 2;
    std::size_t llm_max_subjects = 0;  // 0 = all test subjects

    int importance_repeats = 10;
    report::TierThresholds tiers;

    void validate() const;
    nlohmann::json to_json() const;
    static RunConfig from_json(const nlohmann::json& j);
    std::string config_hash() const;
};

const std::vector<std::string>& stage_names();  // generate .. interpret, pipeline

// Exit-code semantics: 0 success, 1 validation/config error (message names
// the field or missing file), 2 runtime error.
int run_subcommand(const std::string& stage, const RunConfig& cfg);

}  // namespace dxtab::pipeline
