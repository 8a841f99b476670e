#pragma once

// Permutation feature importance over predicted probabilities, with tier
// assignment (high / moderate / least contributors).

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dxtab/cohort.hpp"

namespace dxtab::report {

enum class Tier { high, moderate, least };
std::string to_string(Tier t);

struct FeatureImportance {
    std::string feature_name;
    double mean_auc_drop = 0.0;
    double std_auc_drop = 0.0;
    double normalized = 0.0;  // by the max positive drop
    Tier tier = Tier::least;
};

struct ImportanceReport {
    double baseline_auc = 0.0;
    std::vector<FeatureImportance> features;  // sorted by importance, descending
};

struct TierThresholds {
    double high = 0.5;      // normalized importance >= high
    double moderate = 0.1;  // >= moderate and < high
};

using ProbaFn = std::function<std::vector<double>(const Matrix&)>;

// importance_j = baseline AUC - mean AUC over `repeats` seeded permutations
// of column j. Deterministic given the seed.
ImportanceReport permutation_importance(const ProbaFn& predict,
                                        const cohort::LabeledDataset& data, int repeats,
                                        std::uint64_t seed);

// Assigns tiers from normalized importance; thresholds configurable.
void assign_tiers(ImportanceReport& report, const TierThresholds& thresholds = {});

}  // namespace dxtab::report
