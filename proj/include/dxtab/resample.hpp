#pragma once

// The SMOTE-family resampling ensemble with adaptive k, the best-strategy
// selector, and the minority augmentation pipeline (relative noise, mixup,
// weighted sampling, copy factor).

#include <cstdint>
#include <string>
#include <vector>

#include "dxtab/cohort.hpp"
#include "dxtab/rng.hpp"

namespace dxtab::resample {

enum class StrategyKind { smote, borderline_smote, svm_smote, adasyn, smote_tomek, smote_enn };

std::string to_string(StrategyKind k);
StrategyKind strategy_from_string(const std::string& s);
const std::vector<StrategyKind>& all_strategies();  // fixed tie-break order

struct ResampleStrategy {
    StrategyKind kind = StrategyKind::smote;
    int k_neighbors = 5;  // adapted down when the minority class is small
    std::uint64_t seed = 0;
};

// k = min(k_default, n_minority - 1); throws when n_minority < 2.
int adaptive_k(std::size_t n_minority, int k_default);

struct ResampleOutcome {
    cohort::LabeledDataset data;
    std::size_t synthetic_added = 0;
    std::size_t originals_removed = 0;  // tomek / enn cleanup
    bool degenerate_fallback = false;   // duplication fallback engaged
};

ResampleOutcome resample(const cohort::LabeledDataset& data, const ResampleStrategy& strategy);

struct StrategyTraceEntry {
    StrategyKind kind;
    std::size_t n_negative = 0, n_positive = 0;
    std::size_t synthetic_added = 0, originals_removed = 0;
    std::size_t imbalance = 0;  // |n_pos - n_neg|
    bool selected = false;
    std::string error;  // non-empty when the strategy failed on this data
};

struct BestStrategyResult {
    ResampleStrategy strategy;
    ResampleOutcome outcome;
    std::vector<StrategyTraceEntry> trace;
};

// Minimal post-resampling imbalance; ties broken by fewest originals removed,
// then by the fixed strategy order.
BestStrategyResult select_best_strategy(const cohort::LabeledDataset& data,
                                        const std::vector<ResampleStrategy>& strategies);

struct AugmentConfig {
    double noise_sigma = 0.2;   // relative: per-feature noise sd = sigma * feature sd
    double mixup_alpha = 0.6;   // Beta(alpha, alpha) mixing coefficient
    double minority_weight = 10.0;  // 10:1 minority-to-majority sampling ratio
    double majority_weight = 1.0;
    int augment_factor = 5;
    double mixup_probability = 0.5;
    std::uint64_t seed = 0;

    void validate() const;
};

struct AugmentResult {
    cohort::LabeledDataset data;        // originals followed by the new minority rows
    std::vector<double> sample_weights; // aligned with data rows
    std::size_t copies_added = 0;
};

// Emits augment_factor noisy copies per minority sample; each copy then mixes
// with another minority sample with the configured probability (label stays
// 1). Weights implement the minority:majority sampling ratio.
AugmentResult augment_minority(const cohort::LabeledDataset& data, const AugmentConfig& cfg);

// Beta(alpha, alpha) draw via two gamma variates; the mixup coefficient.
double sample_beta(double alpha, Rng& rng);

}  // namespace dxtab::resample
