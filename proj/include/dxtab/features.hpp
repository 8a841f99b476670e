#pragma once

// The ten engineered DXA features and train-fitted standardization.

#include <optional>
#include <string>
#include <vector>

#include "dxtab/cohort.hpp"

namespace dxtab::features {

inline constexpr double kEpsilon = 1e-8;  // guards every ratio denominator

struct EngineeredFeatures {
    std::optional<double> central_obesity_ratio;
    std::optional<double> visceral_adiposity_index;
    std::optional<double> muscle_fat_ratio;
    std::optional<double> trunk_fat_percentage;
    std::optional<double> ffm_index;  // grams per cm of sqrt(total area)
    std::optional<double> spine_bmd_mean;
    std::optional<double> bone_health_composite;
    std::optional<double> osteoporosis_risk;  // count of T-scores < -2.5
    std::optional<double> peripheral_fat_ratio;
    std::optional<double> bmd_coefficient_variation;

    // Values in schema::kEngineeredFeatures order.
    std::vector<std::optional<double>> as_vector() const;
};

// Computes each feature exactly per its formula. A feature whose required
// inputs are missing is emitted as missing; the averaging features use only
// the available site measurements.
EngineeredFeatures engineer(const cohort::FeatureMap& fm);

// Appends the ten engineered columns to every record; original columns stay.
cohort::RawCohort engineer_matrix(const cohort::RawCohort& c);

class Standardizer {
public:
    // Population (1/n) standard deviation. Zero-variance columns are flagged
    // and passed through unscaled.
    static Standardizer fit(const cohort::LabeledDataset& train);

    cohort::LabeledDataset apply(const cohort::LabeledDataset& data) const;
    cohort::LabeledDataset inverse(const cohort::LabeledDataset& data) const;

    const std::vector<std::string>& feature_names() const { return names_; }
    const std::vector<double>& means() const { return mean_; }
    const std::vector<double>& stds() const { return std_; }
    const std::vector<bool>& zero_variance() const { return zero_var_; }

    static Standardizer from_stats(std::vector<std::string> names, std::vector<double> means,
                                   std::vector<double> stds);

private:
    std::vector<std::string> names_;
    std::vector<double> mean_;
    std::vector<double> std_;  // 1.0 for zero-variance columns
    std::vector<bool> zero_var_;
};

}  // namespace dxtab::features
