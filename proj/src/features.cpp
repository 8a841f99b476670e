#include "dxtab/features.hpp"

#include <cmath>
#include <stdexcept>

#include "dxtab/schema.hpp"

namespace dxtab::features {

namespace {

std::optional<double> get(const cohort::FeatureMap& fm, std::string_view name) {
    auto it = fm.find(name);
    if (it == fm.end()) return std::nullopt;
    return it->second;
}

std::optional<double> ratio(std::optional<double> num, std::optional<double> den) {
    if (!num || !den) return std::nullopt;
    return *num / (*den + kEpsilon);
}

template <std::size_t N>
std::vector<double> available(const cohort::FeatureMap& fm,
                              const std::array<std::string_view, N>& sites) {
    std::vector<double> out;
    for (auto s : sites)
        if (auto v = get(fm, s)) out.push_back(*v);
    return out;
}

}  // namespace

std::vector<std::optional<double>> EngineeredFeatures::as_vector() const {
    return {central_obesity_ratio, visceral_adiposity_index, muscle_fat_ratio,
            trunk_fat_percentage,  ffm_index,                spine_bmd_mean,
            bone_health_composite, osteoporosis_risk,        peripheral_fat_ratio,
            bmd_coefficient_variation};
}

EngineeredFeatures engineer(const cohort::FeatureMap& fm) {
    EngineeredFeatures out;

    out.central_obesity_ratio = ratio(get(fm, "Android_Fat_Mass"), get(fm, "Gynoid_Fat_Mass"));
    out.visceral_adiposity_index = ratio(get(fm, "VAT_Mass"), get(fm, "Total_Fat_Mass"));
    out.muscle_fat_ratio = ratio(get(fm, "Total_Lean_Mass"), get(fm, "Total_Fat_Mass"));
    if (auto r = ratio(get(fm, "Trunk_Fat_Mass"), get(fm, "Total_Fat_Mass")))
        out.trunk_fat_percentage = *r * 100.0;
    if (auto ffm = get(fm, "Total_Fat_Free_Mass")) {
        if (auto area = get(fm, "Total_Area"))
            out.ffm_index = *ffm / std::sqrt(*area + kEpsilon);
    }

    const auto spine = available(fm, schema::kSpineBmdSites);
    if (!spine.empty()) {
        double s = 0.0;
        for (double v : spine) s += v;
        out.spine_bmd_mean = s / static_cast<double>(spine.size());
    }

    const auto tscores = available(fm, schema::kTScoreSites);
    if (!tscores.empty()) {
        double s = 0.0;
        int osteo = 0;
        for (double t : tscores) {
            s += t;
            if (t < -2.5) ++osteo;
        }
        out.bone_health_composite = s / static_cast<double>(tscores.size());
        out.osteoporosis_risk = static_cast<double>(osteo);
    }

    {
        const auto arms = get(fm, "Arms_Fat_Mass");
        const auto legs = get(fm, "Legs_Fat_Mass");
        const auto trunk = get(fm, "Trunk_Fat_Mass");
        if (arms && legs && trunk)
            out.peripheral_fat_ratio = (*arms + *legs) / (*trunk + kEpsilon);
    }

    const auto bmds = available(fm, schema::kAllBmdSites);
    if (!bmds.empty()) {
        double mu = 0.0;
        for (double v : bmds) mu += v;
        mu /= static_cast<double>(bmds.size());
        double var = 0.0;
        for (double v : bmds) var += (v - mu) * (v - mu);
        var /= static_cast<double>(bmds.size());  // population sd, plain sigma
        out.bmd_coefficient_variation = std::sqrt(var) / (mu + kEpsilon);
    }

    return out;
}

cohort::RawCohort engineer_matrix(const cohort::RawCohort& c) {
    cohort::RawCohort out = c;
    for (auto name : schema::kEngineeredFeatures) out.feature_names.emplace_back(name);
    for (auto& r : out.records) {
        const auto engineered = engineer(cohort::feature_map(c, r)).as_vector();
        r.values.insert(r.values.end(), engineered.begin(), engineered.end());
    }
    out.provenance.push_back("appended 10 engineered DXA features");
    return out;
}

Standardizer Standardizer::fit(const cohort::LabeledDataset& train) {
    if (train.x.rows() == 0) throw std::invalid_argument("Standardizer: empty training data");
    Standardizer s;
    s.names_ = train.feature_names;
    const std::size_t n = train.x.rows(), p = train.x.cols();
    s.mean_.resize(p);
    s.std_.resize(p);
    s.zero_var_.resize(p);
    for (std::size_t j = 0; j < p; ++j) {
        double mu = 0.0;
        for (std::size_t i = 0; i < n; ++i) mu += train.x(i, j);
        mu /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double c = train.x(i, j) - mu;
            var += c * c;
        }
        var /= static_cast<double>(n);
        const double sd = std::sqrt(var);
        s.mean_[j] = mu;
        s.zero_var_[j] = sd == 0.0;
        s.std_[j] = sd == 0.0 ? 1.0 : sd;
    }
    return s;
}

Standardizer Standardizer::from_stats(std::vector<std::string> names, std::vector<double> means,
                                      std::vector<double> stds) {
    if (names.size() != means.size() || names.size() != stds.size())
        throw std::invalid_argument("Standardizer: stats size mismatch");
    Standardizer s;
    s.names_ = std::move(names);
    s.mean_ = std::move(means);
    s.std_ = std::move(stds);
    s.zero_var_.resize(s.std_.size());
    for (std::size_t j = 0; j < s.std_.size(); ++j) {
        s.zero_var_[j] = s.std_[j] == 0.0;
        if (s.zero_var_[j]) s.std_[j] = 1.0;
    }
    return s;
}

cohort::LabeledDataset Standardizer::apply(const cohort::LabeledDataset& data) const {
    if (data.feature_names != names_)
        throw std::invalid_argument("Standardizer: feature names do not match the fit");
    cohort::LabeledDataset out = data;
    for (std::size_t j = 0; j < names_.size(); ++j) {
        if (zero_var_[j]) continue;
        for (std::size_t i = 0; i < out.x.rows(); ++i)
            out.x(i, j) = (out.x(i, j) - mean_[j]) / std_[j];
    }
    return out;
}

cohort::LabeledDataset Standardizer::inverse(const cohort::LabeledDataset& data) const {
    if (data.feature_names != names_)
        throw std::invalid_argument("Standardizer: feature names do not match the fit");
    cohort::LabeledDataset out = data;
    for (std::size_t j = 0; j < names_.size(); ++j) {
        if (zero_var_[j]) continue;
        for (std::size_t i = 0; i < out.x.rows(); ++i)
            out.x(i, j) = out.x(i, j) * std_[j] + mean_[j];
    }
    return out;
}

}  // namespace dxtab::features
