#include "dxtab/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dxtab/rng.hpp"
#include "dxtab/schema.hpp"

namespace dxtab::cohort {

namespace {

constexpr double kFollowupDriftSd = 0.15;  // fraction of the feature sd

struct SubjectPlan {
    Sex sex;
    bool is_case;
};

}  // namespace

std::map<std::string, double> SyntheticSpec::default_effect_sizes() {
    return {
        {"VAT_Mass", 1.0},         {"VAT_Volume", 1.0},
        {"Ward_BMD", -0.3},        {"Troch_BMD", -0.3},
        {"Ward_TScore", -0.3},     {"Troch_TScore", -0.3},
        {"HbA1c", 0.75},           {"Fasting_Glucose", 0.75},
        {"Android_Fat_Mass", 0.6}, {"Trunk_Fat_Mass", 0.5},
        {"Total_Fat_Mass", 0.3},   {"HDL", -0.45},
    };
}

void SyntheticSpec::validate() const {
    if (missingness_rate < 0.0 || missingness_rate >= 0.9)
        throw std::invalid_argument("SyntheticSpec: missingness_rate must be in [0, 0.9)");
    for (const auto& [name, shift] : effect_sizes) {
        (void)shift;
        if (synthetic_distributions().find(name) == synthetic_distributions().end())
            throw std::invalid_argument("SyntheticSpec: unknown effect feature " + name);
    }
}

const std::map<std::string, FeatureDistribution>& synthetic_distributions() {
    static const std::map<std::string, FeatureDistribution> dists = {
        {"HbA1c", {5.5, 0.45, 5.4, 0.45}},
        {"Fasting_Glucose", {95.0, 12.0, 92.0, 12.0}},
        {"LDL", {115.0, 30.0, 110.0, 30.0}},
        {"HDL", {45.0, 10.0, 55.0, 12.0}},
        {"Android_Fat_Mass", {2500.0, 900.0, 2200.0, 850.0}},
        {"Gynoid_Fat_Mass", {3300.0, 1000.0, 4200.0, 1200.0}},
        {"VAT_Mass", {600.0, 250.0, 450.0, 220.0}},
        {"VAT_Volume", {650.0, 270.0, 480.0, 230.0}},
        {"Total_Fat_Mass", {24000.0, 8000.0, 28000.0, 9000.0}},
        {"Total_Lean_Mass", {55000.0, 8000.0, 40000.0, 6000.0}},
        {"Trunk_Fat_Mass", {13000.0, 4500.0, 13500.0, 5000.0}},
        {"Arms_Fat_Mass", {2800.0, 1000.0, 3200.0, 1100.0}},
        {"Legs_Fat_Mass", {7000.0, 2500.0, 9500.0, 3000.0}},
        {"Total_Fat_Free_Mass", {58000.0, 8000.0, 42000.0, 6000.0}},
        {"Total_Area", {2200.0, 250.0, 1900.0, 220.0}},
        {"L1_BMD", {1.05, 0.14, 1.00, 0.14}},
        {"L2_BMD", {1.10, 0.15, 1.05, 0.15}},
        {"L3_BMD", {1.15, 0.15, 1.10, 0.15}},
        {"L4_BMD", {1.12, 0.15, 1.08, 0.15}},
        {"Neck_BMD", {0.95, 0.13, 0.88, 0.13}},
        {"Ward_BMD", {0.80, 0.14, 0.72, 0.13}},
        {"Troch_BMD", {0.85, 0.13, 0.75, 0.12}},
        {"Spine_TScore", {-0.3, 1.2, -0.5, 1.2}},
        {"Femur_TScore", {-0.4, 1.0, -0.6, 1.0}},
        {"Ward_TScore", {-0.8, 1.1, -1.0, 1.1}},
        {"Troch_TScore", {-0.5, 1.0, -0.7, 1.0}},
        {"Spine_ZScore", {0.1, 1.0, 0.0, 1.0}},
        {"Femur_ZScore", {0.0, 1.0, -0.1, 1.0}},
    };
    return dists;
}

SyntheticCohorts generate_synthetic_cohort(const SyntheticSpec& spec) {
    spec.validate();
    const auto names = schema::default_feature_names();
    SyntheticCohorts out;
    out.baseline.feature_names = names;
    out.followup.feature_names = names;

    std::vector<SubjectPlan> plan;
    plan.reserve(spec.n_male_control + spec.n_male_case + spec.n_female_control +
                 spec.n_female_case);
    for (std::size_t i = 0; i < spec.n_male_control; ++i) plan.push_back({Sex::male, false});
    for (std::size_t i = 0; i < spec.n_male_case; ++i) plan.push_back({Sex::male, true});
    for (std::size_t i = 0; i < spec.n_female_control; ++i) plan.push_back({Sex::female, false});
    for (std::size_t i = 0; i < spec.n_female_case; ++i) plan.push_back({Sex::female, true});

    Rng rng(derive_seed(spec.seed, "synthetic"));
    std::normal_distribution<double> unit_normal(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const auto& dists = synthetic_distributions();

    for (std::size_t si = 0; si < plan.size(); ++si) {
        const auto& p = plan[si];
        char id[24];
        std::snprintf(id, sizeof(id), "S%06zu", si + 1);

        SubjectRecord base;
        base.subject_id = id;
        base.sex = p.sex;
        base.visit = Visit::baseline;
        base.age = static_cast<int>(std::clamp(std::lround(45.0 + 12.0 * unit_normal(rng)),
                                               25L, 84L));
        base.values.resize(names.size());

        SubjectRecord fup = base;
        fup.visit = Visit::followup;
        fup.age = std::min(base.age + 5, 89);

        for (std::size_t j = 0; j < names.size(); ++j) {
            const std::string& name = names[j];
            if (schema::is_flag(name)) {
                base.values[j] = 0.0;  // nobody diabetic at baseline
                fup.values[j] = 0.0;
                continue;
            }
            const auto& d = dists.at(name);
            const double mean = p.sex == Sex::male ? d.male_mean : d.female_mean;
            const double sd = p.sex == Sex::male ? d.male_sd : d.female_sd;
            double shift = 0.0;
            if (p.is_case) {
                auto it = spec.effect_sizes.find(name);
                if (it != spec.effect_sizes.end()) shift = it->second;
            }
            double v = mean + sd * (unit_normal(rng) + shift);
            if (schema::is_mass_or_area(name)) v = std::max(v, 0.05 * mean);
            if (schema::is_bmd(name)) v = std::max(v, 0.2);
            // Keep everyone below the diagnostic thresholds at baseline: cases
            // are pre-diabetic there and only convert by follow-up.
            if (name == schema::kHba1c) v = std::min(v, 6.9);
            if (name == schema::kFastingGlucose) v = std::min(v, 125.0);
            base.values[j] = v;

            double fv = *base.values[j] + sd * kFollowupDriftSd * unit_normal(rng);
            if (schema::is_mass_or_area(name)) fv = std::max(fv, 0.05 * mean);
            if (schema::is_bmd(name)) fv = std::max(fv, 0.2);
            fup.values[j] = fv;
        }

        // Follow-up outcome: every case satisfies at least one diabetic
        // criterion; controls satisfy none.
        const auto set = [&](std::string_view name, double v) {
            fup.values[*out.followup.feature_index(std::string(name))] = v;
        };
        const auto get = [&](std::string_view name) {
            return *fup.values[*out.followup.feature_index(std::string(name))];
        };
        if (p.is_case) {
            set(schema::kHba1c, 7.0 + std::abs(unit_normal(rng)) * 0.9);
            if (unit(rng) < 0.6) set(schema::kFastingGlucose, 126.0 + std::abs(unit_normal(rng)) * 20.0);
            if (unit(rng) < 0.5) set(schema::kMedication, 1.0);
            if (unit(rng) < 0.3) set(schema::kSelfReported, 1.0);
        } else {
            set(schema::kHba1c, std::min(get(schema::kHba1c), 6.8));
            set(schema::kFastingGlucose, std::min(get(schema::kFastingGlucose), 124.0));
        }

        out.baseline.records.push_back(std::move(base));
        out.followup.records.push_back(std::move(fup));
    }

    // MCAR missingness on baseline features only; follow-up stays complete so
    // labels remain exactly as planned.
    if (spec.missingness_rate > 0.0) {
        Rng miss_rng(derive_seed(spec.seed, "synthetic/missing"));
        std::uniform_real_distribution<double> u(0.0, 1.0);
        for (auto& r : out.baseline.records)
            for (auto& v : r.values)
                if (u(miss_rng) < spec.missingness_rate) v.reset();
    }

    out.baseline.provenance.push_back("synthetic cohort, seed " + std::to_string(spec.seed));
    out.followup.provenance = out.baseline.provenance;
    return out;
}

}  // namespace dxtab::cohort
