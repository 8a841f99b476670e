#pragma once

// Cohort ingestion, diabetic labeling, preprocessing (sparse-column drop and
// forward-fill imputation) and stratified splitting.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dxtab/matrix.hpp"

namespace dxtab::cohort {

enum class Sex { male, female };
enum class Visit { baseline, followup };

std::string to_string(Sex s);
std::string to_string(Visit v);
Sex sex_from_string(const std::string& s);
Visit visit_from_string(const std::string& s);

struct SubjectRecord {
    std::string subject_id;
    Sex sex = Sex::male;
    int age = 0;
    Visit visit = Visit::baseline;
    // Aligned with the owning cohort's feature_names; nullopt = missing.
    std::vector<std::optional<double>> values;
};

struct RawCohort {
    std::vector<std::string> feature_names;
    std::vector<SubjectRecord> records;
    std::vector<std::string> provenance;

    std::optional<std::size_t> feature_index(const std::string& name) const;
    std::optional<double> value(const SubjectRecord& r, const std::string& name) const;
    // Throws when a duplicate (subject_id, visit) pair or a misaligned record
    // is present.
    void validate() const;
};

struct LabeledDataset {
    std::vector<std::string> feature_names;
    std::vector<std::string> subject_ids;
    Matrix x;
    std::vector<int> labels;

    std::size_t n_positive() const;
    std::size_t n_negative() const;
    std::pair<std::size_t, std::size_t> class_counts() const;  // (neg, pos)
    void validate() const;
};

// Present-valued feature lookup for per-record computations.
using FeatureMap = std::map<std::string, double, std::less<>>;

FeatureMap feature_map(const RawCohort& c, const SubjectRecord& r);

// CSV round trip. Columns: subject_id, sex, age, visit, then features.
// Empty cell = missing. Throws with row/column context on bad values.
RawCohort load_cohort(const std::string& path);
void save_cohort(const std::string& path, const RawCohort& c);

// 1 iff self-reported T2DM, HbA1c >= 7.0, fasting glucose >= 126, or
// antidiabetic medication. Missing criterion fields count as not satisfied;
// nullopt when all four are missing (record unlabelable).
std::optional<int> label_diabetes(const FeatureMap& fm);

struct DropResult {
    RawCohort cohort;
    std::vector<std::string> dropped;  // columns with missing fraction > threshold
};

DropResult drop_sparse_columns(const RawCohort& c, double sparse_threshold);

struct ImputeResult {
    RawCohort cohort;
    std::size_t forward_fills = 0;
    std::size_t median_fills = 0;
};

// Forward-fills each column in (subject_id, visit) sort order; leading gaps
// take the column median of non-missing values.
ImputeResult impute_missing(const RawCohort& c);

// drop_sparse_columns then impute_missing. Throws when every column drops.
RawCohort preprocess(const RawCohort& c, double sparse_threshold = 0.5);

struct LinkStats {
    std::size_t linked = 0;
    std::size_t excluded_no_followup = 0;
    std::size_t excluded_age = 0;
    std::size_t excluded_unlabelable = 0;
};

// Baseline features labeled by the follow-up outcome. Age filter [25, 84]
// applies to the baseline visit. Appends Age and Sex (0=male, 1=female)
// columns to the feature matrix. Baseline must be fully imputed.
LabeledDataset link_outcomes(const RawCohort& baseline, const RawCohort& followup,
                             LinkStats* stats = nullptr, int age_min = 25, int age_max = 84);

// Deterministic stratified split; per-class test counts are
// round(test_fraction * n_class) clamped to [1, n_class - 1].
std::pair<LabeledDataset, LabeledDataset> stratified_split(const LabeledDataset& data,
                                                           double test_fraction,
                                                           std::uint64_t seed);

LabeledDataset select_rows(const LabeledDataset& data, const std::vector<std::size_t>& rows);
LabeledDataset select_columns(const LabeledDataset& data,
                              const std::vector<std::string>& features);

}  // namespace dxtab::cohort
