#include "dxtab/cohort.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>

#include "dxtab/csv.hpp"
#include "dxtab/rng.hpp"
#include "dxtab/schema.hpp"

namespace dxtab::cohort {

std::string to_string(Sex s) { return s == Sex::male ? "male" : "female"; }
std::string to_string(Visit v) { return v == Visit::baseline ? "baseline" : "followup"; }

Sex sex_from_string(const std::string& s) {
    if (s == "male") return Sex::male;
    if (s == "female") return Sex::female;
    throw std::runtime_error("cohort: invalid sex value \"" + s + "\"");
}

Visit visit_from_string(const std::string& s) {
    if (s == "baseline") return Visit::baseline;
    if (s == "followup") return Visit::followup;
    throw std::runtime_error("cohort: invalid visit value \"" + s + "\"");
}

std::optional<std::size_t> RawCohort::feature_index(const std::string& name) const {
    for (std::size_t i = 0; i < feature_names.size(); ++i)
        if (feature_names[i] == name) return i;
    return std::nullopt;
}

std::optional<double> RawCohort::value(const SubjectRecord& r, const std::string& name) const {
    auto idx = feature_index(name);
    if (!idx) return std::nullopt;
    return r.values[*idx];
}

void RawCohort::validate() const {
    std::set<std::pair<std::string, int>> seen;
    for (const auto& r : records) {
        if (r.subject_id.empty()) throw std::runtime_error("cohort: empty subject_id");
        if (r.age < 0) throw std::runtime_error("cohort: negative age for " + r.subject_id);
        if (r.values.size() != feature_names.size())
            throw std::runtime_error("cohort: record " + r.subject_id +
                                     " misaligned with feature names");
        if (!seen.emplace(r.subject_id, static_cast<int>(r.visit)).second)
            throw std::runtime_error("cohort: duplicate (subject_id, visit) pair: " +
                                     r.subject_id + "/" + to_string(r.visit));
    }
}

std::size_t LabeledDataset::n_positive() const {
    return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
}

std::size_t LabeledDataset::n_negative() const { return labels.size() - n_positive(); }

std::pair<std::size_t, std::size_t> LabeledDataset::class_counts() const {
    return {n_negative(), n_positive()};
}

void LabeledDataset::validate() const {
    if (x.rows() != labels.size() || x.rows() != subject_ids.size())
        throw std::runtime_error("dataset: row count mismatch");
    if (x.cols() != feature_names.size()) throw std::runtime_error("dataset: column mismatch");
    for (int l : labels)
        if (l != 0 && l != 1) throw std::runtime_error("dataset: labels must be 0/1");
    for (std::size_t i = 0; i < x.size(); ++i)
        if (!std::isfinite(x.data()[i]))
            throw std::runtime_error("dataset: non-finite value in feature matrix");
}

FeatureMap feature_map(const RawCohort& c, const SubjectRecord& r) {
    FeatureMap fm;
    for (std::size_t i = 0; i < c.feature_names.size(); ++i)
        if (r.values[i].has_value()) fm.emplace(c.feature_names[i], *r.values[i]);
    return fm;
}

RawCohort load_cohort(const std::string& path) {
    const csv::Table t = csv::read_file(path);
    for (std::size_t i = 0; i < schema::kMetaColumns.size(); ++i)
        if (i >= t.header.size() || t.header[i] != schema::kMetaColumns[i])
            throw std::runtime_error("cohort: header mismatch in " + path +
                                     ": expected leading columns subject_id,sex,age,visit");
    {
        std::set<std::string> uniq(t.header.begin(), t.header.end());
        if (uniq.size() != t.header.size())
            throw std::runtime_error("cohort: duplicate column names in " + path);
    }

    RawCohort c;
    const std::size_t meta = schema::kMetaColumns.size();
    c.feature_names.assign(t.header.begin() + static_cast<std::ptrdiff_t>(meta), t.header.end());
    c.records.reserve(t.rows.size());
    for (std::size_t ri = 0; ri < t.rows.size(); ++ri) {
        const auto& row = t.rows[ri];
        const std::size_t csv_row = ri + 2;  // 1-based, after header
        SubjectRecord rec;
        rec.subject_id = row[0];
        if (rec.subject_id.empty())
            throw std::runtime_error("cohort: empty subject_id at row " +
                                     std::to_string(csv_row));
        rec.sex = sex_from_string(row[1]);
        rec.age = static_cast<int>(csv::parse_number(row[2], csv_row, "age"));
        if (rec.age < 0)
            throw std::runtime_error("cohort: negative age at row " + std::to_string(csv_row));
        rec.visit = visit_from_string(row[3]);
        rec.values.resize(c.feature_names.size());
        for (std::size_t j = 0; j < c.feature_names.size(); ++j) {
            const std::string& cell = row[meta + j];
            if (cell.empty()) continue;
            const double v = csv::parse_number(cell, csv_row, c.feature_names[j]);
            const auto& name = c.feature_names[j];
            if (schema::is_mass_or_area(name) && v < 0.0)
                throw std::runtime_error("cohort: negative " + name + " at row " +
                                         std::to_string(csv_row));
            if (schema::is_bmd(name) && v <= 0.0)
                throw std::runtime_error("cohort: non-positive " + name + " at row " +
                                         std::to_string(csv_row));
            rec.values[j] = v;
        }
        c.records.push_back(std::move(rec));
    }
    c.validate();
    c.provenance.push_back("loaded " + path + " (" + std::to_string(c.records.size()) +
                           " records)");
    return c;
}

void save_cohort(const std::string& path, const RawCohort& c) {
    csv::Table t;
    t.header.reserve(schema::kMetaColumns.size() + c.feature_names.size());
    for (auto m : schema::kMetaColumns) t.header.emplace_back(m);
    t.header.insert(t.header.end(), c.feature_names.begin(), c.feature_names.end());
    t.rows.reserve(c.records.size());
    for (const auto& r : c.records) {
        std::vector<std::string> row;
        row.reserve(t.header.size());
        row.push_back(r.subject_id);
        row.push_back(to_string(r.sex));
        row.push_back(std::to_string(r.age));
        row.push_back(to_string(r.visit));
        for (const auto& v : r.values)
            row.push_back(v.has_value() ? csv::format_double(*v) : std::string());
        t.rows.push_back(std::move(row));
    }
    csv::write_file(path, t);
}

std::optional<int> label_diabetes(const FeatureMap& fm) {
    auto get = [&fm](std::string_view name) -> std::optional<double> {
        auto it = fm.find(name);
        if (it == fm.end()) return std::nullopt;
        return it->second;
    };
    const auto hba1c = get(schema::kHba1c);
    const auto glucose = get(schema::kFastingGlucose);
    const auto self_rep = get(schema::kSelfReported);
    const auto medication = get(schema::kMedication);
    if (!hba1c && !glucose && !self_rep && !medication) return std::nullopt;
    const bool diabetic = (self_rep && *self_rep != 0.0) || (hba1c && *hba1c >= 7.0) ||
                          (glucose && *glucose >= 126.0) || (medication && *medication != 0.0);
    return diabetic ? 1 : 0;
}

DropResult drop_sparse_columns(const RawCohort& c, double sparse_threshold) {
    if (sparse_threshold <= 0.0 || sparse_threshold > 1.0)
        throw std::invalid_argument("drop_sparse_columns: threshold must be in (0,1]");
    const std::size_t n = c.records.size();
    std::vector<std::size_t> keep;
    DropResult out;
    for (std::size_t j = 0; j < c.feature_names.size(); ++j) {
        std::size_t missing = 0;
        for (const auto& r : c.records)
            if (!r.values[j].has_value()) ++missing;
        const double frac = n == 0 ? 0.0 : static_cast<double>(missing) / static_cast<double>(n);
        if (frac > sparse_threshold)
            out.dropped.push_back(c.feature_names[j]);
        else
            keep.push_back(j);
    }
    out.cohort.provenance = c.provenance;
    for (std::size_t j : keep) out.cohort.feature_names.push_back(c.feature_names[j]);
    out.cohort.records.reserve(n);
    for (const auto& r : c.records) {
        SubjectRecord rec = r;
        rec.values.clear();
        rec.values.reserve(keep.size());
        for (std::size_t j : keep) rec.values.push_back(r.values[j]);
        out.cohort.records.push_back(std::move(rec));
    }
    std::string note = "dropped " + std::to_string(out.dropped.size()) +
                       " sparse columns (threshold " + csv::format_double(sparse_threshold) + ")";
    for (const auto& d : out.dropped) note += " " + d;
    out.cohort.provenance.push_back(std::move(note));
    return out;
}

ImputeResult impute_missing(const RawCohort& c) {
    ImputeResult out;
    out.cohort = c;
    auto& records = out.cohort.records;
    // Documented deterministic ordering: sort by (subject_id, visit).
    std::vector<std::size_t> order(records.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&records](std::size_t a, std::size_t b) {
        const auto& ra = records[a];
        const auto& rb = records[b];
        if (ra.subject_id != rb.subject_id) return ra.subject_id < rb.subject_id;
        return static_cast<int>(ra.visit) < static_cast<int>(rb.visit);
    });
    for (std::size_t j = 0; j < out.cohort.feature_names.size(); ++j) {
        std::vector<double> present;
        for (const auto& r : records)
            if (r.values[j].has_value()) present.push_back(*r.values[j]);
        std::optional<double> median;
        if (!present.empty()) {
            std::sort(present.begin(), present.end());
            const std::size_t n = present.size();
            median = n % 2 == 1 ? present[n / 2]
                                : 0.5 * (present[n / 2 - 1] + present[n / 2]);
        }
        std::optional<double> last;
        for (std::size_t oi : order) {
            auto& cell = records[oi].values[j];
            if (cell.has_value()) {
                last = *cell;
            } else if (last.has_value()) {
                cell = *last;
                ++out.forward_fills;
            } else if (median.has_value()) {
                cell = *median;  // leading gap
                ++out.median_fills;
            }
        }
    }
    out.cohort.provenance.push_back("imputed: " + std::to_string(out.forward_fills) +
                                    " forward fills, " + std::to_string(out.median_fills) +
                                    " median fills");
    return out;
}

RawCohort preprocess(const RawCohort& c, double sparse_threshold) {
    DropResult dropped = drop_sparse_columns(c, sparse_threshold);
    if (dropped.cohort.feature_names.empty())
        throw std::runtime_error("preprocess: every feature column exceeded the missingness "
                                 "threshold");
    return impute_missing(dropped.cohort).cohort;
}

LabeledDataset link_outcomes(const RawCohort& baseline, const RawCohort& followup,
                             LinkStats* stats, int age_min, int age_max) {
    LinkStats local;
    LabeledDataset out;
    out.feature_names = baseline.feature_names;
    out.feature_names.emplace_back(schema::kAgeColumn);
    out.feature_names.emplace_back(schema::kSexColumn);

    std::map<std::string, const SubjectRecord*> followup_by_id;
    for (const auto& r : followup.records)
        if (r.visit == Visit::followup) followup_by_id[r.subject_id] = &r;

    for (const auto& r : baseline.records) {
        if (r.visit != Visit::baseline) continue;
        if (r.age < age_min || r.age > age_max) {
            ++local.excluded_age;
            continue;
        }
        auto it = followup_by_id.find(r.subject_id);
        if (it == followup_by_id.end()) {
            ++local.excluded_no_followup;
            continue;
        }
        const auto label = label_diabetes(feature_map(followup, *it->second));
        if (!label.has_value()) {
            ++local.excluded_unlabelable;
            continue;
        }
        std::vector<double> row;
        row.reserve(out.feature_names.size());
        for (const auto& v : r.values) {
            if (!v.has_value())
                throw std::runtime_error("link_outcomes: baseline record " + r.subject_id +
                                         " still has missing values; preprocess first");
            row.push_back(*v);
        }
        row.push_back(static_cast<double>(r.age));
        row.push_back(r.sex == Sex::male ? 0.0 : 1.0);
        out.x.append_row(row);
        out.subject_ids.push_back(r.subject_id);
        out.labels.push_back(*label);
        ++local.linked;
    }
    if (stats != nullptr) *stats = local;
    if (out.labels.empty()) throw std::runtime_error("link_outcomes: zero linked subjects");
    out.validate();
    return out;
}

LabeledDataset select_rows(const LabeledDataset& data, const std::vector<std::size_t>& rows) {
    LabeledDataset out;
    out.feature_names = data.feature_names;
    for (std::size_t i : rows) {
        std::vector<double> row(data.x.row(i), data.x.row(i) + data.x.cols());
        out.x.append_row(row);
        out.subject_ids.push_back(data.subject_ids[i]);
        out.labels.push_back(data.labels[i]);
    }
    return out;
}

LabeledDataset select_columns(const LabeledDataset& data,
                              const std::vector<std::string>& features) {
    std::vector<std::size_t> idx;
    idx.reserve(features.size());
    for (const auto& f : features) {
        auto it = std::find(data.feature_names.begin(), data.feature_names.end(), f);
        if (it == data.feature_names.end())
            throw std::runtime_error("select_columns: unknown feature " + f);
        idx.push_back(static_cast<std::size_t>(it - data.feature_names.begin()));
    }
    LabeledDataset out;
    out.feature_names = features;
    out.subject_ids = data.subject_ids;
    out.labels = data.labels;
    out.x = Matrix(data.x.rows(), features.size());
    for (std::size_t i = 0; i < data.x.rows(); ++i)
        for (std::size_t j = 0; j < idx.size(); ++j) out.x(i, j) = data.x(i, idx[j]);
    return out;
}

std::pair<LabeledDataset, LabeledDataset> stratified_split(const LabeledDataset& data,
                                                           double test_fraction,
                                                           std::uint64_t seed) {
    if (test_fraction <= 0.0 || test_fraction >= 1.0)
        throw std::invalid_argument("stratified_split: test_fraction must be in (0,1)");
    std::vector<std::size_t> pos, neg;
    for (std::size_t i = 0; i < data.labels.size(); ++i)
        (data.labels[i] == 1 ? pos : neg).push_back(i);
    if (pos.size() < 2 || neg.size() < 2)
        throw std::runtime_error("stratified_split: each class needs at least 2 members");

    std::vector<bool> in_test(data.labels.size(), false);
    auto pick = [&](std::vector<std::size_t>& cls, std::string_view tag) {
        Rng rng(derive_seed(seed, tag));
        std::shuffle(cls.begin(), cls.end(), rng);
        auto want = static_cast<std::size_t>(
            std::llround(test_fraction * static_cast<double>(cls.size())));
        want = std::max<std::size_t>(1, std::min(want, cls.size() - 1));
        for (std::size_t i = 0; i < want; ++i) in_test[cls[i]] = true;
    };
    pick(neg, "split/neg");
    pick(pos, "split/pos");

    std::vector<std::size_t> train_rows, test_rows;
    for (std::size_t i = 0; i < in_test.size(); ++i)
        (in_test[i] ? test_rows : train_rows).push_back(i);
    return {select_rows(data, train_rows), select_rows(data, test_rows)};
}

}  // namespace dxtab::cohort
