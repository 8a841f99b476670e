#include "dxtab/report.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "dxtab/artifact.hpp"
#include "dxtab/csv.hpp"

namespace dxtab::report {

std::string percent(double fraction) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.1f", fraction * 100.0);
    return buf;
}

void write_comparison_csv(const std::string& path, const std::vector<ModelEvaluation>& models) {
    csv::Table t;
    t.header = {"model_name", "accuracy_pct", "precision_pct", "recall_pct", "roc_auc_pct",
                "tuned_auc_pct"};
    for (const auto& m : models) {
        t.rows.push_back({m.name, percent(m.metrics.accuracy), percent(m.metrics.precision),
                          percent(m.metrics.recall), percent(m.metrics.roc_auc),
                          m.tuned_auc.has_value() ? percent(*m.tuned_auc) : ""});
    }
    csv::write_file(path, t);
}

void write_metrics_json(const std::string& path, const std::vector<ModelEvaluation>& models) {
    nlohmann::json out = nlohmann::json::object();
    for (const auto& m : models) {
        nlohmann::json entry;
        entry["accuracy"] = m.metrics.accuracy;
        entry["precision"] = m.metrics.precision;
        entry["precision_defined"] = m.metrics.precision_defined;
        entry["recall"] = m.metrics.recall;
        entry["recall_defined"] = m.metrics.recall_defined;
        entry["f1"] = m.metrics.f1;
        entry["roc_auc"] = m.metrics.roc_auc;
        entry["threshold"] = m.metrics.threshold;
        entry["confusion"] = {{"tn", m.confusion.tn},
                              {"fp", m.confusion.fp},
                              {"fn", m.confusion.fn},
                              {"tp", m.confusion.tp}};
        if (m.tuned_auc.has_value()) entry["tuned_auc"] = *m.tuned_auc;
        out[m.name] = entry;
    }
    artifact::write_json(path, out);
}

void write_roc_points_csv(const std::string& path, const std::vector<ModelEvaluation>& models) {
    csv::Table t;
    t.header = {"model_name", "fpr", "tpr", "threshold"};
    for (const auto& m : models)
        for (const auto& p : m.roc.points)
            t.rows.push_back({m.name, csv::format_double(p.fpr), csv::format_double(p.tpr),
                              std::isfinite(p.threshold) ? csv::format_double(p.threshold)
                                                         : "inf"});
    csv::write_file(path, t);
}

void write_confusion_csv(const std::string& path, const std::vector<ModelEvaluation>& models) {
    csv::Table t;
    t.header = {"model_name", "tn", "fp", "fn", "tp"};
    for (const auto& m : models)
        t.rows.push_back({m.name, std::to_string(m.confusion.tn), std::to_string(m.confusion.fp),
                          std::to_string(m.confusion.fn), std::to_string(m.confusion.tp)});
    csv::write_file(path, t);
}

void write_importance_csv(const std::string& path, const ImportanceReport& report) {
    csv::Table t;
    t.header = {"feature", "mean_auc_drop", "std_auc_drop", "normalized", "tier"};
    for (const auto& f : report.features)
        t.rows.push_back({f.feature_name, csv::format_double(f.mean_auc_drop),
                          csv::format_double(f.std_auc_drop), csv::format_double(f.normalized),
                          to_string(f.tier)});
    csv::write_file(path, t);
}

std::vector<std::string> write_report(const RunOutputs& outputs, const std::string& directory) {
    std::filesystem::create_directories(directory);
    const auto at = [&directory](const char* name) {
        return (std::filesystem::path(directory) / name).string();
    };
    std::vector<std::string> written;
    write_metrics_json(at("metrics.json"), outputs.models);
    written.emplace_back("metrics.json");
    write_comparison_csv(at("comparison.csv"), outputs.models);
    written.emplace_back("comparison.csv");
    write_roc_points_csv(at("roc_points.csv"), outputs.models);
    written.emplace_back("roc_points.csv");
    write_confusion_csv(at("confusion.csv"), outputs.models);
    written.emplace_back("confusion.csv");
    if (outputs.importance.has_value()) {
        write_importance_csv(at("importance.csv"), *outputs.importance);
        written.emplace_back("importance.csv");
    }
    artifact::write_json(at("manifest.json"), outputs.manifest);
    written.emplace_back("manifest.json");
    return written;
}

void write_scores_csv(const std::string& path, const selection::SelectionResult& result) {
    csv::Table t;
    t.header = {"feature", "pearson_r", "band", "mi_bits", "score", "selected"};
    for (const auto& s : result.scores)
        t.rows.push_back({s.feature_name, csv::format_double(s.pearson_r), to_string(s.band),
                          csv::format_double(s.mi), csv::format_double(s.importance),
                          s.selected ? "1" : "0"});
    csv::write_file(path, t);
}

void write_projection_csv(const std::string& path, const selection::Projection& projection,
                          const std::vector<std::string>& ids, const std::vector<int>& labels) {
    csv::Table t;
    t.header = {"subject_id", "x", "y", "label"};
    for (std::size_t i = 0; i < projection.coordinates.rows(); ++i) {
        const double x = projection.coordinates(i, 0);
        const double y =
            projection.coordinates.cols() > 1 ? projection.coordinates(i, 1) : 0.0;
        t.rows.push_back({ids[i], csv::format_double(x), csv::format_double(y),
                          std::to_string(labels[i])});
    }
    csv::write_file(path, t);
}

void write_loadings_csv(const std::string& path, const selection::Projection& projection,
                        const std::vector<std::string>& feature_names) {
    csv::Table t;
    t.header = {"feature"};
    for (std::size_t c = 0; c < projection.loadings.cols(); ++c)
        t.header.push_back("pc" + std::to_string(c + 1));
    for (std::size_t j = 0; j < projection.loadings.rows(); ++j) {
        std::vector<std::string> row = {feature_names[j]};
        for (std::size_t c = 0; c < projection.loadings.cols(); ++c)
            row.push_back(csv::format_double(projection.loadings(j, c)));
        t.rows.push_back(row);
    }
    csv::write_file(path, t);
}

void write_predictions_csv(const std::string& path, const std::string& model_name,
                           const std::vector<std::string>& subject_ids,
                           const std::vector<double>& probabilities,
                           const std::vector<int>& labels) {
    csv::Table t;
    t.header = {"model_name", "subject_id", "probability", "label"};
    for (std::size_t i = 0; i < subject_ids.size(); ++i)
        t.rows.push_back({model_name, subject_ids[i], csv::format_double(probabilities[i]),
                          std::to_string(labels[i])});
    csv::write_file(path, t);
}

PredictionFile read_predictions_csv(const std::string& path) {
    const auto t = csv::read_file(path);
    PredictionFile out;
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        const auto& row = t.rows[i];
        if (out.model_name.empty()) out.model_name = row[0];
        out.subject_ids.push_back(row[1]);
        out.probabilities.push_back(csv::parse_number(row[2], i + 2, "probability"));
        out.labels.push_back(static_cast<int>(csv::parse_number(row[3], i + 2, "label")));
    }
    return out;
}

}  // namespace dxtab::report
