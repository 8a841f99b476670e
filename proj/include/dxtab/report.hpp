#pragma once

// Report persistence: metrics JSON, the comparison table mirroring the
// headline five-column layout, ROC points, confusion matrices, importance
// rankings and the run manifest.

#include <optional>
#include <string>
#include <vector>

#include "dxtab/importance.hpp"
#include "dxtab/metrics.hpp"
#include "dxtab/selection.hpp"
#include "json.hpp"

namespace dxtab::report {

struct ModelEvaluation {
    std::string name;
    MetricSet metrics;
    ConfusionMatrix confusion;
    RocResult roc;
    std::optional<double> tuned_auc;  // grid-search CV AUC where applicable
};

struct RunOutputs {
    std::vector<ModelEvaluation> models;
    std::optional<ImportanceReport> importance;
    nlohmann::json manifest;  // seeds, config hash, version
};

// Writes metrics.json, comparison.csv, roc_points.csv, confusion.csv,
// importance.csv (when present) and manifest.json into `directory`.
// Returns the file names written.
std::vector<std::string> write_report(const RunOutputs& outputs, const std::string& directory);

// Individual emitters shared by the pipeline stages.
void write_comparison_csv(const std::string& path, const std::vector<ModelEvaluation>& models);
void write_metrics_json(const std::string& path, const std::vector<ModelEvaluation>& models);
void write_roc_points_csv(const std::string& path, const std::vector<ModelEvaluation>& models);
void write_confusion_csv(const std::string& path, const std::vector<ModelEvaluation>& models);
void write_importance_csv(const std::string& path, const ImportanceReport& report);

void write_scores_csv(const std::string& path, const selection::SelectionResult& result);
void write_projection_csv(const std::string& path, const selection::Projection& projection,
                          const std::vector<std::string>& ids, const std::vector<int>& labels);
void write_loadings_csv(const std::string& path, const selection::Projection& projection,
                        const std::vector<std::string>& feature_names);

// Probability-per-subject files consumed by the evaluate stage.
void write_predictions_csv(const std::string& path, const std::string& model_name,
                           const std::vector<std::string>& subject_ids,
                           const std::vector<double>& probabilities,
                           const std::vector<int>& labels);

struct PredictionFile {
    std::string model_name;
    std::vector<std::string> subject_ids;
    std::vector<double> probabilities;
    std::vector<int> labels;
};

PredictionFile read_predictions_csv(const std::string& path);

// One decimal place, the comparison-table convention.
std::string percent(double fraction);

}  // namespace dxtab::report
