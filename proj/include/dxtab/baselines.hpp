#pragma once

// The eight classical baseline classifiers, stratified cross-validation,
// grid search, soft voting and champion selection.

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "dxtab/cohort.hpp"
#include "dxtab/metrics.hpp"

namespace dxtab::baselines {

enum class BaselineKind {
    logistic_regression,
    random_forest,
    gradient_boosting,
    svm_rbf,
    knn,
    decision_tree,
    gaussian_nb,
    adaboost
};

std::string to_string(BaselineKind k);
BaselineKind baseline_from_string(const std::string& s);
const std::vector<BaselineKind>& all_baselines();

struct BaselineSpec {
    BaselineKind kind = BaselineKind::logistic_regression;
    std::map<std::string, double> hyperparameters;  // overrides on the kind defaults
    bool class_weighting = true;
    std::uint64_t seed = 0;

    double hyper(const std::string& name) const;
    static std::map<std::string, double> defaults(BaselineKind kind);
    void validate() const;
};

// Per-sample weights implementing n / (2 * n_class) automatic class weighting.
std::vector<double> class_weights(const std::vector<int>& labels);

class BaselineModel {
public:
    static BaselineModel fit(const BaselineSpec& spec, const cohort::LabeledDataset& train);

    // Checks feature names, not just the count.
    std::vector<double> predict_proba(const cohort::LabeledDataset& data) const;
    std::vector<double> predict_proba_matrix(const Matrix& x) const;

    const BaselineSpec& spec() const { return spec_; }
    const std::vector<std::string>& feature_names() const { return feature_names_; }
    bool converged() const { return converged_; }

    void save(const std::string& manifest_path, const std::string& blob_path) const;
    static BaselineModel load(const std::string& manifest_path, const std::string& blob_path);

    struct Impl;

private:
    BaselineSpec spec_;
    std::vector<std::string> feature_names_;
    bool converged_ = true;
    std::shared_ptr<const Impl> impl_;
};

struct CvResult {
    BaselineSpec spec;
    std::vector<double> fold_auc, fold_f1;
    double mean_auc = 0.0, std_auc = 0.0;
    double mean_f1 = 0.0, std_f1 = 0.0;
    double mean_accuracy = 0.0, mean_precision = 0.0, mean_recall = 0.0;
};

CvResult cross_validate(const BaselineSpec& spec, const cohort::LabeledDataset& data,
                        int folds = 5, std::uint64_t seed = 0);

// Ordered so grid iteration stays deterministic (first key outermost).
using Grid = std::vector<std::pair<std::string, std::vector<double>>>;

Grid default_grid(BaselineKind kind);

struct GridSearchResult {
    BaselineSpec best;
    CvResult best_cv;
    std::vector<CvResult> evaluated;
};

// Exhaustive search; best by mean CV ROC-AUC, ties by mean F1, then first in
// grid order.
GridSearchResult grid_search(const BaselineSpec& base, const Grid& grid,
                             const cohort::LabeledDataset& data, std::uint64_t seed = 0);

// Unweighted mean of member probabilities; needs >= 2 models.
std::vector<double> soft_vote(const std::vector<const BaselineModel*>& models,
                              const cohort::LabeledDataset& data);

// Index of the best entry: max ROC-AUC, ties by F1, ties by order.
std::size_t select_champion(const std::vector<report::MetricSet>& results);

}  // namespace dxtab::baselines
