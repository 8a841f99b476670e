#pragma once

// Classification metrics: confusion matrix, accuracy/precision/recall/F1 and
// rank-based ROC AUC with exported curve points.

#include <cstdint>
#include <vector>

namespace dxtab::report {

struct ConfusionMatrix {
    std::size_t tn = 0, fp = 0, fn = 0, tp = 0;
    std::size_t total() const { return tn + fp + fn + tp; }
};

struct MetricSet {
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    double roc_auc = 0.0;
    double threshold = 0.5;
    bool precision_defined = true;  // tp + fp > 0
    bool recall_defined = true;     // tp + fn > 0
    bool auc_defined = true;
};

struct RocPoint {
    double fpr, tpr, threshold;
};

struct RocResult {
    double auc = 0.0;
    std::vector<RocPoint> points;  // one per distinct threshold, plus endpoints
};

// Positive class = diabetic (label 1).
ConfusionMatrix confusion(const std::vector<int>& y_true, const std::vector<int>& y_pred);

// Metrics from a confusion matrix; AUC is not part of this computation.
MetricSet metrics(const ConfusionMatrix& cm);

// Mann-Whitney rank statistic with exact tie handling. Throws when only one
// class is present. Also emits the ROC curve at every distinct threshold.
RocResult roc_auc(const std::vector<int>& y_true, const std::vector<double>& scores);

// Trapezoidal area under emitted ROC points, the cross-check route.
double trapezoid_auc(const std::vector<RocPoint>& points);

std::vector<int> threshold_predictions(const std::vector<double>& scores, double threshold = 0.5);

}  // namespace dxtab::report
