#include "dxtab/metrics.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace dxtab::report {

ConfusionMatrix confusion(const std::vector<int>& y_true, const std::vector<int>& y_pred) {
    if (y_true.size() != y_pred.size())
        throw std::invalid_argument("confusion: length mismatch");
    ConfusionMatrix cm;
    for (std::size_t i = 0; i < y_true.size(); ++i) {
        const bool t = y_true[i] == 1;
        const bool p = y_pred[i] == 1;
        if (t && p)
            ++cm.tp;
        else if (t && !p)
            ++cm.fn;
        else if (!t && p)
            ++cm.fp;
        else
            ++cm.tn;
    }
    return cm;
}

MetricSet metrics(const ConfusionMatrix& cm) {
    if (cm.total() == 0) throw std::invalid_argument("metrics: empty confusion matrix");
    MetricSet m;
    const auto total = static_cast<double>(cm.total());
    m.accuracy = static_cast<double>(cm.tp + cm.tn) / total;
    if (cm.tp + cm.fp > 0) {
        m.precision = static_cast<double>(cm.tp) / static_cast<double>(cm.tp + cm.fp);
    } else {
        m.precision = 0.0;
        m.precision_defined = false;
    }
    if (cm.tp + cm.fn > 0) {
        m.recall = static_cast<double>(cm.tp) / static_cast<double>(cm.tp + cm.fn);
    } else {
        m.recall = 0.0;
        m.recall_defined = false;
    }
    m.f1 = (m.precision + m.recall) > 0.0
               ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
               : 0.0;
    m.auc_defined = false;
    return m;
}

RocResult roc_auc(const std::vector<int>& y_true, const std::vector<double>& scores) {
    if (y_true.size() != scores.size()) throw std::invalid_argument("roc_auc: length mismatch");
    const auto n = y_true.size();
    std::size_t n_pos = 0;
    for (int y : y_true) n_pos += y == 1 ? 1u : 0u;
    const std::size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0)
        throw std::invalid_argument("roc_auc: needs both classes present");

    // Rank method with midranks for ties.
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&scores](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    double rank_sum_pos = 0.0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double midrank = 0.5 * static_cast<double>(i + j) + 1.0;  // 1-based
        for (std::size_t t = i; t <= j; ++t)
            if (y_true[order[t]] == 1) rank_sum_pos += midrank;
        i = j + 1;
    }
    RocResult out;
    out.auc = (rank_sum_pos - 0.5 * static_cast<double>(n_pos) *
                                  (static_cast<double>(n_pos) + 1.0)) /
              (static_cast<double>(n_pos) * static_cast<double>(n_neg));

    // Curve points, descending threshold, one step per distinct score.
    std::vector<std::size_t> desc(order.rbegin(), order.rend());
    out.points.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
    std::size_t tp = 0, fp = 0;
    i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && scores[desc[j + 1]] == scores[desc[i]]) ++j;
        for (std::size_t t = i; t <= j; ++t) {
            if (y_true[desc[t]] == 1)
                ++tp;
            else
                ++fp;
        }
        out.points.push_back({static_cast<double>(fp) / static_cast<double>(n_neg),
                              static_cast<double>(tp) / static_cast<double>(n_pos),
                              scores[desc[i]]});
        i = j + 1;
    }
    return out;
}

double trapezoid_auc(const std::vector<RocPoint>& points) {
    double area = 0.0;
    for (std::size_t i = 1; i < points.size(); ++i)
        area += 0.5 * (points[i].fpr - points[i - 1].fpr) * (points[i].tpr + points[i - 1].tpr);
    return area;
}

std::vector<int> threshold_predictions(const std::vector<double>& scores, double threshold) {
    std::vector<int> out(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) out[i] = scores[i] >= threshold ? 1 : 0;
    return out;
}

}  // namespace dxtab::report
