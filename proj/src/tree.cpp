#include "dxtab/tree.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "dxtab/rng.hpp"

namespace dxtab::baselines {

namespace {

struct BestSplit {
    int feature = -1;
    double threshold = 0.0;
    double gain = -std::numeric_limits<double>::infinity();
};

// Impurity decrease scan along one sorted feature. For classification the
// criterion is weighted Gini; for regression, weighted variance reduction.
BestSplit scan_feature(Tree::Task task, const Matrix& x, const std::vector<double>& target,
                       const std::vector<double>& w, const std::vector<std::size_t>& rows,
                       std::size_t feature, std::size_t min_leaf) {
    std::vector<std::pair<double, std::size_t>> sorted;
    sorted.reserve(rows.size());
    for (std::size_t r : rows) sorted.emplace_back(x(r, feature), r);
    std::sort(sorted.begin(), sorted.end());

    double w_total = 0.0, wy_total = 0.0, wyy_total = 0.0;
    for (const auto& [v, r] : sorted) {
        (void)v;
        w_total += w[r];
        wy_total += w[r] * target[r];
        wyy_total += w[r] * target[r] * target[r];
    }
    if (w_total <= 0.0) return {};

    auto impurity = [task](double wsum, double wy, double wyy) {
        if (wsum <= 0.0) return 0.0;
        const double mean = wy / wsum;
        if (task == Tree::Task::classification) return wsum * 2.0 * mean * (1.0 - mean);
        return wyy - wsum * mean * mean;  // weighted SSE
    };
    const double parent = impurity(w_total, wy_total, wyy_total);

    BestSplit best;
    double wl = 0.0, wyl = 0.0, wyyl = 0.0;
    std::size_t count_left = 0;
    for (std::size_t i = 0; i + 1 < sorted.size(); ++i) {
        const auto [v, r] = sorted[i];
        wl += w[r];
        wyl += w[r] * target[r];
        wyyl += w[r] * target[r] * target[r];
        ++count_left;
        if (v == sorted[i + 1].first) continue;  // no threshold between equal values
        if (count_left < min_leaf || sorted.size() - count_left < min_leaf) continue;
        const double gain = parent - impurity(wl, wyl, wyyl) -
                            impurity(w_total - wl, wy_total - wyl, wyy_total - wyyl);
        if (gain > best.gain) {
            best.feature = static_cast<int>(feature);
            // Threshold at the left boundary value keeps routing decisions a
            // pure function of value order, so strictly monotone feature
            // transforms cannot change any prediction.
            best.threshold = v;
            best.gain = gain;
        }
    }
    return best;
}

struct Builder {
    Tree::Task task;
    const Matrix& x;
    const std::vector<double>& target;
    const std::vector<double>& w;
    const TreeConfig& cfg;
    std::vector<TreeNode> nodes;
    Rng rng;

    int build(const std::vector<std::size_t>& rows, int depth) {
        double wsum = 0.0, wy = 0.0;
        for (std::size_t r : rows) {
            wsum += w[r];
            wy += w[r] * target[r];
        }
        const double value = wsum > 0.0 ? wy / wsum : 0.0;

        const int id = static_cast<int>(nodes.size());
        nodes.push_back(TreeNode{-1, 0.0, -1, -1, value});

        if (depth >= cfg.max_depth || rows.size() < cfg.min_samples_split) return id;
        bool pure = true;
        for (std::size_t r : rows)
            if (target[r] != target[rows[0]]) {
                pure = false;
                break;
            }
        if (pure) return id;

        // Candidate features: all, or a seeded random subset per split.
        std::vector<std::size_t> features(x.cols());
        std::iota(features.begin(), features.end(), std::size_t{0});
        if (cfg.max_features > 0 && static_cast<std::size_t>(cfg.max_features) < features.size()) {
            std::shuffle(features.begin(), features.end(), rng);
            features.resize(static_cast<std::size_t>(cfg.max_features));
            std::sort(features.begin(), features.end());
        }

        BestSplit best;
        for (std::size_t f : features) {
            const BestSplit s = scan_feature(task, x, target, w, rows, f, cfg.min_samples_leaf);
            if (s.feature >= 0 && s.gain > best.gain) best = s;
        }
        if (best.feature < 0) return id;

        std::vector<std::size_t> left, right;
        for (std::size_t r : rows)
            (x(r, static_cast<std::size_t>(best.feature)) <= best.threshold ? left : right)
                .push_back(r);
        if (left.empty() || right.empty()) return id;

        nodes[static_cast<std::size_t>(id)].feature = best.feature;
        nodes[static_cast<std::size_t>(id)].threshold = best.threshold;
        const int l = build(left, depth + 1);
        nodes[static_cast<std::size_t>(id)].left = l;
        const int r = build(right, depth + 1);
        nodes[static_cast<std::size_t>(id)].right = r;
        return id;
    }
};

}  // namespace

Tree Tree::fit(Task task, const Matrix& x, const std::vector<double>& target,
               const std::vector<double>& weights, const TreeConfig& cfg) {
    Builder b{task, x, target, weights, cfg, {}, Rng(derive_seed(cfg.seed, "tree"))};
    std::vector<std::size_t> rows(x.rows());
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    b.build(rows, 0);
    Tree t;
    t.nodes_ = std::move(b.nodes);
    return t;
}

int Tree::leaf_of(const double* row) const {
    int id = 0;
    while (nodes_[static_cast<std::size_t>(id)].feature >= 0) {
        const auto& n = nodes_[static_cast<std::size_t>(id)];
        id = row[n.feature] <= n.threshold ? n.left : n.right;
    }
    return id;
}

double Tree::predict_one(const double* row) const {
    return nodes_[static_cast<std::size_t>(leaf_of(row))].value;
}

std::vector<double> Tree::predict(const Matrix& x) const {
    std::vector<double> out(x.rows());
    for (std::size_t i = 0; i < x.rows(); ++i) out[i] = predict_one(x.row(i));
    return out;
}

Tree Tree::from_nodes(std::vector<TreeNode> nodes) {
    Tree t;
    t.nodes_ = std::move(nodes);
    return t;
}

}  // namespace dxtab::baselines
