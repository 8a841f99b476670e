#pragma once

// Weighted binary decision trees: Gini classification and variance-reduction
// regression. Shared by the decision-tree baseline, random forest, gradient
// boosting and AdaBoost stumps.

#include <cstdint>
#include <vector>

#include "dxtab/matrix.hpp"

namespace dxtab::baselines {

struct TreeNode {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1, right = -1;
    double value = 0.0;  // leaf payload: P(class 1) or regression response
};

struct TreeConfig {
    int max_depth = 10;
    std::size_t min_samples_split = 2;
    std::size_t min_samples_leaf = 1;
    int max_features = -1;  // -1 = all features; else a per-split random subset
    std::uint64_t seed = 0;
};

class Tree {
public:
    enum class Task { classification, regression };

    // For classification `target` holds 0/1 labels; for regression any reals.
    static Tree fit(Task task, const Matrix& x, const std::vector<double>& target,
                    const std::vector<double>& weights, const TreeConfig& cfg);

    double predict_one(const double* row) const;
    std::vector<double> predict(const Matrix& x) const;
    int leaf_of(const double* row) const;

    std::vector<TreeNode>& nodes() { return nodes_; }
    const std::vector<TreeNode>& nodes() const { return nodes_; }

    static Tree from_nodes(std::vector<TreeNode> nodes);

private:
    std::vector<TreeNode> nodes_;
};

}  // namespace dxtab::baselines
