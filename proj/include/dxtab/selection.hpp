#pragma once

// Feature scoring (Pearson correlation, binned mutual information), the
// percentile-based ensemble selector with multicollinearity pruning, and
// PCA / t-SNE projections for cluster views.

#include <cstdint>
#include <string>
#include <vector>

#include "dxtab/cohort.hpp"
#include "dxtab/matrix.hpp"

namespace dxtab::selection {

enum class Band { very_strong, strong, moderate, weak, negligible };
std::string to_string(Band b);

struct PearsonResult {
    double r = 0.0;
    bool degenerate = false;  // a constant input; r defined as 0
};

double pearson(const std::vector<double>& x, const std::vector<double>& y);
PearsonResult pearson_full(const std::vector<double>& x, const std::vector<double>& y);

// |r| bands: >=0.8 very strong; [0.6,0.8) strong; [0.4,0.6) moderate;
// [0.2,0.4) weak; <0.2 negligible.
Band interpret_correlation(double r);

// Base-2 mutual information between x (discretized into `bins` equal-width
// bins over its observed range) and a binary target.
double mutual_information(const std::vector<double>& x, const std::vector<int>& y, int bins = 10);

struct FeatureScore {
    std::string feature_name;
    double pearson_r = 0.0;
    double mi = 0.0;          // bits
    double importance = 0.0;  // combined score, normalized to [0,1]
    Band band = Band::negligible;
    bool selected = false;
};

struct SelectionConfig {
    double alpha = 0.25;            // selection rate for the percentile rules
    double r_min = 0.12;            // Pearson magnitude rule
    double collinearity_cap = 0.85; // max pairwise |r| among selected features
    int mi_bins = 10;
};

struct SelectionResult {
    std::vector<std::string> selected;  // descending combined score
    std::vector<FeatureScore> scores;   // one per input feature
    double alpha = 0.0;
    std::vector<std::pair<std::string, std::string>> dropped_collinear;
};

// Candidates are the union of (a) |r| >= r_min, (b) MI >= the 100(1-alpha)
// percentile of MI, (c) combined score >= the 100(1-alpha) percentile; then
// greedy pruning drops any candidate whose |r| with an already-kept feature
// exceeds the cap. Throws when no candidate survives.
SelectionResult ensemble_select(const cohort::LabeledDataset& data,
                                const SelectionConfig& cfg = {});

enum class ProjectionMethod { pca, tsne };

struct Projection {
    ProjectionMethod method = ProjectionMethod::pca;
    Matrix coordinates;                     // n x k
    std::vector<double> explained_variance; // per retained component (PCA)
    Matrix loadings;                        // p x k (PCA)
    std::vector<std::string> notes;         // e.g. t-SNE pre-reduction
};

// Centers the data, eigendecomposes the covariance, and retains the smallest
// k whose cumulative explained variance reaches variance_target. Sign
// convention: the largest-magnitude loading of each component is positive.
Projection pca(const Matrix& data, double variance_target = 0.95);

struct TsneConfig {
    double perplexity = 30.0;
    int iterations = 1000;
    double early_exaggeration = 12.0;
    int exaggeration_iters = 250;
    double learning_rate = 0.0;  // <= 0: auto, max(n / early_exaggeration, 50)
    std::uint64_t seed = 0;
};

// Exact-gradient t-SNE to 2-D. Refuses n >= 5000; inputs with more than 50
// columns are PCA-reduced to 50 first.
Projection tsne(const Matrix& data, const TsneConfig& cfg);

// Final KL divergence trace (for the monotone-tail property test).
Projection tsne(const Matrix& data, const TsneConfig& cfg, std::vector<double>* kl_trace);

}  // namespace dxtab::selection
