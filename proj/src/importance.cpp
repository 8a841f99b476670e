#include "dxtab/importance.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "dxtab/metrics.hpp"
#include "dxtab/rng.hpp"

namespace dxtab::report {

std::string to_string(Tier t) {
    switch (t) {
        case Tier::high: return "high";
        case Tier::moderate: return "moderate";
        case Tier::least: return "least";
    }
    return "least";
}

ImportanceReport permutation_importance(const ProbaFn& predict,
                                        const cohort::LabeledDataset& data, int repeats,
                                        std::uint64_t seed) {
    if (repeats < 1) throw std::invalid_argument("permutation_importance: repeats >= 1");
    const auto [n_neg, n_pos] = data.class_counts();
    if (n_neg == 0 || n_pos == 0)
        throw std::runtime_error("permutation_importance: needs both classes");

    ImportanceReport out;
    out.baseline_auc = roc_auc(data.labels, predict(data.x)).auc;

    const std::size_t n = data.x.rows();
    for (std::size_t j = 0; j < data.feature_names.size(); ++j) {
        std::vector<double> drops;
        drops.reserve(static_cast<std::size_t>(repeats));
        for (int r = 0; r < repeats; ++r) {
            Matrix permuted = data.x;
            std::vector<std::size_t> order(n);
            std::iota(order.begin(), order.end(), std::size_t{0});
            Rng rng(derive_seed(seed, "permutation",
                                j * static_cast<std::size_t>(repeats) +
                                    static_cast<std::size_t>(r)));
            std::shuffle(order.begin(), order.end(), rng);
            for (std::size_t i = 0; i < n; ++i) permuted(i, j) = data.x(order[i], j);
            drops.push_back(out.baseline_auc - roc_auc(data.labels, predict(permuted)).auc);
        }
        double mu = 0.0;
        for (double d : drops) mu += d;
        mu /= static_cast<double>(drops.size());
        double var = 0.0;
        for (double d : drops) var += (d - mu) * (d - mu);
        FeatureImportance fi;
        fi.feature_name = data.feature_names[j];
        fi.mean_auc_drop = mu;
        fi.std_auc_drop = std::sqrt(var / static_cast<double>(drops.size()));
        out.features.push_back(fi);
    }

    double max_drop = 0.0;
    for (const auto& f : out.features) max_drop = std::max(max_drop, f.mean_auc_drop);
    for (auto& f : out.features)
        f.normalized = max_drop > 0.0 ? std::max(f.mean_auc_drop, 0.0) / max_drop : 0.0;

    std::stable_sort(out.features.begin(), out.features.end(),
                     [](const FeatureImportance& a, const FeatureImportance& b) {
                         return a.mean_auc_drop > b.mean_auc_drop;
                     });
    assign_tiers(out);
    return out;
}

void assign_tiers(ImportanceReport& report, const TierThresholds& thresholds) {
    for (auto& f : report.features) {
        if (f.normalized >= thresholds.high)
            f.tier = Tier::high;
        else if (f.normalized >= thresholds.moderate)
            f.tier = Tier::moderate;
        else
            f.tier = Tier::least;
    }
}

}  // namespace dxtab::report
