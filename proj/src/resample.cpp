#include "dxtab/resample.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "dxtab/rng.hpp"
#include "dxtab/svm.hpp"

namespace dxtab::resample {

std::string to_string(StrategyKind k) {
    switch (k) {
        case StrategyKind::smote: return "smote";
        case StrategyKind::borderline_smote: return "borderline_smote";
        case StrategyKind::svm_smote: return "svm_smote";
        case StrategyKind::adasyn: return "adasyn";
        case StrategyKind::smote_tomek: return "smote_tomek";
        case StrategyKind::smote_enn: return "smote_enn";
    }
    return "smote";
}

StrategyKind strategy_from_string(const std::string& s) {
    for (StrategyKind k : all_strategies())
        if (to_string(k) == s) return k;
    throw std::invalid_argument("resample: unknown strategy \"" + s + "\"");
}

const std::vector<StrategyKind>& all_strategies() {
    static const std::vector<StrategyKind> order = {
        StrategyKind::smote,      StrategyKind::borderline_smote, StrategyKind::svm_smote,
        StrategyKind::adasyn,     StrategyKind::smote_tomek,      StrategyKind::smote_enn};
    return order;
}

int adaptive_k(std::size_t n_minority, int k_default) {
    if (n_minority < 2)
        throw std::runtime_error("adaptive_k: resampling impossible with fewer than 2 minority "
                                 "samples");
    return std::max(1, std::min(k_default, static_cast<int>(n_minority) - 1));
}

namespace {

double sq_dist(const double* a, const double* b, std::size_t p) {
    double d = 0.0;
    for (std::size_t j = 0; j < p; ++j) {
        const double c = a[j] - b[j];
        d += c * c;
    }
    return d;
}

// Indices of the k nearest rows of `pool` to `query`, excluding exclude_idx
// (an index into pool, or npos). Deterministic tie-break by index.
std::vector<std::size_t> knn_indices(const Matrix& pool, const double* query, std::size_t k,
                                     std::size_t exclude_idx) {
    std::vector<std::pair<double, std::size_t>> dist;
    dist.reserve(pool.rows());
    for (std::size_t i = 0; i < pool.rows(); ++i) {
        if (i == exclude_idx) continue;
        dist.emplace_back(sq_dist(pool.row(i), query, pool.cols()), i);
    }
    k = std::min(k, dist.size());
    std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
    std::vector<std::size_t> out(k);
    for (std::size_t i = 0; i < k; ++i) out[i] = dist[i].second;
    return out;
}

struct Split {
    std::vector<std::size_t> minority, majority;
    int minority_label = 1;
};

Split split_classes(const cohort::LabeledDataset& d) {
    Split s;
    std::vector<std::size_t> pos, neg;
    for (std::size_t i = 0; i < d.labels.size(); ++i)
        (d.labels[i] == 1 ? pos : neg).push_back(i);
    if (pos.empty() || neg.empty())
        throw std::runtime_error("resample: needs both classes present");
    if (pos.size() <= neg.size()) {
        s.minority = std::move(pos);
        s.majority = std::move(neg);
        s.minority_label = 1;
    } else {
        s.minority = std::move(neg);
        s.majority = std::move(pos);
        s.minority_label = 0;
    }
    return s;
}

Matrix gather_rows(const cohort::LabeledDataset& d, const std::vector<std::size_t>& rows) {
    Matrix m(rows.size(), d.x.cols());
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < d.x.cols(); ++j) m(i, j) = d.x(rows[i], j);
    return m;
}

bool all_rows_identical(const Matrix& m) {
    for (std::size_t i = 1; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j)
            if (m(i, j) != m(0, j)) return false;
    return true;
}

// Core SMOTE interpolation: per-seed synthetic counts, neighbors among the
// minority class, u ~ Uniform(0,1) along the segment.
std::vector<std::vector<double>> interpolate(const Matrix& minority,
                                             const std::vector<std::size_t>& seeds,
                                             const std::vector<std::size_t>& counts, int k,
                                             Rng& rng) {
    std::vector<std::vector<double>> synthetic;
    const std::size_t p = minority.cols();
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (std::size_t si = 0; si < seeds.size(); ++si) {
        const std::size_t seed_row = seeds[si];
        if (counts[si] == 0) continue;
        const auto nns =
            knn_indices(minority, minority.row(seed_row), static_cast<std::size_t>(k), seed_row);
        for (std::size_t c = 0; c < counts[si]; ++c) {
            std::vector<double> row(p);
            if (nns.empty()) {
                for (std::size_t j = 0; j < p; ++j) row[j] = minority(seed_row, j);
            } else {
                std::uniform_int_distribution<std::size_t> pick(0, nns.size() - 1);
                const std::size_t nn = nns[pick(rng)];
                const double u = unit(rng);
                for (std::size_t j = 0; j < p; ++j)
                    row[j] = minority(seed_row, j) + u * (minority(nn, j) - minority(seed_row, j));
            }
            synthetic.push_back(std::move(row));
        }
    }
    return synthetic;
}

// Spreads `total` synthetics across seeds: an even base plus the remainder on
// the first seeds in index order.
std::vector<std::size_t> even_allocation(std::size_t n_seeds, std::size_t total) {
    std::vector<std::size_t> counts(n_seeds, n_seeds == 0 ? 0 : total / n_seeds);
    if (n_seeds > 0)
        for (std::size_t i = 0; i < total % n_seeds; ++i) ++counts[i];
    return counts;
}

cohort::LabeledDataset append_synthetic(const cohort::LabeledDataset& d,
                                        const std::vector<std::vector<double>>& synthetic,
                                        int label) {
    cohort::LabeledDataset out = d;
    std::size_t idx = 0;
    for (const auto& row : synthetic) {
        out.x.append_row(row);
        out.labels.push_back(label);
        out.subject_ids.push_back("synthetic_" + std::to_string(idx++));
    }
    return out;
}

cohort::LabeledDataset remove_rows(const cohort::LabeledDataset& d,
                                   const std::vector<bool>& drop) {
    cohort::LabeledDataset out;
    out.feature_names = d.feature_names;
    for (std::size_t i = 0; i < d.labels.size(); ++i) {
        if (drop[i]) continue;
        out.x.append_row(std::vector<double>(d.x.row(i), d.x.row(i) + d.x.cols()));
        out.labels.push_back(d.labels[i]);
        out.subject_ids.push_back(d.subject_ids[i]);
    }
    return out;
}

// 3-NN relabeling pass used by ENN; returns the majority-vote label per row.
std::vector<int> three_nn_votes(const cohort::LabeledDataset& d) {
    std::vector<int> votes(d.labels.size());
    for (std::size_t i = 0; i < d.labels.size(); ++i) {
        const auto nns = knn_indices(d.x, d.x.row(i), 3, i);
        int pos = 0;
        for (std::size_t nn : nns) pos += d.labels[nn] == 1 ? 1 : 0;
        votes[i] = 2 * pos >= static_cast<int>(nns.size()) + 1 ? 1 : 0;
    }
    return votes;
}

ResampleOutcome smote_core(const cohort::LabeledDataset& data, const ResampleStrategy& strategy,
                           const std::vector<std::size_t>& seed_subset_in) {
    const Split split = split_classes(data);
    const std::size_t deficit = split.majority.size() - split.minority.size();
    ResampleOutcome out;
    if (deficit == 0) {
        out.data = data;
        return out;
    }
    Matrix minority = gather_rows(data, split.minority);
    Rng rng(derive_seed(strategy.seed, "resample/" + to_string(strategy.kind)));

    if (all_rows_identical(minority)) {
        // Degenerate geometry: interpolation cannot produce anything new.
        std::vector<std::vector<double>> dup(
            deficit, std::vector<double>(minority.row(0), minority.row(0) + minority.cols()));
        out.data = append_synthetic(data, dup, split.minority_label);
        out.synthetic_added = deficit;
        out.degenerate_fallback = true;
        return out;
    }

    // Seeds are positions within the minority matrix.
    std::vector<std::size_t> seeds = seed_subset_in;
    if (seeds.empty()) {
        seeds.resize(split.minority.size());
        std::iota(seeds.begin(), seeds.end(), std::size_t{0});
    }
    const int k = adaptive_k(split.minority.size(), strategy.k_neighbors);
    const auto counts = even_allocation(seeds.size(), deficit);
    auto synthetic = interpolate(minority, seeds, counts, k, rng);
    out.data = append_synthetic(data, synthetic, split.minority_label);
    out.synthetic_added = synthetic.size();
    return out;
}

}  // namespace

ResampleOutcome resample(const cohort::LabeledDataset& data, const ResampleStrategy& strategy) {
    const Split split = split_classes(data);
    if (split.minority.size() < 2)
        throw std::runtime_error("resample: needs at least 2 minority samples");

    switch (strategy.kind) {
        case StrategyKind::smote:
            return smote_core(data, strategy, {});

        case StrategyKind::borderline_smote: {
            // Danger set: strictly more than half of the mixed-class k
            // neighbors are majority, but not all of them.
            const int k = adaptive_k(split.minority.size(), strategy.k_neighbors);
            Matrix minority = gather_rows(data, split.minority);
            std::vector<std::size_t> danger;
            for (std::size_t mi = 0; mi < split.minority.size(); ++mi) {
                const std::size_t row = split.minority[mi];
                const auto nns = knn_indices(data.x, data.x.row(row), static_cast<std::size_t>(k),
                                             row);
                std::size_t maj = 0;
                for (std::size_t nn : nns)
                    if (data.labels[nn] != split.minority_label) ++maj;
                if (2 * maj > nns.size() && maj < nns.size()) danger.push_back(mi);
            }
            ResampleOutcome out = smote_core(data, strategy, danger);  // falls back when empty
            out.degenerate_fallback = out.degenerate_fallback || danger.empty();
            return out;
        }

        case StrategyKind::svm_smote: {
            // Seeds restricted to minority support vectors of a soft-margin
            // kernel classifier fitted on the data.
            svm::SvmConfig cfg;
            cfg.max_passes = 2;
            cfg.max_iterations = 50 * data.labels.size();
            const auto model = svm::SvmModel::fit(data.x, data.labels, cfg);
            std::vector<bool> is_sv(data.labels.size(), false);
            for (std::size_t idx : model.support_indices()) is_sv[idx] = true;
            std::vector<std::size_t> seeds;
            for (std::size_t mi = 0; mi < split.minority.size(); ++mi)
                if (is_sv[split.minority[mi]]) seeds.push_back(mi);
            ResampleOutcome out = smote_core(data, strategy, seeds);
            out.degenerate_fallback = out.degenerate_fallback || seeds.empty();
            return out;
        }

        case StrategyKind::adasyn: {
            const int k = adaptive_k(split.minority.size(), strategy.k_neighbors);
            const std::size_t deficit = split.majority.size() - split.minority.size();
            if (deficit == 0) {
                ResampleOutcome out;
                out.data = data;
                return out;
            }
            // Per-seed difficulty: fraction of majority points among its k
            // neighbors in the full data.
            std::vector<double> r(split.minority.size(), 0.0);
            double r_sum = 0.0;
            for (std::size_t mi = 0; mi < split.minority.size(); ++mi) {
                const std::size_t row = split.minority[mi];
                const auto nns = knn_indices(data.x, data.x.row(row), static_cast<std::size_t>(k),
                                             row);
                std::size_t maj = 0;
                for (std::size_t nn : nns)
                    if (data.labels[nn] != split.minority_label) ++maj;
                r[mi] = nns.empty() ? 0.0
                                    : static_cast<double>(maj) / static_cast<double>(nns.size());
                r_sum += r[mi];
            }
            std::vector<std::size_t> counts(split.minority.size(), 0);
            if (r_sum <= 0.0) {
                counts = even_allocation(split.minority.size(), deficit);
            } else {
                // Largest-remainder rounding so the counts total the deficit.
                std::vector<double> exact(split.minority.size());
                std::size_t base_total = 0;
                for (std::size_t i = 0; i < r.size(); ++i) {
                    exact[i] = r[i] / r_sum * static_cast<double>(deficit);
                    counts[i] = static_cast<std::size_t>(exact[i]);
                    base_total += counts[i];
                }
                std::vector<std::size_t> order(r.size());
                std::iota(order.begin(), order.end(), std::size_t{0});
                std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
                    const double fa = exact[a] - std::floor(exact[a]);
                    const double fb = exact[b] - std::floor(exact[b]);
                    if (fa != fb) return fa > fb;
                    return a < b;
                });
                for (std::size_t i = 0; base_total < deficit && i < order.size();
                     ++i, ++base_total)
                    ++counts[order[i]];
            }
            Matrix minority = gather_rows(data, split.minority);
            Rng rng(derive_seed(strategy.seed, "resample/adasyn"));
            ResampleOutcome out;
            if (all_rows_identical(minority)) {
                std::vector<std::vector<double>> dup(
                    deficit,
                    std::vector<double>(minority.row(0), minority.row(0) + minority.cols()));
                out.data = append_synthetic(data, dup, split.minority_label);
                out.synthetic_added = deficit;
                out.degenerate_fallback = true;
                return out;
            }
            std::vector<std::size_t> seeds(split.minority.size());
            std::iota(seeds.begin(), seeds.end(), std::size_t{0});
            auto synthetic = interpolate(minority, seeds, counts, k, rng);
            out.data = append_synthetic(data, synthetic, split.minority_label);
            out.synthetic_added = synthetic.size();
            return out;
        }

        case StrategyKind::smote_tomek: {
            ResampleStrategy base = strategy;
            base.kind = StrategyKind::smote;
            ResampleOutcome out = smote_core(data, base, {});
            const auto& d = out.data;
            const std::size_t n_before = data.labels.size();
            // Tomek links: mutual nearest neighbors with opposite labels.
            std::vector<std::size_t> nn1(d.labels.size());
            for (std::size_t i = 0; i < d.labels.size(); ++i)
                nn1[i] = knn_indices(d.x, d.x.row(i), 1, i).at(0);
            std::vector<bool> drop(d.labels.size(), false);
            for (std::size_t i = 0; i < d.labels.size(); ++i) {
                const std::size_t j = nn1[i];
                if (j > i && nn1[j] == i && d.labels[i] != d.labels[j]) {
                    drop[i] = true;  // both endpoints of the link
                    drop[j] = true;
                }
            }
            for (std::size_t i = 0; i < n_before; ++i)
                if (drop[i]) ++out.originals_removed;
            out.data = remove_rows(d, drop);
            return out;
        }

        case StrategyKind::smote_enn: {
            ResampleStrategy base = strategy;
            base.kind = StrategyKind::smote;
            ResampleOutcome out = smote_core(data, base, {});
            std::vector<bool> is_original(out.data.labels.size(), false);
            for (std::size_t i = 0; i < data.labels.size(); ++i) is_original[i] = true;
            // Edited nearest neighbours, iterated to a fixpoint so the output
            // never contains a sample whose 3 nearest neighbours all disagree.
            for (int pass = 0; pass < 50; ++pass) {
                if (out.data.labels.size() < 4) break;
                const auto votes = three_nn_votes(out.data);
                std::vector<bool> drop(out.data.labels.size(), false);
                std::size_t dropped = 0;
                std::array<std::size_t, 2> kept_per_class = {0, 0};
                for (std::size_t i = 0; i < votes.size(); ++i) {
                    drop[i] = votes[i] != out.data.labels[i];
                    if (!drop[i])
                        ++kept_per_class[static_cast<std::size_t>(out.data.labels[i])];
                    else
                        ++dropped;
                }
                if (dropped == 0) break;
                if (kept_per_class[0] < 3 || kept_per_class[1] < 3) break;  // keep both classes
                for (std::size_t i = 0; i < drop.size(); ++i)
                    if (drop[i] && is_original[i]) ++out.originals_removed;
                std::vector<bool> next_original;
                for (std::size_t i = 0; i < drop.size(); ++i)
                    if (!drop[i]) next_original.push_back(is_original[i]);
                out.data = remove_rows(out.data, drop);
                is_original.assign(next_original.begin(), next_original.end());
            }
            return out;
        }
    }
    throw std::logic_error("resample: unhandled strategy");
}

BestStrategyResult select_best_strategy(const cohort::LabeledDataset& data,
                                        const std::vector<ResampleStrategy>& strategies) {
    if (strategies.empty())
        throw std::invalid_argument("select_best_strategy: no strategies supplied");
    BestStrategyResult best;
    bool have_best = false;
    std::size_t best_rank = 0;
    for (std::size_t si = 0; si < strategies.size(); ++si) {
        const auto& s = strategies[si];
        StrategyTraceEntry entry;
        entry.kind = s.kind;
        try {
            ResampleOutcome outcome = resample(data, s);
            entry.n_negative = outcome.data.n_negative();
            entry.n_positive = outcome.data.n_positive();
            entry.synthetic_added = outcome.synthetic_added;
            entry.originals_removed = outcome.originals_removed;
            entry.imbalance = entry.n_negative > entry.n_positive
                                  ? entry.n_negative - entry.n_positive
                                  : entry.n_positive - entry.n_negative;
            const bool better =
                !have_best || entry.imbalance < best.trace[best_rank].imbalance ||
                (entry.imbalance == best.trace[best_rank].imbalance &&
                 entry.originals_removed < best.trace[best_rank].originals_removed);
            if (better) {
                best.strategy = s;
                best.outcome = std::move(outcome);
                best_rank = si;
                have_best = true;
            }
        } catch (const std::exception& e) {
            entry.error = e.what();
        }
        best.trace.push_back(entry);
    }
    if (!have_best) throw std::runtime_error("select_best_strategy: no applicable strategy");
    best.trace[best_rank].selected = true;
    return best;
}

void AugmentConfig::validate() const {
    if (noise_sigma < 0.0) throw std::invalid_argument("AugmentConfig: noise_sigma must be >= 0");
    if (mixup_alpha <= 0.0) throw std::invalid_argument("AugmentConfig: mixup_alpha must be > 0");
    if (augment_factor < 1) throw std::invalid_argument("AugmentConfig: augment_factor >= 1");
    if (mixup_probability < 0.0 || mixup_probability > 1.0)
        throw std::invalid_argument("AugmentConfig: mixup_probability in [0,1]");
}

double sample_beta(double alpha, Rng& rng) {
    std::gamma_distribution<double> gamma(alpha, 1.0);
    const double g1 = gamma(rng);
    const double g2 = gamma(rng);
    const double denom = g1 + g2;
    return denom > 0.0 ? g1 / denom : 0.5;
}

AugmentResult augment_minority(const cohort::LabeledDataset& data, const AugmentConfig& cfg) {
    cfg.validate();
    std::vector<std::size_t> minority;
    for (std::size_t i = 0; i < data.labels.size(); ++i)
        if (data.labels[i] == 1) minority.push_back(i);
    if (minority.empty()) throw std::runtime_error("augment_minority: minority class is empty");

    const std::size_t p = data.x.cols();
    // Relative noise scale: per-feature population sd on the input data.
    std::vector<double> feature_sd(p, 0.0);
    for (std::size_t j = 0; j < p; ++j) {
        double mu = 0.0;
        for (std::size_t i = 0; i < data.x.rows(); ++i) mu += data.x(i, j);
        mu /= static_cast<double>(data.x.rows());
        double var = 0.0;
        for (std::size_t i = 0; i < data.x.rows(); ++i) {
            const double c = data.x(i, j) - mu;
            var += c * c;
        }
        feature_sd[j] = std::sqrt(var / static_cast<double>(data.x.rows()));
    }

    AugmentResult out;
    out.data = data;
    Rng rng(derive_seed(cfg.seed, "augment"));
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    std::size_t copy_idx = 0;
    for (std::size_t mi : minority) {
        for (int c = 0; c < cfg.augment_factor; ++c) {
            std::vector<double> row(data.x.row(mi), data.x.row(mi) + p);
            for (std::size_t j = 0; j < p; ++j)
                row[j] += cfg.noise_sigma * feature_sd[j] * normal(rng);
            if (minority.size() > 1 && cfg.mixup_probability > 0.0 &&
                unit(rng) < cfg.mixup_probability) {
                std::uniform_int_distribution<std::size_t> pick(0, minority.size() - 1);
                std::size_t other = pick(rng);
                if (minority[other] == mi) other = (other + 1) % minority.size();
                const double lambda = sample_beta(cfg.mixup_alpha, rng);
                const double* o = data.x.row(minority[other]);
                for (std::size_t j = 0; j < p; ++j)
                    row[j] = lambda * row[j] + (1.0 - lambda) * o[j];
            }
            out.data.x.append_row(row);
            out.data.labels.push_back(1);
            out.data.subject_ids.push_back("augmented_" + std::to_string(copy_idx++));
            ++out.copies_added;
        }
    }

    out.sample_weights.resize(out.data.labels.size());
    for (std::size_t i = 0; i < out.data.labels.size(); ++i)
        out.sample_weights[i] =
            out.data.labels[i] == 1 ? cfg.minority_weight : cfg.majority_weight;
    return out;
}

}  // namespace dxtab::resample
