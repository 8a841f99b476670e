#include "dxtab/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <variant>

#include "dxtab/artifact.hpp"
#include "dxtab/rng.hpp"
#include "dxtab/svm.hpp"
#include "dxtab/tree.hpp"

namespace dxtab::baselines {

std::string to_string(BaselineKind k) {
    switch (k) {
        case BaselineKind::logistic_regression: return "logistic_regression";
        case BaselineKind::random_forest: return "random_forest";
        case BaselineKind::gradient_boosting: return "gradient_boosting";
        case BaselineKind::svm_rbf: return "svm_rbf";
        case BaselineKind::knn: return "knn";
        case BaselineKind::decision_tree: return "decision_tree";
        case BaselineKind::gaussian_nb: return "gaussian_nb";
        case BaselineKind::adaboost: return "adaboost";
    }
    return "logistic_regression";
}

BaselineKind baseline_from_string(const std::string& s) {
    for (BaselineKind k : all_baselines())
        if (to_string(k) == s) return k;
    throw std::invalid_argument("baselines: unknown kind \"" + s + "\"");
}

const std::vector<BaselineKind>& all_baselines() {
    static const std::vector<BaselineKind> kinds = {
        BaselineKind::logistic_regression, BaselineKind::random_forest,
        BaselineKind::gradient_boosting,   BaselineKind::svm_rbf,
        BaselineKind::knn,                 BaselineKind::decision_tree,
        BaselineKind::gaussian_nb,         BaselineKind::adaboost};
    return kinds;
}

std::map<std::string, double> BaselineSpec::defaults(BaselineKind kind) {
    switch (kind) {
        case BaselineKind::logistic_regression: return {{"l2", 1.0}, {"max_iter", 1000}};
        case BaselineKind::random_forest: return {{"n_estimators", 100}, {"max_depth", 10}};
        case BaselineKind::gradient_boosting:
            return {{"n_estimators", 100}, {"learning_rate", 0.1}, {"max_depth", 6}};
        case BaselineKind::svm_rbf: return {{"c", 1.0}, {"max_train", 2000}};
        case BaselineKind::knn: return {{"k", 5}};
        case BaselineKind::decision_tree: return {{"max_depth", 10}};
        case BaselineKind::gaussian_nb: return {{"var_floor", 1e-9}};
        case BaselineKind::adaboost: return {{"n_estimators", 50}};
    }
    return {};
}

double BaselineSpec::hyper(const std::string& name) const {
    auto it = hyperparameters.find(name);
    if (it != hyperparameters.end()) return it->second;
    const auto defs = defaults(kind);
    auto dit = defs.find(name);
    if (dit == defs.end())
        throw std::invalid_argument("baselines: unknown hyperparameter \"" + name + "\" for " +
                                    to_string(kind));
    return dit->second;
}

void BaselineSpec::validate() const {
    const auto defs = defaults(kind);
    for (const auto& [name, value] : hyperparameters) {
        if (defs.find(name) == defs.end())
            throw std::invalid_argument("baselines: hyperparameter \"" + name +
                                        "\" is not valid for " + to_string(kind));
        if (!std::isfinite(value))
            throw std::invalid_argument("baselines: non-finite hyperparameter " + name);
    }
}

std::vector<double> class_weights(const std::vector<int>& labels) {
    const auto n = static_cast<double>(labels.size());
    double n_pos = 0.0;
    for (int y : labels) n_pos += y == 1 ? 1.0 : 0.0;
    const double n_neg = n - n_pos;
    if (n_pos == 0.0 || n_neg == 0.0)
        throw std::runtime_error("class_weights: needs both classes present");
    const double w_pos = n / (2.0 * n_pos);
    const double w_neg = n / (2.0 * n_neg);
    std::vector<double> w(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) w[i] = labels[i] == 1 ? w_pos : w_neg;
    return w;
}

namespace {

struct LogRegModel {
    std::vector<double> weights;
    double bias = 0.0;
    bool converged = false;
};

struct ForestModel {
    std::vector<Tree> trees;
};

struct GbmModel {
    std::vector<Tree> trees;
    double f0 = 0.0;
    double learning_rate = 0.1;
};

struct KnnModel {
    Matrix x;
    std::vector<int> y;
    int k = 5;
};

struct TreeModel {
    Tree tree;
};

struct NbModel {
    double log_prior[2] = {0.0, 0.0};
    std::vector<double> mean[2];
    std::vector<double> var[2];
};

struct AdaModel {
    std::vector<Tree> stumps;
    std::vector<double> alphas;
};

double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

LogRegModel fit_logreg(const Matrix& x, const std::vector<int>& y, const std::vector<double>& w,
                       double l2, int max_iter) {
    const std::size_t n = x.rows(), p = x.cols();
    LogRegModel m;
    m.weights.assign(p, 0.0);
    double w_sum = 0.0, lip = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        w_sum += w[i];
        double sq = 1.0;  // bias column
        for (std::size_t j = 0; j < p; ++j) sq += x(i, j) * x(i, j);
        lip += w[i] * sq;
    }
    // Trace bound on the weighted logistic Hessian plus the ridge term.
    const double step = 1.0 / (lip / (4.0 * w_sum) + l2);

    std::vector<double> grad(p + 1);
    for (int iter = 0; iter < max_iter; ++iter) {
        std::fill(grad.begin(), grad.end(), 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            double z = m.bias;
            for (std::size_t j = 0; j < p; ++j) z += m.weights[j] * x(i, j);
            const double err = w[i] * (sigmoid(z) - static_cast<double>(y[i]));
            for (std::size_t j = 0; j < p; ++j) grad[j] += err * x(i, j);
            grad[p] += err;
        }
        double gmax = 0.0;
        for (std::size_t j = 0; j <= p; ++j) {
            grad[j] /= w_sum;
            if (j < p) grad[j] += l2 * m.weights[j];  // bias unpenalized
            gmax = std::max(gmax, std::abs(grad[j]));
        }
        if (gmax < 1e-6) {
            m.converged = true;
            break;
        }
        for (std::size_t j = 0; j < p; ++j) m.weights[j] -= step * grad[j];
        m.bias -= step * grad[p];
    }
    return m;
}

ForestModel fit_forest(const Matrix& x, const std::vector<int>& y, const std::vector<double>& w,
                       int n_estimators, int max_depth, std::uint64_t seed) {
    const std::size_t n = x.rows();
    std::vector<double> target(y.begin(), y.end());
    ForestModel m;
    m.trees.reserve(static_cast<std::size_t>(n_estimators));
    const int max_features =
        std::max(1, static_cast<int>(std::lround(std::sqrt(static_cast<double>(x.cols())))));
    for (int t = 0; t < n_estimators; ++t) {
        Rng rng(derive_seed(seed, "forest/bootstrap", static_cast<std::uint64_t>(t)));
        std::uniform_int_distribution<std::size_t> pick(0, n - 1);
        Matrix bx(n, x.cols());
        std::vector<double> bt(n), bw(n);
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t src = pick(rng);
            for (std::size_t j = 0; j < x.cols(); ++j) bx(i, j) = x(src, j);
            bt[i] = target[src];
            bw[i] = w[src];
        }
        TreeConfig cfg;
        cfg.max_depth = max_depth;
        cfg.max_features = max_features;
        cfg.seed = derive_seed(seed, "forest/tree", static_cast<std::uint64_t>(t));
        m.trees.push_back(Tree::fit(Tree::Task::classification, bx, bt, bw, cfg));
    }
    return m;
}

double forest_proba_one(const ForestModel& m, const double* row) {
    // Probability = fraction of trees voting positive.
    double votes = 0.0;
    for (const auto& t : m.trees) votes += t.predict_one(row) >= 0.5 ? 1.0 : 0.0;
    return votes / static_cast<double>(m.trees.size());
}

GbmModel fit_gbm(const Matrix& x, const std::vector<int>& y, const std::vector<double>& w,
                 int n_estimators, double learning_rate, int max_depth, std::uint64_t seed) {
    const std::size_t n = x.rows();
    GbmModel m;
    m.learning_rate = learning_rate;
    double w_sum = 0.0, wy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        w_sum += w[i];
        wy += w[i] * static_cast<double>(y[i]);
    }
    const double p_bar = std::clamp(wy / w_sum, 1e-6, 1.0 - 1e-6);
    m.f0 = std::log(p_bar / (1.0 - p_bar));

    std::vector<double> f(n, m.f0), residual(n);
    for (int stage = 0; stage < n_estimators; ++stage) {
        for (std::size_t i = 0; i < n; ++i)
            residual[i] = static_cast<double>(y[i]) - sigmoid(f[i]);
        TreeConfig cfg;
        cfg.max_depth = max_depth;
        cfg.min_samples_leaf = 1;
        cfg.seed = derive_seed(seed, "gbm/tree", static_cast<std::uint64_t>(stage));
        Tree tree = Tree::fit(Tree::Task::regression, x, residual, w, cfg);

        // Newton leaf values: sum(w*r) / sum(w*p*(1-p)) per terminal node.
        std::map<int, std::pair<double, double>> leaf_stats;
        std::vector<int> leaf(n);
        for (std::size_t i = 0; i < n; ++i) {
            leaf[i] = tree.leaf_of(x.row(i));
            const double pi = sigmoid(f[i]);
            auto& [num, den] = leaf_stats[leaf[i]];
            num += w[i] * residual[i];
            den += w[i] * pi * (1.0 - pi);
        }
        for (auto& node : tree.nodes())
            if (node.feature < 0) {
                auto it = leaf_stats.find(static_cast<int>(&node - tree.nodes().data()));
                if (it != leaf_stats.end())
                    node.value = it->second.first / std::max(it->second.second, 1e-12);
            }
        for (std::size_t i = 0; i < n; ++i)
            f[i] += learning_rate *
                    tree.nodes()[static_cast<std::size_t>(leaf[i])].value;
        m.trees.push_back(std::move(tree));
    }
    return m;
}

double gbm_score_one(const GbmModel& m, const double* row) {
    double f = m.f0;
    for (const auto& t : m.trees) f += m.learning_rate * t.predict_one(row);
    return f;
}

NbModel fit_nb(const Matrix& x, const std::vector<int>& y, const std::vector<double>& w,
               double var_floor) {
    const std::size_t n = x.rows(), p = x.cols();
    NbModel m;
    double wc[2] = {0.0, 0.0};
    for (int c = 0; c < 2; ++c) {
        m.mean[c].assign(p, 0.0);
        m.var[c].assign(p, 0.0);
    }
    for (std::size_t i = 0; i < n; ++i) wc[y[i]] += w[i];
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < p; ++j) m.mean[y[i]][j] += w[i] * x(i, j);
    for (int c = 0; c < 2; ++c)
        for (std::size_t j = 0; j < p; ++j) m.mean[c][j] /= wc[c];
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < p; ++j) {
            const double d = x(i, j) - m.mean[y[i]][j];
            m.var[y[i]][j] += w[i] * d * d;
        }
    for (int c = 0; c < 2; ++c)
        for (std::size_t j = 0; j < p; ++j)
            m.var[c][j] = std::max(m.var[c][j] / wc[c], var_floor);
    const double total = wc[0] + wc[1];
    m.log_prior[0] = std::log(wc[0] / total);
    m.log_prior[1] = std::log(wc[1] / total);
    return m;
}

double nb_proba_one(const NbModel& m, const double* row, std::size_t p) {
    double logp[2];
    for (int c = 0; c < 2; ++c) {
        logp[c] = m.log_prior[c];
        for (std::size_t j = 0; j < p; ++j) {
            const double v = m.var[c][j];
            const double d = row[j] - m.mean[c][j];
            logp[c] += -0.5 * std::log(2.0 * 3.14159265358979323846 * v) - d * d / (2.0 * v);
        }
    }
    const double mx = std::max(logp[0], logp[1]);
    const double e0 = std::exp(logp[0] - mx), e1 = std::exp(logp[1] - mx);
    return e1 / (e0 + e1);
}

AdaModel fit_ada(const Matrix& x, const std::vector<int>& y, const std::vector<double>& w_in,
                 int n_estimators, std::uint64_t seed) {
    const std::size_t n = x.rows();
    std::vector<double> w = w_in;
    double w_sum = std::accumulate(w.begin(), w.end(), 0.0);
    for (auto& v : w) v /= w_sum;
    std::vector<double> target(y.begin(), y.end());

    AdaModel m;
    for (int stage = 0; stage < n_estimators; ++stage) {
        TreeConfig cfg;
        cfg.max_depth = 1;  // decision stumps
        cfg.seed = derive_seed(seed, "ada/stump", static_cast<std::uint64_t>(stage));
        Tree stump = Tree::fit(Tree::Task::classification, x, target, w, cfg);
        double err = 0.0;
        std::vector<int> pred(n);
        for (std::size_t i = 0; i < n; ++i) {
            pred[i] = stump.predict_one(x.row(i)) >= 0.5 ? 1 : 0;
            if (pred[i] != y[i]) err += w[i];
        }
        err = std::clamp(err, 1e-10, 1.0);
        if (err >= 0.5 && stage > 0) break;  // no informative learner left
        const double alpha = 0.5 * std::log((1.0 - err) / err);
        m.stumps.push_back(std::move(stump));
        m.alphas.push_back(alpha);
        if (err <= 1e-10) break;  // perfect stump

        double norm = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double margin = (pred[i] == y[i]) ? 1.0 : -1.0;
            w[i] *= std::exp(-alpha * margin);
            norm += w[i];
        }
        for (auto& v : w) v /= norm;
    }
    return m;
}

double ada_proba_one(const AdaModel& m, const double* row) {
    // Staged votes through the logistic link: p = sigmoid(2 * sum alpha_m h_m).
    double f = 0.0;
    for (std::size_t s = 0; s < m.stumps.size(); ++s) {
        const double h = m.stumps[s].predict_one(row) >= 0.5 ? 1.0 : -1.0;
        f += m.alphas[s] * h;
    }
    return sigmoid(2.0 * f);
}

}  // namespace

struct BaselineModel::Impl {
    std::variant<LogRegModel, ForestModel, GbmModel, svm::SvmModel, KnnModel, TreeModel, NbModel,
                 AdaModel>
        model;
};

BaselineModel BaselineModel::fit(const BaselineSpec& spec, const cohort::LabeledDataset& train) {
    spec.validate();
    const auto [n_neg, n_pos] = train.class_counts();
    if (n_neg == 0 || n_pos == 0) throw std::runtime_error("baselines: needs both classes");

    std::vector<double> w = spec.class_weighting
                                ? class_weights(train.labels)
                                : std::vector<double>(train.labels.size(), 1.0);

    BaselineModel out;
    out.spec_ = spec;
    out.feature_names_ = train.feature_names;
    auto impl = std::make_shared<Impl>();

    switch (spec.kind) {
        case BaselineKind::logistic_regression: {
            auto m = fit_logreg(train.x, train.labels, w, spec.hyper("l2"),
                                static_cast<int>(spec.hyper("max_iter")));
            out.converged_ = m.converged;
            impl->model = std::move(m);
            break;
        }
        case BaselineKind::random_forest:
            impl->model = fit_forest(train.x, train.labels, w,
                                     static_cast<int>(spec.hyper("n_estimators")),
                                     static_cast<int>(spec.hyper("max_depth")), spec.seed);
            break;
        case BaselineKind::gradient_boosting:
            impl->model = fit_gbm(train.x, train.labels, w,
                                  static_cast<int>(spec.hyper("n_estimators")),
                                  spec.hyper("learning_rate"),
                                  static_cast<int>(spec.hyper("max_depth")), spec.seed);
            break;
        case BaselineKind::svm_rbf: {
            const auto cap = static_cast<std::size_t>(spec.hyper("max_train"));
            Matrix x = train.x;
            std::vector<int> y = train.labels;
            if (train.labels.size() > cap) {
                // Desk-scale subsample, stratified by shuffling each class.
                std::vector<std::size_t> pos, neg;
                for (std::size_t i = 0; i < y.size(); ++i)
                    (y[i] == 1 ? pos : neg).push_back(i);
                Rng rng(derive_seed(spec.seed, "svm/subsample"));
                std::shuffle(pos.begin(), pos.end(), rng);
                std::shuffle(neg.begin(), neg.end(), rng);
                const double frac = static_cast<double>(cap) / static_cast<double>(y.size());
                std::size_t keep_pos = std::max<std::size_t>(
                    1, static_cast<std::size_t>(std::lround(frac * static_cast<double>(pos.size()))));
                std::size_t keep_neg = std::min(neg.size(), cap - std::min(cap, keep_pos));
                keep_pos = std::min(keep_pos, pos.size());
                std::vector<std::size_t> rows(pos.begin(),
                                              pos.begin() + static_cast<std::ptrdiff_t>(keep_pos));
                rows.insert(rows.end(), neg.begin(),
                            neg.begin() + static_cast<std::ptrdiff_t>(keep_neg));
                std::sort(rows.begin(), rows.end());
                Matrix sub(rows.size(), x.cols());
                std::vector<int> suby(rows.size());
                for (std::size_t i = 0; i < rows.size(); ++i) {
                    for (std::size_t j = 0; j < x.cols(); ++j) sub(i, j) = x(rows[i], j);
                    suby[i] = y[rows[i]];
                }
                x = std::move(sub);
                y = std::move(suby);
            }
            svm::SvmConfig cfg;
            cfg.c = spec.hyper("c");
            if (spec.class_weighting) {
                const auto n = static_cast<double>(y.size());
                double np = 0.0;
                for (int v : y) np += v == 1 ? 1.0 : 0.0;
                cfg.positive_weight = n / (2.0 * np);
                cfg.negative_weight = n / (2.0 * (n - np));
            }
            impl->model = svm::SvmModel::fit(x, y, cfg);
            break;
        }
        case BaselineKind::knn: {
            const int k = static_cast<int>(spec.hyper("k"));
            if (train.labels.size() < static_cast<std::size_t>(k))
                throw std::runtime_error("knn: fewer samples than k");
            impl->model = KnnModel{train.x, train.labels, k};
            break;
        }
        case BaselineKind::decision_tree: {
            TreeConfig cfg;
            cfg.max_depth = static_cast<int>(spec.hyper("max_depth"));
            cfg.seed = spec.seed;
            std::vector<double> target(train.labels.begin(), train.labels.end());
            impl->model =
                TreeModel{Tree::fit(Tree::Task::classification, train.x, target, w, cfg)};
            break;
        }
        case BaselineKind::gaussian_nb:
            impl->model = fit_nb(train.x, train.labels, w, spec.hyper("var_floor"));
            break;
        case BaselineKind::adaboost:
            impl->model = fit_ada(train.x, train.labels, w,
                                  static_cast<int>(spec.hyper("n_estimators")), spec.seed);
            break;
    }
    out.impl_ = std::move(impl);
    return out;
}

std::vector<double> BaselineModel::predict_proba(const cohort::LabeledDataset& data) const {
    if (data.feature_names != feature_names_)
        throw std::runtime_error("baselines: feature names do not match the fitted model");
    return predict_proba_matrix(data.x);
}

std::vector<double> BaselineModel::predict_proba_matrix(const Matrix& x) const {
    if (x.cols() != feature_names_.size())
        throw std::runtime_error("baselines: feature count mismatch");
    std::vector<double> out(x.rows());

    if (const auto* m = std::get_if<LogRegModel>(&impl_->model)) {
        for (std::size_t i = 0; i < x.rows(); ++i) {
            double z = m->bias;
            for (std::size_t j = 0; j < x.cols(); ++j) z += m->weights[j] * x(i, j);
            out[i] = sigmoid(z);
        }
    } else if (const auto* f = std::get_if<ForestModel>(&impl_->model)) {
        for (std::size_t i = 0; i < x.rows(); ++i) out[i] = forest_proba_one(*f, x.row(i));
    } else if (const auto* g = std::get_if<GbmModel>(&impl_->model)) {
        for (std::size_t i = 0; i < x.rows(); ++i) out[i] = sigmoid(gbm_score_one(*g, x.row(i)));
    } else if (const auto* s = std::get_if<svm::SvmModel>(&impl_->model)) {
        out = s->predict_proba(x);
    } else if (const auto* k = std::get_if<KnnModel>(&impl_->model)) {
        for (std::size_t i = 0; i < x.rows(); ++i) {
            std::vector<std::pair<double, std::size_t>> dist;
            dist.reserve(k->x.rows());
            for (std::size_t t = 0; t < k->x.rows(); ++t) {
                double d2 = 0.0;
                for (std::size_t j = 0; j < x.cols(); ++j) {
                    const double c = x(i, j) - k->x(t, j);
                    d2 += c * c;
                }
                dist.emplace_back(d2, t);
            }
            const auto kk = static_cast<std::size_t>(k->k);
            std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(kk),
                              dist.end());
            if (dist[0].first == 0.0) {
                out[i] = static_cast<double>(k->y[dist[0].second]);  // exact match wins
                continue;
            }
            double wsum = 0.0, wpos = 0.0;
            for (std::size_t t = 0; t < kk; ++t) {
                const double wgt = 1.0 / std::sqrt(dist[t].first);
                wsum += wgt;
                wpos += k->y[dist[t].second] == 1 ? wgt : 0.0;
            }
            out[i] = wpos / wsum;
        }
    } else if (const auto* t = std::get_if<TreeModel>(&impl_->model)) {
        for (std::size_t i = 0; i < x.rows(); ++i) out[i] = t->tree.predict_one(x.row(i));
    } else if (const auto* nb = std::get_if<NbModel>(&impl_->model)) {
        for (std::size_t i = 0; i < x.rows(); ++i) out[i] = nb_proba_one(*nb, x.row(i), x.cols());
    } else if (const auto* a = std::get_if<AdaModel>(&impl_->model)) {
        for (std::size_t i = 0; i < x.rows(); ++i) out[i] = ada_proba_one(*a, x.row(i));
    }
    return out;
}

CvResult cross_validate(const BaselineSpec& spec, const cohort::LabeledDataset& data, int folds,
                        std::uint64_t seed) {
    if (folds < 2) throw std::invalid_argument("cross_validate: folds must be >= 2");
    const auto [n_neg, n_pos] = data.class_counts();
    if (n_neg < static_cast<std::size_t>(folds) || n_pos < static_cast<std::size_t>(folds))
        throw std::runtime_error("cross_validate: class count below fold count");

    // Stratified assignment: shuffle each class, deal round-robin.
    std::vector<int> fold_of(data.labels.size(), -1);
    for (int cls = 0; cls < 2; ++cls) {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < data.labels.size(); ++i)
            if (data.labels[i] == cls) idx.push_back(i);
        Rng rng(derive_seed(seed, "cv/class", static_cast<std::uint64_t>(cls)));
        std::shuffle(idx.begin(), idx.end(), rng);
        for (std::size_t i = 0; i < idx.size(); ++i)
            fold_of[idx[i]] = static_cast<int>(i % static_cast<std::size_t>(folds));
    }

    CvResult res;
    res.spec = spec;
    for (int f = 0; f < folds; ++f) {
        std::vector<std::size_t> train_rows, test_rows;
        for (std::size_t i = 0; i < data.labels.size(); ++i)
            (fold_of[i] == f ? test_rows : train_rows).push_back(i);
        auto train = cohort::select_rows(data, train_rows);
        auto test = cohort::select_rows(data, test_rows);
        BaselineSpec fold_spec = spec;
        fold_spec.seed = derive_seed(seed, "cv/fold", static_cast<std::uint64_t>(f));
        auto model = BaselineModel::fit(fold_spec, train);
        const auto proba = model.predict_proba(test);
        res.fold_auc.push_back(report::roc_auc(test.labels, proba).auc);
        const auto cm =
            report::confusion(test.labels, report::threshold_predictions(proba, 0.5));
        const auto m = report::metrics(cm);
        res.fold_f1.push_back(m.f1);
        res.mean_accuracy += m.accuracy / static_cast<double>(folds);
        res.mean_precision += m.precision / static_cast<double>(folds);
        res.mean_recall += m.recall / static_cast<double>(folds);
    }
    auto mean_std = [](const std::vector<double>& v) {
        double mu = 0.0;
        for (double x : v) mu += x;
        mu /= static_cast<double>(v.size());
        double var = 0.0;
        for (double x : v) var += (x - mu) * (x - mu);
        return std::make_pair(mu, std::sqrt(var / static_cast<double>(v.size())));
    };
    std::tie(res.mean_auc, res.std_auc) = mean_std(res.fold_auc);
    std::tie(res.mean_f1, res.std_f1) = mean_std(res.fold_f1);
    return res;
}

Grid default_grid(BaselineKind kind) {
    switch (kind) {
        case BaselineKind::logistic_regression: return {{"l2", {0.01, 0.1, 1.0, 10.0}}};
        case BaselineKind::random_forest: return {{"max_depth", {5, 10, 15}}};
        case BaselineKind::gradient_boosting:
            return {{"max_depth", {3, 6}}, {"learning_rate", {0.05, 0.1}}};
        case BaselineKind::svm_rbf: return {{"c", {0.5, 1.0, 2.0}}};
        case BaselineKind::knn: return {{"k", {3, 5, 9}}};
        case BaselineKind::decision_tree: return {{"max_depth", {5, 10, 15}}};
        case BaselineKind::gaussian_nb: return {{"var_floor", {1e-9}}};
        case BaselineKind::adaboost: return {{"n_estimators", {25, 50, 100}}};
    }
    return {};
}

GridSearchResult grid_search(const BaselineSpec& base, const Grid& grid,
                             const cohort::LabeledDataset& data, std::uint64_t seed) {
    if (grid.empty()) throw std::invalid_argument("grid_search: empty grid");
    std::vector<std::size_t> sizes;
    std::size_t total = 1;
    for (const auto& [name, values] : grid) {
        (void)name;
        if (values.empty()) throw std::invalid_argument("grid_search: empty value list");
        sizes.push_back(values.size());
        total *= values.size();
    }

    GridSearchResult out;
    std::size_t best_idx = 0;
    for (std::size_t it = 0; it < total; ++it) {
        BaselineSpec spec = base;
        std::size_t rem = it;
        // First grid key is the outermost loop.
        for (std::size_t gi = grid.size(); gi-- > 0;) {
            spec.hyperparameters[grid[gi].first] = grid[gi].second[rem % sizes[gi]];
            rem /= sizes[gi];
        }
        CvResult cv = cross_validate(spec, data, 5, seed);
        out.evaluated.push_back(cv);
        const auto& best_cv = out.evaluated[best_idx];
        const bool better = it == 0 || cv.mean_auc > best_cv.mean_auc ||
                            (cv.mean_auc == best_cv.mean_auc && cv.mean_f1 > best_cv.mean_f1);
        if (better) best_idx = it;
    }
    out.best_cv = out.evaluated[best_idx];
    out.best = out.best_cv.spec;
    return out;
}

std::vector<double> soft_vote(const std::vector<const BaselineModel*>& models,
                              const cohort::LabeledDataset& data) {
    if (models.size() < 2) throw std::invalid_argument("soft_vote: needs at least 2 models");
    std::vector<double> out(data.labels.size(), 0.0);
    for (const auto* m : models) {
        const auto p = m->predict_proba(data);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] += p[i];
    }
    for (auto& v : out) v /= static_cast<double>(models.size());
    return out;
}

std::size_t select_champion(const std::vector<report::MetricSet>& results) {
    if (results.empty()) throw std::invalid_argument("select_champion: empty");
    std::size_t best = 0;
    for (std::size_t i = 1; i < results.size(); ++i) {
        if (results[i].roc_auc > results[best].roc_auc ||
            (results[i].roc_auc == results[best].roc_auc && results[i].f1 > results[best].f1))
            best = i;
    }
    return best;
}

namespace {

void add_trees(artifact::BlobWriter& w, const std::string& prefix,
               const std::vector<Tree>& trees) {
    for (std::size_t t = 0; t < trees.size(); ++t) {
        const auto& nodes = trees[t].nodes();
        std::vector<double> flat;
        flat.reserve(nodes.size() * 5);
        for (const auto& n : nodes) {
            flat.push_back(static_cast<double>(n.feature));
            flat.push_back(n.threshold);
            flat.push_back(static_cast<double>(n.left));
            flat.push_back(static_cast<double>(n.right));
            flat.push_back(n.value);
        }
        w.add(prefix + std::to_string(t),
              {static_cast<std::int64_t>(nodes.size()), 5}, flat.data(), flat.size());
    }
}

std::vector<Tree> read_trees(const artifact::BlobReader& r, const std::string& prefix,
                             std::size_t count) {
    std::vector<Tree> trees;
    trees.reserve(count);
    for (std::size_t t = 0; t < count; ++t) {
        const auto flat = r.get(prefix + std::to_string(t));
        std::vector<TreeNode> nodes(flat.size() / 5);
        for (std::size_t i = 0; i < nodes.size(); ++i) {
            nodes[i].feature = static_cast<int>(flat[i * 5]);
            nodes[i].threshold = flat[i * 5 + 1];
            nodes[i].left = static_cast<int>(flat[i * 5 + 2]);
            nodes[i].right = static_cast<int>(flat[i * 5 + 3]);
            nodes[i].value = flat[i * 5 + 4];
        }
        trees.push_back(Tree::from_nodes(std::move(nodes)));
    }
    return trees;
}

}  // namespace

void BaselineModel::save(const std::string& manifest_path, const std::string& blob_path) const {
    nlohmann::json manifest;
    manifest["format_version"] = artifact::kFormatVersion;
    manifest["model"] = "baseline";
    manifest["kind"] = to_string(spec_.kind);
    manifest["class_weighting"] = spec_.class_weighting;
    manifest["seed"] = spec_.seed;
    manifest["hyperparameters"] = spec_.hyperparameters;
    manifest["feature_names"] = feature_names_;
    manifest["converged"] = converged_;

    artifact::BlobWriter w;
    if (const auto* m = std::get_if<LogRegModel>(&impl_->model)) {
        w.add("weights", m->weights);
        w.add("bias", std::vector<double>{m->bias});
    } else if (const auto* f = std::get_if<ForestModel>(&impl_->model)) {
        manifest["n_trees"] = f->trees.size();
        add_trees(w, "tree_", f->trees);
    } else if (const auto* g = std::get_if<GbmModel>(&impl_->model)) {
        manifest["n_trees"] = g->trees.size();
        w.add("f0_lr", std::vector<double>{g->f0, g->learning_rate});
        add_trees(w, "tree_", g->trees);
    } else if (const auto* s = std::get_if<svm::SvmModel>(&impl_->model)) {
        const auto& sv = s->support_vectors();
        std::vector<double> flat(sv.data(), sv.data() + sv.size());
        w.add("support_vectors",
              {static_cast<std::int64_t>(sv.rows()), static_cast<std::int64_t>(sv.cols())},
              flat.data(), flat.size());
        w.add("dual_coef", s->dual_coef());
        w.add("scalars", std::vector<double>{s->bias(), s->gamma(), s->platt_a(), s->platt_b()});
    } else if (const auto* k = std::get_if<KnnModel>(&impl_->model)) {
        std::vector<double> flat(k->x.data(), k->x.data() + k->x.size());
        w.add("train_x",
              {static_cast<std::int64_t>(k->x.rows()), static_cast<std::int64_t>(k->x.cols())},
              flat.data(), flat.size());
        std::vector<double> labels(k->y.begin(), k->y.end());
        w.add("train_y", labels);
    } else if (const auto* t = std::get_if<TreeModel>(&impl_->model)) {
        add_trees(w, "tree_", {t->tree});
        manifest["n_trees"] = 1;
    } else if (const auto* nb = std::get_if<NbModel>(&impl_->model)) {
        w.add("log_prior", std::vector<double>{nb->log_prior[0], nb->log_prior[1]});
        w.add("mean_0", nb->mean[0]);
        w.add("mean_1", nb->mean[1]);
        w.add("var_0", nb->var[0]);
        w.add("var_1", nb->var[1]);
    } else if (const auto* a = std::get_if<AdaModel>(&impl_->model)) {
        manifest["n_trees"] = a->stumps.size();
        w.add("alphas", a->alphas);
        add_trees(w, "stump_", a->stumps);
    }
    manifest["dtype"] = artifact::to_string(artifact::Dtype::f64);
    manifest["params"] = w.params;
    artifact::write_json(manifest_path, manifest);
    artifact::write_blob(blob_path, w.values, artifact::Dtype::f64);
}

BaselineModel BaselineModel::load(const std::string& manifest_path,
                                  const std::string& blob_path) {
    const auto manifest = artifact::read_json(manifest_path);
    BaselineModel out;
    out.spec_.kind = baseline_from_string(manifest.at("kind").get<std::string>());
    out.spec_.class_weighting = manifest.at("class_weighting").get<bool>();
    out.spec_.seed = manifest.at("seed").get<std::uint64_t>();
    out.spec_.hyperparameters =
        manifest.at("hyperparameters").get<std::map<std::string, double>>();
    out.feature_names_ = manifest.at("feature_names").get<std::vector<std::string>>();
    out.converged_ = manifest.at("converged").get<bool>();

    const auto dtype = artifact::dtype_from_string(manifest.at("dtype").get<std::string>());
    artifact::BlobReader r(blob_path, manifest.at("params"), dtype);
    auto impl = std::make_shared<Impl>();
    switch (out.spec_.kind) {
        case BaselineKind::logistic_regression: {
            LogRegModel m;
            m.weights = r.get("weights");
            m.bias = r.get("bias").at(0);
            m.converged = out.converged_;
            impl->model = std::move(m);
            break;
        }
        case BaselineKind::random_forest: {
            ForestModel f;
            f.trees = read_trees(r, "tree_", manifest.at("n_trees").get<std::size_t>());
            impl->model = std::move(f);
            break;
        }
        case BaselineKind::gradient_boosting: {
            GbmModel g;
            const auto s = r.get("f0_lr");
            g.f0 = s.at(0);
            g.learning_rate = s.at(1);
            g.trees = read_trees(r, "tree_", manifest.at("n_trees").get<std::size_t>());
            impl->model = std::move(g);
            break;
        }
        case BaselineKind::svm_rbf: {
            const auto shape = r.shape("support_vectors");
            const auto flat = r.get("support_vectors");
            Matrix sv(static_cast<std::size_t>(shape.at(0)),
                      static_cast<std::size_t>(shape.at(1)));
            std::copy(flat.begin(), flat.end(), sv.data());
            const auto scalars = r.get("scalars");
            impl->model = svm::SvmModel::from_parts(std::move(sv), r.get("dual_coef"),
                                                    scalars.at(0), scalars.at(1), scalars.at(2),
                                                    scalars.at(3));
            break;
        }
        case BaselineKind::knn: {
            KnnModel k;
            const auto shape = r.shape("train_x");
            const auto flat = r.get("train_x");
            k.x = Matrix(static_cast<std::size_t>(shape.at(0)),
                         static_cast<std::size_t>(shape.at(1)));
            std::copy(flat.begin(), flat.end(), k.x.data());
            for (double v : r.get("train_y")) k.y.push_back(static_cast<int>(v));
            k.k = static_cast<int>(out.spec_.hyper("k"));
            impl->model = std::move(k);
            break;
        }
        case BaselineKind::decision_tree: {
            impl->model = TreeModel{read_trees(r, "tree_", 1).at(0)};
            break;
        }
        case BaselineKind::gaussian_nb: {
            NbModel nb;
            const auto prior = r.get("log_prior");
            nb.log_prior[0] = prior.at(0);
            nb.log_prior[1] = prior.at(1);
            nb.mean[0] = r.get("mean_0");
            nb.mean[1] = r.get("mean_1");
            nb.var[0] = r.get("var_0");
            nb.var[1] = r.get("var_1");
            impl->model = std::move(nb);
            break;
        }
        case BaselineKind::adaboost: {
            AdaModel a;
            a.alphas = r.get("alphas");
            a.stumps = read_trees(r, "stump_", manifest.at("n_trees").get<std::size_t>());
            impl->model = std::move(a);
            break;
        }
    }
    out.impl_ = std::move(impl);
    return out;
}

}  // namespace dxtab::baselines
