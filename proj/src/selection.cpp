#include "dxtab/selection.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "dxtab/kernels.hpp"
#include "dxtab/rng.hpp"

namespace dxtab::selection {

std::string to_string(Band b) {
    switch (b) {
        case Band::very_strong: return "very_strong";
        case Band::strong: return "strong";
        case Band::moderate: return "moderate";
        case Band::weak: return "weak";
        case Band::negligible: return "negligible";
    }
    return "negligible";
}

PearsonResult pearson_full(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw std::invalid_argument("pearson: length mismatch");
    if (x.size() < 2) throw std::invalid_argument("pearson: needs n >= 2");
    const auto n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) return {0.0, true};
    double r = sxy / std::sqrt(sxx * syy);
    r = std::clamp(r, -1.0, 1.0);
    return {r, false};
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
    return pearson_full(x, y).r;
}

Band interpret_correlation(double r) {
    const double a = std::abs(r);
    if (a > 1.0 + 1e-12) throw std::invalid_argument("interpret_correlation: |r| > 1");
    if (a >= 0.8) return Band::very_strong;
    if (a >= 0.6) return Band::strong;
    if (a >= 0.4) return Band::moderate;
    if (a >= 0.2) return Band::weak;
    return Band::negligible;
}

double mutual_information(const std::vector<double>& x, const std::vector<int>& y, int bins) {
    if (x.size() != y.size()) throw std::invalid_argument("mutual_information: length mismatch");
    if (x.size() < 2) throw std::invalid_argument("mutual_information: needs n >= 2");
    if (bins < 2) throw std::invalid_argument("mutual_information: bins must be >= 2");
    const double lo = *std::min_element(x.begin(), x.end());
    const double hi = *std::max_element(x.begin(), x.end());
    if (hi == lo) return 0.0;  // constant x carries no information
    const double width = (hi - lo) / static_cast<double>(bins);

    std::vector<std::array<double, 2>> joint(static_cast<std::size_t>(bins), {0.0, 0.0});
    for (std::size_t i = 0; i < x.size(); ++i) {
        auto b = static_cast<int>((x[i] - lo) / width);
        b = std::clamp(b, 0, bins - 1);
        joint[static_cast<std::size_t>(b)][y[i] == 1 ? 1 : 0] += 1.0;
    }
    const auto n = static_cast<double>(x.size());
    std::array<double, 2> py = {0.0, 0.0};
    std::vector<double> px(static_cast<std::size_t>(bins), 0.0);
    for (std::size_t b = 0; b < joint.size(); ++b) {
        px[b] = (joint[b][0] + joint[b][1]) / n;
        py[0] += joint[b][0] / n;
        py[1] += joint[b][1] / n;
    }
    double mi = 0.0;
    for (std::size_t b = 0; b < joint.size(); ++b)
        for (int c = 0; c < 2; ++c) {
            const double pxy = joint[b][static_cast<std::size_t>(c)] / n;
            if (pxy > 0.0 && px[b] > 0.0 && py[static_cast<std::size_t>(c)] > 0.0)
                mi += pxy * std::log2(pxy / (px[b] * py[static_cast<std::size_t>(c)]));
        }
    return std::max(mi, 0.0);
}

namespace {

// Linear-interpolation percentile on a copy (q in [0,100]).
double percentile(std::vector<double> v, double q) {
    if (v.empty()) throw std::invalid_argument("percentile: empty");
    std::sort(v.begin(), v.end());
    const double pos = q / 100.0 * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return v[lo] * (1.0 - frac) + v[hi] * frac;
}

double minmax_norm(double v, double lo, double hi) {
    return hi > lo ? (v - lo) / (hi - lo) : 0.0;
}

}  // namespace

SelectionResult ensemble_select(const cohort::LabeledDataset& data, const SelectionConfig& cfg) {
    if (cfg.alpha <= 0.0 || cfg.alpha >= 1.0)
        throw std::invalid_argument("ensemble_select: alpha must be in (0,1)");
    const std::size_t p = data.feature_names.size();
    if (p == 0) throw std::invalid_argument("ensemble_select: no features");
    std::vector<double> y(data.labels.begin(), data.labels.end());

    SelectionResult out;
    out.alpha = cfg.alpha;
    out.scores.resize(p);
    std::vector<std::vector<double>> columns(p);
    std::vector<double> abs_r(p), mi(p);
    for (std::size_t j = 0; j < p; ++j) {
        columns[j] = data.x.column(j);
        auto& fs = out.scores[j];
        fs.feature_name = data.feature_names[j];
        fs.pearson_r = pearson(columns[j], y);
        fs.band = interpret_correlation(fs.pearson_r);
        fs.mi = mutual_information(columns[j], data.labels, cfg.mi_bins);
        abs_r[j] = std::abs(fs.pearson_r);
        mi[j] = fs.mi;
    }
    const double r_lo = *std::min_element(abs_r.begin(), abs_r.end());
    const double r_hi = *std::max_element(abs_r.begin(), abs_r.end());
    const double mi_lo = *std::min_element(mi.begin(), mi.end());
    const double mi_hi = *std::max_element(mi.begin(), mi.end());
    std::vector<double> combined(p);
    for (std::size_t j = 0; j < p; ++j) {
        combined[j] = 0.5 * (minmax_norm(abs_r[j], r_lo, r_hi) +
                             minmax_norm(mi[j], mi_lo, mi_hi));
        out.scores[j].importance = combined[j];
    }

    const double q = 100.0 * (1.0 - cfg.alpha);
    const double mi_cut = percentile(mi, q);
    const double score_cut = percentile(combined, q);
    std::vector<std::size_t> candidates;
    for (std::size_t j = 0; j < p; ++j)
        if (abs_r[j] >= cfg.r_min || mi[j] >= mi_cut || combined[j] >= score_cut)
            candidates.push_back(j);
    if (candidates.empty())
        throw std::runtime_error(
            "ensemble_select: empty candidate set; relax r_min or increase alpha");

    // Descending combined score; ties broken by |r| then input order.
    std::stable_sort(candidates.begin(), candidates.end(),
                     [&](std::size_t a, std::size_t b) {
                         if (combined[a] != combined[b]) return combined[a] > combined[b];
                         if (abs_r[a] != abs_r[b]) return abs_r[a] > abs_r[b];
                         return a < b;
                     });

    std::vector<std::size_t> kept;
    for (std::size_t cand : candidates) {
        bool collinear = false;
        for (std::size_t k : kept) {
            const double r = std::abs(pearson(columns[cand], columns[k]));
            if (r > cfg.collinearity_cap) {
                out.dropped_collinear.emplace_back(data.feature_names[cand],
                                                   data.feature_names[k]);
                collinear = true;
                break;
            }
        }
        if (!collinear) kept.push_back(cand);
    }
    for (std::size_t k : kept) {
        out.scores[k].selected = true;
        out.selected.push_back(data.feature_names[k]);
    }
    return out;
}

namespace {

// Cyclic Jacobi eigendecomposition of a symmetric matrix. Deterministic;
// adequate for the feature-count sized problems here.
void jacobi_eigen(Matrix a, std::vector<double>& eigenvalues, Matrix& eigenvectors) {
    const std::size_t n = a.rows();
    eigenvectors = Matrix(n, n);
    for (std::size_t i = 0; i < n; ++i) eigenvectors(i, i) = 1.0;
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) off += a(i, j) * a(i, j);
        if (off < 1e-24) break;
        for (std::size_t pp = 0; pp < n; ++pp)
            for (std::size_t q = pp + 1; q < n; ++q) {
                if (std::abs(a(pp, q)) < 1e-300) continue;
                const double theta = (a(q, q) - a(pp, pp)) / (2.0 * a(pp, q));
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t i = 0; i < n; ++i) {
                    const double aip = a(i, pp), aiq = a(i, q);
                    a(i, pp) = c * aip - s * aiq;
                    a(i, q) = s * aip + c * aiq;
                }
                for (std::size_t i = 0; i < n; ++i) {
                    const double api = a(pp, i), aqi = a(q, i);
                    a(pp, i) = c * api - s * aqi;
                    a(q, i) = s * api + c * aqi;
                }
                for (std::size_t i = 0; i < n; ++i) {
                    const double vip = eigenvectors(i, pp), viq = eigenvectors(i, q);
                    eigenvectors(i, pp) = c * vip - s * viq;
                    eigenvectors(i, q) = s * vip + c * viq;
                }
            }
    }
    eigenvalues.resize(n);
    for (std::size_t i = 0; i < n; ++i) eigenvalues[i] = a(i, i);
}

Matrix center_columns(const Matrix& data, std::vector<double>& means) {
    Matrix x = data;
    means.assign(x.cols(), 0.0);
    for (std::size_t j = 0; j < x.cols(); ++j) {
        double mu = 0.0;
        for (std::size_t i = 0; i < x.rows(); ++i) mu += x(i, j);
        mu /= static_cast<double>(x.rows());
        means[j] = mu;
        for (std::size_t i = 0; i < x.rows(); ++i) x(i, j) -= mu;
    }
    return x;
}

}  // namespace

Projection pca(const Matrix& data, double variance_target) {
    if (data.rows() < 2) throw std::invalid_argument("pca: needs n >= 2");
    const std::size_t n = data.rows(), p = data.cols();
    std::vector<double> means;
    Matrix xc = center_columns(data, means);

    Matrix cov(p, p);
    const auto& k = kern::active();
    k.matmul_tn(cov.data(), xc.data(), xc.data(), p, n, p, false);
    k.scale(cov.data(), 1.0 / static_cast<double>(n), p * p);

    std::vector<double> eigenvalues;
    Matrix vectors;
    jacobi_eigen(cov, eigenvalues, vectors);

    std::vector<std::size_t> order(p);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&eigenvalues](std::size_t a, std::size_t b) {
        return eigenvalues[a] > eigenvalues[b];
    });

    double total = 0.0;
    for (double e : eigenvalues) total += std::max(e, 0.0);
    std::size_t keep = 1;
    if (total > 0.0) {
        double cum = 0.0;
        for (keep = 0; keep < p; ++keep) {
            cum += std::max(eigenvalues[order[keep]], 0.0) / total;
            if (cum >= std::min(variance_target, 1.0 - 1e-12)) {
                ++keep;
                break;
            }
        }
        if (keep == 0 || keep > p) keep = p;
    }

    Projection out;
    out.method = ProjectionMethod::pca;
    out.loadings = Matrix(p, keep);
    out.explained_variance.resize(keep);
    for (std::size_t c = 0; c < keep; ++c) {
        const std::size_t src = order[c];
        out.explained_variance[c] =
            total > 0.0 ? std::max(eigenvalues[src], 0.0) / total : 0.0;
        // Deterministic sign: the largest-magnitude loading is positive.
        std::size_t arg = 0;
        for (std::size_t i = 1; i < p; ++i)
            if (std::abs(vectors(i, src)) > std::abs(vectors(arg, src))) arg = i;
        const double sign = vectors(arg, src) < 0.0 ? -1.0 : 1.0;
        for (std::size_t i = 0; i < p; ++i) out.loadings(i, c) = sign * vectors(i, src);
    }
    out.coordinates = Matrix(n, keep);
    k.matmul_nn(out.coordinates.data(), xc.data(), out.loadings.data(), n, p, keep, false);
    return out;
}

namespace {

// Per-point bandwidth search matching the target perplexity.
std::vector<double> conditional_p(const Matrix& d2, double perplexity) {
    const std::size_t n = d2.rows();
    std::vector<double> p(n * n, 0.0);
    const double log_perp = std::log(perplexity);
    for (std::size_t i = 0; i < n; ++i) {
        double beta = 1.0, beta_lo = -1e300, beta_hi = 1e300;
        for (int iter = 0; iter < 60; ++iter) {
            double sum = 0.0, dsum = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                if (j == i) continue;
                const double e = std::exp(-beta * d2(i, j));
                sum += e;
                dsum += d2(i, j) * e;
            }
            double entropy, diff;
            if (sum <= 0.0) {
                entropy = 0.0;
                diff = entropy - log_perp;
            } else {
                entropy = std::log(sum) + beta * dsum / sum;
                diff = entropy - log_perp;
            }
            if (std::abs(diff) < 1e-6) break;
            if (diff > 0.0) {
                beta_lo = beta;
                beta = beta_hi >= 1e300 ? beta * 2.0 : 0.5 * (beta + beta_hi);
            } else {
                beta_hi = beta;
                beta = beta_lo <= -1e300 ? beta / 2.0 : 0.5 * (beta + beta_lo);
            }
        }
        double sum = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            p[i * n + j] = std::exp(-beta * d2(i, j));
            sum += p[i * n + j];
        }
        if (sum > 0.0)
            for (std::size_t j = 0; j < n; ++j) p[i * n + j] /= sum;
    }
    return p;
}

}  // namespace

Projection tsne(const Matrix& data, const TsneConfig& cfg) {
    return tsne(data, cfg, nullptr);
}

Projection tsne(const Matrix& data, const TsneConfig& cfg, std::vector<double>* kl_trace) {
    const std::size_t n = data.rows();
    if (n >= 5000)
        throw std::runtime_error("tsne: refuses n >= 5000 samples; subsample first");
    if (n < 4) throw std::invalid_argument("tsne: needs n >= 4");
    if (cfg.perplexity <= 0.0 || cfg.perplexity >= static_cast<double>(n) / 3.0)
        throw std::invalid_argument("tsne: perplexity must be positive and < n/3");

    Projection out;
    out.method = ProjectionMethod::tsne;
    Matrix x = data;
    if (x.cols() > 50) {
        Projection pre = pca(x, 1.0);
        const std::size_t keep = std::min<std::size_t>(50, pre.coordinates.cols());
        Matrix reduced(n, keep);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < keep; ++j) reduced(i, j) = pre.coordinates(i, j);
        x = std::move(reduced);
        out.notes.push_back("pca pre-reduction to " + std::to_string(keep) + " components");
    }

    // Pairwise squared distances.
    const std::size_t d = x.cols();
    Matrix d2(n, n);
    const auto& k = kern::active();
    {
        std::vector<double> sq(n);
        for (std::size_t i = 0; i < n; ++i) sq[i] = k.sq_sum(x.row(i), d);
        Matrix cross(n, n);
        k.matmul_nt(cross.data(), x.data(), x.data(), n, d, n, false);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                d2(i, j) = std::max(0.0, sq[i] + sq[j] - 2.0 * cross(i, j));
    }

    std::vector<double> pcond = conditional_p(d2, cfg.perplexity);
    std::vector<double> p(n * n, 0.0);
    double psum = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            p[i * n + j] = pcond[i * n + j] + pcond[j * n + i];
            psum += p[i * n + j];
        }
    for (auto& v : p) v = std::max(v / psum, 1e-12);

    Rng rng(derive_seed(cfg.seed, "tsne/init"));
    std::normal_distribution<double> init(0.0, 1e-4);
    std::vector<double> y(n * 2), vel(n * 2, 0.0), gains(n * 2, 1.0);
    for (auto& v : y) v = init(rng);

    const double lr = cfg.learning_rate > 0.0
                          ? cfg.learning_rate
                          : std::max(static_cast<double>(n) / cfg.early_exaggeration, 50.0);

    std::vector<double> num(n * n), grad(n * 2);
    for (int iter = 0; iter < cfg.iterations; ++iter) {
        const bool exaggerate = iter < cfg.exaggeration_iters;
        const double p_mult = exaggerate ? cfg.early_exaggeration : 1.0;
        const double momentum = iter < 250 ? 0.5 : 0.8;

        double num_sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            num[i * n + i] = 0.0;
            for (std::size_t j = i + 1; j < n; ++j) {
                const double dx = y[i * 2] - y[j * 2];
                const double dy = y[i * 2 + 1] - y[j * 2 + 1];
                const double v = 1.0 / (1.0 + dx * dx + dy * dy);
                num[i * n + j] = v;
                num[j * n + i] = v;
                num_sum += 2.0 * v;
            }
        }
        const double inv_num_sum = 1.0 / std::max(num_sum, 1e-300);

        std::fill(grad.begin(), grad.end(), 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                if (i == j) continue;
                const double q = num[i * n + j] * inv_num_sum;
                const double mult = 4.0 * (p_mult * p[i * n + j] - q) * num[i * n + j];
                grad[i * 2] += mult * (y[i * 2] - y[j * 2]);
                grad[i * 2 + 1] += mult * (y[i * 2 + 1] - y[j * 2 + 1]);
            }

        for (std::size_t c = 0; c < n * 2; ++c) {
            gains[c] = (grad[c] > 0.0) != (vel[c] > 0.0) ? gains[c] + 0.2 : gains[c] * 0.8;
            gains[c] = std::max(gains[c], 0.01);
            vel[c] = momentum * vel[c] - lr * gains[c] * grad[c];
            y[c] += vel[c];
        }
        double cx = 0.0, cy = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            cx += y[i * 2];
            cy += y[i * 2 + 1];
        }
        cx /= static_cast<double>(n);
        cy /= static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) {
            y[i * 2] -= cx;
            y[i * 2 + 1] -= cy;
        }

        if (kl_trace != nullptr) {
            double kl = 0.0;
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < n; ++j) {
                    if (i == j) continue;
                    const double q = std::max(num[i * n + j] * inv_num_sum, 1e-12);
                    kl += p[i * n + j] * std::log(p[i * n + j] / q);
                }
            kl_trace->push_back(kl);
        }
    }

    out.coordinates = Matrix(n, 2);
    for (std::size_t i = 0; i < n; ++i) {
        out.coordinates(i, 0) = y[i * 2];
        out.coordinates(i, 1) = y[i * 2 + 1];
    }
    return out;
}

}  // namespace dxtab::selection
