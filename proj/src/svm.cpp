#include "dxtab/svm.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dxtab/kernels.hpp"

namespace dxtab::svm {

namespace {

double rbf(const double* a, const double* b, std::size_t p, double gamma) {
    double d2 = 0.0;
    for (std::size_t j = 0; j < p; ++j) {
        const double d = a[j] - b[j];
        d2 += d * d;
    }
    return std::exp(-gamma * d2);
}

double default_gamma(const Matrix& x) {
    const std::size_t n = x.rows(), p = x.cols();
    double var = 0.0;
    for (std::size_t j = 0; j < p; ++j) {
        double mu = 0.0;
        for (std::size_t i = 0; i < n; ++i) mu += x(i, j);
        mu /= static_cast<double>(n);
        double v = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double c = x(i, j) - mu;
            v += c * c;
        }
        var += v / static_cast<double>(n);
    }
    var /= static_cast<double>(p);
    return var > 0.0 ? 1.0 / (static_cast<double>(p) * var) : 1.0;
}

}  // namespace

SvmModel SvmModel::fit(const Matrix& x, const std::vector<int>& y_in, const SvmConfig& cfg) {
    const std::size_t n = x.rows(), p = x.cols();
    if (n != y_in.size()) throw std::invalid_argument("svm: size mismatch");
    std::vector<double> y(n);
    std::size_t n_pos = 0;
    for (std::size_t i = 0; i < n; ++i) {
        y[i] = y_in[i] == 1 ? 1.0 : -1.0;
        n_pos += y_in[i] == 1 ? 1u : 0u;
    }
    if (n_pos == 0 || n_pos == n) throw std::runtime_error("svm: needs both classes");

    const double gamma = cfg.gamma > 0.0 ? cfg.gamma : default_gamma(x);
    std::vector<double> cap(n);
    for (std::size_t i = 0; i < n; ++i)
        cap[i] = cfg.c * (y[i] > 0.0 ? cfg.positive_weight : cfg.negative_weight);

    // Full kernel matrix; callers cap n at desk scale.
    std::vector<double> kmat(n * n);
    for (std::size_t i = 0; i < n; ++i) {
        kmat[i * n + i] = 1.0;
        for (std::size_t j = i + 1; j < n; ++j) {
            const double v = rbf(x.row(i), x.row(j), p, gamma);
            kmat[i * n + j] = v;
            kmat[j * n + i] = v;
        }
    }

    std::vector<double> alpha(n, 0.0), err(n);
    double b = 0.0;
    for (std::size_t i = 0; i < n; ++i) err[i] = -y[i];  // f = 0 initially

    const std::size_t max_iter = cfg.max_iterations > 0 ? cfg.max_iterations : 200 * n;
    std::size_t iterations = 0;
    int passes = 0;
    while (passes < cfg.max_passes && iterations < max_iter) {
        std::size_t changed = 0;
        for (std::size_t i = 0; i < n && iterations < max_iter; ++i) {
            const double ri = err[i] * y[i];
            const bool violates = (ri < -cfg.tol && alpha[i] < cap[i]) ||
                                  (ri > cfg.tol && alpha[i] > 0.0);
            if (!violates) continue;
            // Deterministic second choice: maximum |E_i - E_j|.
            std::size_t j = i;
            double best = -1.0;
            for (std::size_t cand = 0; cand < n; ++cand) {
                if (cand == i) continue;
                const double gap = std::abs(err[i] - err[cand]);
                if (gap > best) {
                    best = gap;
                    j = cand;
                }
            }
            if (j == i) continue;

            const double ai_old = alpha[i], aj_old = alpha[j];
            double lo, hi;
            if (y[i] != y[j]) {
                lo = std::max(0.0, aj_old - ai_old);
                hi = std::min(cap[j], cap[i] + aj_old - ai_old);
            } else {
                lo = std::max(0.0, ai_old + aj_old - cap[i]);
                hi = std::min(cap[j], ai_old + aj_old);
            }
            if (lo >= hi) continue;
            const double eta = 2.0 * kmat[i * n + j] - kmat[i * n + i] - kmat[j * n + j];
            if (eta >= 0.0) continue;
            double aj = aj_old - y[j] * (err[i] - err[j]) / eta;
            aj = std::clamp(aj, lo, hi);
            if (std::abs(aj - aj_old) < 1e-7) continue;
            const double ai = ai_old + y[i] * y[j] * (aj_old - aj);
            alpha[i] = ai;
            alpha[j] = aj;

            const double b1 = b - err[i] - y[i] * (ai - ai_old) * kmat[i * n + i] -
                              y[j] * (aj - aj_old) * kmat[i * n + j];
            const double b2 = b - err[j] - y[i] * (ai - ai_old) * kmat[i * n + j] -
                              y[j] * (aj - aj_old) * kmat[j * n + j];
            double b_new;
            if (ai > 0.0 && ai < cap[i])
                b_new = b1;
            else if (aj > 0.0 && aj < cap[j])
                b_new = b2;
            else
                b_new = 0.5 * (b1 + b2);
            const double di = y[i] * (ai - ai_old);
            const double dj = y[j] * (aj - aj_old);
            const double db = b_new - b;
            for (std::size_t t = 0; t < n; ++t)
                err[t] += di * kmat[i * n + t] + dj * kmat[j * n + t] + db;
            b = b_new;
            ++changed;
            ++iterations;
        }
        passes = changed == 0 ? passes + 1 : 0;
    }

    SvmModel m;
    m.gamma_ = gamma;
    m.b_ = b;
    for (std::size_t i = 0; i < n; ++i) {
        if (alpha[i] > 1e-8) {
            m.support_.push_back(i);
            m.coef_.push_back(alpha[i] * y[i]);
            m.sv_.append_row(std::vector<double>(x.row(i), x.row(i) + p));
        }
    }
    // Degenerate fallback: keep a usable decision function even if no vector
    // cleared the threshold.
    if (m.support_.empty()) {
        m.support_.push_back(0);
        m.coef_.push_back(0.0);
        m.sv_.append_row(std::vector<double>(x.row(0), x.row(0) + p));
    }

    const auto dec = m.decision(x);
    const auto [pa, pb] = fit_platt(dec, y_in);
    m.platt_a_ = pa;
    m.platt_b_ = pb;
    return m;
}

double SvmModel::decision(const double* row, std::size_t p) const {
    double f = b_;
    for (std::size_t s = 0; s < sv_.rows(); ++s)
        f += coef_[s] * rbf(sv_.row(s), row, p, gamma_);
    return f;
}

std::vector<double> SvmModel::decision(const Matrix& x) const {
    std::vector<double> out(x.rows());
    for (std::size_t i = 0; i < x.rows(); ++i) out[i] = decision(x.row(i), x.cols());
    return out;
}

std::vector<double> SvmModel::predict_proba(const Matrix& x) const {
    std::vector<double> out = decision(x);
    for (auto& f : out) {
        const double z = platt_a_ * f + platt_b_;
        f = 1.0 / (1.0 + std::exp(z));
    }
    return out;
}

SvmModel SvmModel::from_parts(Matrix sv, std::vector<double> coef, double b, double gamma,
                              double platt_a, double platt_b) {
    SvmModel m;
    m.sv_ = std::move(sv);
    m.coef_ = std::move(coef);
    m.b_ = b;
    m.gamma_ = gamma;
    m.platt_a_ = platt_a;
    m.platt_b_ = platt_b;
    return m;
}

std::pair<double, double> fit_platt(const std::vector<double>& decision,
                                    const std::vector<int>& y) {
    const std::size_t n = decision.size();
    double prior1 = 0.0;
    for (int v : y) prior1 += v == 1 ? 1.0 : 0.0;
    const double prior0 = static_cast<double>(n) - prior1;
    const double hi = (prior1 + 1.0) / (prior1 + 2.0);
    const double lo = 1.0 / (prior0 + 2.0);

    double a = 0.0, b = std::log((prior0 + 1.0) / (prior1 + 1.0));
    const double sigma = 1e-12;
    for (int iter = 0; iter < 100; ++iter) {
        double h11 = sigma, h22 = sigma, h21 = 0.0, g1 = 0.0, g2 = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double t = y[i] == 1 ? hi : lo;
            const double fApB = decision[i] * a + b;
            double p, q;
            if (fApB >= 0.0) {
                p = std::exp(-fApB) / (1.0 + std::exp(-fApB));
                q = 1.0 / (1.0 + std::exp(-fApB));
            } else {
                p = 1.0 / (1.0 + std::exp(fApB));
                q = std::exp(fApB) / (1.0 + std::exp(fApB));
            }
            const double d2 = p * q;
            h11 += decision[i] * decision[i] * d2;
            h22 += d2;
            h21 += decision[i] * d2;
            const double d1 = t - p;
            g1 += decision[i] * d1;
            g2 += d1;
        }
        if (std::abs(g1) < 1e-5 && std::abs(g2) < 1e-5) break;
        const double det = h11 * h22 - h21 * h21;
        const double da = -(h22 * g1 - h21 * g2) / det;
        const double db = -(-h21 * g1 + h11 * g2) / det;
        // Backtracking line search on the cross-entropy objective.
        auto objective = [&](double aa, double bb) {
            double obj = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double t = y[i] == 1 ? hi : lo;
                const double fApB = decision[i] * aa + bb;
                if (fApB >= 0.0)
                    obj += t * fApB + std::log1p(std::exp(-fApB));
                else
                    obj += (t - 1.0) * fApB + std::log1p(std::exp(fApB));
            }
            return obj;
        };
        const double base = objective(a, b);
        double step = 1.0;
        while (step > 1e-10) {
            if (objective(a + step * da, b + step * db) < base + 1e-4 * step * (g1 * da + g2 * db))
                break;
            step *= 0.5;
        }
        a += step * da;
        b += step * db;
    }
    return {a, b};
}

}  // namespace dxtab::svm
