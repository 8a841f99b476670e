#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <random>

#include "dxtab/selection.hpp"

using namespace dxtab;
using namespace dxtab::selection;

namespace {

cohort::LabeledDataset make_dataset(const Matrix& x, const std::vector<int>& y,
                                    std::vector<std::string> names = {}) {
    cohort::LabeledDataset d;
    if (names.empty())
        for (std::size_t j = 0; j < x.cols(); ++j) names.push_back("f" + std::to_string(j));
    d.feature_names = std::move(names);
    d.x = x;
    d.labels = y;
    for (std::size_t i = 0; i < x.rows(); ++i) d.subject_ids.push_back("s" + std::to_string(i));
    return d;
}

double silhouette(const Matrix& coords, const std::vector<int>& labels) {
    const std::size_t n = coords.rows();
    auto dist = [&](std::size_t a, std::size_t b) {
        double d = 0.0;
        for (std::size_t j = 0; j < coords.cols(); ++j) {
            const double c = coords(a, j) - coords(b, j);
            d += c * c;
        }
        return std::sqrt(d);
    };
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double same = 0.0, other = 0.0;
        std::size_t n_same = 0, n_other = 0;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            if (labels[j] == labels[i]) {
                same += dist(i, j);
                ++n_same;
            } else {
                other += dist(i, j);
                ++n_other;
            }
        }
        const double a = same / static_cast<double>(n_same);
        const double b = other / static_cast<double>(n_other);
        total += (b - a) / std::max(a, b);
    }
    return total / static_cast<double>(n);
}

}  // namespace

TEST_CASE("pearson exact values") {
    CHECK(pearson({1, 2, 3}, {1, 2, 3}) == doctest::Approx(1.0));
    CHECK(pearson({1, 2, 3}, {1, -1, -3}) == doctest::Approx(-1.0));  // y = -2x + 3
    CHECK(pearson({1, 2, 3, 4}, {1, 3, 2, 4}) == doctest::Approx(0.8));
    CHECK_THROWS_AS(pearson({1, 2}, {1}), std::invalid_argument);

    auto degen = pearson_full({2, 2, 2}, {1, 2, 3});
    CHECK(degen.r == 0.0);
    CHECK(degen.degenerate);
}

TEST_CASE("pearson symmetry and affine invariance") {
    std::mt19937_64 rng(1);
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<double> x(40), y(40);
    for (std::size_t i = 0; i < 40; ++i) {
        x[i] = n(rng);
        y[i] = 0.4 * x[i] + n(rng);
    }
    CHECK(pearson(x, y) == doctest::Approx(pearson(y, x)).epsilon(1e-12));
    std::vector<double> ax(40), bx(40);
    for (std::size_t i = 0; i < 40; ++i) {
        ax[i] = 2.5 * x[i] + 7.0;
        bx[i] = -1.5 * x[i] + 3.0;
    }
    const double r = pearson(x, y);
    CHECK(pearson(ax, y) == doctest::Approx(r).epsilon(1e-12));
    CHECK(pearson(bx, y) == doctest::Approx(-r).epsilon(1e-12));
}

TEST_CASE("correlation bands follow the half-open boundaries") {
    CHECK(interpret_correlation(0.85) == Band::very_strong);
    CHECK(interpret_correlation(-0.5) == Band::moderate);
    CHECK(interpret_correlation(0.0) == Band::negligible);
    // Boundaries: lower edge inclusive.
    CHECK(interpret_correlation(0.2) == Band::weak);
    CHECK(interpret_correlation(0.19999999) == Band::negligible);
    CHECK(interpret_correlation(0.4) == Band::moderate);
    CHECK(interpret_correlation(0.39999999) == Band::weak);
    CHECK(interpret_correlation(0.6) == Band::strong);
    CHECK(interpret_correlation(0.59999999) == Band::moderate);
    CHECK(interpret_correlation(0.8) == Band::very_strong);
    CHECK(interpret_correlation(0.79999999) == Band::strong);
    CHECK(interpret_correlation(-0.8) == Band::very_strong);
}

TEST_CASE("mutual information: constants, identity, and permutation null") {
    CHECK(mutual_information(std::vector<double>(10, 3.0), std::vector<int>(10, 1), 10) == 0.0);

    // x = y on a balanced binary variable, 2 bins -> exactly H(Y) = 1 bit.
    std::vector<double> x;
    std::vector<int> y;
    for (int i = 0; i < 100; ++i) {
        x.push_back(i % 2 ? 1.0 : 0.0);
        y.push_back(i % 2);
    }
    CHECK(mutual_information(x, y, 2) == doctest::Approx(1.0).epsilon(1e-12));

    // Shuffled labels at n = 10^4 leave almost no information.
    std::mt19937_64 rng(2);
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<double> xs(10000);
    std::vector<int> ys(10000);
    for (std::size_t i = 0; i < xs.size(); ++i) {
        xs[i] = n(rng);
        ys[i] = i % 2;
    }
    std::shuffle(ys.begin(), ys.end(), rng);
    CHECK(mutual_information(xs, ys, 10) < 0.02);
}

TEST_CASE("mutual information is symmetric in class relabeling and non-negative") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> n(0.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> x(300);
        std::vector<int> y(300), flipped(300);
        for (std::size_t i = 0; i < x.size(); ++i) {
            y[i] = static_cast<int>(i % 3 == 0);
            x[i] = n(rng) + (y[i] ? 0.8 : 0.0);
            flipped[i] = 1 - y[i];
        }
        const double mi = mutual_information(x, y, 10);
        CHECK(mi >= 0.0);
        CHECK(mi == doctest::Approx(mutual_information(x, flipped, 10)).epsilon(1e-12));
    }
}

TEST_CASE("ensemble_select: pearson rule admits a weak-but-correlated feature") {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> noise(0.0, 1.0);
    const std::size_t n = 400;
    Matrix x(n, 6);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
        y[i] = static_cast<int>(i % 2);
        x(i, 0) = (y[i] ? 0.28 : 0.0) + noise(rng);  // weak signal, r ~ 0.14
        for (std::size_t j = 1; j < 6; ++j) x(i, j) = noise(rng);
    }
    auto d = make_dataset(x, y);
    auto res = ensemble_select(d);
    const double r0 = std::abs(res.scores[0].pearson_r);
    REQUIRE(r0 >= 0.12);  // construction sanity
    CHECK(std::find(res.selected.begin(), res.selected.end(), "f0") != res.selected.end());
}

TEST_CASE("ensemble_select: duplicated columns keep exactly one copy") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> noise(0.0, 1.0);
    const std::size_t n = 300;
    Matrix x(n, 4);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
        y[i] = static_cast<int>(i % 2);
        const double signal = (y[i] ? 1.0 : 0.0) + 0.5 * noise(rng);
        x(i, 0) = signal;
        x(i, 1) = signal;  // exact duplicate, |r| = 1 > cap
        x(i, 2) = noise(rng);
        x(i, 3) = noise(rng);
    }
    auto res = ensemble_select(make_dataset(x, y));
    const bool has0 = std::count(res.selected.begin(), res.selected.end(), "f0") == 1;
    const bool has1 = std::count(res.selected.begin(), res.selected.end(), "f1") == 1;
    CHECK(has0 != has1);  // exactly one survives the collinearity cap
    CHECK_FALSE(res.dropped_collinear.empty());
}

TEST_CASE("ensemble_select ranks a planted predictor first") {
    int first_count = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        std::mt19937_64 rng(100 + seed);
        std::normal_distribution<double> noise(0.0, 1.0);
        const std::size_t n = 500, p = 20;
        Matrix x(n, p);
        std::vector<int> y(n);
        for (std::size_t i = 0; i < n; ++i) {
            y[i] = static_cast<int>(i % 2);
            for (std::size_t j = 0; j < p; ++j) x(i, j) = noise(rng);
            x(i, 7) += y[i] ? 1.2 : 0.0;  // planted
        }
        auto res = ensemble_select(make_dataset(x, y));
        if (!res.selected.empty() && res.selected.front() == "f7") ++first_count;
    }
    CHECK(first_count >= 9);
}

TEST_CASE("ensemble_select: selected set respects the collinearity cap post-hoc") {
    std::mt19937_64 rng(6);
    std::normal_distribution<double> noise(0.0, 1.0);
    const std::size_t n = 300, p = 8;
    Matrix x(n, p);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
        y[i] = static_cast<int>(i % 2);
        const double base = noise(rng);
        for (std::size_t j = 0; j < p; ++j)
            x(i, j) = 0.7 * base + 0.5 * noise(rng) + (y[i] ? 0.3 : 0.0);
    }
    auto d = make_dataset(x, y);
    auto res = ensemble_select(d);
    REQUIRE_FALSE(res.selected.empty());
    for (std::size_t a = 0; a < res.selected.size(); ++a)
        for (std::size_t b = a + 1; b < res.selected.size(); ++b) {
            const auto ia = std::find(d.feature_names.begin(), d.feature_names.end(),
                                      res.selected[a]) -
                            d.feature_names.begin();
            const auto ib = std::find(d.feature_names.begin(), d.feature_names.end(),
                                      res.selected[b]) -
                            d.feature_names.begin();
            const double r = std::abs(pearson(d.x.column(static_cast<std::size_t>(ia)),
                                              d.x.column(static_cast<std::size_t>(ib))));
            CHECK(r <= 0.85 + 1e-12);
        }

    CHECK_THROWS_AS(ensemble_select(make_dataset(Matrix(0, 0), {})), std::invalid_argument);
}

TEST_CASE("pca: rank-1 data, isotropic data, and orthonormal loadings") {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> n(0.0, 1.0);

    Matrix rank1(100, 3);
    for (std::size_t i = 0; i < 100; ++i) {
        const double t = n(rng);
        rank1(i, 0) = t;
        rank1(i, 1) = 2.0 * t;
        rank1(i, 2) = -0.5 * t;
    }
    auto p1 = pca(rank1, 0.95);
    CHECK(p1.explained_variance.size() == 1);
    CHECK(p1.explained_variance[0] == doctest::Approx(1.0));

    Matrix iso(2000, 3);
    for (std::size_t i = 0; i < 2000; ++i)
        for (std::size_t j = 0; j < 3; ++j) iso(i, j) = n(rng);
    auto p2 = pca(iso, 0.95);
    CHECK(p2.explained_variance.size() == 3);

    // Orthonormal loadings (Gram deviation below 1e-8).
    for (std::size_t a = 0; a < p2.loadings.cols(); ++a)
        for (std::size_t b = 0; b < p2.loadings.cols(); ++b) {
            double dot = 0.0;
            for (std::size_t i = 0; i < p2.loadings.rows(); ++i)
                dot += p2.loadings(i, a) * p2.loadings(i, b);
            CHECK(std::abs(dot - (a == b ? 1.0 : 0.0)) < 1e-8);
        }

    // Component-wise zero mean of the projected training data.
    for (std::size_t j = 0; j < p2.coordinates.cols(); ++j) {
        double mu = 0.0;
        for (std::size_t i = 0; i < p2.coordinates.rows(); ++i) mu += p2.coordinates(i, j);
        CHECK(std::abs(mu / 2000.0) < 1e-10);
    }

    // Explained variances non-increasing.
    for (std::size_t j = 1; j < p2.explained_variance.size(); ++j)
        CHECK(p2.explained_variance[j] <= p2.explained_variance[j - 1] + 1e-12);
}

TEST_CASE("pca reconstruction with all components is exact") {
    std::mt19937_64 rng(8);
    std::normal_distribution<double> n(0.0, 1.0);
    Matrix x(60, 5);
    for (std::size_t i = 0; i < 60; ++i)
        for (std::size_t j = 0; j < 5; ++j) x(i, j) = n(rng) * (1.0 + static_cast<double>(j));
    auto p = pca(x, 1.0);
    REQUIRE(p.loadings.cols() == 5);
    std::vector<double> mean(5, 0.0);
    for (std::size_t j = 0; j < 5; ++j) {
        for (std::size_t i = 0; i < 60; ++i) mean[j] += x(i, j);
        mean[j] /= 60.0;
    }
    double worst = 0.0;
    for (std::size_t i = 0; i < 60; ++i)
        for (std::size_t j = 0; j < 5; ++j) {
            double rec = mean[j];
            for (std::size_t c = 0; c < 5; ++c) rec += p.coordinates(i, c) * p.loadings(j, c);
            worst = std::max(worst, std::abs(rec - x(i, j)));
        }
    CHECK(worst < 1e-8);
}

TEST_CASE("tsne: separates two blobs, guards n and perplexity, notes pre-reduction") {
    std::mt19937_64 rng(9);
    std::normal_distribution<double> n(0.0, 1.0);
    const std::size_t half = 60;
    Matrix x(2 * half, 4);
    std::vector<int> labels(2 * half);
    for (std::size_t i = 0; i < 2 * half; ++i) {
        const bool second = i >= half;
        labels[i] = second ? 1 : 0;
        for (std::size_t j = 0; j < 4; ++j) x(i, j) = n(rng) + (second ? 8.0 : 0.0);
    }
    TsneConfig cfg;
    cfg.perplexity = 15.0;
    cfg.iterations = 400;
    cfg.seed = 3;
    std::vector<double> kl;
    auto proj = tsne(x, cfg, &kl);
    CHECK(proj.coordinates.cols() == 2);
    CHECK(silhouette(proj.coordinates, labels) > 0.5);

    // KL tail is finite and non-increasing within tolerance.
    REQUIRE(kl.size() == 400);
    for (std::size_t i = kl.size() - 100; i < kl.size(); ++i) {
        CHECK(std::isfinite(kl[i]));
        CHECK(kl[i] <= kl[i - 1] + 1e-3);
    }

    Matrix too_big(5000, 2);
    CHECK_THROWS_AS(tsne(too_big, cfg), std::runtime_error);

    TsneConfig bad = cfg;
    bad.perplexity = 100.0;  // >= n/3 for n = 120
    CHECK_THROWS_AS(tsne(x, bad), std::invalid_argument);

    // Wide input triggers the 50-component pre-reduction.
    Matrix wide(80, 120);
    for (std::size_t i = 0; i < wide.rows(); ++i)
        for (std::size_t j = 0; j < wide.cols(); ++j) wide(i, j) = n(rng);
    TsneConfig quick;
    quick.perplexity = 10.0;
    quick.iterations = 20;
    auto wide_proj = tsne(wide, quick);
    REQUIRE_FALSE(wide_proj.notes.empty());
    CHECK(wide_proj.notes[0].find("50") != std::string::npos);
}

TEST_CASE("tsne determinism under a fixed seed") {
    std::mt19937_64 rng(10);
    std::normal_distribution<double> n(0.0, 1.0);
    Matrix x(40, 3);
    for (std::size_t i = 0; i < 40; ++i)
        for (std::size_t j = 0; j < 3; ++j) x(i, j) = n(rng);
    TsneConfig cfg;
    cfg.perplexity = 8.0;
    cfg.iterations = 50;
    cfg.seed = 12;
    auto a = tsne(x, cfg);
    auto b = tsne(x, cfg);
    CHECK(a.coordinates == b.coordinates);
}
