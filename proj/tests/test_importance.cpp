#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "dxtab/importance.hpp"

using namespace dxtab;
using namespace dxtab::report;

namespace {

cohort::LabeledDataset correlated_dataset(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, 1.0);
    cohort::LabeledDataset d;
    d.feature_names = {"signal", "weak", "noise"};
    for (std::size_t i = 0; i < n; ++i) {
        const int y = i % 2 == 0 ? 1 : 0;
        d.x.append_row({noise(rng) + (y ? 2.0 : 0.0), noise(rng) + (y ? 0.5 : 0.0),
                        noise(rng)});
        d.labels.push_back(y);
        d.subject_ids.push_back("s" + std::to_string(i));
    }
    return d;
}

}  // namespace

TEST_CASE("a feature the model ignores has near-zero importance") {
    auto d = correlated_dataset(1200, 3);
    // Model reads only column 0.
    ProbaFn model = [](const Matrix& x) {
        std::vector<double> out(x.rows());
        for (std::size_t i = 0; i < x.rows(); ++i)
            out[i] = 1.0 / (1.0 + std::exp(-x(i, 0)));
        return out;
    };
    auto rep = permutation_importance(model, d, 10, 5);
    for (const auto& f : rep.features) {
        if (f.feature_name == "signal") continue;
        CHECK(std::abs(f.mean_auc_drop) < 0.01);
    }
    CHECK(rep.features.front().feature_name == "signal");
    CHECK(rep.features.front().normalized == doctest::Approx(1.0));
    CHECK(rep.features.front().tier == Tier::high);
}

TEST_CASE("single-feature threshold model maximizes that feature's importance") {
    auto d = correlated_dataset(600, 4);
    ProbaFn model = [](const Matrix& x) {
        std::vector<double> out(x.rows());
        for (std::size_t i = 0; i < x.rows(); ++i) out[i] = x(i, 1) > 0.25 ? 0.9 : 0.1;
        return out;
    };
    auto rep = permutation_importance(model, d, 10, 6);
    CHECK(rep.features.front().feature_name == "weak");
}

TEST_CASE("more repeats keep the ranking and report dispersion") {
    auto d = correlated_dataset(500, 7);
    ProbaFn model = [](const Matrix& x) {
        std::vector<double> out(x.rows());
        for (std::size_t i = 0; i < x.rows(); ++i)
            out[i] = 1.0 / (1.0 + std::exp(-(x(i, 0) + 0.3 * x(i, 1))));
        return out;
    };
    auto r1 = permutation_importance(model, d, 1, 8);
    auto r10 = permutation_importance(model, d, 10, 8);
    CHECK(r1.features.front().feature_name == r10.features.front().feature_name);
    CHECK(r1.features[0].std_auc_drop == 0.0);  // single repeat has no spread
    CHECK(r10.features[0].std_auc_drop >= 0.0);
    // Sign pattern of the informative features agrees.
    for (std::size_t i = 0; i < r10.features.size(); ++i) {
        if (r10.features[i].feature_name == "noise") continue;
        const auto& name = r10.features[i].feature_name;
        for (const auto& f : r1.features)
            if (f.feature_name == name)
                CHECK((f.mean_auc_drop > 0) == (r10.features[i].mean_auc_drop > 0));
    }
}

TEST_CASE("importance of a label-and-model-independent feature concentrates at zero") {
    double total_abs = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto d = correlated_dataset(1000, 100 + seed);
        ProbaFn model = [](const Matrix& x) {
            std::vector<double> out(x.rows());
            for (std::size_t i = 0; i < x.rows(); ++i)
                out[i] = 1.0 / (1.0 + std::exp(-x(i, 0)));
            return out;
        };
        auto rep = permutation_importance(model, d, 3, seed);
        for (const auto& f : rep.features)
            if (f.feature_name == "noise") total_abs += std::abs(f.mean_auc_drop);
    }
    CHECK(total_abs / 20.0 < 0.02);
}

TEST_CASE("tier assignment thresholds and the all-equal case") {
    ImportanceReport rep;
    rep.features = {{"a", 0.2, 0.0, 1.0, Tier::least},
                    {"b", 0.06, 0.0, 0.3, Tier::least},
                    {"c", 0.002, 0.0, 0.01, Tier::least}};
    assign_tiers(rep);
    CHECK(rep.features[0].tier == Tier::high);
    CHECK(rep.features[1].tier == Tier::moderate);
    CHECK(rep.features[2].tier == Tier::least);

    // All-equal importances normalize to 1 and land in the high tier.
    ImportanceReport flat;
    flat.features = {{"a", 0.1, 0.0, 1.0, Tier::least}, {"b", 0.1, 0.0, 1.0, Tier::least}};
    assign_tiers(flat);
    for (const auto& f : flat.features) CHECK(f.tier == Tier::high);

    // Custom thresholds are honored.
    TierThresholds strict{0.9, 0.5};
    assign_tiers(rep, strict);
    CHECK(rep.features[1].tier == Tier::least);
}

TEST_CASE("permutation importance is deterministic given the seed") {
    auto d = correlated_dataset(300, 9);
    ProbaFn model = [](const Matrix& x) {
        std::vector<double> out(x.rows());
        for (std::size_t i = 0; i < x.rows(); ++i)
            out[i] = 1.0 / (1.0 + std::exp(-x(i, 0)));
        return out;
    };
    auto a = permutation_importance(model, d, 5, 11);
    auto b = permutation_importance(model, d, 5, 11);
    REQUIRE(a.features.size() == b.features.size());
    for (std::size_t i = 0; i < a.features.size(); ++i) {
        CHECK(a.features[i].feature_name == b.features[i].feature_name);
        CHECK(a.features[i].mean_auc_drop == b.features[i].mean_auc_drop);
    }

    cohort::LabeledDataset single;
    single.feature_names = {"f"};
    single.x.append_row({1.0});
    single.labels = {1};
    single.subject_ids = {"s"};
    CHECK_THROWS_AS(permutation_importance(model, single, 1, 0), std::runtime_error);
}
