#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "dxtab/features.hpp"
#include "dxtab/schema.hpp"
#include "dxtab/synthetic.hpp"

using namespace dxtab;
using namespace dxtab::features;
using cohort::FeatureMap;

TEST_CASE("central obesity ratio with the epsilon guard") {
    auto f = engineer({{"Android_Fat_Mass", 2000.0}, {"Gynoid_Fat_Mass", 1000.0}});
    REQUIRE(f.central_obesity_ratio.has_value());
    CHECK(*f.central_obesity_ratio == doctest::Approx(2000.0 / (1000.0 + 1e-8)).epsilon(1e-12));

    // Zero denominator stays finite through the guard.
    auto z = engineer({{"Android_Fat_Mass", 5.0}, {"Gynoid_Fat_Mass", 0.0}});
    REQUIRE(z.central_obesity_ratio.has_value());
    CHECK(*z.central_obesity_ratio == doctest::Approx(5.0 / 1e-8));
}

TEST_CASE("exact hand oracles for each ratio formula") {
    FeatureMap fm = {
        {"Android_Fat_Mass", 2000.0}, {"Gynoid_Fat_Mass", 1000.0},
        {"VAT_Mass", 500.0},          {"Total_Fat_Mass", 20000.0},
        {"Total_Lean_Mass", 50000.0}, {"Trunk_Fat_Mass", 9000.0},
        {"Arms_Fat_Mass", 2000.0},    {"Legs_Fat_Mass", 6000.0},
        {"Total_Fat_Free_Mass", 52000.0}, {"Total_Area", 2500.0},
    };
    auto f = engineer(fm);
    CHECK(*f.visceral_adiposity_index == doctest::Approx(500.0 / (20000.0 + 1e-8)).epsilon(1e-12));
    CHECK(*f.muscle_fat_ratio == doctest::Approx(50000.0 / (20000.0 + 1e-8)).epsilon(1e-12));
    CHECK(*f.trunk_fat_percentage ==
          doctest::Approx(9000.0 / (20000.0 + 1e-8) * 100.0).epsilon(1e-12));
    CHECK(*f.ffm_index == doctest::Approx(52000.0 / std::sqrt(2500.0 + 1e-8)).epsilon(1e-12));
    CHECK(*f.peripheral_fat_ratio ==
          doctest::Approx((2000.0 + 6000.0) / (9000.0 + 1e-8)).epsilon(1e-12));
}

TEST_CASE("spine bmd mean averages available sites only") {
    auto f = engineer({{"L1_BMD", 1.0}, {"L2_BMD", 1.1}, {"L4_BMD", 0.9}});  // L3 missing
    REQUIRE(f.spine_bmd_mean.has_value());
    CHECK(*f.spine_bmd_mean == doctest::Approx(1.0).epsilon(1e-12));  // (1.0+1.1+0.9)/3
}

TEST_CASE("osteoporosis risk counts T-scores strictly below -2.5") {
    auto f = engineer(
        {{"Spine_TScore", -3.0}, {"Femur_TScore", -2.6}, {"Ward_TScore", -1.0}});
    CHECK(*f.osteoporosis_risk == 2.0);
    CHECK(*f.bone_health_composite == doctest::Approx((-3.0 - 2.6 - 1.0) / 3.0));

    auto boundary = engineer({{"Spine_TScore", -2.5}});
    CHECK(*boundary.osteoporosis_risk == 0.0);  // strict threshold
}

TEST_CASE("osteoporosis risk equals a brute-force count on random lists") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> t(-4.0, 2.0);
    std::uniform_int_distribution<int> pick(0, 1);
    for (int trial = 0; trial < 100; ++trial) {
        FeatureMap fm;
        int expected = 0;
        int present = 0;
        for (auto site : schema::kTScoreSites) {
            if (pick(rng)) continue;
            const double v = t(rng);
            fm[std::string(site)] = v;
            if (v < -2.5) ++expected;
            ++present;
        }
        auto f = engineer(fm);
        if (present == 0) {
            CHECK_FALSE(f.osteoporosis_risk.has_value());
        } else {
            CHECK(*f.osteoporosis_risk == static_cast<double>(expected));
        }
    }
}

TEST_CASE("bmd coefficient of variation: hand oracle and scale invariance") {
    auto f = engineer({{"L1_BMD", 1.0}, {"L2_BMD", 1.2}});
    // mean 1.1, population sd 0.1
    CHECK(*f.bmd_coefficient_variation == doctest::Approx(0.1 / (1.1 + 1e-8)).epsilon(1e-12));

    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> bmd(0.6, 1.4), scale(0.1, 10.0);
    for (int trial = 0; trial < 50; ++trial) {
        const double c = scale(rng);
        FeatureMap base, scaled;
        for (auto site : schema::kAllBmdSites) {
            const double v = bmd(rng);
            base[std::string(site)] = v;
            scaled[std::string(site)] = c * v;
        }
        const double cv1 = *engineer(base).bmd_coefficient_variation;
        const double cv2 = *engineer(scaled).bmd_coefficient_variation;
        CHECK(cv1 == doctest::Approx(cv2).epsilon(1e-6));
    }
}

TEST_CASE("ratio formulas are invariant to joint positive rescaling") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> mass(100.0, 30000.0), scale(0.01, 100.0);
    for (int trial = 0; trial < 50; ++trial) {
        const double c = scale(rng);
        const double android = mass(rng), gynoid = mass(rng), vat = mass(rng),
                     total = mass(rng), lean = mass(rng), trunk = mass(rng), arms = mass(rng),
                     legs = mass(rng);
        FeatureMap base = {{"Android_Fat_Mass", android}, {"Gynoid_Fat_Mass", gynoid},
                           {"VAT_Mass", vat},             {"Total_Fat_Mass", total},
                           {"Total_Lean_Mass", lean},     {"Trunk_Fat_Mass", trunk},
                           {"Arms_Fat_Mass", arms},       {"Legs_Fat_Mass", legs}};
        FeatureMap scaled;
        for (const auto& [k, v] : base) scaled[k] = c * v;
        auto f1 = engineer(base);
        auto f2 = engineer(scaled);
        CHECK(*f1.central_obesity_ratio ==
              doctest::Approx(*f2.central_obesity_ratio).epsilon(1e-6));
        CHECK(*f1.visceral_adiposity_index ==
              doctest::Approx(*f2.visceral_adiposity_index).epsilon(1e-6));
        CHECK(*f1.muscle_fat_ratio == doctest::Approx(*f2.muscle_fat_ratio).epsilon(1e-6));
        CHECK(*f1.peripheral_fat_ratio ==
              doctest::Approx(*f2.peripheral_fat_ratio).epsilon(1e-6));
    }
}

TEST_CASE("trunk fat percentage stays in [0,100] for consistent records") {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> mass(0.0, 30000.0);
    for (int trial = 0; trial < 100; ++trial) {
        const double total = mass(rng) + 1.0;
        std::uniform_real_distribution<double> trunk_dist(0.0, total);
        auto f = engineer({{"Trunk_Fat_Mass", trunk_dist(rng)}, {"Total_Fat_Mass", total}});
        CHECK(*f.trunk_fat_percentage >= 0.0);
        CHECK(*f.trunk_fat_percentage <= 100.0);
    }
}

TEST_CASE("missing inputs degrade to missing outputs") {
    auto f = engineer({{"LDL", 120.0}});
    CHECK_FALSE(f.central_obesity_ratio.has_value());
    CHECK_FALSE(f.visceral_adiposity_index.has_value());
    CHECK_FALSE(f.spine_bmd_mean.has_value());
    CHECK_FALSE(f.bone_health_composite.has_value());
    CHECK_FALSE(f.osteoporosis_risk.has_value());
    CHECK_FALSE(f.bmd_coefficient_variation.has_value());
}

TEST_CASE("engineer_matrix appends ten columns and is deterministic") {
    cohort::SyntheticSpec spec;
    spec.n_male_control = 10;
    spec.n_male_case = 3;
    spec.n_female_control = 8;
    spec.n_female_case = 2;
    auto gen = cohort::generate_synthetic_cohort(spec);
    const auto before = gen.baseline.feature_names.size();
    auto e1 = engineer_matrix(gen.baseline);
    auto e2 = engineer_matrix(gen.baseline);
    CHECK(e1.feature_names.size() == before + 10);
    for (std::size_t i = 0; i < e1.records.size(); ++i)
        CHECK(e1.records[i].values == e2.records[i].values);

    // A record with no T-scores gets a missing composite.
    cohort::RawCohort c;
    c.feature_names = {"L1_BMD"};
    cohort::SubjectRecord r;
    r.subject_id = "X";
    r.values = {1.0};
    c.records.push_back(r);
    auto e = engineer_matrix(c);
    const auto idx = *e.feature_index("Bone_Health_Composite");
    CHECK_FALSE(e.records[0].values[idx].has_value());
}

TEST_CASE("standardizer: fit/apply oracle values and zero-variance passthrough") {
    cohort::LabeledDataset d;
    d.feature_names = {"a", "konst"};
    d.x.append_row({1.0, 5.0});
    d.x.append_row({2.0, 5.0});
    d.x.append_row({3.0, 5.0});
    d.subject_ids = {"r1", "r2", "r3"};
    d.labels = {0, 1, 0};
    auto s = Standardizer::fit(d);
    auto t = s.apply(d);
    const double e = std::sqrt(2.0 / 3.0);  // population sd of {1,2,3}
    CHECK(t.x(0, 0) == doctest::Approx(-1.0 / e).epsilon(1e-12));
    CHECK(t.x(1, 0) == doctest::Approx(0.0));
    CHECK(t.x(2, 0) == doctest::Approx(1.0 / e).epsilon(1e-12));
    CHECK(-1.0 / e == doctest::Approx(-1.2247448714).epsilon(1e-9));

    CHECK(s.zero_variance()[1]);
    CHECK(t.x(0, 1) == 5.0);  // unchanged

    // Transformed training columns are centered.
    double mean0 = (t.x(0, 0) + t.x(1, 0) + t.x(2, 0)) / 3.0;
    CHECK(std::abs(mean0) < 1e-10);

    // Round trip through the stored inverse.
    auto back = s.inverse(t);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 2; ++j)
            CHECK(std::abs(back.x(i, j) - d.x(i, j)) < 1e-10);
}

TEST_CASE("standardizer applies train statistics to test data") {
    cohort::LabeledDataset train, test;
    train.feature_names = test.feature_names = {"a"};
    train.x.append_row({0.0});
    train.x.append_row({10.0});
    train.subject_ids = {"t1", "t2"};
    train.labels = {0, 1};
    test.x.append_row({5.0});
    test.subject_ids = {"u1"};
    test.labels = {0};
    auto s = Standardizer::fit(train);
    auto t = s.apply(test);
    CHECK(t.x(0, 0) == doctest::Approx(0.0));  // (5-5)/5
}
