#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>

#include "dxtab/llm.hpp"
#include "dxtab/metrics.hpp"

using namespace dxtab;
using namespace dxtab::llm;

namespace {

cohort::LabeledDataset small_dataset(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, 1.0);
    cohort::LabeledDataset d;
    d.feature_names = {"HbA1c", "VAT_Mass"};
    for (std::size_t i = 0; i < n; ++i) {
        const int y = i % 2 == 0 ? 1 : 0;
        d.x.append_row({5.5 + noise(rng) * 0.3 + (y ? 0.8 : 0.0),
                        500.0 + noise(rng) * 100.0 + (y ? 250.0 : 0.0)});
        d.labels.push_back(y);
        d.subject_ids.push_back("T" + std::to_string(i));
    }
    return d;
}

PromptSpec few_shot_spec() {
    PromptSpec spec;
    spec.examples.push_back({"TRAIN1", "  - HbA1c: 5.2 %\n", 0});
    spec.examples.push_back({"TRAIN2", "  - HbA1c: 6.9 %\n", 1});
    return spec;
}

}  // namespace

TEST_CASE("prompt construction is deterministic and leak-free") {
    auto spec = few_shot_spec();
    const std::vector<std::string> names = {"HbA1c", "VAT_Mass"};
    const double row[2] = {5.61234, 612.345};
    const auto p1 = build_prompt(names, row, spec);
    const auto p2 = build_prompt(names, row, spec);
    CHECK(p1 == p2);
    CHECK(p1.find("Example 1") != std::string::npos);
    CHECK(p1.find("Example 2") != std::string::npos);
    CHECK(p1.find("5.61 %") != std::string::npos);   // three significant digits with units
    CHECK(p1.find("612 g") != std::string::npos);
    CHECK(p1.find("\"risk\"") != std::string::npos);  // output contract
    // The prompt never includes outcome words for the query subject beyond
    // the instruction block (no label is even passed in).
    CHECK(p1.rfind("Outcome:") < p1.find("Subject measurements:"));
}

TEST_CASE("comparative prompts carry population reference ranges") {
    PromptSpec spec;
    spec.strategy = PromptStrategy::comparative;
    spec.reference_ranges["HbA1c"] = {4.8, 5.5, 6.4};
    const std::vector<std::string> names = {"HbA1c"};
    const double row[1] = {6.0};
    const auto p = build_prompt(names, row, spec);
    CHECK(p.find("reference ranges") != std::string::npos);
    CHECK(p.find("4.8 / 5.5 / 6.4") != std::string::npos);
    CHECK(p.find("relative to the population") != std::string::npos);
}

TEST_CASE("few_shot without examples is invalid") {
    PromptSpec spec;
    CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
}

TEST_CASE("parse ladder rung 1: well-formed JSON") {
    auto p = parse_response(
        R"(Sure. {"risk":"high","probability":0.82,"confidence":91,"reasoning":"elevated VAT"})");
    CHECK(p.parse_status == StructuredPrediction::ParseStatus::parsed);
    CHECK(p.risk_class == StructuredPrediction::Risk::high);
    CHECK(p.probability == doctest::Approx(0.82));
    CHECK(p.confidence == doctest::Approx(91.0));
    CHECK(p.reasoning == "elevated VAT");

    // Numeric strings and missing optional keys are tolerated.
    auto q = parse_response(R"({"risk":"low","probability":"0.31"})");
    CHECK(q.parse_status == StructuredPrediction::ParseStatus::parsed);
    CHECK(q.probability == doctest::Approx(0.31));
    CHECK(q.confidence == 50.0);
}

TEST_CASE("parse ladder clamps out-of-range values") {
    auto low = parse_response(R"({"risk":"low","probability":0.01,"confidence":91})");
    CHECK(low.probability == doctest::Approx(0.05));  // clamped to [0.05, 0.95]
    auto high = parse_response(R"({"risk":"high","probability":0.99,"confidence":120})");
    CHECK(high.probability == doctest::Approx(0.95));
    CHECK(high.confidence == doctest::Approx(100.0));
    auto conf = parse_response(R"({"risk":"high","probability":0.6,"confidence":12})");
    CHECK(conf.confidence == doctest::Approx(50.0));
}

TEST_CASE("parse ladder rung 2: pattern extraction from prose") {
    auto p = parse_response(
        "Given the measurements I estimate the probability: 0.73 with confidence 85% -- "
        "this is a high risk subject.");
    CHECK(p.parse_status == StructuredPrediction::ParseStatus::parsed);
    CHECK(p.probability == doctest::Approx(0.73));
    CHECK(p.confidence == doctest::Approx(85.0));
    CHECK(p.risk_class == StructuredPrediction::Risk::high);

    auto pct = parse_response("I'd put the probability at 40% here. Risk seems low.");
    CHECK(pct.parse_status == StructuredPrediction::ParseStatus::parsed);
    CHECK(pct.probability == doctest::Approx(0.40));
    CHECK(pct.risk_class == StructuredPrediction::Risk::low);
}

TEST_CASE("parse ladder rung 3: fallback is total") {
    for (const char* text : {"cannot comply", "", "{{{{", "no numbers here",
                             "{\"unrelated\": true}", "probability: banana",
                             "{\"risk\":\"high\",\"probability\":\"NaNish\"}"}) {
        auto p = parse_response(text);
        CHECK(p.parse_status == StructuredPrediction::ParseStatus::fallback);
        CHECK(p.probability == doctest::Approx(0.5));
        CHECK(p.confidence == doctest::Approx(50.0));
    }
}

TEST_CASE("parse invariants hold over an adversarial corpus") {
    std::vector<std::string> corpus = {
        R"({"risk": "HIGH", "probability": 1.7, "confidence": 999})",
        R"({"probability": 0.4})",  // missing risk -> rung 2/3
        R"(text before {"risk":"low","probability":0.2,"confidence":55} text after)",
        "probability 0.5 confidence 50",
        "PROBABILITY: .9",
        "{\"risk\": true, \"probability\": 0.66}",
        "{\"risk\": \"high\", \"probability\": \"not a number\"}",
        std::string(10000, 'x'),
        "{}",
        "risk high probability confidence",
    };
    std::mt19937_64 rng(9);
    std::uniform_int_distribution<int> ch(32, 126);
    for (int i = 0; i < 40; ++i) {
        std::string junk;
        for (int c = 0; c < 120; ++c) junk.push_back(static_cast<char>(ch(rng)));
        corpus.push_back(junk);
    }
    for (const auto& text : corpus) {
        StructuredPrediction p;
        CHECK_NOTHROW(p = parse_response(text));
        CHECK(p.probability >= 0.05);
        CHECK(p.probability <= 0.95);
        CHECK(p.confidence >= 50.0);
        CHECK(p.confidence <= 100.0);
    }
}

TEST_CASE("evaluate: oracle mock reaches AUC 1, constant mock sits at 0.5") {
    auto test = small_dataset(30, 4);
    auto spec = few_shot_spec();
    LlmEndpoint endpoint;
    endpoint.requests_per_minute = 0.0;  // no throttling in tests
    Sleeper no_sleep = [](std::chrono::milliseconds) {};

    // The oracle peeks at the subject's HbA1c, which determines the label in
    // this dataset (skipping the few-shot example block).
    MockChatClient oracle([](const std::string&, const std::string& user) {
        const auto subject = user.find("Subject measurements:");
        const auto at = user.find("HbA1c: ", subject);
        const double value = std::stod(user.substr(at + 7));
        const double prob = value > 5.9 ? 0.9 : 0.1;
        return ChatResult{true,
                          "{\"risk\": \"" + std::string(prob > 0.5 ? "high" : "low") +
                              "\", \"probability\": " + std::to_string(prob) +
                              ", \"confidence\": 90, \"reasoning\": \"a1c\"}",
                          ""};
    });
    auto run = evaluate(oracle, endpoint, test, spec, no_sleep);
    CHECK(run.probabilities.size() == test.labels.size());
    CHECK(report::roc_auc(test.labels, run.probabilities).auc == doctest::Approx(1.0));

    MockChatClient constant([](const std::string&, const std::string&) {
        return ChatResult{true, R"({"risk":"low","probability":0.5,"confidence":50})", ""};
    });
    auto flat = evaluate(constant, endpoint, test, spec, no_sleep);
    CHECK(report::roc_auc(test.labels, flat.probabilities).auc == doctest::Approx(0.5));
}

TEST_CASE("evaluate: transient transport errors retry and recover") {
    auto test = small_dataset(4, 5);
    auto spec = few_shot_spec();
    LlmEndpoint endpoint;
    endpoint.max_retries = 2;
    endpoint.requests_per_minute = 0.0;
    Sleeper no_sleep = [](std::chrono::milliseconds) {};

    int calls = 0;
    MockChatClient flaky([&calls](const std::string&, const std::string&) {
        ++calls;
        if (calls == 1) return ChatResult{false, "", "connection reset"};
        return ChatResult{true, R"({"risk":"low","probability":0.2,"confidence":60})", ""};
    });
    auto run = evaluate(flaky, endpoint, test, spec, no_sleep);
    REQUIRE(run.transcript.size() == 4);
    CHECK(run.transcript[0].attempts == 2);  // one retry logged
    CHECK(run.transcript[0].status == "parsed");
    for (std::size_t i = 1; i < 4; ++i) CHECK(run.transcript[i].attempts == 1);
}

TEST_CASE("evaluate: exhausted retries fall back and the run continues") {
    auto test = small_dataset(3, 6);
    auto spec = few_shot_spec();
    LlmEndpoint endpoint;
    endpoint.max_retries = 1;
    endpoint.requests_per_minute = 0.0;
    Sleeper no_sleep = [](std::chrono::milliseconds) {};

    int calls = 0;
    MockChatClient dead([&calls](const std::string&, const std::string&) {
        ++calls;
        if (calls <= 2) return ChatResult{false, "", "timeout"};  // first subject dies
        return ChatResult{true, R"({"risk":"high","probability":0.8,"confidence":70})", ""};
    });
    auto run = evaluate(dead, endpoint, test, spec, no_sleep);
    CHECK(run.transcript[0].status == "error");
    CHECK(run.probabilities[0] == doctest::Approx(0.5));
    CHECK(run.transcript[1].status == "parsed");
    // Transcript completeness: one terminal entry per subject.
    CHECK(run.transcript.size() == 3);
}

TEST_CASE("evaluate rejects few-shot examples drawn from the test set") {
    auto test = small_dataset(3, 7);
    PromptSpec spec;
    spec.examples.push_back({test.subject_ids[1], "  - HbA1c: 5.0 %\n", 0});
    LlmEndpoint endpoint;
    MockChatClient ok([](const std::string&, const std::string&) {
        return ChatResult{true, "{}", ""};
    });
    CHECK_THROWS_AS(evaluate(ok, endpoint, test, spec), std::runtime_error);
}

TEST_CASE("make_examples balances classes and make_reference_ranges orders quantiles") {
    auto train = small_dataset(20, 8);
    auto examples = make_examples(train, 2);
    int pos = 0, neg = 0;
    for (const auto& e : examples) (e.label == 1 ? pos : neg)++;
    CHECK(pos == 2);
    CHECK(neg == 2);

    auto ranges = make_reference_ranges(train);
    for (const auto& [name, r] : ranges) {
        (void)name;
        CHECK(r.p5 <= r.median);
        CHECK(r.median <= r.p95);
    }
}
