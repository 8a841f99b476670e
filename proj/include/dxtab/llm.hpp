#pragma once

// Chat-completion models as tabular predictors: role-conditioned prompt
// construction (few-shot and comparative), a client abstraction with retries
// and rate limiting, and a total-function structured-output parser.

#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dxtab/cohort.hpp"
#include "json.hpp"

namespace dxtab::llm {

enum class PromptStrategy { few_shot, comparative };
std::string to_string(PromptStrategy s);
PromptStrategy strategy_from_string(const std::string& s);

struct FewShotExample {
    std::string subject_id;
    std::string feature_summary;
    int label = 0;
};

struct ReferenceRange {
    double p5 = 0.0, median = 0.0, p95 = 0.0;
};

struct PromptSpec {
    PromptStrategy strategy = PromptStrategy::few_shot;
    std::string role_preamble =
        "You are a senior endocrinologist specializing in DXA-based diabetes risk "
        "prediction.";
    std::vector<FewShotExample> examples;                  // required for few_shot
    std::map<std::string, ReferenceRange> reference_ranges;  // used by comparative

    void validate() const;
};

// Value with units at 3 significant digits, e.g. "Fasting_Glucose: 95.1 mg/dL".
std::string format_feature(const std::string& name, double value);
std::string format_feature_block(const std::vector<std::string>& names, const double* row);

std::string build_prompt(const std::vector<std::string>& feature_names, const double* row,
                         const PromptSpec& spec);

struct StructuredPrediction {
    enum class Risk { high, low };
    enum class ParseStatus { parsed, fallback };

    Risk risk_class = Risk::low;
    double probability = 0.5;  // clamped to [0.05, 0.95]
    double confidence = 50.0;  // clamped to [50, 100]
    std::string reasoning;
    ParseStatus parse_status = ParseStatus::fallback;
};

std::string to_string(StructuredPrediction::Risk r);

// Total function: ladder of (1) first well-formed JSON object, (2) pattern
// extraction, (3) fallback 0.5 / 50. Clamps always hold on the result.
StructuredPrediction parse_response(const std::string& text);

struct LlmEndpoint {
    std::string name = "mock-llm";  // row label in reports
    std::string base_url;           // empty = in-process mock
    std::string model;
    std::string api_key_env = "DXTAB_LLM_API_KEY";
    double timeout_seconds = 30.0;
    int max_retries = 3;
    double requests_per_minute = 30.0;

    void validate() const;
};

struct ChatResult {
    bool ok = false;
    std::string content;
    std::string error;
};

class ChatClient {
public:
    virtual ~ChatClient() = default;
    virtual ChatResult send(const std::string& system_prompt, const std::string& user_prompt) = 0;
};

// JSON chat-completion wire client (system + user messages, temperature 0).
// The API key comes from the endpoint's environment variable and is never
// logged.
class HttpChatClient : public ChatClient {
public:
    explicit HttpChatClient(LlmEndpoint endpoint);
    ChatResult send(const std::string& system_prompt, const std::string& user_prompt) override;

private:
    LlmEndpoint endpoint_;
};

// Deterministic scripted stand-in used by tests and the default pipeline.
class MockChatClient : public ChatClient {
public:
    using Responder = std::function<ChatResult(const std::string& system_prompt,
                                               const std::string& user_prompt)>;
    explicit MockChatClient(Responder responder) : responder_(std::move(responder)) {}
    ChatResult send(const std::string& system_prompt, const std::string& user_prompt) override {
        return responder_(system_prompt, user_prompt);
    }

private:
    Responder responder_;
};

struct TranscriptEntry {
    std::string subject_id;
    std::string prompt;
    std::string raw_response;  // or transport error text
    std::string status;        // parsed | fallback | error
    int attempts = 1;
    StructuredPrediction prediction;

    nlohmann::json to_json() const;
};

struct EvaluationRun {
    std::vector<StructuredPrediction> predictions;  // one per test row
    std::vector<double> probabilities;
    std::vector<TranscriptEntry> transcript;
};

using Sleeper = std::function<void(std::chrono::milliseconds)>;

// One request per subject under the rate cap, exponential backoff on
// transport errors; exhausted retries fall back and the run continues.
EvaluationRun evaluate(ChatClient& client, const LlmEndpoint& endpoint,
                       const cohort::LabeledDataset& test, const PromptSpec& spec,
                       const Sleeper& sleeper = {});

// Few-shot examples drawn from the head of the training data, balanced
// across labels; never from the test set.
std::vector<FewShotExample> make_examples(const cohort::LabeledDataset& train,
                                          std::size_t per_class);

std::map<std::string, ReferenceRange> make_reference_ranges(const cohort::LabeledDataset& train);

}  // namespace dxtab::llm
