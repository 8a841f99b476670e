#include "dxtab/llm.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "dxtab/schema.hpp"
#include "httplib.h"

namespace dxtab::llm {

std::string to_string(PromptStrategy s) {
    return s == PromptStrategy::few_shot ? "few_shot" : "comparative";
}

PromptStrategy strategy_from_string(const std::string& s) {
    if (s == "few_shot") return PromptStrategy::few_shot;
    if (s == "comparative") return PromptStrategy::comparative;
    throw std::invalid_argument("llm: unknown prompt strategy \"" + s + "\"");
}

std::string to_string(StructuredPrediction::Risk r) {
    return r == StructuredPrediction::Risk::high ? "high" : "low";
}

void PromptSpec::validate() const {
    if (strategy == PromptStrategy::few_shot && examples.empty())
        throw std::invalid_argument("llm: few_shot strategy requires at least one example");
}

void LlmEndpoint::validate() const {
    if (timeout_seconds <= 0.0) throw std::invalid_argument("llm: timeout must be > 0");
    if (max_retries < 0) throw std::invalid_argument("llm: retries must be >= 0");
    if (requests_per_minute < 0.0)
        throw std::invalid_argument("llm: requests_per_minute must be >= 0");
}

namespace {

std::string three_significant(double v) {
    if (v == 0.0) return "0";
    std::ostringstream out;
    out.precision(3);
    out << v;
    return out.str();
}

}  // namespace

std::string format_feature(const std::string& name, double value) {
    const auto unit = schema::unit_of(name);
    std::string out = name + ": " + three_significant(value);
    if (!unit.empty()) out += " " + std::string(unit);
    return out;
}

std::string format_feature_block(const std::vector<std::string>& names, const double* row) {
    std::string out;
    for (std::size_t j = 0; j < names.size(); ++j)
        out += "  - " + format_feature(names[j], row[j]) + "\n";
    return out;
}

std::string build_prompt(const std::vector<std::string>& feature_names, const double* row,
                         const PromptSpec& spec) {
    spec.validate();
    std::string p;
    if (spec.strategy == PromptStrategy::few_shot) {
        p += "Here are reference cases with known outcomes:\n\n";
        for (std::size_t e = 0; e < spec.examples.size(); ++e) {
            p += "Example " + std::to_string(e + 1) + ":\n";
            p += spec.examples[e].feature_summary;
            p += "Outcome: " +
                 std::string(spec.examples[e].label == 1 ? "developed type 2 diabetes"
                                                         : "remained healthy") +
                 "\n\n";
        }
    } else {
        p += "Population reference ranges (5th percentile / median / 95th percentile):\n";
        for (const auto& [name, range] : spec.reference_ranges)
            p += "  - " + name + ": " + three_significant(range.p5) + " / " +
                 three_significant(range.median) + " / " + three_significant(range.p95) + "\n";
        p += "\nAssess where this subject sits relative to the population before "
             "deciding.\n\n";
    }
    p += "Subject measurements:\n";
    p += format_feature_block(feature_names, row);
    p += "\nEstimate this subject's risk of developing type 2 diabetes by the "
         "follow-up visit.\n";
    p += "Respond with a single JSON object with exactly these keys: "
         "\"risk\" (\"high\" or \"low\"), \"probability\" (number from 0 to 1), "
         "\"confidence\" (number from 50 to 100), \"reasoning\" (short string).\n";
    return p;
}

namespace {

void clamp_prediction(StructuredPrediction& p) {
    if (!std::isfinite(p.probability)) p.probability = 0.5;
    if (!std::isfinite(p.confidence)) p.confidence = 50.0;
    p.probability = std::clamp(p.probability, 0.05, 0.95);
    p.confidence = std::clamp(p.confidence, 50.0, 100.0);
}

std::string lower(std::string s) {
    for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

// First balanced JSON object found anywhere in the text, parsed leniently.
std::optional<nlohmann::json> first_json_object(const std::string& text) {
    for (std::size_t start = text.find('{'); start != std::string::npos;
         start = text.find('{', start + 1)) {
        int depth = 0;
        bool in_string = false;
        for (std::size_t i = start; i < text.size(); ++i) {
            const char c = text[i];
            if (in_string) {
                if (c == '\\')
                    ++i;
                else if (c == '"')
                    in_string = false;
                continue;
            }
            if (c == '"') in_string = true;
            if (c == '{') ++depth;
            if (c == '}') {
                --depth;
                if (depth == 0) {
                    const auto candidate = text.substr(start, i - start + 1);
                    auto parsed = nlohmann::json::parse(candidate, nullptr, false);
                    if (!parsed.is_discarded() && parsed.is_object()) return parsed;
                    break;  // try the next '{'
                }
            }
        }
    }
    return std::nullopt;
}

std::optional<double> json_number(const nlohmann::json& j) {
    if (j.is_number()) return j.get<double>();
    if (j.is_string()) {
        try {
            std::size_t pos = 0;
            const double v = std::stod(j.get<std::string>(), &pos);
            if (!std::isfinite(v)) return std::nullopt;
            return v;
        } catch (...) {
            return std::nullopt;
        }
    }
    return std::nullopt;
}

std::optional<StructuredPrediction::Risk> json_risk(const nlohmann::json& j) {
    if (j.is_string()) {
        const auto s = lower(j.get<std::string>());
        if (s.find("high") != std::string::npos) return StructuredPrediction::Risk::high;
        if (s.find("low") != std::string::npos) return StructuredPrediction::Risk::low;
        return std::nullopt;
    }
    if (j.is_boolean())
        return j.get<bool>() ? StructuredPrediction::Risk::high
                             : StructuredPrediction::Risk::low;
    if (j.is_number())
        return j.get<double>() >= 0.5 ? StructuredPrediction::Risk::high
                                      : StructuredPrediction::Risk::low;
    return std::nullopt;
}

// First numeric token after `anchor` (case-insensitive); '%' divides by 100
// when `as_fraction` is requested.
std::optional<double> number_after(const std::string& text, const std::string& anchor,
                                   bool as_fraction) {
    const std::string hay = lower(text);
    const std::size_t at = hay.find(anchor);
    if (at == std::string::npos) return std::nullopt;
    const std::size_t window_end = std::min(text.size(), at + anchor.size() + 48);
    for (std::size_t i = at + anchor.size(); i < window_end; ++i) {
        const char c = text[i];
        if (!(std::isdigit(static_cast<unsigned char>(c)) ||
              (c == '.' && i + 1 < text.size() &&
               std::isdigit(static_cast<unsigned char>(text[i + 1])))))
            continue;
        std::size_t end = i;
        while (end < text.size() &&
               (std::isdigit(static_cast<unsigned char>(text[end])) || text[end] == '.'))
            ++end;
        try {
            double v = std::stod(text.substr(i, end - i));
            if (!std::isfinite(v)) return std::nullopt;
            const bool percent = end < text.size() && text[end] == '%';
            if (percent && as_fraction) v /= 100.0;
            return v;
        } catch (...) {
            return std::nullopt;
        }
    }
    return std::nullopt;
}

}  // namespace

StructuredPrediction parse_response(const std::string& text) {
    StructuredPrediction out;

    // Rung 1: a well-formed JSON object carrying risk and probability.
    if (const auto j = first_json_object(text)) {
        const bool has_risk = j->contains("risk");
        const bool has_prob = j->contains("probability");
        if (has_risk && has_prob) {
            const auto prob = json_number((*j)["probability"]);
            const auto risk = json_risk((*j)["risk"]);
            if (prob.has_value()) {
                out.probability = *prob;
                out.risk_class = risk.value_or(*prob >= 0.5
                                                   ? StructuredPrediction::Risk::high
                                                   : StructuredPrediction::Risk::low);
                out.confidence = 50.0;
                if (j->contains("confidence")) {
                    if (const auto c = json_number((*j)["confidence"])) out.confidence = *c;
                }
                if (j->contains("reasoning") && (*j)["reasoning"].is_string())
                    out.reasoning = (*j)["reasoning"].get<std::string>();
                out.parse_status = StructuredPrediction::ParseStatus::parsed;
                clamp_prediction(out);
                return out;
            }
        }
    }

    // Rung 2: pattern extraction from prose.
    if (const auto prob = number_after(text, "probability", true)) {
        if (*prob >= 0.0 && *prob <= 1.0) {
            out.probability = *prob;
            out.parse_status = StructuredPrediction::ParseStatus::parsed;
            const auto conf = number_after(text, "confidence", false);
            out.confidence = conf.value_or(50.0);
            const std::string hay = lower(text);
            const bool says_high = hay.find("high") != std::string::npos;
            const bool says_low = hay.find("low") != std::string::npos;
            if (says_high && !says_low)
                out.risk_class = StructuredPrediction::Risk::high;
            else if (says_low && !says_high)
                out.risk_class = StructuredPrediction::Risk::low;
            else
                out.risk_class = out.probability >= 0.5 ? StructuredPrediction::Risk::high
                                                        : StructuredPrediction::Risk::low;
            out.reasoning = "";
            clamp_prediction(out);
            return out;
        }
    }

    // Rung 3: fallback.
    out = StructuredPrediction{};
    out.probability = 0.5;
    out.confidence = 50.0;
    out.risk_class = StructuredPrediction::Risk::high;  // 0.5 rounds toward caution
    out.parse_status = StructuredPrediction::ParseStatus::fallback;
    clamp_prediction(out);
    return out;
}

HttpChatClient::HttpChatClient(LlmEndpoint endpoint) : endpoint_(std::move(endpoint)) {
    endpoint_.validate();
    if (endpoint_.base_url.empty())
        throw std::invalid_argument("llm: HttpChatClient needs a base URL");
}

ChatResult HttpChatClient::send(const std::string& system_prompt,
                                const std::string& user_prompt) {
    // Split a path prefix (e.g. ".../v1") off the base URL; the client keeps
    // only scheme://host:port and the prefix goes onto the request path.
    std::string origin = endpoint_.base_url;
    std::string prefix;
    const auto scheme_end = origin.find("://");
    const auto path_start =
        origin.find('/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
    if (path_start != std::string::npos) {
        prefix = origin.substr(path_start);
        while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
        origin = origin.substr(0, path_start);
    }
    httplib::Client client(origin);
    client.set_connection_timeout(static_cast<time_t>(endpoint_.timeout_seconds), 0);
    client.set_read_timeout(static_cast<time_t>(endpoint_.timeout_seconds), 0);

    httplib::Headers headers;
    if (const char* key = std::getenv(endpoint_.api_key_env.c_str()))
        headers.emplace("Authorization", std::string("Bearer ") + key);

    nlohmann::json body = {
        {"model", endpoint_.model},
        {"temperature", 0},
        {"messages",
         {{{"role", "system"}, {"content", system_prompt}},
          {{"role", "user"}, {"content", user_prompt}}}},
    };
    auto res =
        client.Post(prefix + "/chat/completions", headers, body.dump(), "application/json");
    ChatResult out;
    if (!res) {
        out.error = "transport error: " + httplib::to_string(res.error());
        return out;
    }
    if (res->status < 200 || res->status >= 300) {
        out.error = "http status " + std::to_string(res->status);
        return out;
    }
    auto parsed = nlohmann::json::parse(res->body, nullptr, false);
    if (parsed.is_discarded() || !parsed.contains("choices") || parsed["choices"].empty()) {
        out.error = "malformed completion body";
        return out;
    }
    const auto& choice = parsed["choices"][0];
    if (!choice.contains("message") || !choice["message"].contains("content")) {
        out.error = "completion missing message content";
        return out;
    }
    out.ok = true;
    out.content = choice["message"]["content"].get<std::string>();
    return out;
}

nlohmann::json TranscriptEntry::to_json() const {
    return {{"subject_id", subject_id},
            {"prompt", prompt},
            {"raw_response", raw_response},
            {"status", status},
            {"attempts", attempts},
            {"risk", to_string(prediction.risk_class)},
            {"probability", prediction.probability},
            {"confidence", prediction.confidence},
            {"parse_status",
             prediction.parse_status == StructuredPrediction::ParseStatus::parsed ? "parsed"
                                                                                  : "fallback"}};
}

EvaluationRun evaluate(ChatClient& client, const LlmEndpoint& endpoint,
                       const cohort::LabeledDataset& test, const PromptSpec& spec,
                       const Sleeper& sleeper_in) {
    endpoint.validate();
    spec.validate();
    if (test.labels.empty()) throw std::invalid_argument("llm: empty test set");

    // Test-set isolation: no few-shot example may reference a test subject.
    std::set<std::string> test_ids(test.subject_ids.begin(), test.subject_ids.end());
    for (const auto& ex : spec.examples)
        if (test_ids.count(ex.subject_id) != 0)
            throw std::runtime_error("llm: few-shot example " + ex.subject_id +
                                     " appears in the test set");

    Sleeper sleeper = sleeper_in;
    if (!sleeper)
        sleeper = [](std::chrono::milliseconds ms) { std::this_thread::sleep_for(ms); };
    const auto min_interval =
        endpoint.requests_per_minute > 0.0
            ? std::chrono::milliseconds(
                  static_cast<long>(60000.0 / endpoint.requests_per_minute))
            : std::chrono::milliseconds(0);

    EvaluationRun run;
    for (std::size_t i = 0; i < test.labels.size(); ++i) {
        const std::string prompt = build_prompt(test.feature_names, test.x.row(i), spec);
        TranscriptEntry entry;
        entry.subject_id = test.subject_ids[i];
        entry.prompt = prompt;

        ChatResult result;
        int attempts = 0;
        for (int attempt = 0; attempt <= endpoint.max_retries; ++attempt) {
            if (i > 0 || attempt > 0) sleeper(min_interval);
            ++attempts;
            result = client.send(spec.role_preamble, prompt);
            if (result.ok) break;
            // Exponential backoff between retries.
            sleeper(std::chrono::milliseconds(250L << std::min(attempt, 8)));
        }
        entry.attempts = attempts;
        if (result.ok) {
            entry.raw_response = result.content;
            entry.prediction = parse_response(result.content);
            entry.status = entry.prediction.parse_status ==
                                   StructuredPrediction::ParseStatus::parsed
                               ? "parsed"
                               : "fallback";
        } else {
            entry.raw_response = result.error;
            entry.prediction = StructuredPrediction{};
            entry.prediction.probability = 0.5;
            entry.prediction.confidence = 50.0;
            entry.status = "error";
        }
        run.predictions.push_back(entry.prediction);
        run.probabilities.push_back(entry.prediction.probability);
        run.transcript.push_back(std::move(entry));
    }
    return run;
}

std::vector<FewShotExample> make_examples(const cohort::LabeledDataset& train,
                                          std::size_t per_class) {
    std::vector<FewShotExample> out;
    std::size_t taken[2] = {0, 0};
    for (std::size_t i = 0; i < train.labels.size(); ++i) {
        const int y = train.labels[i];
        if (taken[y] >= per_class) continue;
        FewShotExample ex;
        ex.subject_id = train.subject_ids[i];
        ex.label = y;
        ex.feature_summary = format_feature_block(train.feature_names, train.x.row(i));
        out.push_back(std::move(ex));
        ++taken[y];
        if (taken[0] >= per_class && taken[1] >= per_class) break;
    }
    if (out.empty()) throw std::runtime_error("llm: no training rows for examples");
    return out;
}

std::map<std::string, ReferenceRange> make_reference_ranges(
    const cohort::LabeledDataset& train) {
    std::map<std::string, ReferenceRange> out;
    for (std::size_t j = 0; j < train.feature_names.size(); ++j) {
        auto col = train.x.column(j);
        std::sort(col.begin(), col.end());
        auto at = [&col](double q) {
            const double pos = q * static_cast<double>(col.size() - 1);
            const auto lo = static_cast<std::size_t>(pos);
            const std::size_t hi = std::min(lo + 1, col.size() - 1);
            const double frac = pos - static_cast<double>(lo);
            return col[lo] * (1.0 - frac) + col[hi] * frac;
        };
        out[train.feature_names[j]] = {at(0.05), at(0.5), at(0.95)};
    }
    return out;
}

}  // namespace dxtab::llm
