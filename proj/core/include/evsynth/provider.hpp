#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "evsynth/stores.hpp"
#include "evsynth/types.hpp"

namespace evsynth::provider {

using stores::Embedding;

/// What a generation call is for. Only Synthesis demands factual context.
enum class Task : std::uint8_t {
    Synthesis,
    Screening,
    SelfQuery,
    StructuredQuery,
    Routing,
    Grading,
    Extraction,
    Direct,  // definitional answer without corpus context
};

std::string_view to_string(Task t) noexcept;

struct ContextItem {
    std::string chunk_id;
    std::string text;
};

struct GenerationRequest {
    Task task = Task::Synthesis;
    std::string instruction;
    std::vector<ContextItem> context;
    /// Set for screening calls; tells the model which criterion it grades.
    std::optional<Dimension> dimension;

    /// Decoding is greedy everywhere; there is deliberately no setter.
    static constexpr double temperature = 0.0;
};

struct RelevanceGrade {
    double score = 0.0;
    bool relevant = false;
};

inline constexpr std::string_view kCitePrefix = "[cite:";

/// "[cite:<chunk_id>]"
std::string cite_marker(const std::string& chunk_id);

/// Throws EmptyContextForFactualTask when a synthesis request has no context.
void check_request(const GenerationRequest& req);

class Provider {
public:
    virtual ~Provider() = default;

    virtual std::string id() const = 0;
    virtual std::size_t dimension() const = 0;
    virtual double grading_threshold() const = 0;

    /// Unit-norm vectors of dimension(), one per input.
    virtual std::vector<Embedding> embed(const std::vector<std::string>& texts) = 0;
    virtual std::string generate(const GenerationRequest& req) = 0;
    virtual RelevanceGrade grade_relevance(const std::string& query, const std::string& chunk) = 0;
    /// Query-focused extraction used for contextual compression. May return
    /// an empty string when nothing in `text` bears on the query.
    virtual std::string extract_relevant(const std::string& query, const std::string& text) = 0;

    Embedding embed_one(const std::string& text) { return embed({text}).front(); }
};

// ---------------------------------------------------------------------------
// Deterministic offline stub
// ---------------------------------------------------------------------------

/// Keyword rule for stub screening. Matching is substring over the
/// lowercased record text; any no-term wins over yes-terms.
struct ScreeningRule {
    Dimension dimension = Dimension::P;
    std::vector<std::string> yes_terms;
    std::vector<std::string> no_terms;
};

struct StubConfig {
    std::size_t dimension = 256;
    std::uint64_t seed = 0x9e3779b97f4a7c15ULL;
    double grading_threshold = 0.25;
    std::vector<ScreeningRule> screening_rules;
};

/// Pure-function provider. Embeddings are signed feature hashes of stemmed
/// content terms; generation is extractive with a citation per sentence.
/// Non-synthesis tasks other than screening return an empty string, which
/// callers treat as "use the rule-based fallback".
class StubProvider : public Provider {
public:
    explicit StubProvider(StubConfig config = {});

    std::string id() const override { return "stub"; }
    std::size_t dimension() const override { return config_.dimension; }
    double grading_threshold() const override { return config_.grading_threshold; }

    std::vector<Embedding> embed(const std::vector<std::string>& texts) override;
    std::string generate(const GenerationRequest& req) override;
    RelevanceGrade grade_relevance(const std::string& query, const std::string& chunk) override;
    std::string extract_relevant(const std::string& query, const std::string& text) override;

    const StubConfig& config() const noexcept { return config_; }

    /// Failure injection: while unavailable every call throws ProviderUnavailable.
    void set_available(bool available) { available_ = available; }

private:
    void check_available() const;
    std::string screen(const GenerationRequest& req) const;

    StubConfig config_;
    std::atomic<bool> available_{true};
};

// ---------------------------------------------------------------------------
// Remote HTTP provider
// ---------------------------------------------------------------------------

struct RemoteConfig {
    /// e.g. "http://127.0.0.1:8000/v1"; chat at {base}/chat/completions,
    /// embeddings at {base}/embeddings.
    std::string base_url;
    std::string api_key;
    std::string chat_model = "default";
    std::string embedding_model = "default";
    std::size_t dimension = 256;
    double grading_threshold = 0.25;
    int timeout_seconds = 60;

    /// Reads EVSYNTH_PROVIDER_URL, EVSYNTH_PROVIDER_KEY, EVSYNTH_CHAT_MODEL,
    /// EVSYNTH_EMBEDDING_MODEL. Throws ProviderUnavailable without a URL.
    static RemoteConfig from_env();
};

/// Receives one JSON object per request and per response, with credentials
/// already redacted.
using AuditSink = std::function<void(const Json&)>;

/// OpenAI-compatible chat/embeddings client.
class RemoteProvider : public Provider {
public:
    explicit RemoteProvider(RemoteConfig config);

    std::string id() const override { return "remote:" + config_.chat_model; }
    std::size_t dimension() const override { return config_.dimension; }
    double grading_threshold() const override { return config_.grading_threshold; }

    std::vector<Embedding> embed(const std::vector<std::string>& texts) override;
    std::string generate(const GenerationRequest& req) override;
    RelevanceGrade grade_relevance(const std::string& query, const std::string& chunk) override;
    std::string extract_relevant(const std::string& query, const std::string& text) override;

    void set_audit_sink(AuditSink sink);

private:
    Json post(const std::string& path, const Json& body);
    std::string redact(std::string s) const;

    RemoteConfig config_;
    std::string host_;
    std::string path_prefix_;
    std::mutex sink_mu_;
    AuditSink sink_;
};

/// Serializes a request into chat messages; exposed for tests.
Json chat_messages(const GenerationRequest& req);

// ---------------------------------------------------------------------------
// Call budget
// ---------------------------------------------------------------------------

/// Forwards to another provider and throws ProviderUnavailable once more
/// than `max_calls` calls were made since the last reset().
class MeteredProvider : public Provider {
public:
    MeteredProvider(Provider& inner, std::size_t max_calls) : inner_(inner), max_calls_(max_calls) {}

    std::string id() const override { return inner_.id(); }
    std::size_t dimension() const override { return inner_.dimension(); }
    double grading_threshold() const override { return inner_.grading_threshold(); }

    std::vector<Embedding> embed(const std::vector<std::string>& texts) override;
    std::string generate(const GenerationRequest& req) override;
    RelevanceGrade grade_relevance(const std::string& query, const std::string& chunk) override;
    std::string extract_relevant(const std::string& query, const std::string& text) override;

    std::size_t calls() const noexcept { return calls_; }
    void reset() noexcept { calls_ = 0; }

private:
    void charge();

    Provider& inner_;
    std::size_t max_calls_;
    std::atomic<std::size_t> calls_{0};
};

}  // namespace evsynth::provider
