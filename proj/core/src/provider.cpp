#include "evsynth/provider.hpp"

#include <httplib.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <regex>

#include "evsynth/error.hpp"
#include "evsynth/hash.hpp"
#include "evsynth/text.hpp"

namespace evsynth::provider {

std::string_view to_string(Task t) noexcept {
    switch (t) {
        case Task::Synthesis: return "synthesis";
        case Task::Screening: return "screening";
        case Task::SelfQuery: return "self_query";
        case Task::StructuredQuery: return "structured_query";
        case Task::Routing: return "routing";
        case Task::Grading: return "grading";
        case Task::Extraction: return "extraction";
        case Task::Direct: return "direct";
    }
    return "synthesis";
}

std::string cite_marker(const std::string& chunk_id) { return std::string(kCitePrefix) + chunk_id + "]"; }

void check_request(const GenerationRequest& req) {
    if (req.task == Task::Synthesis && req.context.empty()) {
        throw Error(ErrorCode::EmptyContextForFactualTask, "synthesis request has no context");
    }
}

// ---------------------------------------------------------------------------
// StubProvider
// ---------------------------------------------------------------------------

StubProvider::StubProvider(StubConfig config) : config_(std::move(config)) {
    if (config_.dimension == 0) throw Error(ErrorCode::InvalidArgument, "embedding dimension must be > 0");
}

void StubProvider::check_available() const {
    if (!available_) throw Error(ErrorCode::ProviderUnavailable, "stub provider disabled");
}

std::vector<Embedding> StubProvider::embed(const std::vector<std::string>& texts) {
    check_available();
    std::vector<Embedding> out;
    out.reserve(texts.size());
    for (const auto& t : texts) {
        Embedding v(config_.dimension, 0.0);
        auto terms = text::content_terms(t);
        if (terms.empty()) terms = text::tokenize_words(t);
        for (const auto& term : terms) {
            const std::uint64_t h = fnv1a64(term, config_.seed);
            v[h % config_.dimension] += (h >> 63) != 0 ? -1.0 : 1.0;
        }
        if (stores::l2_norm(v) == 0.0) v[fnv1a64("", config_.seed) % config_.dimension] = 1.0;
        out.push_back(stores::normalized(std::move(v)));
    }
    return out;
}

std::string StubProvider::generate(const GenerationRequest& req) {
    check_available();
    check_request(req);
    switch (req.task) {
        case Task::Synthesis: break;
        case Task::Screening: return screen(req);
        default: return {};
    }
    std::string out;
    for (const auto& item : req.context) {
        std::string sentence;
        const auto spans = text::split_sentences(item.text);
        if (!spans.empty()) {
            sentence = text::collapse_whitespace(
                std::string_view(item.text).substr(spans.front().begin, spans.front().size()));
        }
        while (!sentence.empty() && (sentence.back() == '.' || sentence.back() == '!' || sentence.back() == '?')) {
            sentence.pop_back();
        }
        if (sentence.empty()) sentence = "Passage " + item.chunk_id + " has no text";
        if (!out.empty()) out += '\n';
        out += sentence + " " + cite_marker(item.chunk_id) + ".";
    }
    return out;
}

std::string StubProvider::screen(const GenerationRequest& req) const {
    std::string record;
    for (const auto& item : req.context) record += item.text + "\n";
    const std::string lowered = text::to_lower(record);
    const std::string matched_label = [&] {
        if (!req.dimension) return std::string("maybe");
        for (const auto& rule : config_.screening_rules) {
            if (rule.dimension != *req.dimension) continue;
            for (const auto& t : rule.no_terms) {
                if (lowered.find(text::to_lower(t)) != std::string::npos) return "no|" + t;
            }
        }
        for (const auto& rule : config_.screening_rules) {
            if (rule.dimension != *req.dimension) continue;
            for (const auto& t : rule.yes_terms) {
                if (lowered.find(text::to_lower(t)) != std::string::npos) return "yes|" + t;
            }
        }
        return std::string("maybe");
    }();
    const auto bar = matched_label.find('|');
    if (bar == std::string::npos) {
        return "label: maybe\nrationale: The record does not mention any listed criterion term.";
    }
    return "label: " + matched_label.substr(0, bar) + "\nrationale: The record mentions \"" +
           matched_label.substr(bar + 1) + "\".";
}

RelevanceGrade StubProvider::grade_relevance(const std::string& query, const std::string& chunk) {
    check_available();
    const auto q = text::content_term_set(query);
    RelevanceGrade g;
    if (q.empty()) return g;
    const auto c = text::content_term_set(chunk);
    std::size_t shared = 0;
    for (const auto& t : q) shared += c.count(t);
    g.score = static_cast<double>(shared) / static_cast<double>(q.size());
    g.relevant = g.score >= config_.grading_threshold;
    return g;
}

std::string StubProvider::extract_relevant(const std::string& query, const std::string& passage) {
    check_available();
    const auto q = text::content_term_set(query);
    std::string out;
    for (const auto& span : text::split_sentences(passage)) {
        const auto sentence = std::string_view(passage).substr(span.begin, span.size());
        const auto terms = text::content_term_set(sentence);
        const bool shares = std::any_of(q.begin(), q.end(), [&](const auto& t) { return terms.count(t) > 0; });
        if (!shares) continue;
        if (!out.empty()) out += ' ';
        out += sentence;
    }
    return out;
}

// ---------------------------------------------------------------------------
// RemoteProvider
// ---------------------------------------------------------------------------

RemoteConfig RemoteConfig::from_env() {
    RemoteConfig c;
    const auto env = [](const char* name) -> std::string {
        const char* v = std::getenv(name);
        return v != nullptr ? v : "";
    };
    c.base_url = env("EVSYNTH_PROVIDER_URL");
    if (c.base_url.empty()) throw Error(ErrorCode::ProviderUnavailable, "EVSYNTH_PROVIDER_URL is not set");
    c.api_key = env("EVSYNTH_PROVIDER_KEY");
    if (auto m = env("EVSYNTH_CHAT_MODEL"); !m.empty()) c.chat_model = m;
    if (auto m = env("EVSYNTH_EMBEDDING_MODEL"); !m.empty()) c.embedding_model = m;
    return c;
}

RemoteProvider::RemoteProvider(RemoteConfig config) : config_(std::move(config)) {
    const auto scheme = config_.base_url.find("://");
    if (scheme == std::string::npos) {
        throw Error(ErrorCode::InvalidArgument, "provider URL needs a scheme: " + config_.base_url);
    }
    const auto slash = config_.base_url.find('/', scheme + 3);
    host_ = config_.base_url.substr(0, slash);
    path_prefix_ = slash == std::string::npos ? "" : config_.base_url.substr(slash);
    while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
}

void RemoteProvider::set_audit_sink(AuditSink sink) {
    std::lock_guard lock(sink_mu_);
    sink_ = std::move(sink);
}

std::string RemoteProvider::redact(std::string s) const {
    if (config_.api_key.empty()) return s;
    for (auto pos = s.find(config_.api_key); pos != std::string::npos; pos = s.find(config_.api_key, pos)) {
        s.replace(pos, config_.api_key.size(), "[REDACTED]");
    }
    return s;
}

Json RemoteProvider::post(const std::string& path, const Json& body) {
    httplib::Client client(host_);
    client.set_connection_timeout(config_.timeout_seconds);
    client.set_read_timeout(config_.timeout_seconds);
    httplib::Headers headers;
    if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);

    const std::string url = path_prefix_ + path;
    const std::string payload = body.dump();
    AuditSink sink;
    {
        std::lock_guard lock(sink_mu_);
        sink = sink_;
    }
    if (sink) {
        sink(Json{{"direction", "request"},
                  {"url", host_ + url},
                  {"authorization", config_.api_key.empty() ? "" : "[REDACTED]"},
                  {"body", redact(payload)}});
    }
    auto res = client.Post(url, headers, payload, "application/json");
    if (!res) {
        throw Error(ErrorCode::ProviderUnavailable,
                    "request to " + host_ + url + " failed: " + httplib::to_string(res.error()));
    }
    if (sink) {
        sink(Json{{"direction", "response"}, {"url", host_ + url}, {"status", res->status}, {"body", redact(res->body)}});
    }
    if (res->status < 200 || res->status >= 300) {
        throw Error(ErrorCode::ProviderUnavailable, "provider returned HTTP " + std::to_string(res->status));
    }
    try {
        return Json::parse(res->body);
    } catch (const Json::exception& e) {
        throw Error(ErrorCode::ProviderUnavailable, std::string("malformed provider response: ") + e.what());
    }
}

Json chat_messages(const GenerationRequest& req) {
    std::string user;
    for (const auto& item : req.context) {
        user += "<passage id=\"" + item.chunk_id + "\">\n" + item.text + "\n</passage>\n";
    }
    if (req.dimension) user += "Criterion: " + to_string(*req.dimension) + "\n";
    Json messages = Json::array();
    messages.push_back({{"role", "system"}, {"content", req.instruction}});
    messages.push_back({{"role", "user"}, {"content", user}});
    return messages;
}

std::vector<Embedding> RemoteProvider::embed(const std::vector<std::string>& texts) {
    const Json res = post("/embeddings", {{"model", config_.embedding_model}, {"input", texts}});
    std::vector<Embedding> out;
    try {
        for (const auto& row : res.at("data")) {
            auto v = row.at("embedding").get<Embedding>();
            if (v.size() != config_.dimension) {
                throw Error(ErrorCode::DimensionMismatch, "provider returned dimension " + std::to_string(v.size()));
            }
            out.push_back(stores::normalized(std::move(v)));
        }
    } catch (const Json::exception& e) {
        throw Error(ErrorCode::ProviderUnavailable, std::string("malformed embedding response: ") + e.what());
    }
    if (out.size() != texts.size()) throw Error(ErrorCode::ProviderUnavailable, "embedding count mismatch");
    return out;
}

std::string RemoteProvider::generate(const GenerationRequest& req) {
    check_request(req);
    const Json res = post("/chat/completions", {{"model", config_.chat_model},
                                                {"messages", chat_messages(req)},
                                                {"temperature", GenerationRequest::temperature}});
    try {
        return res.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const Json::exception& e) {
        throw Error(ErrorCode::ProviderUnavailable, std::string("malformed chat response: ") + e.what());
    }
}

RelevanceGrade RemoteProvider::grade_relevance(const std::string& query, const std::string& chunk) {
    GenerationRequest req;
    req.task = Task::Grading;
    req.instruction =
        "Rate how relevant the passage is to the question on a scale from 0 to 1. "
        "Reply with the number only.\nQuestion: " + query;
    req.context = {{"passage", chunk}};
    const std::string out = generate(req);
    static const std::regex kNumber(R"(([01](?:\.\d+)?|\.\d+))");
    RelevanceGrade g;
    std::smatch m;
    if (std::regex_search(out, m, kNumber)) g.score = std::clamp(std::stod(m.str(1)), 0.0, 1.0);
    g.relevant = g.score >= config_.grading_threshold;
    return g;
}

std::string RemoteProvider::extract_relevant(const std::string& query, const std::string& passage) {
    GenerationRequest req;
    req.task = Task::Extraction;
    req.instruction =
        "Copy, verbatim, only the sentences of the passage that help answer the question. "
        "Reply with nothing if none do.\nQuestion: " + query;
    req.context = {{"passage", passage}};
    return text::trim(generate(req));
}

// ---------------------------------------------------------------------------
// MeteredProvider
// ---------------------------------------------------------------------------

void MeteredProvider::charge() {
    if (++calls_ > max_calls_) {
        throw Error(ErrorCode::ProviderUnavailable, "call budget of " + std::to_string(max_calls_) + " exhausted");
    }
}

std::vector<Embedding> MeteredProvider::embed(const std::vector<std::string>& texts) {
    charge();
    return inner_.embed(texts);
}

std::string MeteredProvider::generate(const GenerationRequest& req) {
    charge();
    return inner_.generate(req);
}

RelevanceGrade MeteredProvider::grade_relevance(const std::string& query, const std::string& chunk) {
    charge();
    return inner_.grade_relevance(query, chunk);
}

std::string MeteredProvider::extract_relevant(const std::string& query, const std::string& passage) {
    charge();
    return inner_.extract_relevant(query, passage);
}

}  // namespace evsynth::provider
