#pragma once

#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <regex>
#include <string>
#include <vector>

#include "evsynth/agent.hpp"
#include "evsynth/corpus.hpp"
#include "evsynth/error.hpp"
#include "evsynth/provider.hpp"
#include "evsynth/screen.hpp"
#include "evsynth/stores.hpp"
#include "evsynth/topics.hpp"

namespace evsynth::service {

inline constexpr std::string_view kApiVersion = "v1";

struct Request {
    std::string method;
    std::string path;
    std::multimap<std::string, std::string> query;
    std::string body;
    std::map<std::string, std::string> headers;  // lowercase names

    std::optional<std::string> param(const std::string& name) const;
};

struct Response {
    int status = 200;
    Json body = Json::object();
    /// Non-JSON payloads (CSV, JSON Lines); `body` is ignored when set.
    std::optional<std::string> raw;
    std::string content_type = "application/json";

    std::string payload() const;
};

/// 422 for validation failures, 404 for unknown resources, 503 when the
/// provider or a store is unavailable, 410 for evicted snapshots.
int status_for(ErrorCode code) noexcept;
Response error_response(int status, std::string_view code, const std::string& message, Json details = nullptr);

struct ServiceConfig {
    /// When set, requests need `Authorization: Bearer <key>` or `X-API-Key`.
    std::string api_key;
    corpus::ChunkPolicy chunking;
    agent::AgentConfig agent;
    std::size_t max_body_bytes = 64u << 20;
};

/// REST front end over a data plane. `handle` is the whole service; `serve`
/// only adapts it to a socket, so every route can be exercised in-process.
class Service {
public:
    Service(stores::DataPlane& plane, provider::Provider& provider, ServiceConfig config = {});
    ~Service();
    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    void set_screening_model(screen::MultiHeadModel model);
    void set_criteria(screen::EligibilityCriteria criteria);

    Response handle(const Request& request);

    Json health() const;
    Json openapi() const;

    /// Expert override of one dimension; the previous value stays in the
    /// annotation history. Throws UnknownDocument.
    stores::AnnotationSet triage_update(const std::string& doc_id, Dimension dimension, TernaryLabel label,
                                        const std::string& reviewer);
    /// Overridden records as screening training rows
    /// ({"doc_id", "title", "abstract", "labels"}).
    std::vector<Json> export_overrides() const;

    /// Mutating requests in arrival order: {seq, timestamp, method, path, body, status}.
    std::vector<Json> audit() const;
    /// Re-applies successful audited requests, e.g. on a fresh plane.
    void replay(const std::vector<Json>& audit);

    agent::Agent& agent() noexcept { return *agent_; }

    /// Binds the socket; port 0 picks a free port. Returns the bound port.
    int bind(const std::string& host, int port);
    /// Blocks until stop().
    void serve();
    void stop();

private:
    struct Route {
        std::string method;
        std::string path_template;
        std::regex pattern;
        std::string summary;
        bool mutating = false;
        std::function<Response(const std::smatch&, const Request&)> handler;
    };
    struct ApiSession {
        std::string created_at;
        std::vector<Json> messages;
    };
    struct Http;

    void add_route(std::string method, std::string path_template, std::string summary, bool mutating,
                   std::function<Response(const std::smatch&, const Request&)> handler);
    void register_routes();
    Response dispatch(const Request& request);

    Response ingest(const Request& r);
    Response screen_batch(const Request& r);
    Response screening_queue(const Request& r) const;
    Response override_label(const std::string& doc_id, const Request& r);
    Response history(const std::string& doc_id) const;
    Response open_session();
    Response post_message(const std::string& id, const Request& r);
    Response refresh_session(const std::string& id);
    Response get_session(const std::string& id) const;
    Response session_audit(const std::string& id) const;
    Response session_evidence(const std::string& id, const std::string& chunk_id) const;
    Response structured_query(const Request& r);
    Response compliance(const Request& r) const;
    Response compliance_trend(const Request& r) const;
    Response topics_heatmap(const Request& r) const;
    Response fit_topics(const Request& r);
    Response topics_summary() const;
    Response graph_neighborhood(const Request& r) const;
    Response chunk(const std::string& chunk_id) const;

    stores::DataPlane& plane_;
    provider::Provider& provider_;
    ServiceConfig config_;
    std::unique_ptr<agent::Agent> agent_;
    std::vector<Route> routes_;

    mutable std::mutex write_mu_;  // ingest, screening writes, overrides, topic fits
    mutable std::mutex state_mu_;
    std::optional<screen::MultiHeadModel> model_;
    std::optional<screen::EligibilityCriteria> criteria_;
    std::map<std::string, screen::ScreeningResult> last_screening_;
    std::map<std::string, std::map<Dimension, TernaryLabel>> overrides_;
    std::map<std::string, ApiSession> sessions_;
    std::vector<topics::TopicSummary> topic_summaries_;
    std::vector<Json> audit_;

    std::unique_ptr<Http> http_;
};

}  // namespace evsynth::service
