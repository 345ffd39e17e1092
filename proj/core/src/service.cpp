#include "evsynth/service.hpp"

#include <algorithm>
#include <set>
#include <sstream>
#include <thread>

#include <httplib.h>

#include "evsynth/indexer.hpp"
#include "evsynth/retrieve.hpp"
#include "evsynth/structq.hpp"
#include "evsynth/text.hpp"
#include "evsynth/topics.hpp"

namespace evsynth::service {

namespace {

constexpr std::string_view kBuildVersion = "0.3.0";

std::optional<std::int64_t> int_param(const Request& r, const std::string& name) {
    const auto v = r.param(name);
    if (!v) return std::nullopt;
    try {
        std::size_t used = 0;
        const auto n = std::stoll(*v, &used);
        if (used != v->size()) throw std::invalid_argument(name);
        return n;
    } catch (const std::exception&) {
        throw Error(ErrorCode::InvalidArgument, "query parameter '" + name + "' must be an integer");
    }
}

Json parse_body(const Request& r) {
    if (text::trim(r.body).empty()) throw Error(ErrorCode::InvalidArgument, "request body is empty");
    try {
        return Json::parse(r.body);
    } catch (const Json::parse_error& e) {
        throw Error(ErrorCode::InvalidArgument, std::string("malformed JSON body: ") + e.what());
    }
}

std::string required_string(const Json& body, const std::string& key) {
    if (!body.is_object() || !body.contains(key) || !body[key].is_string() || body[key].get<std::string>().empty()) {
        throw Error(ErrorCode::InvalidArgument, "field '" + key + "' must be a non-empty string");
    }
    return body[key].get<std::string>();
}

/// A JSON array, a single object, or JSON Lines.
std::vector<Json> parse_records(const std::string& body) {
    const std::string trimmed = text::trim(body);
    if (trimmed.empty()) throw Error(ErrorCode::InvalidArgument, "request body is empty");
    if (trimmed.front() == '[') {
        try {
            const Json arr = Json::parse(trimmed);
            return arr.get<std::vector<Json>>();
        } catch (const Json::exception& e) {
            throw Error(ErrorCode::InvalidArgument, std::string("malformed JSON array: ") + e.what());
        }
    }
    std::vector<Json> out;
    std::istringstream in(trimmed);
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (text::trim(line).empty()) continue;
        try {
            out.push_back(Json::parse(line));
        } catch (const Json::parse_error&) {
            throw Error(ErrorCode::InvalidArgument, "line " + std::to_string(n) + " is not valid JSON");
        }
    }
    if (out.empty()) throw Error(ErrorCode::InvalidArgument, "no records in body");
    return out;
}

Json ratio_json(std::size_t num, std::size_t den, const std::optional<double>& ratio) {
    Json j{{"numerator", num}, {"denominator", den}};
    j["ratio"] = ratio ? Json(*ratio) : Json(nullptr);
    j["no_data"] = !ratio.has_value();
    return j;
}

bool year_in(const FieldValue& v, std::optional<std::int64_t> lo, std::optional<std::int64_t> hi) {
    const auto* y = std::get_if<std::int64_t>(&v);
    if (!y) return !lo && !hi;
    return (!lo || *y >= *lo) && (!hi || *y <= *hi);
}

std::string lower_header(std::string s) { return text::to_lower(s); }

std::string path_regex(const std::string& tmpl) {
    static const std::regex param(R"re(\{[a-z_]+\})re");
    return "^" + std::regex_replace(tmpl, param, "([^/]+)") + "$";
}

}  // namespace

// ---------------------------------------------------------------------------
// Wire types
// ---------------------------------------------------------------------------

std::optional<std::string> Request::param(const std::string& name) const {
    const auto it = query.find(name);
    if (it == query.end()) return std::nullopt;
    return it->second;
}

std::string Response::payload() const { return raw ? *raw : body.dump(); }

int status_for(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::UnknownDocument:
        case ErrorCode::UnknownNode:
        case ErrorCode::UnknownSession:
        case ErrorCode::UnknownTopic:
            return 404;
        case ErrorCode::SnapshotGone:
            return 410;
        case ErrorCode::ProviderUnavailable:
        case ErrorCode::StoreUnavailable:
            return 503;
        case ErrorCode::UntrainedModel:
        case ErrorCode::UnfittedModel:
            return 409;
        case ErrorCode::ToolFailure:
        case ErrorCode::NoApplicableTool:
        case ErrorCode::DisciplineViolation:
        case ErrorCode::UngroundableOutput:
            return 500;
        default:
            return 422;
    }
}

Response error_response(int status, std::string_view code, const std::string& message, Json details) {
    Response r;
    r.status = status;
    Json err{{"code", std::string(code)}, {"message", message}, {"status", status}};
    if (!details.is_null()) err["details"] = std::move(details);
    r.body = Json{{"error", err}};
    return r;
}

// ---------------------------------------------------------------------------
// HTTP adapter
// ---------------------------------------------------------------------------

struct Service::Http {
    httplib::Server server;
    bool bound = false;
};

// ---------------------------------------------------------------------------
// Construction and routing
// ---------------------------------------------------------------------------

Service::Service(stores::DataPlane& plane, provider::Provider& provider, ServiceConfig config)
    : plane_(plane),
      provider_(provider),
      config_(std::move(config)),
      agent_(std::make_unique<agent::Agent>(plane_, provider_, config_.agent)) {
    config_.chunking.validate();
    register_routes();
}

Service::~Service() { stop(); }

void Service::set_screening_model(screen::MultiHeadModel model) {
    if (!model.trained()) throw Error(ErrorCode::UntrainedModel, "screening model has not been trained");
    std::lock_guard lock(state_mu_);
    model_ = std::move(model);
}

void Service::set_criteria(screen::EligibilityCriteria criteria) {
    criteria.validate();
    std::lock_guard lock(state_mu_);
    criteria_ = std::move(criteria);
}

void Service::add_route(std::string method, std::string path_template, std::string summary, bool mutating,
                        std::function<Response(const std::smatch&, const Request&)> handler) {
    Route r;
    r.pattern = std::regex(path_regex(path_template));
    r.method = std::move(method);
    r.path_template = std::move(path_template);
    r.summary = std::move(summary);
    r.mutating = mutating;
    r.handler = std::move(handler);
    routes_.push_back(std::move(r));
}

void Service::register_routes() {
    add_route("GET", "/health", "Store epochs, provider reachability and build version", false,
              [this](const std::smatch&, const Request&) {
                  Response r;
                  r.body = health();
                  return r;
              });
    add_route("GET", "/openapi.json", "This description", false, [this](const std::smatch&, const Request&) {
        Response r;
        r.body = openapi();
        return r;
    });
    add_route("POST", "/ingest", "Ingest JSON Lines records", true,
              [this](const std::smatch&, const Request& r) { return ingest(r); });
    add_route("POST", "/screen/batch", "Screen records and persist annotations", true,
              [this](const std::smatch&, const Request& r) { return screen_batch(r); });
    add_route("GET", "/screening/queue", "Triage queue, most uncertain first", false,
              [this](const std::smatch&, const Request& r) { return screening_queue(r); });
    add_route("GET", "/screening/overrides/export", "Expert overrides as training JSON Lines", false,
              [this](const std::smatch&, const Request&) {
                  Response r;
                  std::string out;
                  for (const auto& row : export_overrides()) out += row.dump() + "\n";
                  r.raw = std::move(out);
                  r.content_type = "application/x-ndjson";
                  return r;
              });
    add_route("POST", "/screening/{doc_id}/override", "Expert label override for one dimension", true,
              [this](const std::smatch& m, const Request& r) { return override_label(m[1].str(), r); });
    add_route("GET", "/screening/{doc_id}/history", "Annotation history of a document", false,
              [this](const std::smatch& m, const Request&) { return history(m[1].str()); });
    add_route("POST", "/sessions", "Open a chat session pinned to the current epoch", false,
              [this](const std::smatch&, const Request&) { return open_session(); });
    add_route("GET", "/sessions/{id}", "Session state and message history", false,
              [this](const std::smatch& m, const Request&) { return get_session(m[1].str()); });
    add_route("POST", "/sessions/{id}/messages", "Ask a question in a session", false,
              [this](const std::smatch& m, const Request& r) { return post_message(m[1].str(), r); });
    add_route("POST", "/sessions/{id}/refresh", "Re-pin a session to the latest epoch", false,
              [this](const std::smatch& m, const Request&) { return refresh_session(m[1].str()); });
    add_route("GET", "/sessions/{id}/audit", "Session audit log as JSON Lines", false,
              [this](const std::smatch& m, const Request&) { return session_audit(m[1].str()); });
    add_route("GET", "/sessions/{id}/evidence/{chunk_id}", "Evidence item observed in a session", false,
              [this](const std::smatch& m, const Request&) { return session_evidence(m[1].str(), m[2].str()); });
    add_route("POST", "/query/structured", "Natural-language aggregate query", false,
              [this](const std::smatch&, const Request& r) { return structured_query(r); });
    add_route("GET", "/dashboard/compliance", "PICOS compliance per dimension", false,
              [this](const std::smatch&, const Request& r) { return compliance(r); });
    add_route("GET", "/dashboard/compliance/trend", "Volume and non-compliance per year", false,
              [this](const std::smatch&, const Request& r) { return compliance_trend(r); });
    add_route("GET", "/dashboard/topics/heatmap", "Document counts by topic and year", false,
              [this](const std::smatch&, const Request& r) { return topics_heatmap(r); });
    add_route("GET", "/topics", "Fitted topic summaries", false,
              [this](const std::smatch&, const Request&) { return topics_summary(); });
    add_route("POST", "/topics/fit", "Cluster documents into topics and persist assignments", true,
              [this](const std::smatch&, const Request& r) { return fit_topics(r); });
    add_route("GET", "/graph/neighborhood", "Graph neighbourhood of seed nodes", false,
              [this](const std::smatch&, const Request& r) { return graph_neighborhood(r); });
    add_route("GET", "/chunks/{id}", "Chunk text and source descriptor", false,
              [this](const std::smatch& m, const Request&) { return chunk(m[1].str()); });
}

Response Service::handle(const Request& request) {
    try {
        if (!config_.api_key.empty()) {
            std::string presented;
            if (const auto it = request.headers.find("x-api-key"); it != request.headers.end()) {
                presented = it->second;
            } else if (const auto auth = request.headers.find("authorization"); auth != request.headers.end()) {
                const std::string prefix = "Bearer ";
                if (auth->second.rfind(prefix, 0) == 0) presented = auth->second.substr(prefix.size());
            }
            if (presented != config_.api_key) {
                return error_response(401, "Unauthorized", "missing or invalid API key");
            }
        }
        if (request.body.size() > config_.max_body_bytes) {
            return error_response(413, "PayloadTooLarge", "request body exceeds the configured limit");
        }
        return dispatch(request);
    } catch (const Error& e) {
        Json details = nullptr;
        if (e.code() == ErrorCode::Unresolvable) {
            // structq carries the resolution report after the code prefix.
            const std::string what = e.what();
            const auto brace = what.find('{');
            if (brace != std::string::npos) details = Json::parse(what.substr(brace), nullptr, false);
            if (details.is_discarded()) details = nullptr;
        }
        return error_response(status_for(e.code()), to_string(e.code()), e.what(), std::move(details));
    } catch (const Json::exception& e) {
        return error_response(422, "InvalidArgument", e.what());
    } catch (const std::exception& e) {
        return error_response(500, "Internal", e.what());
    }
}

Response Service::dispatch(const Request& request) {
    bool path_known = false;
    for (const auto& route : routes_) {
        std::smatch m;
        if (!std::regex_match(request.path, m, route.pattern)) continue;
        path_known = true;
        if (route.method != request.method) continue;
        if (!route.mutating) return route.handler(m, request);

        Response out;
        try {
            out = route.handler(m, request);
        } catch (const Error& e) {
            out = error_response(status_for(e.code()), to_string(e.code()), e.what());
        }
        std::lock_guard lock(state_mu_);
        audit_.push_back(Json{{"seq", audit_.size() + 1},
                              {"timestamp", utc_timestamp()},
                              {"method", request.method},
                              {"path", request.path},
                              {"body", request.body},
                              {"status", out.status}});
        return out;
    }
    if (path_known) return error_response(405, "MethodNotAllowed", request.method + " " + request.path);
    return error_response(404, "NotFound", "no route for " + request.path);
}

Json Service::openapi() const {
    Json paths = Json::object();
    for (const auto& r : routes_) {
        std::string method = text::to_lower(r.method);
        Json op{{"summary", r.summary},
                {"responses",
                 {{"200", {{"description", "OK"}}},
                  {"404", {{"description", "Unknown resource"}}},
                  {"422", {{"description", "Validation failure"}}},
                  {"503", {{"description", "Provider or store unavailable"}}}}}};
        Json params = Json::array();
        static const std::regex param(R"re(\{([a-z_]+)\})re");
        for (auto it = std::sregex_iterator(r.path_template.begin(), r.path_template.end(), param);
             it != std::sregex_iterator(); ++it) {
            params.push_back({{"name", (*it)[1].str()}, {"in", "path"}, {"required", true},
                              {"schema", {{"type", "string"}}}});
        }
        if (!params.empty()) op["parameters"] = params;
        paths[r.path_template][method] = op;
    }
    return Json{{"openapi", "3.0.3"},
                {"info", {{"title", "evsynth"}, {"version", std::string(kApiVersion)}}},
                {"paths", paths}};
}

Json Service::health() const {
    bool reachable = true;
    std::string provider_error;
    try {
        provider_.embed({"health check"});
    } catch (const std::exception& e) {
        reachable = false;
        provider_error = e.what();
    }
    bool store_ok = true;
    Json stores_json = Json::object();
    try {
        const auto e = plane_.epoch();
        stores_json = Json{{"epoch", e},
                           {"documents", plane_.metadata().size()},
                           {"chunks", plane_.metadata().chunk_count()},
                           {"vectors", plane_.vectors().size()},
                           {"graph_nodes", plane_.graph().node_count()},
                           {"graph_edges", plane_.graph().edge_count()}};
    } catch (const Error&) {
        store_ok = false;
    }
    Json provider_json{{"id", provider_.id()}, {"reachable", reachable}};
    if (!reachable) provider_json["error"] = provider_error;

    std::lock_guard lock(state_mu_);
    Json j{{"status", reachable && store_ok ? "ok" : "degraded"},
           {"degraded", !(reachable && store_ok)},
           {"version", std::string(kBuildVersion)},
           {"api_version", std::string(kApiVersion)},
           {"provider", provider_json},
           {"stores", stores_json},
           {"store_available", store_ok}};
    j["epoch"] = stores_json.value("epoch", Json(nullptr));
    j["model_id"] = model_ ? Json(model_->model_id()) : Json(nullptr);
    j["criteria"] = criteria_ ? Json(criteria_->name) : Json(nullptr);
    return j;
}

// ---------------------------------------------------------------------------
// Ingest and screening
// ---------------------------------------------------------------------------

Response Service::ingest(const Request& r) {
    const auto records = parse_records(r.body);
    std::lock_guard lock(write_mu_);
    Indexer indexer(plane_, provider_, config_.chunking);
    const auto report = indexer.ingest_raw(records);
    Response out;
    out.body = to_json(report);
    if (!report.rejected.empty() && report.ingest.total() == 0) out.status = 422;
    return out;
}

Response Service::screen_batch(const Request& r) {
    const Json body = parse_body(r);
    std::vector<Json> items;
    std::string pathway = "model";
    if (body.is_array()) {
        items = body.get<std::vector<Json>>();
    } else if (body.is_object()) {
        if (body.contains("doc_ids")) {
            for (const auto& id : body["doc_ids"]) items.push_back(Json{{"doc_id", id}});
        }
        if (body.contains("records")) {
            for (const auto& rec : body["records"]) items.push_back(rec);
        }
        if (body.value("all", false)) {
            for (const auto& d : plane_.metadata().documents()) items.push_back(Json{{"doc_id", d.doc_id}});
        }
        pathway = body.value("pathway", pathway);
    }
    if (items.empty()) throw Error(ErrorCode::InvalidArgument, "no records to screen");
    if (pathway != "model" && pathway != "criteria") {
        throw Error(ErrorCode::InvalidArgument, "pathway must be 'model' or 'criteria'");
    }

    std::optional<screen::MultiHeadModel> model;
    std::optional<screen::EligibilityCriteria> criteria;
    {
        std::lock_guard lock(state_mu_);
        model = model_;
        criteria = criteria_;
    }
    if (pathway == "model" && !model) throw Error(ErrorCode::UntrainedModel, "no screening model loaded");
    if (pathway == "criteria" && !criteria) throw Error(ErrorCode::UntrainedModel, "no eligibility criteria loaded");

    std::lock_guard write(write_mu_);
    Json results = Json::array();
    for (const auto& item : items) {
        std::optional<std::string> doc_id;
        std::string title;
        std::string abstract;
        if (item.contains("doc_id")) {
            doc_id = item["doc_id"].get<std::string>();
            const auto rec = plane_.metadata().get(*doc_id);
            if (!rec) throw Error(ErrorCode::UnknownDocument, *doc_id);
            title = rec->title;
            abstract = rec->abstract.value_or("");
        } else {
            title = item.value("title", "");
            abstract = item.value("abstract", "");
            if (title.empty()) throw Error(ErrorCode::MissingTitle, "screening record without title");
        }
        const auto result = pathway == "model" ? model->predict(title, abstract)
                                               : screen::screen_by_criteria(provider_, *criteria, title, abstract);
        Json j = screen::to_json(result);
        if (doc_id) {
            auto ann = plane_.metadata().annotations(*doc_id).value_or(stores::AnnotationSet{});
            const auto fresh = screen::to_annotations(result);
            ann.picos = fresh.picos;
            ann.study_design_binary = fresh.study_design_binary;
            ann.include_decision = fresh.include_decision;
            plane_.upsert_annotations(*doc_id, ann, "model");
            {
                std::lock_guard lock(state_mu_);
                last_screening_[*doc_id] = result;
            }
            j["doc_id"] = *doc_id;
        }
        results.push_back(std::move(j));
    }
    Response out;
    out.body = Json{{"pathway", pathway}, {"results", results}, {"count", results.size()}};
    return out;
}

Response Service::screening_queue(const Request& r) const {
    bool any_label = false;
    TernaryLabel label = TernaryLabel::Maybe;
    if (const auto l = r.param("label")) {
        if (*l == "any") {
            any_label = true;
        } else {
            const auto parsed = parse_ternary(*l);
            if (!parsed) throw Error(ErrorCode::InvalidArgument, "label must be yes, no, maybe or any");
            label = *parsed;
        }
    }
    std::optional<Dimension> only;
    if (const auto d = r.param("dimension")) {
        only = parse_dimension(*d);
        if (!only) throw Error(ErrorCode::InvalidArgument, "unknown dimension '" + *d + "'");
    }
    const auto limit = int_param(r, "limit");

    struct Item {
        double min_conf;
        std::string doc_id;
        Json json;
    };
    std::vector<Item> items;
    std::map<std::string, screen::ScreeningResult> screened;
    std::map<std::string, std::map<Dimension, TernaryLabel>> overrides;
    {
        std::lock_guard lock(state_mu_);
        screened = last_screening_;
        overrides = overrides_;
    }
    for (const auto& doc : plane_.metadata().documents()) {
        const auto ann = plane_.metadata().annotations(doc.doc_id);
        if (!ann || ann->picos.empty()) continue;
        bool selected = any_label;
        for (const auto& [d, e] : ann->picos) {
            if (only && d != *only) continue;
            if (e.label == label) selected = true;
        }
        if (!selected) continue;

        const auto res = screened.find(doc.doc_id);
        const auto ov = overrides.find(doc.doc_id);
        const std::string abstract = doc.abstract.value_or("");
        std::vector<std::pair<Dimension, stores::PicosEntry>> dims(ann->picos.begin(), ann->picos.end());
        std::stable_sort(dims.begin(), dims.end(),
                         [](const auto& a, const auto& b) { return a.second.confidence < b.second.confidence; });
        Json cards = Json::array();
        double min_conf = 1.0;
        for (const auto& [d, e] : dims) {
            min_conf = std::min(min_conf, e.confidence);
            Json spans = Json::array();
            if (res != screened.end()) {
                if (const auto it = res->second.rationale_spans.find(d); it != res->second.rationale_spans.end()) {
                    for (const auto& sp : it->second) {
                        spans.push_back({{"char_span", {sp.span.begin, sp.span.end}}, {"snippet", sp.snippet}});
                    }
                }
            }
            Json card{{"dimension", to_string(d)},
                      {"label", std::string(to_string(e.label))},
                      {"confidence", e.confidence},
                      {"rationale_spans", spans},
                      {"expert_override", ov != overrides.end() && ov->second.count(d) > 0}};
            if (res != screened.end()) {
                if (const auto it = res->second.rationale_text.find(d); it != res->second.rationale_text.end()) {
                    card["rationale"] = it->second;
                }
            }
            cards.push_back(std::move(card));
        }
        Json j{{"doc_id", doc.doc_id},
               {"title", doc.title},
               {"abstract", abstract},
               {"screening_text", screen::screening_text(doc.title, abstract)},
               {"min_confidence", min_conf},
               {"dimensions", cards}};
        j["year"] = doc.year ? Json(*doc.year) : Json(nullptr);
        j["include_decision"] =
            ann->include_decision ? Json(std::string(to_string(*ann->include_decision))) : Json(nullptr);
        items.push_back({min_conf, doc.doc_id, std::move(j)});
    }
    std::sort(items.begin(), items.end(), [](const Item& a, const Item& b) {
        if (a.min_conf != b.min_conf) return a.min_conf < b.min_conf;
        return a.doc_id < b.doc_id;
    });
    if (limit && *limit >= 0 && static_cast<std::size_t>(*limit) < items.size()) items.resize(*limit);
    Json arr = Json::array();
    for (auto& it : items) arr.push_back(std::move(it.json));
    Response out;
    out.body = Json{{"items", arr}, {"count", arr.size()}};
    out.body["label"] = any_label ? std::string("any") : std::string(to_string(label));
    return out;
}

stores::AnnotationSet Service::triage_update(const std::string& doc_id, Dimension dimension, TernaryLabel label,
                                             const std::string& reviewer) {
    if (reviewer.empty()) throw Error(ErrorCode::InvalidArgument, "reviewer is required");
    std::lock_guard write(write_mu_);
    if (!plane_.metadata().get(doc_id)) throw Error(ErrorCode::UnknownDocument, doc_id);
    auto ann = plane_.metadata().annotations(doc_id).value_or(stores::AnnotationSet{});
    ann.picos[dimension] = stores::PicosEntry{label, 1.0};
    ann.sync_study_design();
    if (ann.picos.size() == kAllDimensions.size()) {
        screen::Labels labels{};
        for (const auto d : kAllDimensions) labels[static_cast<std::size_t>(d)] = ann.picos.at(d).label;
        ann.include_decision = screen::aggregate_qualification(labels);
    }
    plane_.upsert_annotations(doc_id, ann, reviewer);
    std::lock_guard lock(state_mu_);
    overrides_[doc_id][dimension] = label;
    return ann;
}

std::vector<Json> Service::export_overrides() const {
    std::map<std::string, std::map<Dimension, TernaryLabel>> overrides;
    {
        std::lock_guard lock(state_mu_);
        overrides = overrides_;
    }
    std::vector<Json> out;
    for (const auto& [doc_id, dims] : overrides) {
        const auto rec = plane_.metadata().get(doc_id);
        if (!rec) continue;
        const auto ann = plane_.metadata().annotations(doc_id).value_or(stores::AnnotationSet{});
        Json labels = Json::object();
        for (const auto d : kAllDimensions) {
            const auto it = ann.picos.find(d);
            labels[to_string(d)] = std::string(to_string(it == ann.picos.end() ? TernaryLabel::Maybe : it->second.label));
        }
        Json overridden = Json::array();
        for (const auto& [d, l] : dims) overridden.push_back(to_string(d));
        out.push_back(Json{{"doc_id", doc_id},
                           {"title", rec->title},
                           {"abstract", rec->abstract.value_or("")},
                           {"labels", labels},
                           {"overridden", overridden}});
    }
    return out;
}

Response Service::override_label(const std::string& doc_id, const Request& r) {
    const Json body = parse_body(r);
    const auto d = parse_dimension(required_string(body, "dimension"));
    if (!d) throw Error(ErrorCode::InvalidArgument, "unknown dimension");
    const auto l = parse_ternary(required_string(body, "label"));
    if (!l) throw Error(ErrorCode::InvalidArgument, "label must be yes, no or maybe");
    const auto ann = triage_update(doc_id, *d, *l, required_string(body, "reviewer"));
    Response out;
    out.body = Json{{"doc_id", doc_id}, {"annotations", stores::to_json(ann)},
                    {"history_length", plane_.metadata().annotation_history(doc_id).size()}};
    return out;
}

Response Service::history(const std::string& doc_id) const {
    if (!plane_.metadata().contains(doc_id)) throw Error(ErrorCode::UnknownDocument, doc_id);
    Json arr = Json::array();
    for (const auto& h : plane_.metadata().annotation_history(doc_id)) {
        Json j{{"timestamp", h.timestamp}, {"actor", h.actor}, {"after", stores::to_json(h.after)}};
        j["before"] = h.before ? stores::to_json(*h.before) : Json(nullptr);
        arr.push_back(std::move(j));
    }
    Response out;
    out.body = Json{{"doc_id", doc_id}, {"history", arr}};
    return out;
}

// ---------------------------------------------------------------------------
// Sessions
// ---------------------------------------------------------------------------

Response Service::open_session() {
    const auto id = agent_->open_session();
    const auto created = utc_timestamp();
    {
        std::lock_guard lock(state_mu_);
        sessions_[id] = ApiSession{created, {}};
    }
    Response out;
    out.status = 201;
    out.body = Json{{"session_id", id}, {"created_at", created}, {"epoch", agent_->session_epoch(id)}};
    return out;
}

Response Service::get_session(const std::string& id) const {
    const auto epoch = agent_->session_epoch(id);  // throws UnknownSession
    std::lock_guard lock(state_mu_);
    const auto it = sessions_.find(id);
    Response out;
    out.body = Json{{"session_id", id}, {"epoch", epoch}};
    out.body["created_at"] = it == sessions_.end() ? Json(nullptr) : Json(it->second.created_at);
    out.body["messages"] = it == sessions_.end() ? Json::array() : Json(it->second.messages);
    return out;
}

Response Service::post_message(const std::string& id, const Request& r) {
    const Json body = parse_body(r);
    const std::string query = required_string(body, "query");
    agent_->session_epoch(id);
    const auto response = agent_->ask(id, query);
    Json j = response.to_json();
    Json citations = Json::array();
    if (response.answer) {
        std::set<std::string> seen;
        for (const auto& s : response.answer->sentences) {
            for (const auto& c : s.citations) {
                if (seen.insert(c).second) citations.push_back(c);
            }
        }
    }
    {
        std::lock_guard lock(state_mu_);
        auto& session = sessions_[id];
        if (session.created_at.empty()) session.created_at = utc_timestamp();
        session.messages.push_back(Json{{"query", query}, {"answer", j}, {"citations", citations}});
    }
    Response out;
    out.body = std::move(j);
    return out;
}

Response Service::refresh_session(const std::string& id) {
    const auto epoch = agent_->refresh_session(id);
    Response out;
    out.body = Json{{"session_id", id}, {"epoch", epoch}};
    return out;
}

Response Service::session_audit(const std::string& id) const {
    std::ostringstream os;
    agent_->export_log(id, os);
    Response out;
    out.raw = os.str();
    out.content_type = "application/x-ndjson";
    return out;
}

Response Service::session_evidence(const std::string& id, const std::string& chunk_id) const {
    const auto evidence = agent_->session_evidence(id);
    const auto it = evidence.find(chunk_id);
    if (it == evidence.end()) {
        return error_response(404, "UnknownEvidence", "chunk " + chunk_id + " was not observed in session " + id);
    }
    Response out;
    out.body = retrieve::to_json(it->second);
    if (const auto c = plane_.metadata().chunk(chunk_id, agent_->session_epoch(id))) {
        out.body["chunk_text"] = c->text;
        out.body["char_span"] = {c->char_span.begin, c->char_span.end};
    }
    return out;
}

// ---------------------------------------------------------------------------
// Structured queries and dashboards
// ---------------------------------------------------------------------------

Response Service::structured_query(const Request& r) {
    const Json body = parse_body(r);
    const std::string query = required_string(body, "query");
    const auto epoch = plane_.epoch();
    const auto catalog = structq::catalog_for(plane_.metadata());
    const auto generated = structq::generate(query, catalog, &provider_, config_.agent.fuzzy_threshold);
    if (!generated.ast) {
        return error_response(422, "Unresolvable", "query mentions identifiers outside the schema",
                              generated.report.to_json());
    }
    const auto result = structq::execute(*generated.ast, plane_.metadata(), epoch, catalog);
    Response out;
    out.body = Json{{"query", query},
                    {"ast", structq::to_json(*generated.ast)},
                    {"sql", structq::render_sql(*generated.ast)},
                    {"result", result.to_json()},
                    {"resolution", generated.report.to_json()},
                    {"from_provider", generated.from_provider},
                    {"epoch", epoch}};
    return out;
}

Response Service::compliance(const Request& r) const {
    const auto lo = int_param(r, "year_from");
    const auto hi = int_param(r, "year_to");
    const bool filtered = lo || hi;
    const auto epoch = plane_.epoch();

    const auto summarize = [&](stores::AggregateSpec spec) {
        if (filtered) spec.group_by = "year";
        const auto res = plane_.aggregate(spec, epoch);
        std::size_t num = 0;
        std::size_t den = 0;
        for (const auto& row : res.rows) {
            if (filtered && !year_in(row.group, lo, hi)) continue;
            num += row.numerator;
            den += row.denominator;
        }
        std::optional<double> ratio;
        if (den > 0) ratio = static_cast<double>(num) / static_cast<double>(den);
        return ratio_json(num, den, ratio);
    };

    Json dims = Json::object();
    for (const auto d : kAllDimensions) {
        dims[to_string(d)] = summarize({stores::Metric::ComplianceRate, d, std::nullopt});
    }
    const Json joint = summarize({stores::Metric::JointCompliance, std::nullopt, std::nullopt});
    const Json docs = summarize({stores::Metric::Count, std::nullopt, std::nullopt});
    Response out;
    out.body = Json{{"epoch", epoch}, {"dimensions", dims}, {"joint", joint}, {"documents", docs["numerator"]}};
    out.body["filters"] = Json{{"year_from", lo ? Json(*lo) : Json(nullptr)}, {"year_to", hi ? Json(*hi) : Json(nullptr)}};
    out.body["no_data"] = joint["denominator"].get<std::size_t>() == 0;
    return out;
}

Response Service::compliance_trend(const Request& r) const {
    std::vector<Dimension> dims(kAllDimensions.begin(), kAllDimensions.end());
    if (const auto d = r.param("dimension")) {
        const auto parsed = parse_dimension(*d);
        if (!parsed) throw Error(ErrorCode::InvalidArgument, "unknown dimension '" + *d + "'");
        dims = {*parsed};
    }
    const auto lo = int_param(r, "year_from");
    const auto hi = int_param(r, "year_to");
    const auto epoch = plane_.epoch();

    std::map<std::int64_t, Json> years;
    const auto volume = plane_.aggregate({stores::Metric::Count, std::nullopt, std::string("year")}, epoch);
    for (const auto& row : volume.rows) {
        const auto* y = std::get_if<std::int64_t>(&row.group);
        if (!y || !year_in(row.group, lo, hi)) continue;
        years[*y] = Json{{"year", *y}, {"volume", row.numerator}, {"dimensions", Json::object()}};
    }
    for (const auto d : dims) {
        const auto res = plane_.aggregate({stores::Metric::ComplianceRate, d, std::string("year")}, epoch);
        for (const auto& row : res.rows) {
            const auto* y = std::get_if<std::int64_t>(&row.group);
            if (!y || years.count(*y) == 0) continue;
            Json cell = ratio_json(row.numerator, row.denominator, row.ratio);
            cell["non_compliance"] = row.ratio ? Json(1.0 - *row.ratio) : Json(nullptr);
            cell["non_compliant"] = row.denominator - row.numerator;
            years[*y]["dimensions"][to_string(d)] = std::move(cell);
        }
    }
    Json rows = Json::array();
    for (auto& [y, j] : years) {
        for (const auto d : dims) {
            if (!j["dimensions"].contains(to_string(d))) {
                Json cell = ratio_json(0, 0, std::nullopt);
                cell["non_compliance"] = nullptr;
                cell["non_compliant"] = 0;
                j["dimensions"][to_string(d)] = std::move(cell);
            }
        }
        rows.push_back(std::move(j));
    }
    Response out;
    out.body = Json{{"epoch", epoch}, {"years", rows}, {"no_data", rows.empty()}};
    return out;
}

Response Service::topics_heatmap(const Request& r) const {
    const bool include_outliers = r.param("include_outliers").value_or("false") == "true";
    const auto epoch = plane_.epoch();
    topics::TopicModel model;
    std::map<std::string, std::optional<int>> years;
    for (const auto& doc : plane_.metadata().documents(epoch)) {
        const auto ann = plane_.metadata().annotations(doc.doc_id);
        if (!ann || !ann->topic_id) continue;
        model.assignments[doc.doc_id] = *ann->topic_id;
        model.doc_ids.push_back(doc.doc_id);
        years[doc.doc_id] = doc.year;
    }
    if (model.assignments.empty()) throw Error(ErrorCode::UnfittedModel, "no topic assignments; fit topics first");
    model.fitted = true;
    const auto m = topics::heatmap(model, years, include_outliers);
    Response out;
    if (r.param("format").value_or("json") == "csv") {
        out.raw = m.to_csv();
        out.content_type = "text/csv";
    } else {
        out.body = m.to_json();
        out.body["epoch"] = epoch;
    }
    return out;
}

Response Service::fit_topics(const Request& r) {
    topics::FitConfig cfg;
    if (!text::trim(r.body).empty()) {
        const Json body = parse_body(r);
        if (body.contains("k") && !body["k"].is_null()) cfg.k = body["k"].get<std::size_t>();
        cfg.seed = body.value("seed", cfg.seed);
        cfg.outlier_percentile = body.value("outlier_percentile", cfg.outlier_percentile);
    }
    std::lock_guard write(write_mu_);
    const auto docs = topics::document_embeddings(plane_);
    auto model = topics::fit(docs, cfg);
    std::map<std::string, std::string> texts;
    for (const auto& id : model.doc_ids) {
        const auto rec = plane_.metadata().get(id);
        std::string t = rec->title;
        if (rec->abstract) t += "\n" + *rec->abstract;
        if (rec->full_text) t += "\n" + *rec->full_text;
        texts[id] = std::move(t);
    }
    topics::topic_terms(model, texts);
    topics::persist(model, plane_);
    {
        std::lock_guard lock(state_mu_);
        topic_summaries_ = model.summaries;
    }
    Response out;
    out.body = model.to_json();
    return out;
}

Response Service::topics_summary() const {
    std::lock_guard lock(state_mu_);
    if (topic_summaries_.empty()) throw Error(ErrorCode::UnfittedModel, "no topic model has been fitted");
    Json arr = Json::array();
    for (const auto& s : topic_summaries_) {
        Json terms = Json::array();
        for (const auto& [t, w] : s.representation) terms.push_back({{"term", t}, {"weight", w}});
        arr.push_back({{"topic_id", s.topic_id}, {"name", s.name}, {"size", s.size}, {"representation", terms}});
    }
    Response out;
    out.body = Json{{"topics", arr}};
    return out;
}

Response Service::graph_neighborhood(const Request& r) const {
    std::vector<std::string> seeds;
    for (auto [it, end] = r.query.equal_range("seed"); it != end; ++it) seeds.push_back(it->second);
    if (seeds.empty()) throw Error(ErrorCode::InvalidArgument, "at least one seed is required");
    const int hops = static_cast<int>(int_param(r, "hops").value_or(1));
    const auto g = plane_.graph().neighborhood(seeds, hops);
    Response out;
    out.body = stores::to_json(g);
    out.body["text"] = retrieve::serialize_subgraph(g, plane_.metadata());
    return out;
}

Response Service::chunk(const std::string& chunk_id) const {
    const auto c = plane_.metadata().chunk(chunk_id);
    if (!c) return error_response(404, "UnknownChunk", chunk_id);
    Response out;
    out.body = corpus::to_json(*c);
    out.body["descriptor"] = retrieve::to_json(retrieve::describe(plane_.metadata(), c->doc_id));
    return out;
}

// ---------------------------------------------------------------------------
// Audit and replay
// ---------------------------------------------------------------------------

std::vector<Json> Service::audit() const {
    std::lock_guard lock(state_mu_);
    return audit_;
}

void Service::replay(const std::vector<Json>& entries) {
    for (const auto& e : entries) {
        const int status = e.value("status", 0);
        if (status < 200 || status >= 300) continue;
        Request r;
        r.method = e.at("method").get<std::string>();
        r.path = e.at("path").get<std::string>();
        r.body = e.value("body", "");
        if (!config_.api_key.empty()) r.headers["x-api-key"] = config_.api_key;
        const auto out = handle(r);
        if (out.status < 200 || out.status >= 300) {
            throw Error(ErrorCode::InvalidArgument,
                        "replay of " + r.method + " " + r.path + " failed with status " + std::to_string(out.status));
        }
    }
}

// ---------------------------------------------------------------------------
// Socket adapter
// ---------------------------------------------------------------------------

int Service::bind(const std::string& host, int port) {
    if (!http_) http_ = std::make_unique<Http>();
    auto& server = http_->server;
    const auto adapt = [this](const httplib::Request& req, httplib::Response& res) {
        Request r;
        r.method = req.method;
        r.path = req.path;
        r.body = req.body;
        for (const auto& [k, v] : req.params) r.query.emplace(k, v);
        for (const auto& [k, v] : req.headers) r.headers[lower_header(k)] = v;
        const auto out = handle(r);
        res.status = out.status;
        res.set_content(out.payload(), out.content_type.c_str());
    };
    server.Get(".*", adapt);
    server.Post(".*", adapt);
    server.Put(".*", adapt);
    server.Delete(".*", adapt);
    const int bound = port == 0 ? server.bind_to_any_port(host) : (server.bind_to_port(host, port) ? port : -1);
    if (bound < 0) throw Error(ErrorCode::InvalidArgument, "cannot bind " + host + ":" + std::to_string(port));
    http_->bound = true;
    return bound;
}

void Service::serve() {
    if (!http_ || !http_->bound) throw Error(ErrorCode::InvalidArgument, "bind before serve");
    http_->server.listen_after_bind();
}

void Service::stop() {
    if (http_) http_->server.stop();
}

}  // namespace evsynth::service
