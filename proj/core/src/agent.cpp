#include "evsynth/agent.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <random>
#include <regex>
#include <set>
#include <sstream>

#include "evsynth/error.hpp"
#include "evsynth/hash.hpp"
#include "evsynth/text.hpp"

namespace evsynth::agent {

namespace {

constexpr auto kIcase = std::regex::icase;

const std::regex& structured_cues() {
    static const std::regex re(
        R"re(\bhow many\b|\bcount\b|\bnumber of\b|^\s*list\b|\blist (?:all|every)\b|\bper (?:year|venue|author|topic)\b|\bproportion\b|\bpercentage\b|\bfraction of\b|\bdistribution of\b|\bgrouped by\b)re",
        kIcase);
    return re;
}

const std::regex& graph_cues() {
    static const std::regex re(
        R"re(\bconnect\w*|\bco-?author\w*|\blink(?:s|ed|ing)?\b|\brelationships?\b|\brelated to\b|\bnetwork\b|\bacross (?:authors|studies|papers|venues)\b|\bcompar\w*|\bversus\b|\bvs\.?\s)re",
        kIcase);
    return re;
}

const std::regex& definitional_cues() {
    static const std::regex re(
        R"re(\bstand for\b|\bstands for\b|\bdefin(?:e|ition)\b|\bacronym\b|\bmeaning of\b|^\s*what (?:is|are) (?:a|an|the)?\s*\w+\s*\??\s*$)re",
        kIcase);
    return re;
}

const std::regex& corpus_cues() {
    static const std::regex re(
        R"re(\b(?:studies|study|papers?|trials?|evidence|corpus|literature|records?|documents?|abstracts?|authors?|published|cohorts?|\d{4})\b)re",
        kIcase);
    return re;
}

const std::regex& comparison_pattern() {
    static const std::regex re(R"re(^(?:.*?\b)?compar\w*\s+(.+?)\s+(?:and|with|to|versus|vs\.?)\s+(.+)$)re", kIcase);
    return re;
}

const std::regex& versus_pattern() {
    static const std::regex re(R"re(^(.+?)\s+(?:versus|vs\.?)\s+(.+)$)re", kIcase);
    return re;
}

const std::regex& cite_pattern() {
    static const std::regex re(R"(\[cite:([^\]\s]+)\])");
    return re;
}

const std::set<std::string>& negation_words() {
    static const std::set<std::string> kWords{"no",   "not",   "without", "neither", "nor",     "never",
                                              "none", "cannot", "failed", "lack",    "absence", "nothing"};
    return kWords;
}

std::string strip_trailing_punct(std::string s) {
    s = text::trim(s);
    while (!s.empty() && (s.back() == '?' || s.back() == '.' || s.back() == '!')) s.pop_back();
    return text::trim(s);
}

Json predicates_json(const std::vector<Predicate>& preds) {
    Json out = Json::array();
    for (const auto& p : preds) out.push_back(to_json(p));
    return out;
}

std::vector<Predicate> predicates_from(const Json& j) {
    std::vector<Predicate> out;
    if (!j.is_array()) return out;
    for (const auto& p : j) out.push_back(predicate_from_json(p));
    return out;
}

Step synthesis_step(const std::string& directive, const std::string& rationale) {
    Step s;
    s.kind = StepKind::Synthesis;
    s.args = {{"directive", directive}};
    s.rationale = rationale;
    return s;
}

Step hybrid_step(const std::string& semantic_text, const std::vector<Predicate>& preds,
                 const retrieve::RetrieveConfig& cfg, const std::string& rationale) {
    Step s;
    s.tool = std::string(kRetrieveHybrid);
    s.args = {{"semantic_text", semantic_text},
              {"predicates", predicates_json(preds)},
              {"k", cfg.k},
              {"theta", cfg.theta},
              {"hops", cfg.hops}};
    s.rationale = rationale;
    return s;
}

Step graph_step(const std::string& query, const std::vector<Predicate>& preds, int hops, std::size_t k,
                const std::string& rationale) {
    Step s;
    s.tool = std::string(kRetrieveGraph);
    s.args = {{"query", query}, {"predicates", predicates_json(preds)}, {"hops", hops}, {"k", k}};
    s.rationale = rationale;
    return s;
}

std::string semantic_of(const std::string& q) {
    auto sq = retrieve::grammar_self_query(q, stores::document_fields());
    return sq.semantic_text;
}

// Conjunct phrases of a query. Year ranges are kept intact because the
// grammar consumes them before splitting.
std::vector<std::string> conjuncts(const std::string& query) {
    static const std::regex kRange(R"re(\b(?:between|from)\s+\d{4}\s+(?:and|to|-)\s+\d{4}\b)re", kIcase);
    static const std::regex kSplit(
        R"re(\s*(?:,|;|\band\b|\bor\b|\bversus\b|\bvs\.?|\bcompared (?:with|to)\b|\bas well as\b)\s*)re", kIcase);
    const std::string masked = std::regex_replace(query, kRange, " ");
    std::vector<std::string> out;
    for (std::sregex_token_iterator it(masked.begin(), masked.end(), kSplit, -1), end; it != end; ++it) {
        const std::string part = text::trim(it->str());
        if (!part.empty()) out.push_back(part);
    }
    return out;
}

bool all_numeric(const std::set<std::string>& terms) {
    return std::all_of(terms.begin(), terms.end(), [](const std::string& t) {
        return std::all_of(t.begin(), t.end(), [](unsigned char c) { return std::isdigit(c) != 0; });
    });
}

std::string display_text(const std::string& sentence) {
    std::string s = std::regex_replace(sentence, cite_pattern(), "");
    s = text::collapse_whitespace(s);
    // "claim ." -> "claim."
    static const std::regex kSpaceBeforePunct(R"(\s+([.,;:!?]))");
    return std::regex_replace(s, kSpaceBeforePunct, "$1");
}

struct ParsedSentence {
    std::string text;
    std::vector<std::string> citations;
};

std::vector<ParsedSentence> parse_sentences(const std::string& answer) {
    std::vector<ParsedSentence> out;
    std::istringstream lines(answer);
    std::string line;
    while (std::getline(lines, line)) {
        for (const auto& span : text::split_sentences(line)) {
            const std::string raw = line.substr(span.begin, span.size());
            ParsedSentence ps;
            for (std::sregex_iterator it(raw.begin(), raw.end(), cite_pattern()), end; it != end; ++it) {
                const std::string id = (*it)[1].str();
                if (std::find(ps.citations.begin(), ps.citations.end(), id) == ps.citations.end()) {
                    ps.citations.push_back(id);
                }
            }
            ps.text = display_text(raw);
            const bool only_markers = ps.text.empty() || ps.text == "." || ps.text == ",";
            if (only_markers) {
                if (ps.citations.empty()) continue;
                if (!out.empty()) {
                    for (auto& c : ps.citations) {
                        auto& prev = out.back().citations;
                        if (std::find(prev.begin(), prev.end(), c) == prev.end()) prev.push_back(c);
                    }
                    continue;
                }
            }
            out.push_back(std::move(ps));
        }
    }
    return out;
}

std::vector<Claim> draft_claims(const std::vector<EvidenceItem>& evidence, const std::string& query,
                                provider::Provider& provider) {
    if (evidence.empty()) return {};
    provider::GenerationRequest req;
    req.task = provider::Task::Synthesis;
    req.instruction = "Draft the claims an answer to this question would make, one sentence each, each ending "
                      "with the [cite:<chunk_id>] markers of its supporting passages.\nQuestion: " +
                      query;
    for (const auto& e : evidence) req.context.push_back({e.chunk_id, e.text});
    std::vector<Claim> claims;
    for (auto& s : parse_sentences(provider.generate(req))) {
        if (s.citations.empty() && is_non_substantive(s.text)) continue;
        claims.push_back({std::move(s.text), std::move(s.citations)});
    }
    return claims;
}

std::string round2(double v) {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(2);
    os << v;
    return os.str();
}

std::string random_suffix() {
    static std::mutex mu;
    static std::mt19937_64 rng{std::random_device{}()};
    std::lock_guard lock(mu);
    std::ostringstream os;
    os << std::hex << (rng() & 0xffffffffULL);
    return os.str();
}

Json strip_session(Json j) {
    j.erase("session_id");
    for (const char* key : {"answer", "negative"}) {
        if (j.contains(key) && j[key].is_object()) j[key].erase("session_id");
    }
    return j;
}

std::string structured_text(const structq::QueryAST& ast, const structq::QueryResult& r) {
    switch (ast.operation) {
        case structq::Operation::Count: {
            const auto n = std::get<std::int64_t>(r.rows.front().front());
            return std::to_string(n) + " " + ast.entity + " match.";
        }
        case structq::Operation::GroupCount: {
            std::string out;
            for (const auto& row : r.rows) {
                if (!out.empty()) out += "; ";
                out += *ast.group_by + " " + render(row[0]) + ": " + render(row[1]);
            }
            return out.empty() ? "No groups." : out + ".";
        }
        case structq::Operation::Proportion: {
            std::string out = std::to_string(*r.numerator) + " of " + std::to_string(*r.denominator) + " " + ast.entity;
            out += r.ratio ? " (ratio " + round2(*r.ratio) + ")." : " (ratio undefined: no rows).";
            return out;
        }
        case structq::Operation::List:
            return std::to_string(r.rows.size()) + " rows.";
    }
    return {};
}

Observation run_hybrid(const Json& args, const ToolContext& ctx) {
    if (!args.is_object()) throw Error(ErrorCode::InvalidArgument, "arguments must be an object");
    retrieve::StructuredQuery sq;
    sq.semantic_text = args.value("semantic_text", std::string{});
    sq.predicates = predicates_from(args.value("predicates", Json::array()));
    retrieve::RetrieveConfig cfg = ctx.retrieval;
    const auto k = args.value("k", static_cast<std::int64_t>(cfg.k));
    if (k < 1) throw Error(ErrorCode::InvalidArgument, "k must be >= 1");
    sq.k = static_cast<std::size_t>(k);
    cfg.theta = args.value("theta", cfg.theta);
    if (cfg.theta < 0.0 || cfg.theta > 1.0) throw Error(ErrorCode::InvalidArgument, "theta must lie in [0, 1]");
    cfg.hops = args.value("hops", cfg.hops);
    if (cfg.hops != 1 && cfg.hops != 2) throw Error(ErrorCode::InvalidArgument, "hops must be 1 or 2");
    if (sq.semantic_text.empty() && sq.predicates.empty()) {
        throw Error(ErrorCode::InvalidArgument, "retrieval needs semantic text or predicates");
    }
    const retrieve::RetrievalContext rctx{ctx.plane, ctx.provider, ctx.epoch};
    auto bundle = retrieve::hybrid_retrieve(rctx, sq, cfg);
    Observation obs;
    obs.output = retrieve::to_json(bundle);
    obs.applied_predicates = bundle.applied_predicates;
    obs.evidence = std::move(bundle.items);
    return obs;
}

Observation run_graph(const Json& args, const ToolContext& ctx) {
    if (!args.is_object() || !args.contains("query") || !args["query"].is_string()) {
        throw Error(ErrorCode::InvalidArgument, "retrieve.graph needs a query string");
    }
    const std::string query = args["query"].get<std::string>();
    const int hops = args.value("hops", ctx.retrieval.hops);
    if (hops != 1 && hops != 2) throw Error(ErrorCode::InvalidArgument, "hops must be 1 or 2");
    const auto k = args.value("k", static_cast<std::int64_t>(ctx.retrieval.k));
    if (k < 1) throw Error(ErrorCode::InvalidArgument, "k must be >= 1");
    const auto preds = predicates_from(args.value("predicates", Json::array()));
    const retrieve::RetrievalContext rctx{ctx.plane, ctx.provider, ctx.epoch};
    auto bundle = retrieve::graph_retrieve(rctx, query, hops, static_cast<std::size_t>(k), preds);
    if (ctx.retrieval.grade && !text::content_term_set(query).empty()) {
        std::vector<EvidenceItem> kept;
        for (auto& item : bundle.items) {
            if (ctx.provider.grade_relevance(query, item.text).relevant) {
                kept.push_back(std::move(item));
            } else {
                ++bundle.dropped_irrelevant;
            }
        }
        bundle.items = std::move(kept);
    }
    Observation obs;
    obs.output = retrieve::to_json(bundle);
    obs.applied_predicates = bundle.applied_predicates;
    obs.evidence = std::move(bundle.items);
    return obs;
}

Observation run_structq(const Json& args, const ToolContext& ctx) {
    if (!args.is_object() || !args.contains("query") || !args["query"].is_string()) {
        throw Error(ErrorCode::InvalidArgument, "structq.execute needs a query string");
    }
    const auto catalog = structq::catalog_for(ctx.plane.metadata());
    auto gen = structq::generate(args["query"].get<std::string>(), catalog, &ctx.provider, ctx.fuzzy_threshold);
    if (!gen.ast) throw Error(ErrorCode::Unresolvable, gen.report.to_json().dump());
    const auto errors = structq::validate(*gen.ast, catalog);
    if (!errors.empty()) throw Error(ErrorCode::InvalidQuery, Json(errors).dump());
    Observation obs;
    obs.table = structq::execute(*gen.ast, ctx.plane.metadata(), ctx.epoch, catalog);
    obs.ast = gen.ast;
    obs.resolution = gen.report;
    obs.output = {{"ast", structq::to_json(*gen.ast)},
                  {"sql", structq::render_sql(*gen.ast)},
                  {"result", obs.table->to_json()},
                  {"resolution", gen.report.to_json()}};
    return obs;
}

}  // namespace

// ---------------------------------------------------------------------------
// Routing
// ---------------------------------------------------------------------------

std::string_view to_string(Route r) noexcept {
    switch (r) {
        case Route::Graph: return "graph";
        case Route::Vector: return "vector";
        case Route::Structured: return "structured";
        case Route::Direct: return "direct";
    }
    return "vector";
}

std::optional<Route> parse_route(std::string_view s) {
    const auto lowered = text::to_lower(text::trim(s));
    if (lowered == "graph") return Route::Graph;
    if (lowered == "vector") return Route::Vector;
    if (lowered == "structured") return Route::Structured;
    if (lowered == "direct") return Route::Direct;
    return std::nullopt;
}

Route route(const std::string& query, provider::Provider* provider) {
    if (std::regex_search(query, structured_cues())) return Route::Structured;
    if (std::regex_search(query, graph_cues())) return Route::Graph;
    if (std::regex_search(query, definitional_cues()) && !std::regex_search(query, corpus_cues())) {
        if (provider != nullptr) {
            provider::GenerationRequest req;
            req.task = provider::Task::Routing;
            req.instruction = "Reply with one word: direct if the question can be answered without a literature "
                              "corpus, otherwise vector, graph or structured.\nQuestion: " +
                              query;
            if (const auto r = parse_route(provider->generate(req)); r && *r != Route::Direct) return *r;
        }
        return Route::Direct;
    }
    return Route::Vector;
}

// ---------------------------------------------------------------------------
// Plans and tools
// ---------------------------------------------------------------------------

bool Plan::push(Step step) {
    if (step.kind == StepKind::ToolCall && !steps.empty() && steps.back() == step) return false;
    steps.push_back(std::move(step));
    return true;
}

bool Plan::insert_before_synthesis(Step step) {
    auto pos = steps.end();
    if (!steps.empty() && steps.back().kind == StepKind::Synthesis) pos = std::prev(steps.end());
    if (pos != steps.begin() && *std::prev(pos) == step) return false;
    steps.insert(pos, std::move(step));
    return true;
}

std::size_t Plan::tool_calls() const {
    return static_cast<std::size_t>(
        std::count_if(steps.begin(), steps.end(), [](const Step& s) { return s.kind == StepKind::ToolCall; }));
}

Json to_json(const Step& s) {
    return {{"kind", s.kind == StepKind::ToolCall ? "tool_call" : "synthesis"},
            {"tool", s.tool},
            {"args", s.args},
            {"rationale", s.rationale}};
}

Json to_json(const Plan& p) {
    Json steps = Json::array();
    for (const auto& s : p.steps) steps.push_back(to_json(s));
    return {{"route", std::string(to_string(p.route))}, {"steps", steps}};
}

void ToolRegistry::add(Tool tool) {
    if (tool.name.empty() || !tool.run) throw Error(ErrorCode::InvalidArgument, "tool needs a name and a function");
    auto name = tool.name;
    tools_[name] = std::move(tool);
}

const Tool* ToolRegistry::find(std::string_view name) const {
    const auto it = tools_.find(name);
    return it == tools_.end() ? nullptr : &it->second;
}

std::vector<std::string> ToolRegistry::names() const {
    std::vector<std::string> out;
    for (const auto& [n, t] : tools_) out.push_back(n);
    return out;
}

ToolRegistry ToolRegistry::defaults() {
    ToolRegistry r;
    r.add({std::string(kRetrieveHybrid), "filtered vector retrieval fused with graph expansion", run_hybrid});
    r.add({std::string(kRetrieveGraph), "graph neighbourhood retrieval", run_graph});
    r.add({std::string(kStructqExecute), "schema-checked count, list, group and proportion queries", run_structq});
    return r;
}

Plan plan(const std::string& query, Route route, const ToolRegistry& tools, const retrieve::RetrieveConfig& config,
          provider::Provider* provider) {
    if (tools.empty()) throw Error(ErrorCode::NoApplicableTool, "tool registry is empty");
    auto require = [&](std::string_view name) {
        if (tools.find(name) == nullptr) {
            throw Error(ErrorCode::NoApplicableTool, std::string(to_string(route)) + " route needs " + std::string(name));
        }
    };
    Plan p;
    p.route = route;
    switch (route) {
        case Route::Direct:
            p.push(synthesis_step("direct", "definitional question with no corpus dependence"));
            return p;
        case Route::Structured: {
            require(kStructqExecute);
            Step s;
            s.tool = std::string(kStructqExecute);
            s.args = {{"query", query}};
            s.rationale = "aggregation or enumeration over record metadata";
            p.push(std::move(s));
            p.push(synthesis_step("structured", "report the query result"));
            return p;
        }
        case Route::Graph: {
            require(kRetrieveGraph);
            const auto sq = retrieve::parse_self_query(query, stores::document_fields(), provider);
            const std::string q = strip_trailing_punct(query);
            std::smatch m;
            if (std::regex_match(q, m, comparison_pattern()) || std::regex_match(q, m, versus_pattern())) {
                for (int i = 1; i <= 2; ++i) {
                    std::string part = semantic_of(m[i].str());
                    if (part.empty()) part = text::trim(m[i].str());
                    p.push(graph_step(part, sq.predicates, config.hops, config.k, "one side of the comparison"));
                }
            } else {
                const std::string text = sq.semantic_text.empty() ? q : sq.semantic_text;
                p.push(graph_step(text, sq.predicates, config.hops, config.k, "relations around the query entities"));
            }
            p.push(synthesis_step("grounded", "cite every substantive sentence"));
            return p;
        }
        case Route::Vector: {
            require(kRetrieveHybrid);
            const auto sq = retrieve::parse_self_query(query, stores::document_fields(), provider);
            p.push(hybrid_step(sq.semantic_text, sq.predicates, config, "semantic retrieval under metadata filters"));
            p.push(synthesis_step("grounded", "cite every substantive sentence"));
            return p;
        }
    }
    return p;
}

// ---------------------------------------------------------------------------
// Sufficiency
// ---------------------------------------------------------------------------

std::vector<Constraint> extract_constraints(const std::string& query) {
    std::vector<Constraint> out;
    const auto sq = retrieve::grammar_self_query(query, stores::document_fields());
    for (const auto& p : sq.predicates) {
        Constraint c{Constraint::Kind::Predicate, render(p), p};
        if (std::find(out.begin(), out.end(), c) == out.end()) out.push_back(std::move(c));
    }
    for (const auto& part : conjuncts(strip_trailing_punct(query))) {
        const std::string phrase = semantic_of(part);
        const auto terms = text::content_term_set(phrase);
        if (terms.empty() || all_numeric(terms)) continue;
        Constraint c{Constraint::Kind::Semantic, phrase, std::nullopt};
        if (std::find(out.begin(), out.end(), c) == out.end()) out.push_back(std::move(c));
    }
    return out;
}

std::vector<Constraint> SufficiencyReport::uncovered() const {
    std::vector<Constraint> out;
    for (const auto& c : constraints) {
        if (!c.covered) out.push_back(c.constraint);
    }
    return out;
}

Json SufficiencyReport::to_json() const {
    Json cs = Json::array();
    for (const auto& c : constraints) {
        cs.push_back({{"constraint", c.constraint.text},
                      {"kind", c.constraint.kind == Constraint::Kind::Predicate ? "predicate" : "semantic"},
                      {"covered", c.covered},
                      {"chunk_ids", c.chunk_ids}});
    }
    Json claims_json = Json::array();
    for (const auto& c : claims) {
        claims_json.push_back({{"claim", c.claim.text}, {"supported", c.supported}, {"chunk_ids", c.chunk_ids}});
    }
    Json conflicts_json = Json::array();
    for (const auto& c : conflicts) {
        conflicts_json.push_back({{"chunk_a", c.chunk_a}, {"chunk_b", c.chunk_b}, {"note", c.note}});
    }
    return {{"constraint_coverage", cs},
            {"claim_support", claims_json},
            {"consistency", {{"consistent", conflicts.empty()}, {"conflicts", conflicts_json}}},
            {"verdict", sufficient ? "sufficient" : "insufficient"}};
}

MetadataView descriptor_view(const retrieve::DocDescriptor& d) {
    MetadataView v;
    v["doc_id"] = d.doc_id;
    v["title"] = d.title;
    v["authors"] = TextList(d.authors);
    v["venue"] = d.venue;
    if (d.year) v["year"] = static_cast<std::int64_t>(*d.year);
    for (const auto& [dim, label] : d.picos) {
        v["picos_" + text::to_lower(to_string(dim))] = label;
    }
    if (d.study_design_binary) v["study_design_binary"] = *d.study_design_binary;
    if (d.include_decision) v["include_decision"] = std::string(to_string(*d.include_decision));
    return v;
}

bool lexical_match(const std::string& phrase, const std::string& text) {
    const auto want = text::content_term_set(phrase);
    if (want.empty()) return false;
    const auto have = text::content_term_set(text);
    std::size_t hit = 0;
    for (const auto& t : want) hit += have.count(t);
    return hit * 2 >= want.size() && hit > 0;
}

namespace {

// Polarity of the sentences in `text` that bear on `phrase`.
std::optional<bool> negated(const std::string& phrase, const std::string& text) {
    std::optional<bool> out;
    for (const auto& span : text::split_sentences(text)) {
        const std::string sentence = text.substr(span.begin, span.size());
        if (!lexical_match(phrase, sentence)) continue;
        bool neg = false;
        for (const auto& w : text::tokenize_words(sentence)) {
            if (negation_words().count(w) || (w.size() > 3 && w.compare(w.size() - 3, 3, "n't") == 0)) {
                neg = true;
                break;
            }
        }
        out = out.value_or(false) || neg;
    }
    return out;
}

}  // namespace

SufficiencyReport assess_sufficiency(const std::vector<Constraint>& constraints,
                                     const std::vector<EvidenceItem>& evidence, const std::vector<Claim>& claims) {
    SufficiencyReport report;
    std::set<std::string> evidence_ids;
    for (const auto& e : evidence) evidence_ids.insert(e.chunk_id);

    for (const auto& c : constraints) {
        ConstraintStatus st{c, false, {}};
        for (const auto& e : evidence) {
            const bool hit = c.kind == Constraint::Kind::Predicate
                                 ? matches(*c.predicate, descriptor_view(e.descriptor))
                                 : lexical_match(c.text, e.descriptor.title + ". " + e.text);
            if (hit) st.chunk_ids.push_back(e.chunk_id);
        }
        st.covered = !st.chunk_ids.empty();
        report.constraints.push_back(std::move(st));
    }

    for (const auto& claim : claims) {
        ClaimStatus st{claim, false, {}};
        bool all_known = !claim.citations.empty();
        for (const auto& id : claim.citations) {
            if (evidence_ids.count(id)) {
                st.chunk_ids.push_back(id);
            } else {
                all_known = false;
            }
        }
        st.supported = all_known;
        report.claims.push_back(std::move(st));
    }

    for (const auto& c : constraints) {
        if (c.kind != Constraint::Kind::Semantic) continue;
        const EvidenceItem* positive = nullptr;
        const EvidenceItem* negative = nullptr;
        for (const auto& e : evidence) {
            const auto pol = negated(c.text, e.text);
            if (!pol) continue;
            if (*pol && negative == nullptr) negative = &e;
            if (!*pol && positive == nullptr) positive = &e;
        }
        if (positive && negative) {
            report.conflicts.push_back({positive->chunk_id, negative->chunk_id,
                                        "opposing polarity on \"" + c.text + "\""});
        }
    }

    const bool covered = std::all_of(report.constraints.begin(), report.constraints.end(),
                                     [](const ConstraintStatus& s) { return s.covered; });
    const bool supported = std::all_of(report.claims.begin(), report.claims.end(),
                                       [](const ClaimStatus& s) { return s.supported; });
    report.sufficient = covered && supported && report.conflicts.empty();
    return report;
}

std::string_view to_string(Termination t) noexcept {
    return t == Termination::Complete ? "complete" : "budget_exhausted";
}

ReplanOutcome replan(const Plan& plan, const SufficiencyReport& report, std::size_t iteration,
                     std::size_t max_iterations, const std::vector<Step>& executed) {
    ReplanOutcome out;
    if (report.sufficient) {
        out.terminate = Termination::Complete;
        return out;
    }
    if (iteration >= max_iterations) {
        out.terminate = Termination::BudgetExhausted;
        return out;
    }

    const Step* base = nullptr;
    for (const auto& s : plan.steps) {
        if (s.kind == StepKind::ToolCall && (s.tool == kRetrieveHybrid || s.tool == kRetrieveGraph)) {
            base = &s;
            break;
        }
    }
    const bool graph = plan.route == Route::Graph && base != nullptr && base->tool == kRetrieveGraph;
    retrieve::RetrieveConfig cfg;
    std::vector<Predicate> base_preds;
    std::string base_text;
    int base_hops = cfg.hops;
    if (base != nullptr) {
        base_preds = predicates_from(base->args.value("predicates", Json::array()));
        base_text = base->args.value(graph ? "query" : "semantic_text", std::string{});
        cfg.k = base->args.value("k", cfg.k);
        cfg.theta = base->args.value("theta", cfg.theta);
        base_hops = base->args.value("hops", cfg.hops);
        cfg.hops = base_hops;
    }

    auto seen = [&](const Step& s) {
        return std::find(executed.begin(), executed.end(), s) != executed.end() ||
               std::find(plan.steps.begin(), plan.steps.end(), s) != plan.steps.end() ||
               std::find(out.appended.begin(), out.appended.end(), s) != out.appended.end();
    };
    auto targeted = [&](const std::string& text, const std::vector<Predicate>& preds, const std::string& why) {
        return graph ? graph_step(text, preds, base_hops, cfg.k, why) : hybrid_step(text, preds, cfg, why);
    };

    // Predicates are hard filters: an uncovered one is added to, never
    // substituted for, the filters already in force.
    auto with_pred = [&](const Predicate& p) {
        auto preds = base_preds;
        if (std::find(preds.begin(), preds.end(), p) == preds.end()) preds.push_back(p);
        return preds;
    };
    for (const auto& c : report.uncovered()) {
        Step s = c.kind == Constraint::Kind::Predicate
                     ? targeted(base_text, with_pred(*c.predicate), "uncovered constraint " + c.text)
                     : targeted(c.text, base_preds, "uncovered constraint " + c.text);
        if (!seen(s)) out.appended.push_back(std::move(s));
    }
    for (const auto& c : report.claims) {
        if (c.supported) continue;
        Step s = targeted(c.claim.text, base_preds, "unsupported claim");
        if (!seen(s)) out.appended.push_back(std::move(s));
    }

    if (out.appended.empty() && base != nullptr) {
        if (graph) {
            for (const auto& s : plan.steps) {
                if (s.tool != kRetrieveGraph || s.args.value("hops", 1) >= 2) continue;
                Step wider = s;
                wider.args["hops"] = 2;
                wider.rationale = "escalate to two hops";
                if (!seen(wider)) out.appended.push_back(std::move(wider));
            }
        } else {
            // Relax theta one notch on the most recent retrieval step.
            for (auto it = plan.steps.rbegin(); it != plan.steps.rend(); ++it) {
                if (it->tool != kRetrieveHybrid) continue;
                const double theta = it->args.value("theta", cfg.theta);
                const double relaxed = std::max(0.0, std::round((theta - 0.1) * 100.0) / 100.0);
                if (relaxed < theta) {
                    Step looser = *it;
                    looser.args["theta"] = relaxed;
                    looser.rationale = "relax compression floor to " + round2(relaxed);
                    if (!seen(looser)) out.appended.push_back(std::move(looser));
                }
                break;
            }
        }
    }

    if (out.appended.empty()) {
        out.terminate = Termination::BudgetExhausted;
        return out;
    }
    Plan next = plan;
    if (base == nullptr && next.route == Route::Structured) next.route = Route::Vector;
    for (const auto& s : out.appended) next.insert_before_synthesis(s);
    out.plan = std::move(next);
    return out;
}

// ---------------------------------------------------------------------------
// Answers
// ---------------------------------------------------------------------------

std::string GroundedAnswer::text() const {
    std::string out;
    for (const auto& s : sentences) {
        if (!out.empty()) out += ' ';
        out += s.text;
    }
    return out;
}

Json GroundedAnswer::to_json() const {
    Json sents = Json::array();
    for (const auto& s : sentences) {
        sents.push_back({{"text", s.text}, {"citations", s.citations}, {"substantive", s.substantive}});
    }
    Json srcs = Json::array();
    for (const auto& d : sources) srcs.push_back(retrieve::to_json(d));
    return {{"sentences", sents},
            {"sources", srcs},
            {"session_id", session_id},
            {"flags", {{"partial", partial}, {"cached", cached}, {"not_corpus_grounded", false}}}};
}

bool is_non_substantive(std::string_view sentence) {
    static const std::vector<std::regex> kAllow{
        std::regex(R"re(^(?:in summary|in conclusion|overall|to summarize|taken together|in short)[,.:]?$)re", kIcase),
        std::regex(R"re(^(?:however|moreover|furthermore|additionally|in addition|therefore|thus|by contrast)[,.:]?$)re",
                   kIcase),
        std::regex(R"re(^(?:the )?(?:evidence|findings|results) (?:is|are|remains?) (?:limited|mixed|inconclusive|uncertain|sparse)\.?$)re",
                   kIcase),
        std::regex(R"re(^(?:further|more) research is needed\.?$)re", kIcase),
        std::regex(R"re(^(?:the )?(?:following|these) (?:studies|sources|findings|passages) (?:are|were) (?:summarized|listed|cited) below[.:]?$)re",
                   kIcase),
        std::regex(R"re(^(?:the )?(?:sources|references|evidence) (?:are|is) listed below[.:]?$)re", kIcase),
        std::regex(R"re(^no (?:additional|further|other) (?:evidence|information) was (?:found|retrieved)\.?$)re",
                   kIcase),
    };
    const std::string s = text::collapse_whitespace(sentence);
    return std::any_of(kAllow.begin(), kAllow.end(), [&](const std::regex& re) { return std::regex_match(s, re); });
}

GroundingCheck enforce_grounding(const std::string& answer_text, const std::vector<EvidenceItem>& evidence) {
    std::map<std::string, const EvidenceItem*> by_id;
    for (const auto& e : evidence) by_id.emplace(e.chunk_id, &e);

    GroundingCheck check;
    GroundedAnswer answer;
    std::set<std::string> source_docs;
    const auto parsed = parse_sentences(answer_text);
    for (std::size_t i = 0; i < parsed.size(); ++i) {
        const auto& ps = parsed[i];
        if (!ps.citations.empty()) {
            for (const auto& id : ps.citations) {
                if (!by_id.count(id)) {
                    check.rejection = GroundingRejection{i, ps.text, "citation outside the evidence set: " + id};
                    return check;
                }
            }
            answer.sentences.push_back({ps.text, ps.citations, true});
            for (const auto& id : ps.citations) {
                const auto& d = by_id.at(id)->descriptor;
                if (source_docs.insert(d.doc_id).second) answer.sources.push_back(d);
            }
        } else if (is_non_substantive(ps.text)) {
            answer.sentences.push_back({ps.text, {}, false});
        } else {
            check.rejection = GroundingRejection{i, ps.text, "substantive sentence without a citation"};
            return check;
        }
    }
    check.answer = std::move(answer);
    return check;
}

GroundedAnswer synthesize(const std::string& query, const std::vector<EvidenceItem>& evidence,
                          provider::Provider& provider) {
    if (evidence.empty()) throw Error(ErrorCode::EmptyEvidence, "no evidence to synthesize from");
    provider::GenerationRequest req;
    req.task = provider::Task::Synthesis;
    req.instruction =
        "Answer the question using only the passages provided. End every factual sentence with the marker "
        "[cite:<chunk_id>] of each passage it relies on. Do not add outside information.\nQuestion: " +
        query;
    for (const auto& e : evidence) req.context.push_back({e.chunk_id, e.text});

    auto check = enforce_grounding(provider.generate(req), evidence);
    if (check.ok()) return std::move(*check.answer);
    const auto first = *check.rejection;
    req.instruction += "\nA previous answer was rejected because sentence " + std::to_string(first.sentence_index + 1) +
                       " (\"" + first.sentence + "\") had a problem: " + first.reason +
                       ". Cite every factual sentence with a listed chunk_id.";
    check = enforce_grounding(provider.generate(req), evidence);
    if (check.ok()) return std::move(*check.answer);
    throw Error(ErrorCode::UngroundableOutput, "sentence " + std::to_string(check.rejection->sentence_index + 1) +
                                                   ": " + check.rejection->reason);
}

Json NegativeResult::to_json() const {
    return {{"statement", statement},
            {"echoed_parameters",
             {{"corpus_scope", echoed.corpus_scope},
              {"temporal_window", echoed.temporal_window},
              {"study_design_filters", predicates_json(echoed.study_design_filters)},
              {"metadata_fields", echoed.metadata_fields},
              {"predicates", predicates_json(echoed.predicates)}}},
            {"candidate_count", candidate_count},
            {"session_id", session_id}};
}

std::string corpus_scope(const stores::MetadataStore& store, Epoch epoch) {
    const auto n = store.size(epoch);
    if (n == 0) return "corpus: empty snapshot " + std::to_string(epoch);
    return "corpus: snapshot " + std::to_string(epoch) + " (" + std::to_string(n) + " documents)";
}

NegativeResult negative_ground(const std::string& query, const std::vector<Predicate>& applied,
                               const std::string& scope) {
    NegativeResult r;
    r.echoed.corpus_scope = scope;
    r.echoed.predicates = applied;
    std::string window;
    std::string filters;
    for (const auto& p : applied) {
        if (std::find(r.echoed.metadata_fields.begin(), r.echoed.metadata_fields.end(), p.field) ==
            r.echoed.metadata_fields.end()) {
            r.echoed.metadata_fields.push_back(p.field);
        }
        if (p.field == "year") window += (window.empty() ? "" : " AND ") + render(p);
        if (p.field == "study_design_binary" || p.field == "picos_s") r.echoed.study_design_filters.push_back(p);
        filters += (filters.empty() ? "" : " AND ") + render(p);
    }
    r.echoed.temporal_window = window.empty() ? "unbounded" : window;
    std::string subject = strip_trailing_punct(semantic_of(query));
    if (subject.empty()) subject = strip_trailing_punct(query);
    r.statement = "No records relevant to \"" + subject + "\"";
    if (!filters.empty()) r.statement += " matching " + filters;
    r.statement += " were found within " + scope + ".";
    return r;
}

std::string_view to_string(ResponseKind k) noexcept {
    switch (k) {
        case ResponseKind::Grounded: return "grounded";
        case ResponseKind::Negative: return "negative";
        case ResponseKind::Structured: return "structured";
        case ResponseKind::Direct: return "direct";
    }
    return "grounded";
}

Json Response::to_json() const {
    Json j{{"session_id", session_id},
           {"query", query},
           {"kind", std::string(to_string(kind))},
           {"route", std::string(agent::to_string(route))},
           {"termination", std::string(agent::to_string(termination))},
           {"iterations", iterations},
           {"plan", agent::to_json(plan)},
           {"flags", {{"partial", partial()}, {"cached", cached}, {"not_corpus_grounded", not_corpus_grounded()}}}};
    Json sentences = Json::array();
    Json sources = Json::array();
    if (answer) {
        const auto a = answer->to_json();
        sentences = a["sentences"];
        sources = a["sources"];
        j["answer"] = a;
    }
    j["sentences"] = sentences;
    j["sources"] = sources;
    if (negative) j["negative"] = negative->to_json();
    if (structured) {
        j["structured"] = {{"ast", structq::to_json(structured->ast)},
                           {"sql", structured->sql},
                           {"result", structured->result.to_json()},
                           {"resolution", structured->resolution.to_json()},
                           {"text", structured->text}};
    }
    if (direct_text) j["direct_text"] = *direct_text;
    Json reports_json = Json::array();
    for (const auto& r : reports) reports_json.push_back(r.to_json());
    j["sufficiency"] = reports_json;
    return j;
}

// ---------------------------------------------------------------------------
// Sessions
// ---------------------------------------------------------------------------

Json AuditEntry::to_json() const {
    return {{"seq", seq},
            {"timestamp", timestamp},
            {"session_id", session_id},
            {"kind", kind},
            {"tool", tool},
            {"args_digest", args_digest},
            {"output_digest", output_digest},
            {"args", args},
            {"output", output},
            {"cached", cached},
            {"digest_algorithm", "sha256"}};
}

AuditEntry AuditEntry::from_json(const Json& j) {
    AuditEntry e;
    e.seq = j.value("seq", std::size_t{0});
    e.timestamp = j.value("timestamp", std::string{});
    e.session_id = j.value("session_id", std::string{});
    e.kind = j.value("kind", std::string{});
    e.tool = j.value("tool", std::string{});
    e.args_digest = j.value("args_digest", std::string{});
    e.output_digest = j.value("output_digest", std::string{});
    e.args = j.value("args", Json::object());
    e.output = j.value("output", Json::object());
    e.cached = j.value("cached", false);
    return e;
}

std::string json_digest(const Json& j) { return sha256_hex(j.dump()); }

struct Agent::Session {
    std::string id;
    Epoch epoch = 0;
    mutable std::mutex mu;
    std::vector<AuditEntry> log;
    std::map<std::string, Observation> cache;  // tool-call digest -> observation
    std::map<std::string, EvidenceItem> evidence;
};

Agent::Agent(const stores::DataPlane& plane, provider::Provider& provider, AgentConfig config, ToolRegistry tools)
    : plane_(plane), provider_(provider), config_(std::move(config)), tools_(std::move(tools)) {
    if (config_.max_iterations == 0) throw Error(ErrorCode::InvalidArgument, "max_iterations must be >= 1");
}

Agent::~Agent() = default;

std::shared_ptr<Agent::Session> Agent::session(const std::string& id) const {
    std::lock_guard lock(mu_);
    const auto it = sessions_.find(id);
    if (it == sessions_.end()) throw Error(ErrorCode::UnknownSession, id);
    return it->second;
}

void Agent::append(Session& s, AuditEntry entry) const {
    entry.seq = s.log.size();
    entry.timestamp = utc_timestamp();
    entry.session_id = s.id;
    entry.args_digest = json_digest(entry.args);
    entry.output_digest = json_digest(entry.output);
    s.log.push_back(std::move(entry));
}

std::string Agent::open_session(std::optional<Epoch> at) {
    const Epoch epoch = at.value_or(plane_.epoch());
    plane_.metadata().require_epoch(epoch);
    auto s = std::make_shared<Session>();
    {
        std::lock_guard lock(mu_);
        s->id = "s" + std::to_string(next_session_++) + "-" + random_suffix();
        s->epoch = epoch;
        sessions_[s->id] = s;
    }
    std::lock_guard lock(s->mu);
    AuditEntry e;
    e.kind = "open";
    e.args = {{"epoch", epoch}};
    append(*s, std::move(e));
    return s->id;
}

Epoch Agent::refresh_session(const std::string& session_id) {
    auto s = session(session_id);
    std::lock_guard lock(s->mu);
    s->epoch = plane_.epoch();
    s->cache.clear();
    AuditEntry e;
    e.kind = "refresh";
    e.args = {{"epoch", s->epoch}};
    append(*s, std::move(e));
    return s->epoch;
}

Epoch Agent::session_epoch(const std::string& session_id) const {
    auto s = session(session_id);
    std::lock_guard lock(s->mu);
    return s->epoch;
}

std::vector<std::string> Agent::session_ids() const {
    std::lock_guard lock(mu_);
    std::vector<std::string> out;
    for (const auto& [id, s] : sessions_) out.push_back(id);
    return out;
}

std::vector<AuditEntry> Agent::log(const std::string& session_id) const {
    auto s = session(session_id);
    std::lock_guard lock(s->mu);
    return s->log;
}

void Agent::export_log(const std::string& session_id, std::ostream& out) const {
    for (const auto& e : log(session_id)) out << e.to_json().dump() << '\n';
}

std::map<std::string, EvidenceItem> Agent::session_evidence(const std::string& session_id) const {
    auto s = session(session_id);
    std::lock_guard lock(s->mu);
    return s->evidence;
}

Observation Agent::run_tool(Session& s, const Step& step, provider::Provider& provider) {
    const Tool* tool = tools_.find(step.tool);
    if (tool == nullptr) throw Error(ErrorCode::NoApplicableTool, step.tool);
    const std::string key = json_digest(Json{{"tool", step.tool}, {"args", step.args}, {"epoch", s.epoch}});
    if (const auto it = s.cache.find(key); it != s.cache.end()) {
        Observation obs = it->second;
        obs.cached = true;
        AuditEntry e;
        e.kind = "tool_call";
        e.tool = step.tool;
        e.args = step.args;
        e.output = obs.output;
        e.cached = true;
        append(s, std::move(e));
        return obs;
    }

    const ToolContext ctx{plane_, provider, s.epoch, config_.retrieval, config_.fuzzy_threshold};
    Observation obs;
    try {
        obs = tool->run(step.args, ctx);
    } catch (const Error& err) {
        AuditEntry e;
        e.kind = "tool_failure";
        e.tool = step.tool;
        e.args = step.args;
        e.output = {{"error", std::string(to_string(err.code()))}, {"message", err.what()}};
        append(s, std::move(e));
        switch (err.code()) {
            case ErrorCode::SnapshotGone:
            case ErrorCode::StoreUnavailable:
            case ErrorCode::ProviderUnavailable:
                throw;
            default:
                throw Error(ErrorCode::ToolFailure, step.tool + ": " + err.what());
        }
    }
    obs.tool = step.tool;
    obs.args = step.args;
    for (const auto& item : obs.evidence) {
        auto [it, inserted] = s.evidence.emplace(item.chunk_id, item);
        if (!inserted && item.score > it->second.score) it->second = item;
    }
    s.cache[key] = obs;
    AuditEntry e;
    e.kind = "tool_call";
    e.tool = step.tool;
    e.args = step.args;
    e.output = obs.output;
    append(s, std::move(e));
    return obs;
}

Observation Agent::execute_step(const std::string& session_id, const Step& step, Route route) {
    auto s = session(session_id);
    std::lock_guard lock(s->mu);
    if (step.kind == StepKind::Synthesis) {
        if (is_factual(route) && s->evidence.empty()) {
            throw Error(ErrorCode::DisciplineViolation, "factual synthesis requested before any evidence was gathered");
        }
        return {};
    }
    provider::MeteredProvider metered(provider_, config_.max_provider_calls);
    return run_tool(*s, step, metered);
}

Response Agent::ask(const std::string& session_id, const std::string& query) {
    auto sp = session(session_id);
    Session& s = *sp;
    std::lock_guard lock(s.mu);
    provider::MeteredProvider provider(provider_, config_.max_provider_calls);

    Response resp;
    resp.session_id = s.id;
    resp.query = query;
    resp.route = route(query, &provider);
    resp.plan = plan(query, resp.route, tools_, config_.retrieval, &provider);
    {
        AuditEntry e;
        e.kind = "plan";
        e.args = {{"query", query}};
        e.output = to_json(resp.plan);
        append(s, std::move(e));
    }

    auto finish = [&](Response& r) {
        AuditEntry e;
        e.kind = "answer";
        e.args = {{"query", query}};
        e.output = strip_session(r.to_json());
        append(s, std::move(e));
        return r;
    };

    if (resp.route == Route::Direct) {
        provider::GenerationRequest req;
        req.task = provider::Task::Direct;
        req.instruction = "Answer briefly from general knowledge.\nQuestion: " + query;
        std::string text = text::trim(provider.generate(req));
        if (text.empty()) {
            text = "This is a definitional question; it was answered without consulting the indexed corpus.";
        }
        resp.kind = ResponseKind::Direct;
        resp.direct_text = "[not corpus-grounded] " + text;
        resp.iterations = 0;
        return finish(resp);
    }

    const auto constraints = extract_constraints(query);
    std::map<std::string, EvidenceItem> turn;
    std::vector<Predicate> executed_predicates;
    std::vector<Step> executed;
    // Replans only insert tool calls ahead of synthesis, so a count of
    // consumed tool calls is a stable cursor across plan revisions.
    std::size_t consumed = 0;
    std::size_t iteration = 1;

    while (true) {
        std::size_t seen_calls = 0;
        for (const Step& step : resp.plan.steps) {
            if (step.kind != StepKind::ToolCall) continue;
            if (seen_calls++ < consumed) continue;
            ++consumed;
            executed.push_back(step);
            Observation obs;
            try {
                obs = run_tool(s, step, provider);
            } catch (const Error& err) {
                if (err.code() != ErrorCode::ToolFailure && err.code() != ErrorCode::NoApplicableTool) throw;
                continue;
            }
            resp.cached = resp.cached || obs.cached;
            if (obs.table) {
                StructuredAnswer sa;
                sa.ast = *obs.ast;
                sa.sql = structq::render_sql(sa.ast);
                sa.result = *obs.table;
                sa.resolution = obs.resolution.value_or(structq::ResolutionReport{});
                sa.text = structured_text(sa.ast, sa.result);
                resp.kind = ResponseKind::Structured;
                resp.structured = std::move(sa);
                resp.iterations = iteration;
                return finish(resp);
            }
            for (const auto& p : obs.applied_predicates) {
                if (std::find(executed_predicates.begin(), executed_predicates.end(), p) == executed_predicates.end()) {
                    executed_predicates.push_back(p);
                }
            }
            for (auto& item : obs.evidence) {
                auto [it, inserted] = turn.emplace(item.chunk_id, item);
                if (!inserted && item.score > it->second.score) it->second = std::move(item);
            }
        }

        std::vector<EvidenceItem> evidence;
        for (const auto& [id, item] : turn) evidence.push_back(item);
        std::sort(evidence.begin(), evidence.end(), [](const EvidenceItem& a, const EvidenceItem& b) {
            return a.score != b.score ? a.score > b.score : a.chunk_id < b.chunk_id;
        });

        const auto claims = draft_claims(evidence, query, provider);
        auto report = assess_sufficiency(constraints, evidence, claims);
        if (config_.sufficiency_override) report = config_.sufficiency_override(report);
        {
            AuditEntry e;
            e.kind = "assess";
            e.args = {{"iteration", iteration}};
            e.output = report.to_json();
            append(s, std::move(e));
        }
        resp.reports.push_back(report);
        resp.iterations = iteration;

        auto outcome = replan(resp.plan, report, iteration, config_.max_iterations, executed);
        if (outcome.terminate) {
            resp.termination = *outcome.terminate;
            if (evidence.empty()) {
                resp.kind = ResponseKind::Negative;
                resp.negative = negative_ground(query, executed_predicates, corpus_scope(plane_.metadata(), s.epoch));
                resp.negative->session_id = s.id;
                return finish(resp);
            }
            GroundedAnswer answer = synthesize(query, evidence, provider);
            answer.session_id = s.id;
            answer.partial = resp.partial();
            answer.cached = resp.cached;
            resp.kind = ResponseKind::Grounded;
            resp.answer = std::move(answer);
            return finish(resp);
        }
        // The structured template failed; the replanned steps retrieve instead.
        resp.plan = std::move(*outcome.plan);
        resp.route = resp.plan.route;
        {
            AuditEntry e;
            e.kind = "plan";
            e.args = {{"query", query}, {"iteration", iteration}};
            e.output = to_json(resp.plan);
            append(s, std::move(e));
        }
        ++iteration;
    }
}

std::vector<std::string> Agent::replay(const std::vector<AuditEntry>& entries) {
    std::vector<std::string> mismatches;
    std::optional<std::string> id;
    for (const auto& e : entries) {
        if (e.kind == "open" || e.kind == "refresh") {
            const Epoch epoch = e.args.value("epoch", Epoch{0});
            if (!id) {
                id = open_session(epoch);
            } else {
                auto s = session(*id);
                std::lock_guard lock(s->mu);
                plane_.metadata().require_epoch(epoch);
                s->epoch = epoch;
                s->cache.clear();
                AuditEntry r;
                r.kind = "refresh";
                r.args = {{"epoch", epoch}};
                append(*s, std::move(r));
            }
        } else if (e.kind == "answer") {
            const std::string query = e.args.value("query", std::string{});
            if (!id) id = open_session();
            const auto resp = ask(*id, query);
            if (json_digest(strip_session(resp.to_json())) != e.output_digest) mismatches.push_back(query);
        }
    }
    return mismatches;
}

}  // namespace evsynth::agent
