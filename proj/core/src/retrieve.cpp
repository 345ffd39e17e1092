#include "evsynth/retrieve.hpp"

#include <algorithm>
#include <cmath>
#include <regex>
#include <set>

#include "evsynth/error.hpp"

namespace evsynth::retrieve {

namespace {

const std::set<std::string>& filler_words() {
    static const std::set<std::string> kWords{
        "about",   "regarding", "concerning", "on",     "papers", "paper",   "studies",  "study",
        "articles", "article",  "publications", "publication", "literature", "research", "tell",
        "me",      "show",      "find",       "list",   "give",   "get",     "what",     "which",
        "are",     "is",        "were",       "was",    "the",    "a",       "an",       "of",
        "for",     "published", "please",     "any",    "all",    "some",    "that",     "there",
        "and",     "or",        "in",         "by",     "from",   "to",      "with",     "do",
        "does",    "have",      "has",        "evidence"};
    return kWords;
}

struct GrammarHit {
    std::size_t position;
    Predicate predicate;
};

std::int64_t to_year(const std::string& s) { return std::stoll(s); }

void blank(std::string& s, std::size_t pos, std::size_t len) {
    for (std::size_t i = pos; i < pos + len && i < s.size(); ++i) s[i] = ' ';
}

template <typename Emit>
void scan(std::string& work, const std::regex& re, Emit&& emit) {
    const std::string snapshot = work;
    for (auto it = std::sregex_iterator(snapshot.begin(), snapshot.end(), re); it != std::sregex_iterator(); ++it) {
        emit(*it, static_cast<std::size_t>(it->position(0)));
        blank(work, static_cast<std::size_t>(it->position(0)), static_cast<std::size_t>(it->length(0)));
    }
}

std::string residual_text(const std::string& work) {
    std::string out;
    for (const auto& w : text::tokenize_words(work)) {
        if (filler_words().count(w) > 0) continue;
        if (!out.empty()) out += ' ';
        out += w;
    }
    return out;
}

const FieldSchema* find_field(const std::vector<FieldSchema>& schema, const std::string& name) {
    const auto it = std::find_if(schema.begin(), schema.end(), [&](const FieldSchema& f) { return f.name == name; });
    return it == schema.end() ? nullptr : &*it;
}

bool field_in(const std::vector<FieldSchema>& schema, const std::string& name) {
    return find_field(schema, name) != nullptr;
}

double cosine(const Embedding& a, const Embedding& b) { return stores::dot(a, b); }

bool has_content(const std::string& q) { return !text::content_term_set(q).empty(); }

void sort_items(std::vector<EvidenceItem>& items) {
    std::sort(items.begin(), items.end(), [](const EvidenceItem& a, const EvidenceItem& b) {
        return a.score != b.score ? a.score > b.score : a.chunk_id < b.chunk_id;
    });
}

/// Splits requested predicates into index-side filters, store-side
/// post-filters and rejects.
struct PredicatePlan {
    std::vector<Predicate> index_filter;
    std::vector<Predicate> post_filter;
    std::vector<Predicate> applied;
    std::vector<DroppedPredicate> dropped;
};

PredicatePlan plan_predicates(const std::vector<Predicate>& requested) {
    PredicatePlan plan;
    for (Predicate p : requested) {
        const auto* f = find_field(stores::document_fields(), p.field);
        if (f == nullptr) {
            plan.dropped.push_back({p, "unknown field"});
            continue;
        }
        if (!validate_predicate(p, stores::document_fields())) {
            plan.dropped.push_back({p, "comparator or literal incompatible with " + std::string(to_string(f->type))});
            continue;
        }
        if (field_in(stores::vector_metadata_fields(), p.field)) {
            plan.index_filter.push_back(p);
        } else {
            plan.post_filter.push_back(p);
        }
        plan.applied.push_back(p);
    }
    return plan;
}

bool passes(const RetrievalContext& ctx, const std::string& doc_id, const std::vector<Predicate>& preds) {
    if (preds.empty()) return true;
    return matches_all(preds, ctx.plane.metadata().view(doc_id, ctx.at));
}

std::optional<EvidenceItem> make_item(const RetrievalContext& ctx, const std::string& chunk_id, double score,
                                      Pathway pathway) {
    const auto chunk = ctx.plane.metadata().chunk(chunk_id, ctx.at);
    if (!chunk) return std::nullopt;
    EvidenceItem item;
    item.chunk_id = chunk_id;
    item.descriptor = describe(ctx.plane.metadata(), chunk->doc_id, ctx.at);
    item.score = score;
    item.text = chunk->text;
    item.pathways = {pathway};
    item.original_char_spans = {chunk->char_span};
    return item;
}

void add_pathway(EvidenceItem& item, Pathway p) {
    if (std::find(item.pathways.begin(), item.pathways.end(), p) == item.pathways.end()) item.pathways.push_back(p);
}

}  // namespace

// ---------------------------------------------------------------------------
// Self-query
// ---------------------------------------------------------------------------

Json to_json(const StructuredQuery& q) {
    Json preds = Json::array();
    for (const auto& p : q.predicates) preds.push_back(to_json(p));
    return Json{{"semantic_text", q.semantic_text}, {"predicates", preds}, {"k", q.k}};
}

bool validate_predicate(Predicate& p, const std::vector<FieldSchema>& schema) {
    const auto* f = find_field(schema, p.field);
    if (f == nullptr) return false;
    if (f->type == FieldType::Ternary) {
        if (const auto* s = std::get_if<std::string>(&p.literal)) {
            if (const auto l = parse_ternary(*s)) p.literal = *l;
        }
    }
    if (f->type == FieldType::Integer) {
        if (const auto* s = std::get_if<std::string>(&p.literal)) {
            try {
                std::size_t used = 0;
                const auto v = std::stoll(*s, &used);
                if (used == s->size()) p.literal = static_cast<std::int64_t>(v);
            } catch (const std::exception&) {
            }
        }
    }
    return literal_compatible(f->type, p.op, p.literal);
}

StructuredQuery grammar_self_query(const std::string& natural_query, const std::vector<FieldSchema>& schema) {
    using std::regex;
    constexpr auto icase = regex::ECMAScript | regex::icase;
    static const regex kRct(R"re(\b(?:rcts?|randomi[sz]ed(?:\s+controlled)?\s+trials?)\b)re", icase);
    static const regex kBetween(R"re(\b(?:between|from)\s+((?:1|2)\d{3})\s+(?:and|to|until)\s+((?:1|2)\d{3})\b)re", icase);
    static const regex kRange(R"re(\b((?:1|2)\d{3})\s*(?:-|–|to)\s*((?:1|2)\d{3})\b)re", icase);
    static const regex kAfter(R"re(\b(after|since|before|in|from|until|at\s+least|at\s+most)\s+(?:the\s+year\s+)?((?:1|2)\d{3})\b)re", icase);
    static const regex kVenue(R"re((?:\b(?:by|in|from|at|published\s+in)\s+)?\bvenue\s+(?:"([^"]+)"|(\S+)))re", icase);
    static const regex kAuthor(R"re(\b(?:[Bb]y|[Aa]uthor(?:ed)?\s+by)\s+(?:[Aa]uthors?\s+)?(?:"([^"]+)"|([A-Z][\w'\-]+)))re");
    static const regex kAuthorWord(R"re(\b[Aa]uthors?\s+(?:"([^"]+)"|([A-Z][\w'\-]+)))re");

    std::string work = natural_query;
    std::vector<GrammarHit> hits;
    auto add = [&](std::size_t pos, std::string field, Comparator op, FieldValue lit) {
        Predicate p{std::move(field), op, std::move(lit)};
        if (validate_predicate(p, schema)) hits.push_back({pos, std::move(p)});
    };

    scan(work, kRct, [&](const std::smatch&, std::size_t pos) { add(pos, "study_design_binary", Comparator::Eq, true); });
    scan(work, kVenue, [&](const std::smatch& m, std::size_t pos) {
        add(pos, "venue", Comparator::Eq, m[1].matched ? m.str(1) : m.str(2));
    });
    scan(work, kBetween, [&](const std::smatch& m, std::size_t pos) {
        auto a = to_year(m.str(1)), b = to_year(m.str(2));
        if (a > b) std::swap(a, b);
        add(pos, "year", Comparator::Ge, a);
        add(pos, "year", Comparator::Le, b);
    });
    scan(work, kRange, [&](const std::smatch& m, std::size_t pos) {
        auto a = to_year(m.str(1)), b = to_year(m.str(2));
        if (a > b) std::swap(a, b);
        add(pos, "year", Comparator::Ge, a);
        add(pos, "year", Comparator::Le, b);
    });
    scan(work, kAfter, [&](const std::smatch& m, std::size_t pos) {
        const std::string w = text::collapse_whitespace(text::to_lower(m.str(1)));
        const auto y = to_year(m.str(2));
        Comparator op = Comparator::Eq;
        if (w == "after") op = Comparator::Gt;
        else if (w == "since" || w == "from" || w == "at least") op = Comparator::Ge;
        else if (w == "before") op = Comparator::Lt;
        else if (w == "until" || w == "at most") op = Comparator::Le;
        add(pos, "year", op, y);
    });
    scan(work, kAuthor, [&](const std::smatch& m, std::size_t pos) {
        add(pos, "authors", Comparator::Contains, m[1].matched ? m.str(1) : m.str(2));
    });
    scan(work, kAuthorWord, [&](const std::smatch& m, std::size_t pos) {
        add(pos, "authors", Comparator::Contains, m[1].matched ? m.str(1) : m.str(2));
    });

    std::stable_sort(hits.begin(), hits.end(), [](const auto& a, const auto& b) { return a.position < b.position; });
    StructuredQuery q;
    for (auto& h : hits) {
        if (std::find(q.predicates.begin(), q.predicates.end(), h.predicate) == q.predicates.end()) {
            q.predicates.push_back(std::move(h.predicate));
        }
    }
    q.semantic_text = residual_text(work);
    return q;
}

StructuredQuery parse_self_query(const std::string& natural_query, const std::vector<FieldSchema>& schema,
                                 provider::Provider* provider) {
    StructuredQuery q = grammar_self_query(natural_query, schema);
    if (provider == nullptr) return q;
    provider::GenerationRequest req;
    req.task = provider::Task::SelfQuery;
    std::string fields;
    for (const auto& f : schema) fields += "  " + f.name + ": " + std::string(to_string(f.type)) + "\n";
    req.instruction =
        "Split the question into metadata filters and the remaining topical text. Fields:\n" + fields +
        "Reply with JSON {\"semantic_text\": str, \"predicates\": [{\"field\", \"op\", \"value\"}]}.\nQuestion: " +
        natural_query;
    std::string reply;
    try {
        reply = provider->generate(req);
    } catch (const Error& e) {
        if (e.code() != ErrorCode::ProviderUnavailable) throw;
        return q;
    }
    if (text::trim(reply).empty()) return q;
    try {
        const auto start = reply.find('{');
        const auto end = reply.rfind('}');
        if (start == std::string::npos || end == std::string::npos || end < start) return q;
        const Json j = Json::parse(reply.substr(start, end - start + 1));
        std::set<std::string> grammar_fields;
        for (const auto& p : q.predicates) grammar_fields.insert(p.field);
        if (j.contains("predicates")) {
            for (const auto& jp : j.at("predicates")) {
                Predicate p;
                try {
                    p = predicate_from_json(jp);
                } catch (const std::exception&) {
                    continue;
                }
                if (grammar_fields.count(p.field) > 0) continue;
                if (!validate_predicate(p, schema)) continue;
                if (std::find(q.predicates.begin(), q.predicates.end(), p) == q.predicates.end()) {
                    q.predicates.push_back(std::move(p));
                }
            }
        }
        if (q.semantic_text.empty() && j.contains("semantic_text") && j.at("semantic_text").is_string()) {
            q.semantic_text = text::collapse_whitespace(j.at("semantic_text").get<std::string>());
        }
    } catch (const Json::exception&) {
    }
    return q;
}

// ---------------------------------------------------------------------------
// Evidence JSON
// ---------------------------------------------------------------------------

std::string_view to_string(Pathway p) noexcept {
    switch (p) {
        case Pathway::Vector: return "vector";
        case Pathway::Graph: return "graph";
        case Pathway::Keyword: return "keyword";
    }
    return "vector";
}

bool EvidenceBundle::contains(const std::string& chunk_id) const {
    return std::any_of(items.begin(), items.end(), [&](const EvidenceItem& i) { return i.chunk_id == chunk_id; });
}

Json to_json(const DocDescriptor& d) {
    Json picos = Json::object();
    for (const auto& [dim, l] : d.picos) picos[to_string(dim)] = std::string(to_string(l));
    Json desc{{"doc_id", d.doc_id}, {"title", d.title}, {"authors", d.authors}, {"venue", d.venue}, {"picos", picos}};
    desc["year"] = d.year ? Json(*d.year) : Json(nullptr);
    desc["study_design_binary"] = d.study_design_binary ? Json(*d.study_design_binary) : Json(nullptr);
    desc["include_decision"] = d.include_decision ? Json(std::string(to_string(*d.include_decision))) : Json(nullptr);
    return desc;
}

Json to_json(const EvidenceItem& item) {
    Json pathways = Json::array();
    for (const auto p : item.pathways) pathways.push_back(std::string(to_string(p)));
    Json spans = Json::array();
    for (const auto& s : item.original_char_spans) spans.push_back({s.begin, s.end});
    const Json desc = to_json(item.descriptor);
    Json j{{"chunk_id", item.chunk_id},
           {"descriptor", desc},
           {"score", item.score},
           {"text", item.text},
           {"provenance", {{"pathways", pathways}, {"original_char_spans", spans}}}};
    if (item.compression_skipped) j["compression_skipped"] = true;
    return j;
}

Json to_json(const EvidenceBundle& b) {
    Json items = Json::array();
    for (const auto& i : b.items) items.push_back(to_json(i));
    Json applied = Json::array();
    for (const auto& p : b.applied_predicates) applied.push_back(to_json(p));
    Json dropped = Json::array();
    for (const auto& d : b.dropped_predicates) dropped.push_back({{"predicate", to_json(d.predicate)}, {"reason", d.reason}});
    Json j{{"items", items},
           {"applied_predicates", applied},
           {"dropped_predicates", dropped},
           {"candidate_count", b.candidate_count},
           {"dropped_irrelevant", b.dropped_irrelevant},
           {"dropped_by_compression", b.dropped_by_compression},
           {"trace", b.trace}};
    j["graph_context"] = b.graph_context ? Json(*b.graph_context) : Json(nullptr);
    return j;
}

// ---------------------------------------------------------------------------
// MMR
// ---------------------------------------------------------------------------

std::vector<std::string> mmr_select(const std::vector<MmrCandidate>& candidates, const Embedding& query_vector,
                                    double lambda, std::size_t k, Json* trace) {
    if (k == 0) return {};
    if (candidates.empty()) throw Error(ErrorCode::EmptyCandidates, "MMR needs at least one candidate");
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw Error(ErrorCode::InvalidArgument, "lambda must lie in [0, 1]");

    std::vector<std::size_t> order(candidates.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return candidates[a].id < candidates[b].id; });

    std::vector<double> rel(candidates.size());
    for (std::size_t i = 0; i < candidates.size(); ++i) rel[i] = cosine(query_vector, candidates[i].vector);
    std::vector<double> max_sim(candidates.size(), -std::numeric_limits<double>::infinity());
    std::vector<bool> taken(candidates.size(), false);
    std::vector<std::string> picked;
    const std::size_t n = std::min(k, candidates.size());
    if (trace != nullptr) *trace = Json::array();
    while (picked.size() < n) {
        std::optional<std::size_t> best;
        double best_score = 0.0;
        for (const auto i : order) {
            if (taken[i]) continue;
            const double redundancy = picked.empty() ? 0.0 : max_sim[i];
            const double s = lambda * rel[i] - (1.0 - lambda) * redundancy;
            if (!best || s > best_score) {
                best = i;
                best_score = s;
            }
        }
        taken[*best] = true;
        picked.push_back(candidates[*best].id);
        if (trace != nullptr) {
            trace->push_back({{"id", candidates[*best].id}, {"relevance", rel[*best]}, {"mmr", best_score}});
        }
        for (std::size_t i = 0; i < candidates.size(); ++i) {
            if (!taken[i]) max_sim[i] = std::max(max_sim[i], cosine(candidates[i].vector, candidates[*best].vector));
        }
    }
    return picked;
}

// ---------------------------------------------------------------------------
// Compression
// ---------------------------------------------------------------------------

CompressResult compress(std::vector<EvidenceItem> items, const std::string& query, provider::Provider& provider,
                        double theta, const stores::MetadataStore* metadata, std::optional<Epoch> at) {
    if (!(theta >= 0.0 && theta <= 1.0)) throw Error(ErrorCode::InvalidArgument, "theta must lie in [0, 1]");
    CompressResult result;
    std::vector<EvidenceItem> stage1;
    for (auto& item : items) {
        std::string source = item.text;
        std::size_t base = item.original_char_spans.empty() ? 0 : item.original_char_spans.front().begin;
        if (metadata != nullptr) {
            if (const auto chunk = metadata->chunk(item.chunk_id, at)) {
                source = chunk->text;
                base = chunk->char_span.begin;
            }
        }
        if (result.extraction_fallback) {
            item.compression_skipped = true;
            stage1.push_back(std::move(item));
            continue;
        }
        std::string extracted;
        try {
            extracted = provider.extract_relevant(query, source);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::ProviderUnavailable) throw;
            result.extraction_fallback = true;
            item.compression_skipped = true;
            stage1.push_back(std::move(item));
            continue;
        }
        if (text::trim(extracted).empty()) {
            ++result.dropped;
            continue;
        }
        // Re-anchor extracted sentences in the source so citations stay exact.
        std::string kept;
        std::vector<text::Span> spans;
        std::size_t cursor = 0;
        for (const auto& s : text::split_sentences(extracted)) {
            const std::string sentence = extracted.substr(s.begin, s.size());
            auto pos = source.find(sentence, cursor);
            if (pos == std::string::npos) pos = source.find(sentence);
            if (pos == std::string::npos) continue;
            spans.push_back({base + pos, base + pos + sentence.size()});
            cursor = pos + sentence.size();
            if (!kept.empty()) kept += ' ';
            kept += sentence;
        }
        if (spans.empty() || kept.size() > source.size()) {
            item.compression_skipped = true;
        } else {
            item.text = std::move(kept);
            item.original_char_spans = std::move(spans);
        }
        stage1.push_back(std::move(item));
    }
    if (theta <= 0.0 || stage1.empty()) {
        result.items = std::move(stage1);
        return result;
    }
    const auto qv = provider.embed_one(query);
    std::vector<std::string> texts;
    for (const auto& i : stage1) texts.push_back(i.text);
    const auto vecs = provider.embed(texts);
    for (std::size_t i = 0; i < stage1.size(); ++i) {
        if (cosine(qv, vecs[i]) < theta) {
            ++result.dropped;
        } else {
            result.items.push_back(std::move(stage1[i]));
        }
    }
    return result;
}

// ---------------------------------------------------------------------------
// Graph pathway
// ---------------------------------------------------------------------------

DocDescriptor describe(const stores::MetadataStore& metadata, const std::string& doc_id, std::optional<Epoch> at) {
    DocDescriptor d;
    d.doc_id = doc_id;
    if (const auto rec = metadata.get(doc_id, at)) {
        d.title = rec->title;
        d.authors = rec->authors;
        d.venue = rec->venue;
        d.year = rec->year;
    }
    if (const auto ann = metadata.annotations(doc_id)) {
        for (const auto& [dim, e] : ann->picos) d.picos[dim] = e.label;
        d.study_design_binary = ann->study_design_binary;
        d.include_decision = ann->include_decision;
    }
    return d;
}

std::string serialize_subgraph(const stores::Subgraph& g, const stores::MetadataStore& metadata,
                               std::optional<Epoch> at) {
    std::map<std::string, stores::NodeLabel> labels;
    for (const auto& n : g.nodes) labels[n.node_id] = n.label;
    const auto outbound = [&](const stores::GraphEdge& e) {
        const auto it = labels.find(e.dst);
        if (it == labels.end()) return false;
        return it->second == stores::NodeLabel::Intervention || it->second == stores::NodeLabel::Outcome ||
               it->second == stores::NodeLabel::Descriptor;
    };
    std::string out = "seeds:";
    for (const auto& s : g.seed_ids) out += " " + s;
    out += "\nhops: " + std::to_string(g.hops) + "\ninbound:\n";
    for (const auto& e : g.edges) {
        if (!outbound(e)) out += "  " + e.src + " -[" + e.edge_type + "]-> " + e.dst + "\n";
    }
    out += "chunks:\n";
    for (const auto& n : g.nodes) {
        if (n.label != stores::NodeLabel::Chunk) continue;
        const auto c = metadata.chunk(n.node_id, at);
        out += "  [" + n.node_id + "] " + (c ? text::collapse_whitespace(c->text) : std::string("(text unavailable)")) + "\n";
    }
    out += "outbound:\n";
    for (const auto& e : g.edges) {
        if (outbound(e)) out += "  " + e.src + " -[" + e.edge_type + "]-> " + e.dst + "\n";
    }
    return out;
}

EvidenceBundle graph_retrieve(const RetrievalContext& ctx, const std::string& query, int hops, std::size_t k,
                              const std::vector<Predicate>& filter) {
    if (k == 0) throw Error(ErrorCode::InvalidArgument, "k must be >= 1");
    const auto plan = plan_predicates(filter);
    EvidenceBundle bundle;
    bundle.applied_predicates = plan.applied;
    bundle.dropped_predicates = plan.dropped;

    const auto qv = ctx.provider.embed_one(query);
    std::map<std::string, EvidenceItem> found;
    std::vector<std::string> order;
    for (const auto& hit : ctx.plane.vectors().search(qv, plan.index_filter, k * 2, ctx.at)) {
        if (found.size() >= k) break;
        const auto entry = ctx.plane.vectors().get(hit.chunk_id, ctx.at);
        if (!entry || !passes(ctx, entry->doc_id, plan.post_filter)) continue;
        if (auto item = make_item(ctx, hit.chunk_id, hit.score, Pathway::Graph)) {
            found.emplace(hit.chunk_id, std::move(*item));
            order.push_back(hit.chunk_id);
        }
    }
    const auto terms = text::content_term_set(query);
    if (!terms.empty()) {
        std::size_t taken = 0;
        for (const auto& [cid, count] : ctx.plane.metadata().keyword_search(terms, ctx.at)) {
            if (taken >= k) break;
            const auto chunk = ctx.plane.metadata().chunk(cid, ctx.at);
            if (!chunk || !passes(ctx, chunk->doc_id, plan.applied)) continue;
            ++taken;
            if (const auto it = found.find(cid); it != found.end()) {
                add_pathway(it->second, Pathway::Keyword);
                continue;
            }
            const auto entry = ctx.plane.vectors().get(cid, ctx.at);
            const double score = entry ? cosine(qv, entry->embedding) : 0.0;
            if (auto item = make_item(ctx, cid, score, Pathway::Graph)) {
                add_pathway(*item, Pathway::Keyword);
                found.emplace(cid, std::move(*item));
                order.push_back(cid);
            }
        }
    }

    std::vector<std::string> seeds;
    for (const auto& cid : order) {
        if (ctx.plane.graph().has_node(cid)) seeds.push_back(cid);
    }
    if (!seeds.empty()) {
        bundle.subgraph = ctx.plane.graph().neighborhood(seeds, hops);
        bundle.graph_context = serialize_subgraph(*bundle.subgraph, ctx.plane.metadata(), ctx.at);
    } else {
        bundle.graph_context = std::string();
    }
    for (auto& [cid, item] : found) bundle.items.push_back(std::move(item));
    sort_items(bundle.items);
    bundle.candidate_count = bundle.items.size();
    return bundle;
}

// ---------------------------------------------------------------------------
// Hybrid
// ---------------------------------------------------------------------------

EvidenceBundle vector_retrieve(const RetrievalContext& ctx, const StructuredQuery& sq, const RetrieveConfig& config) {
    const std::size_t k = sq.k > 0 ? sq.k : config.k;
    const auto plan = plan_predicates(sq.predicates);
    EvidenceBundle bundle;
    bundle.applied_predicates = plan.applied;
    bundle.dropped_predicates = plan.dropped;

    const auto qv = ctx.provider.embed_one(sq.semantic_text);
    const auto hits = ctx.plane.vectors().search(qv, plan.index_filter, k * std::max<std::size_t>(1, config.fetch_multiplier), ctx.at);
    std::vector<MmrCandidate> cands;
    std::map<std::string, double> score_of;
    for (const auto& h : hits) {
        const auto entry = ctx.plane.vectors().get(h.chunk_id, ctx.at);
        if (!entry || !passes(ctx, entry->doc_id, plan.post_filter)) continue;
        cands.push_back({h.chunk_id, entry->embedding, h.score});
        score_of[h.chunk_id] = h.score;
    }
    Json candidates = Json::array();
    for (const auto& c : cands) candidates.push_back({{"chunk_id", c.id}, {"score", c.relevance}});
    bundle.trace["vector_candidates"] = candidates;
    if (cands.empty()) return bundle;

    Json mmr_trace;
    const auto selected = mmr_select(cands, qv, config.lambda, k, &mmr_trace);
    bundle.trace["mmr"] = mmr_trace;
    std::vector<EvidenceItem> items;
    for (const auto& id : selected) {
        if (auto item = make_item(ctx, id, score_of[id], Pathway::Vector)) items.push_back(std::move(*item));
    }
    if (config.compress && has_content(sq.semantic_text)) {
        auto c = compress(std::move(items), sq.semantic_text, ctx.provider, config.theta, &ctx.plane.metadata(), ctx.at);
        bundle.dropped_by_compression = c.dropped;
        bundle.trace["compression"] = {{"dropped", c.dropped}, {"extraction_fallback", c.extraction_fallback}};
        items = std::move(c.items);
    }
    bundle.items = std::move(items);
    sort_items(bundle.items);
    bundle.candidate_count = bundle.items.size();
    return bundle;
}

EvidenceBundle hybrid_retrieve(const RetrievalContext& ctx, const StructuredQuery& sq, const RetrieveConfig& config) {
    EvidenceBundle bundle = vector_retrieve(ctx, sq, config);
    if (config.use_graph && ctx.plane.graph().node_count() > 0) {
        const std::size_t k = sq.k > 0 ? sq.k : config.k;
        auto graph = graph_retrieve(ctx, sq.semantic_text, config.hops, k, sq.predicates);
        std::map<std::string, std::size_t> at_index;
        for (std::size_t i = 0; i < bundle.items.size(); ++i) at_index[bundle.items[i].chunk_id] = i;
        for (auto& g : graph.items) {
            const auto it = at_index.find(g.chunk_id);
            if (it == at_index.end()) {
                at_index[g.chunk_id] = bundle.items.size();
                bundle.items.push_back(std::move(g));
                continue;
            }
            auto& mine = bundle.items[it->second];
            for (const auto p : g.pathways) add_pathway(mine, p);
            mine.score = std::max(mine.score, g.score);
        }
        bundle.graph_context = std::move(graph.graph_context);
        bundle.subgraph = std::move(graph.subgraph);
        sort_items(bundle.items);
    }
    bundle.candidate_count = bundle.items.size();

    if (config.grade && has_content(sq.semantic_text)) {
        std::vector<EvidenceItem> kept;
        Json grades = Json::array();
        for (auto& item : bundle.items) {
            const auto g = ctx.provider.grade_relevance(sq.semantic_text, item.text);
            grades.push_back({{"chunk_id", item.chunk_id}, {"score", g.score}, {"relevant", g.relevant}});
            if (g.relevant) {
                kept.push_back(std::move(item));
            } else {
                ++bundle.dropped_irrelevant;
            }
        }
        bundle.items = std::move(kept);
        bundle.trace["grades"] = grades;
    }
    return bundle;
}

}  // namespace evsynth::retrieve
