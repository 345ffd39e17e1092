#include "evsynth/stores.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <mutex>
#include <sstream>

#include "evsynth/error.hpp"
#include "evsynth/hash.hpp"
#include "evsynth/text.hpp"

namespace evsynth::stores {

namespace {

std::string picos_field(Dimension d) {
    return std::string("picos_") + static_cast<char>(std::tolower(to_char(d)));
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
    std::vector<std::string> lines;
    std::ifstream in(path);
    if (!in) return lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!text::trim(line).empty()) lines.push_back(line);
    }
    return lines;
}

}  // namespace

// ---------------------------------------------------------------------------
// AnnotationSet
// ---------------------------------------------------------------------------

void AnnotationSet::sync_study_design() {
    if (const auto it = picos.find(Dimension::S); it != picos.end()) {
        study_design_binary = it->second.label != TernaryLabel::No;
    }
}

void validate(const AnnotationSet& a) {
    for (const auto& [dim, entry] : a.picos) {
        if (!(entry.confidence >= 0.0 && entry.confidence <= 1.0)) {
            throw Error(ErrorCode::InvalidArgument,
                        "confidence for " + to_string(dim) + " outside [0,1]");
        }
    }
    if (const auto it = a.picos.find(Dimension::S); it != a.picos.end() && a.study_design_binary) {
        if (*a.study_design_binary != (it->second.label != TernaryLabel::No)) {
            throw Error(ErrorCode::InvalidArgument, "study_design_binary disagrees with S label");
        }
    }
    if (a.topic_id && *a.topic_id < -1) throw Error(ErrorCode::InvalidArgument, "topic_id < -1");
}

Json to_json(const AnnotationSet& a) {
    Json picos = Json::object();
    for (const auto& [dim, entry] : a.picos) {
        picos[to_string(dim)] = {{"label", std::string(to_string(entry.label))},
                                 {"confidence", entry.confidence}};
    }
    Json j{{"picos", picos}};
    j["study_design_binary"] = a.study_design_binary ? Json(*a.study_design_binary) : Json(nullptr);
    j["topic_id"] = a.topic_id ? Json(*a.topic_id) : Json(nullptr);
    j["include_decision"] =
        a.include_decision ? Json(std::string(to_string(*a.include_decision))) : Json(nullptr);
    return j;
}

AnnotationSet annotations_from_json(const Json& j) {
    AnnotationSet a;
    if (j.contains("picos")) {
        for (const auto& [key, value] : j.at("picos").items()) {
            const auto dim = parse_dimension(key);
            if (!dim) throw Error(ErrorCode::InvalidArgument, "unknown PICOS dimension " + key);
            PicosEntry e;
            const auto label = parse_ternary(value.at("label").get<std::string>());
            if (!label) throw Error(ErrorCode::InvalidArgument, "bad label " + value.at("label").dump());
            e.label = *label;
            e.confidence = value.value("confidence", 1.0);
            a.picos[*dim] = e;
        }
    }
    if (j.contains("study_design_binary") && !j.at("study_design_binary").is_null()) {
        a.study_design_binary = j.at("study_design_binary").get<bool>();
    }
    if (j.contains("topic_id") && !j.at("topic_id").is_null()) a.topic_id = j.at("topic_id").get<int>();
    if (j.contains("include_decision") && !j.at("include_decision").is_null()) {
        a.include_decision = parse_include_decision(j.at("include_decision").get<std::string>());
    }
    return a;
}

// ---------------------------------------------------------------------------
// MetadataStore
// ---------------------------------------------------------------------------

void MetadataStore::check_available() const {
    if (!available_) throw Error(ErrorCode::StoreUnavailable, "metadata store is unavailable");
}

void MetadataStore::set_available(bool available) {
    std::unique_lock lock(mu_);
    available_ = available;
}

Epoch MetadataStore::current_epoch() const {
    std::shared_lock lock(mu_);
    return epoch_;
}

Epoch MetadataStore::begin_batch() {
    std::unique_lock lock(mu_);
    check_available();
    if (open_batch_) throw Error(ErrorCode::InvalidArgument, "a write batch is already open");
    open_batch_ = epoch_ + 1;
    return *open_batch_;
}

void MetadataStore::commit_batch(Epoch e) {
    std::unique_lock lock(mu_);
    if (!open_batch_ || *open_batch_ != e) throw Error(ErrorCode::InvalidArgument, "no such open batch");
    epoch_ = e;
    open_batch_.reset();
}

Epoch MetadataStore::resolve(std::optional<Epoch> at) const {
    check_available();
    if (!at) return epoch_;
    if (*at < min_epoch_) {
        throw Error(ErrorCode::SnapshotGone, "epoch " + std::to_string(*at) + " has been evicted");
    }
    if (*at > epoch_ && (!open_batch_ || *at != *open_batch_)) {
        throw Error(ErrorCode::InvalidArgument, "epoch " + std::to_string(*at) + " is in the future");
    }
    return *at;
}

void MetadataStore::require_epoch(Epoch e) const {
    std::shared_lock lock(mu_);
    (void)resolve(e);
}

void MetadataStore::evict_before(Epoch e) {
    std::unique_lock lock(mu_);
    min_epoch_ = std::max(min_epoch_, std::min(e, epoch_));
    auto prune = [this](auto& table) {
        for (auto& [key, versions] : table) {
            versions.erase(std::remove_if(versions.begin(), versions.end(),
                                          [this](const auto& v) { return v.until && *v.until <= min_epoch_; }),
                           versions.end());
        }
    };
    prune(records_);
    prune(chunks_);
}

const corpus::DocumentRecord* MetadataStore::find_visible(const std::string& doc_id, Epoch e) const {
    const auto it = records_.find(doc_id);
    if (it == records_.end()) return nullptr;
    for (const auto& v : it->second) {
        if (v.visible(e)) return &v.value;
    }
    return nullptr;
}

std::optional<corpus::DocumentRecord> MetadataStore::get(const std::string& doc_id,
                                                         std::optional<Epoch> at) const {
    std::shared_lock lock(mu_);
    const Epoch e = resolve(at);
    if (const auto* rec = find_visible(doc_id, e)) return *rec;
    return std::nullopt;
}

bool MetadataStore::contains(const std::string& doc_id) const {
    std::shared_lock lock(mu_);
    check_available();
    return records_.count(doc_id) > 0;
}

std::optional<std::string> MetadataStore::doc_id_for_hash(const std::string& content_hash) const {
    std::shared_lock lock(mu_);
    check_available();
    if (const auto it = hash_index_.find(content_hash); it != hash_index_.end()) return it->second;
    return std::nullopt;
}

std::optional<std::string> MetadataStore::doc_id_for_logical_key(const std::string& key) const {
    std::shared_lock lock(mu_);
    check_available();
    if (const auto it = logical_index_.find(key); it != logical_index_.end()) return it->second;
    return std::nullopt;
}

void MetadataStore::insert(const corpus::DocumentRecord& doc, Epoch e) {
    std::unique_lock lock(mu_);
    check_available();
    if (records_.count(doc.doc_id) > 0) {
        throw Error(ErrorCode::InvalidArgument, "document " + doc.doc_id + " already stored");
    }
    records_[doc.doc_id].push_back({doc, e, std::nullopt});
    hash_index_[doc.content_hash] = doc.doc_id;
    logical_index_[corpus::logical_key(doc)] = doc.doc_id;
}

void MetadataStore::revise(const corpus::DocumentRecord& doc, Epoch e) {
    std::unique_lock lock(mu_);
    check_available();
    auto it = records_.find(doc.doc_id);
    if (it == records_.end()) throw Error(ErrorCode::UnknownDocument, doc.doc_id);
    for (auto& v : it->second) {
        if (!v.until) {
            hash_index_.erase(v.value.content_hash);
            v.until = e;
        }
    }
    // Drop versions that never became visible (revised twice in one batch).
    it->second.erase(std::remove_if(it->second.begin(), it->second.end(),
                                    [](const auto& v) { return v.until && *v.until <= v.from; }),
                     it->second.end());
    it->second.push_back({doc, e, std::nullopt});
    hash_index_[doc.content_hash] = doc.doc_id;
    logical_index_[corpus::logical_key(doc)] = doc.doc_id;
}

std::vector<corpus::DocumentRecord> MetadataStore::documents(std::optional<Epoch> at) const {
    std::shared_lock lock(mu_);
    const Epoch e = resolve(at);
    std::vector<corpus::DocumentRecord> out;
    for (const auto& [id, versions] : records_) {
        for (const auto& v : versions) {
            if (v.visible(e)) {
                out.push_back(v.value);
                break;
            }
        }
    }
    return out;
}

std::size_t MetadataStore::size(std::optional<Epoch> at) const {
    std::shared_lock lock(mu_);
    const Epoch e = resolve(at);
    std::size_t n = 0;
    for (const auto& [id, versions] : records_) {
        n += std::any_of(versions.begin(), versions.end(), [e](const auto& v) { return v.visible(e); });
    }
    return n;
}

void MetadataStore::put_chunks(const std::string& doc_id, const std::vector<corpus::Chunk>& chunks,
                               Epoch e) {
    std::unique_lock lock(mu_);
    check_available();
    auto& ids = doc_chunks_[doc_id];
    for (const auto& cid : ids) {
        for (auto& v : chunks_[cid]) {
            if (!v.until) v.until = e;
        }
    }
    for (const auto& c : chunks) {
        auto& versions = chunks_[c.chunk_id];
        versions.erase(std::remove_if(versions.begin(), versions.end(),
                                      [](const auto& v) { return v.until && *v.until <= v.from; }),
                       versions.end());
        versions.push_back({c, e, std::nullopt});
        if (std::find(ids.begin(), ids.end(), c.chunk_id) == ids.end()) ids.push_back(c.chunk_id);
        for (const auto& term : text::content_term_set(c.text)) postings_[term].insert(c.chunk_id);
    }
}

std::vector<corpus::Chunk> MetadataStore::chunks(const std::string& doc_id,
                                                 std::optional<Epoch> at) const {
    std::shared_lock lock(mu_);
    const Epoch e = resolve(at);
    std::vector<corpus::Chunk> out;
    const auto it = doc_chunks_.find(doc_id);
    if (it == doc_chunks_.end()) return out;
    for (const auto& cid : it->second) {
        for (const auto& v : chunks_.at(cid)) {
            if (v.visible(e)) out.push_back(v.value);
        }
    }
    std::sort(out.begin(), out.end(),
              [](const auto& a, const auto& b) { return a.ordinal < b.ordinal; });
    return out;
}

std::optional<corpus::Chunk> MetadataStore::chunk(const std::string& chunk_id,
                                                  std::optional<Epoch> at) const {
    std::shared_lock lock(mu_);
    const Epoch e = resolve(at);
    const auto it = chunks_.find(chunk_id);
    if (it == chunks_.end()) return std::nullopt;
    for (const auto& v : it->second) {
        if (v.visible(e)) return v.value;
    }
    return std::nullopt;
}

std::size_t MetadataStore::chunk_count(std::optional<Epoch> at) const {
    std::shared_lock lock(mu_);
    const Epoch e = resolve(at);
    std::size_t n = 0;
    for (const auto& [id, versions] : chunks_) {
        n += std::any_of(versions.begin(), versions.end(), [e](const auto& v) { return v.visible(e); });
    }
    return n;
}

std::vector<std::pair<std::string, std::size_t>> MetadataStore::keyword_search(
    const std::set<std::string>& terms, std::optional<Epoch> at) const {
    std::shared_lock lock(mu_);
    const Epoch e = resolve(at);
    std::map<std::string, std::size_t> hits;
    for (const auto& term : terms) {
        const auto it = postings_.find(term);
        if (it == postings_.end()) continue;
        for (const auto& cid : it->second) {
            const auto& versions = chunks_.at(cid);
            const auto live = std::find_if(versions.begin(), versions.end(),
                                           [e](const auto& v) { return v.visible(e); });
            // Postings are never pruned, so re-check against the visible text.
            if (live != versions.end() && text::content_term_set(live->value.text).count(term) > 0) {
                ++hits[cid];
            }
        }
    }
    std::vector<std::pair<std::string, std::size_t>> out(hits.begin(), hits.end());
    std::stable_sort(out.begin(), out.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    return out;
}

std::optional<AnnotationSet> MetadataStore::upsert_annotations(const std::string& doc_id,
                                                               AnnotationSet annotations,
                                                               const std::string& actor) {
    annotations.sync_study_design();
    validate(annotations);
    std::unique_lock lock(mu_);
    check_available();
    if (records_.count(doc_id) == 0) throw Error(ErrorCode::UnknownDocument, doc_id);
    std::optional<AnnotationSet> previous;
    if (const auto it = annotations_.find(doc_id); it != annotations_.end()) previous = it->second;
    annotations_[doc_id] = annotations;
    history_[doc_id].push_back({utc_timestamp(), actor, previous, annotations});
    return previous;
}

std::optional<AnnotationSet> MetadataStore::annotations(const std::string& doc_id) const {
    std::shared_lock lock(mu_);
    check_available();
    if (const auto it = annotations_.find(doc_id); it != annotations_.end()) return it->second;
    return std::nullopt;
}

std::vector<AnnotationHistoryEntry> MetadataStore::annotation_history(const std::string& doc_id) const {
    std::shared_lock lock(mu_);
    check_available();
    if (const auto it = history_.find(doc_id); it != history_.end()) return it->second;
    return {};
}

void MetadataStore::append_provenance(const corpus::ProvenanceEntry& entry) {
    std::unique_lock lock(mu_);
    check_available();
    provenance_.push_back(entry);
}

std::vector<corpus::ProvenanceEntry> MetadataStore::provenance() const {
    std::shared_lock lock(mu_);
    return provenance_;
}

MetadataView MetadataStore::view_of(const corpus::DocumentRecord& doc,
                                    const std::optional<AnnotationSet>& annotations) {
    MetadataView v;
    v["doc_id"] = doc.doc_id;
    v["title"] = doc.title;
    v["abstract"] = doc.abstract ? FieldValue{*doc.abstract} : FieldValue{};
    v["full_text"] = doc.full_text ? FieldValue{*doc.full_text} : FieldValue{};
    v["authors"] = TextList(doc.authors);
    v["venue"] = doc.venue;
    v["year"] = doc.year ? FieldValue{static_cast<std::int64_t>(*doc.year)} : FieldValue{};
    v["source"] = doc.source;
    v["version"] = static_cast<std::int64_t>(doc.version);
    for (const auto d : kAllDimensions) v[picos_field(d)] = FieldValue{};
    v["study_design_binary"] = FieldValue{};
    v["topic_id"] = FieldValue{};
    v["include_decision"] = FieldValue{};
    if (annotations) {
        for (const auto& [dim, entry] : annotations->picos) v[picos_field(dim)] = entry.label;
        if (annotations->study_design_binary) v["study_design_binary"] = *annotations->study_design_binary;
        if (annotations->topic_id) v["topic_id"] = static_cast<std::int64_t>(*annotations->topic_id);
        if (annotations->include_decision) {
            v["include_decision"] = std::string(to_string(*annotations->include_decision));
        }
    }
    return v;
}

MetadataView MetadataStore::view(const std::string& doc_id, std::optional<Epoch> at) const {
    std::shared_lock lock(mu_);
    const Epoch e = resolve(at);
    const auto* rec = find_visible(doc_id, e);
    if (rec == nullptr) throw Error(ErrorCode::UnknownDocument, doc_id);
    std::optional<AnnotationSet> ann;
    if (const auto it = annotations_.find(doc_id); it != annotations_.end()) ann = it->second;
    return view_of(*rec, ann);
}

std::string MetadataStore::content_digest() const {
    std::shared_lock lock(mu_);
    std::ostringstream os;
    os << epoch_ << '|' << min_epoch_ << '\n';
    for (const auto& [id, versions] : records_) {
        for (const auto& v : versions) {
            os << corpus::to_json(v.value).dump() << v.from << ':' << (v.until ? *v.until : 0) << '\n';
        }
    }
    for (const auto& [id, versions] : chunks_) {
        for (const auto& v : versions) os << corpus::to_json(v.value).dump() << v.from << '\n';
    }
    for (const auto& [id, a] : annotations_) os << id << to_json(a).dump() << '\n';
    for (const auto& [id, h] : history_) os << id << h.size() << '\n';
    os << provenance_.size();
    return sha256_hex(os.str());
}

// ---------------------------------------------------------------------------
// VectorIndex
// ---------------------------------------------------------------------------

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    const std::size_t n = std::min(a.size(), b.size());
    for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

double l2_norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

Embedding normalized(Embedding v) {
    const double n = l2_norm(v);
    if (n > 0.0) {
        for (auto& x : v) x /= n;
    }
    return v;
}

Epoch VectorIndex::latest() const { return max_epoch_; }

void VectorIndex::upsert(VectorEntry entry, Epoch e) {
    if (entry.embedding.size() != dimension_) {
        throw Error(ErrorCode::DimensionMismatch, "embedding has dimension " +
                                                      std::to_string(entry.embedding.size()) +
                                                      ", index expects " + std::to_string(dimension_));
    }
    if (std::abs(l2_norm(entry.embedding) - 1.0) > 1e-6) {
        throw Error(ErrorCode::InvalidArgument, "embedding for " + entry.chunk_id + " is not unit norm");
    }
    std::unique_lock lock(mu_);
    auto& rows = rows_[entry.chunk_id];
    for (auto& r : rows) {
        if (!r.until) r.until = e;
    }
    rows.erase(std::remove_if(rows.begin(), rows.end(),
                              [](const Row& r) { return r.until && *r.until <= r.from; }),
               rows.end());
    rows.push_back({std::move(entry), e, std::nullopt});
    max_epoch_ = std::max(max_epoch_, e);
}

void VectorIndex::retire_document(const std::string& doc_id, Epoch e) {
    std::unique_lock lock(mu_);
    for (auto& [cid, rows] : rows_) {
        for (auto& r : rows) {
            if (!r.until && r.entry.doc_id == doc_id) r.until = e;
        }
    }
}

void VectorIndex::refresh_metadata(const std::string& doc_id, const MetadataView& metadata) {
    std::unique_lock lock(mu_);
    for (auto& [cid, rows] : rows_) {
        for (auto& r : rows) {
            if (!r.until && r.entry.doc_id == doc_id) r.entry.metadata = metadata;
        }
    }
}

std::vector<ScoredChunk> VectorIndex::search(std::span<const double> query,
                                             const std::vector<Predicate>& filter, std::size_t k,
                                             std::optional<Epoch> at) const {
    if (query.size() != dimension_) {
        throw Error(ErrorCode::DimensionMismatch, "query has dimension " + std::to_string(query.size()) +
                                                      ", index expects " + std::to_string(dimension_));
    }
    if (k == 0) throw Error(ErrorCode::InvalidArgument, "k must be >= 1");
    std::shared_lock lock(mu_);
    std::vector<ScoredChunk> scored;
    for (const auto& [cid, rows] : rows_) {
        for (const auto& r : rows) {
            const bool live = at ? r.visible(*at) : !r.until;
            if (!live) continue;
            if (!matches_all(filter, r.entry.metadata)) continue;
            scored.push_back({cid, dot(query, r.entry.embedding)});
            break;
        }
    }
    auto better = [](const ScoredChunk& a, const ScoredChunk& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.chunk_id < b.chunk_id;
    };
    if (scored.size() > k) {
        std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(k), scored.end(), better);
        scored.resize(k);
    } else {
        std::sort(scored.begin(), scored.end(), better);
    }
    return scored;
}

std::optional<VectorEntry> VectorIndex::get(const std::string& chunk_id, std::optional<Epoch> at) const {
    std::shared_lock lock(mu_);
    const auto it = rows_.find(chunk_id);
    if (it == rows_.end()) return std::nullopt;
    for (const auto& r : it->second) {
        if (at ? r.visible(*at) : !r.until) return r.entry;
    }
    return std::nullopt;
}

std::vector<VectorEntry> VectorIndex::entries(std::optional<Epoch> at) const {
    std::shared_lock lock(mu_);
    std::vector<VectorEntry> out;
    for (const auto& [cid, rows] : rows_) {
        for (const auto& r : rows) {
            if (at ? r.visible(*at) : !r.until) {
                out.push_back(r.entry);
                break;
            }
        }
    }
    return out;
}

std::size_t VectorIndex::size(std::optional<Epoch> at) const { return entries(at).size(); }

// ---------------------------------------------------------------------------
// GraphStore
// ---------------------------------------------------------------------------

std::string_view to_string(NodeLabel l) noexcept {
    switch (l) {
        case NodeLabel::Paper: return "Paper";
        case NodeLabel::Chunk: return "Chunk";
        case NodeLabel::Author: return "Author";
        case NodeLabel::Topic: return "Topic";
        case NodeLabel::Intervention: return "Intervention";
        case NodeLabel::Outcome: return "Outcome";
        case NodeLabel::Descriptor: return "Descriptor";
    }
    return "Paper";
}

std::optional<NodeLabel> parse_node_label(std::string_view s) {
    for (const auto l : {NodeLabel::Paper, NodeLabel::Chunk, NodeLabel::Author, NodeLabel::Topic,
                         NodeLabel::Intervention, NodeLabel::Outcome, NodeLabel::Descriptor}) {
        if (to_string(l) == s) return l;
    }
    return std::nullopt;
}

AddCounts GraphStore::add(const std::vector<GraphNode>& nodes, const std::vector<GraphEdge>& edges) {
    std::unique_lock lock(mu_);
    std::set<std::string> batch_ids;
    for (const auto& n : nodes) batch_ids.insert(n.node_id);
    for (const auto& e : edges) {
        for (const auto* end : {&e.src, &e.dst}) {
            if (nodes_.count(*end) == 0 && batch_ids.count(*end) == 0) {
                throw Error(ErrorCode::DanglingEdge,
                            e.src + " -[" + e.edge_type + "]-> " + e.dst + " references missing " + *end);
            }
        }
    }
    AddCounts counts;
    for (const auto& n : nodes) {
        auto [it, inserted] = nodes_.try_emplace(n.node_id, n);
        if (inserted) {
            ++counts.nodes;
        } else {
            it->second = n;
        }
    }
    for (const auto& e : edges) {
        if (edges_.insert(e).second) {
            out_[e.src].insert(e);
            in_[e.dst].insert(e);
            ++counts.edges;
        }
    }
    return counts;
}

std::size_t GraphStore::remove_edges(const std::string& src, const std::string& edge_type) {
    std::unique_lock lock(mu_);
    std::vector<GraphEdge> doomed;
    if (const auto it = out_.find(src); it != out_.end()) {
        for (const auto& e : it->second) {
            if (e.edge_type == edge_type) doomed.push_back(e);
        }
    }
    for (const auto& e : doomed) {
        edges_.erase(e);
        out_[e.src].erase(e);
        in_[e.dst].erase(e);
    }
    return doomed.size();
}

Subgraph GraphStore::neighborhood(const std::vector<std::string>& seed_ids, int hops) const {
    if (hops != 1 && hops != 2) throw Error(ErrorCode::InvalidArgument, "hops must be 1 or 2");
    std::shared_lock lock(mu_);
    Subgraph g;
    g.hops = hops;
    std::deque<std::string> frontier;
    for (const auto& s : seed_ids) {
        if (nodes_.count(s) == 0) throw Error(ErrorCode::UnknownNode, s);
        if (g.distance.emplace(s, 0).second) {
            g.seed_ids.push_back(s);
            frontier.push_back(s);
        }
    }
    while (!frontier.empty()) {
        const std::string cur = frontier.front();
        frontier.pop_front();
        const int d = g.distance.at(cur);
        if (d == hops) continue;
        auto visit = [&](const std::string& next) {
            if (g.distance.emplace(next, d + 1).second) frontier.push_back(next);
        };
        if (const auto it = out_.find(cur); it != out_.end()) {
            for (const auto& e : it->second) visit(e.dst);
        }
        if (const auto it = in_.find(cur); it != in_.end()) {
            for (const auto& e : it->second) visit(e.src);
        }
    }
    for (const auto& [id, dist] : g.distance) {
        g.nodes.push_back(nodes_.at(id));
        if (const auto it = out_.find(id); it != out_.end()) {
            for (const auto& e : it->second) {
                if (g.distance.count(e.dst) > 0) g.edges.push_back(e);
            }
        }
    }
    std::sort(g.edges.begin(), g.edges.end());
    return g;
}

bool GraphStore::has_node(const std::string& id) const {
    std::shared_lock lock(mu_);
    return nodes_.count(id) > 0;
}

std::optional<GraphNode> GraphStore::node(const std::string& id) const {
    std::shared_lock lock(mu_);
    if (const auto it = nodes_.find(id); it != nodes_.end()) return it->second;
    return std::nullopt;
}

std::vector<GraphNode> GraphStore::nodes() const {
    std::shared_lock lock(mu_);
    std::vector<GraphNode> out;
    for (const auto& [id, n] : nodes_) out.push_back(n);
    return out;
}

std::vector<GraphEdge> GraphStore::edges() const {
    std::shared_lock lock(mu_);
    return {edges_.begin(), edges_.end()};
}

std::size_t GraphStore::node_count() const {
    std::shared_lock lock(mu_);
    return nodes_.size();
}

std::size_t GraphStore::edge_count() const {
    std::shared_lock lock(mu_);
    return edges_.size();
}

Json to_json(const GraphNode& n) {
    return Json{{"node_id", n.node_id}, {"label", std::string(to_string(n.label))}, {"properties", n.properties}};
}

GraphNode node_from_json(const Json& j) {
    GraphNode n;
    n.node_id = j.at("node_id").get<std::string>();
    const auto label = parse_node_label(j.at("label").get<std::string>());
    if (!label) throw Error(ErrorCode::InvalidArgument, "unknown node label " + j.at("label").dump());
    n.label = *label;
    n.properties = j.value("properties", Json::object());
    return n;
}

Json to_json(const GraphEdge& e) {
    return Json{{"src", e.src}, {"dst", e.dst}, {"edge_type", e.edge_type}, {"directed", true}};
}

GraphEdge edge_from_json(const Json& j) {
    return {j.at("src").get<std::string>(), j.at("dst").get<std::string>(), j.at("edge_type").get<std::string>()};
}

Json to_json(const Subgraph& g) {
    Json nodes = Json::array();
    for (const auto& n : g.nodes) {
        auto jn = to_json(n);
        jn["distance"] = g.distance.at(n.node_id);
        nodes.push_back(std::move(jn));
    }
    Json edges = Json::array();
    for (const auto& e : g.edges) edges.push_back(to_json(e));
    return Json{{"nodes", nodes}, {"edges", edges}, {"seed_ids", g.seed_ids}, {"hops", g.hops}};
}

// ---------------------------------------------------------------------------
// Schema + aggregates
// ---------------------------------------------------------------------------

const std::vector<FieldSchema>& document_fields() {
    static const std::vector<FieldSchema> kFields{
        {"doc_id", FieldType::Text},          {"title", FieldType::Text},
        {"abstract", FieldType::Text},        {"full_text", FieldType::Text},
        {"authors", FieldType::TextList},     {"venue", FieldType::Text},
        {"year", FieldType::Integer},         {"source", FieldType::Text},
        {"version", FieldType::Integer},      {"picos_p", FieldType::Ternary},
        {"picos_i", FieldType::Ternary},      {"picos_c", FieldType::Ternary},
        {"picos_o", FieldType::Ternary},      {"picos_s", FieldType::Ternary},
        {"study_design_binary", FieldType::Boolean}, {"topic_id", FieldType::Integer},
        {"include_decision", FieldType::Text},
    };
    return kFields;
}

const std::vector<FieldSchema>& vector_metadata_fields() {
    static const std::vector<FieldSchema> kFields{
        {"doc_id", FieldType::Text},       {"year", FieldType::Integer},
        {"venue", FieldType::Text},        {"authors", FieldType::TextList},
        {"picos_p", FieldType::Ternary},   {"picos_i", FieldType::Ternary},
        {"picos_c", FieldType::Ternary},   {"picos_o", FieldType::Ternary},
        {"picos_s", FieldType::Ternary},   {"study_design_binary", FieldType::Boolean},
        {"topic_id", FieldType::Integer},  {"include_decision", FieldType::Text},
    };
    return kFields;
}

MetadataView vector_snapshot(const MetadataView& full) {
    MetadataView out;
    for (const auto& f : vector_metadata_fields()) {
        if (const auto it = full.find(f.name); it != full.end()) out[f.name] = it->second;
    }
    return out;
}

Json to_json(const AggregateResult& r) {
    Json rows = Json::array();
    for (const auto& row : r.rows) {
        Json jr{{"numerator", row.numerator}, {"denominator", row.denominator}};
        jr["group"] = to_json(row.group);
        jr["ratio"] = row.ratio ? Json(*row.ratio) : Json("no data");
        rows.push_back(std::move(jr));
    }
    std::string metric = r.spec.metric == Metric::Count            ? "count"
                         : r.spec.metric == Metric::ComplianceRate ? "compliance_rate"
                                                                   : "joint_compliance";
    Json j{{"metric", metric}, {"rows", rows}};
    j["dimension"] = r.spec.dimension ? Json(to_string(*r.spec.dimension)) : Json(nullptr);
    j["group_by"] = r.spec.group_by ? Json(*r.spec.group_by) : Json(nullptr);
    return j;
}

DataPlane::DataPlane(std::size_t embedding_dimension)
    : vectors_(std::make_unique<VectorIndex>(embedding_dimension)) {}

std::optional<AnnotationSet> DataPlane::upsert_annotations(const std::string& doc_id,
                                                           AnnotationSet annotations,
                                                           const std::string& actor) {
    auto previous = metadata_.upsert_annotations(doc_id, std::move(annotations), actor);
    vectors_->refresh_metadata(doc_id, vector_snapshot(metadata_.view(doc_id)));
    return previous;
}

AggregateResult DataPlane::aggregate(const AggregateSpec& spec, std::optional<Epoch> at) const {
    if (spec.metric == Metric::ComplianceRate && !spec.dimension) {
        throw Error(ErrorCode::InvalidArgument, "compliance rate needs a dimension");
    }
    if (spec.group_by) {
        const auto& fields = document_fields();
        const auto it = std::find_if(fields.begin(), fields.end(),
                                     [&](const FieldSchema& f) { return f.name == *spec.group_by; });
        if (it == fields.end()) throw Error(ErrorCode::UnknownField, *spec.group_by);
        if (it->type == FieldType::TextList) {
            throw Error(ErrorCode::InvalidArgument, "cannot group by list field " + *spec.group_by);
        }
    }

    struct Tally {
        std::size_t hits = 0;
        std::size_t base = 0;
    };
    std::map<FieldValue, Tally> groups;
    const auto docs = metadata_.documents(at);
    for (const auto& doc : docs) {
        const auto ann = metadata_.annotations(doc.doc_id);
        FieldValue key;
        if (spec.group_by) key = MetadataStore::view_of(doc, ann).at(*spec.group_by);
        auto& t = groups[key];
        if (spec.metric == Metric::Count) {
            ++t.hits;
            continue;
        }
        if (!ann || ann->picos.empty()) continue;
        ++t.base;
        if (spec.metric == Metric::ComplianceRate) {
            const auto it = ann->picos.find(*spec.dimension);
            if (it != ann->picos.end() && it->second.label == TernaryLabel::Yes) ++t.hits;
        } else {
            const bool all_yes = std::all_of(kAllDimensions.begin(), kAllDimensions.end(), [&](Dimension d) {
                const auto it = ann->picos.find(d);
                return it != ann->picos.end() && it->second.label == TernaryLabel::Yes;
            });
            if (all_yes) ++t.hits;
        }
    }

    AggregateResult result;
    result.spec = spec;
    if (groups.empty() && !spec.group_by) groups[FieldValue{}] = {};
    for (const auto& [key, t] : groups) {
        AggregateRow row;
        row.group = key;
        row.numerator = t.hits;
        row.denominator = spec.metric == Metric::Count ? docs.size() : t.base;
        if (row.denominator > 0) {
            row.ratio = static_cast<double>(row.numerator) / static_cast<double>(row.denominator);
        }
        result.rows.push_back(std::move(row));
    }
    return result;
}

void DataPlane::export_jsonl(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    auto open = [&](const char* name) {
        std::ofstream out(dir / name, std::ios::trunc);
        if (!out) throw Error(ErrorCode::StoreUnavailable, "cannot write " + (dir / name).string());
        return out;
    };
    auto records = open("records.jsonl");
    auto chunks = open("chunks.jsonl");
    auto annotations = open("annotations.jsonl");
    for (const auto& doc : metadata_.documents()) {
        records << corpus::to_json(doc).dump() << '\n';
        for (const auto& c : metadata_.chunks(doc.doc_id)) chunks << corpus::to_json(c).dump() << '\n';
        if (const auto a = metadata_.annotations(doc.doc_id)) {
            annotations << Json{{"doc_id", doc.doc_id}, {"annotations", to_json(*a)}}.dump() << '\n';
        }
    }
    auto vectors = open("vectors.jsonl");
    for (const auto& v : vectors_->entries()) {
        Json meta = Json::object();
        for (const auto& [k, val] : v.metadata) meta[k] = to_json(val);
        vectors << Json{{"chunk_id", v.chunk_id}, {"doc_id", v.doc_id}, {"embedding", v.embedding},
                        {"metadata", meta}}
                       .dump()
                << '\n';
    }
    auto nodes = open("nodes.jsonl");
    for (const auto& n : graph_.nodes()) nodes << to_json(n).dump() << '\n';
    auto edges = open("edges.jsonl");
    for (const auto& e : graph_.edges()) edges << to_json(e).dump() << '\n';
    auto provenance = open("provenance.jsonl");
    for (const auto& p : metadata_.provenance()) {
        provenance << Json{{"doc_id", p.doc_id}, {"action", std::string(corpus::to_string(p.action))},
                           {"timestamp", p.timestamp}, {"version", p.version}}
                          .dump()
                   << '\n';
    }
}

void DataPlane::import_jsonl(const std::filesystem::path& dir) {
    if (metadata_.size() != 0) throw Error(ErrorCode::InvalidArgument, "import requires an empty data plane");
    const Epoch e = metadata_.begin_batch();
    std::map<std::string, std::vector<corpus::Chunk>> by_doc;
    for (const auto& line : read_lines(dir / "records.jsonl")) {
        metadata_.insert(corpus::record_from_json(Json::parse(line)), e);
    }
    for (const auto& line : read_lines(dir / "chunks.jsonl")) {
        auto c = corpus::chunk_from_json(Json::parse(line));
        by_doc[c.doc_id].push_back(std::move(c));
    }
    for (const auto& [doc_id, cs] : by_doc) metadata_.put_chunks(doc_id, cs, e);
    for (const auto& line : read_lines(dir / "provenance.jsonl")) {
        const auto j = Json::parse(line);
        corpus::ProvenanceEntry p;
        p.doc_id = j.at("doc_id").get<std::string>();
        const auto action = j.at("action").get<std::string>();
        p.action = action == "duplicate" ? corpus::IngestAction::Duplicate
                   : action == "revised" ? corpus::IngestAction::Revised
                                         : corpus::IngestAction::Inserted;
        p.timestamp = j.value("timestamp", "");
        p.version = j.value("version", 1);
        metadata_.append_provenance(p);
    }
    for (const auto& line : read_lines(dir / "vectors.jsonl")) {
        const auto j = Json::parse(line);
        VectorEntry v;
        v.chunk_id = j.at("chunk_id").get<std::string>();
        v.doc_id = j.at("doc_id").get<std::string>();
        v.embedding = j.at("embedding").get<Embedding>();
        for (const auto& [k, val] : j.at("metadata").items()) v.metadata[k] = field_value_from_json(val);
        vectors_->upsert(std::move(v), e);
    }
    metadata_.commit_batch(e);
    for (const auto& line : read_lines(dir / "annotations.jsonl")) {
        const auto j = Json::parse(line);
        upsert_annotations(j.at("doc_id").get<std::string>(), annotations_from_json(j.at("annotations")),
                           "import");
    }
    std::vector<GraphNode> nodes;
    std::vector<GraphEdge> edges;
    for (const auto& line : read_lines(dir / "nodes.jsonl")) nodes.push_back(node_from_json(Json::parse(line)));
    for (const auto& line : read_lines(dir / "edges.jsonl")) edges.push_back(edge_from_json(Json::parse(line)));
    graph_.add(nodes, edges);
}

}  // namespace evsynth::stores
