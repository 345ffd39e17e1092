#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <shared_mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "evsynth/corpus.hpp"
#include "evsynth/types.hpp"

namespace evsynth::stores {

/// Monotonically increasing ingest counter. Epoch 0 is the empty store.
using Epoch = std::uint64_t;
using Embedding = std::vector<double>;

// ---------------------------------------------------------------------------
// Annotations
// ---------------------------------------------------------------------------

struct PicosEntry {
    TernaryLabel label = TernaryLabel::Maybe;
    double confidence = 0.0;

    bool operator==(const PicosEntry&) const = default;
};

struct AnnotationSet {
    std::map<Dimension, PicosEntry> picos;
    std::optional<bool> study_design_binary;
    std::optional<int> topic_id;  // -1 marks a topic outlier
    std::optional<IncludeDecision> include_decision;

    /// Recomputes study_design_binary from the S label (yes/maybe -> true).
    void sync_study_design();
    bool operator==(const AnnotationSet&) const = default;
};

/// Throws InvalidArgument when a confidence lies outside [0, 1] or the study
/// design flag disagrees with the S label.
void validate(const AnnotationSet& a);

struct AnnotationHistoryEntry {
    std::string timestamp;
    std::string actor;  // "model", or a reviewer name for expert overrides
    std::optional<AnnotationSet> before;
    AnnotationSet after;
};

Json to_json(const AnnotationSet& a);
AnnotationSet annotations_from_json(const Json& j);

// ---------------------------------------------------------------------------
// Metadata store
// ---------------------------------------------------------------------------

/// Record store with first-class annotations, chunk storage, an inverted
/// keyword index over chunk text and an append-only provenance log.
/// Records and chunks are versioned by epoch so readers can pin a snapshot.
class MetadataStore {
public:
    MetadataStore() = default;
    MetadataStore(const MetadataStore&) = delete;
    MetadataStore& operator=(const MetadataStore&) = delete;

    Epoch current_epoch() const;
    /// Opens a write batch; rows written with the returned epoch stay
    /// invisible to readers pinned at earlier epochs.
    Epoch begin_batch();
    void commit_batch(Epoch e);

    std::optional<corpus::DocumentRecord> get(const std::string& doc_id,
                                              std::optional<Epoch> at = std::nullopt) const;
    bool contains(const std::string& doc_id) const;
    std::optional<std::string> doc_id_for_hash(const std::string& content_hash) const;
    std::optional<std::string> doc_id_for_logical_key(const std::string& key) const;

    void insert(const corpus::DocumentRecord& doc, Epoch e);
    /// Supersedes the current version of doc.doc_id.
    void revise(const corpus::DocumentRecord& doc, Epoch e);

    std::vector<corpus::DocumentRecord> documents(std::optional<Epoch> at = std::nullopt) const;
    std::size_t size(std::optional<Epoch> at = std::nullopt) const;

    /// Replaces the chunk set of a document from epoch e onward.
    void put_chunks(const std::string& doc_id, const std::vector<corpus::Chunk>& chunks, Epoch e);
    std::vector<corpus::Chunk> chunks(const std::string& doc_id,
                                      std::optional<Epoch> at = std::nullopt) const;
    std::optional<corpus::Chunk> chunk(const std::string& chunk_id,
                                       std::optional<Epoch> at = std::nullopt) const;
    std::size_t chunk_count(std::optional<Epoch> at = std::nullopt) const;

    /// OR-semantics keyword match over stemmed content terms. Returns
    /// (chunk_id, number of distinct query terms matched), best first.
    std::vector<std::pair<std::string, std::size_t>> keyword_search(
        const std::set<std::string>& terms, std::optional<Epoch> at = std::nullopt) const;

    std::optional<AnnotationSet> upsert_annotations(const std::string& doc_id,
                                                    AnnotationSet annotations,
                                                    const std::string& actor = "model");
    std::optional<AnnotationSet> annotations(const std::string& doc_id) const;
    std::vector<AnnotationHistoryEntry> annotation_history(const std::string& doc_id) const;

    void append_provenance(const corpus::ProvenanceEntry& entry);
    std::vector<corpus::ProvenanceEntry> provenance() const;

    /// Metadata view of a document used for predicate evaluation: record
    /// fields plus annotation fields (picos_p .. picos_s, study_design_binary,
    /// topic_id, include_decision).
    MetadataView view(const std::string& doc_id, std::optional<Epoch> at = std::nullopt) const;
    static MetadataView view_of(const corpus::DocumentRecord& doc,
                                const std::optional<AnnotationSet>& annotations);

    /// Readers pinned before `e` get SnapshotGone afterwards.
    void evict_before(Epoch e);
    /// Throws SnapshotGone for evicted epochs and InvalidArgument for future ones.
    void require_epoch(Epoch e) const;

    /// Digest over every stored row; used to prove read-only access.
    std::string content_digest() const;

    /// Failure injection: while unavailable every call throws StoreUnavailable.
    void set_available(bool available);

private:
    template <typename T>
    struct Versioned {
        T value;
        Epoch from = 0;
        std::optional<Epoch> until;
        bool visible(Epoch e) const { return from <= e && (!until || e < *until); }
    };

    void check_available() const;
    Epoch resolve(std::optional<Epoch> at) const;
    const corpus::DocumentRecord* find_visible(const std::string& doc_id, Epoch e) const;

    mutable std::shared_mutex mu_;
    bool available_ = true;
    Epoch epoch_ = 0;
    Epoch min_epoch_ = 0;
    std::optional<Epoch> open_batch_;
    std::map<std::string, std::vector<Versioned<corpus::DocumentRecord>>> records_;
    std::unordered_map<std::string, std::string> hash_index_;     // current versions only
    std::unordered_map<std::string, std::string> logical_index_;  // logical key -> doc_id
    std::map<std::string, std::vector<Versioned<corpus::Chunk>>> chunks_;
    std::map<std::string, std::vector<std::string>> doc_chunks_;  // doc_id -> chunk_ids ever stored
    std::unordered_map<std::string, std::set<std::string>> postings_;  // term -> chunk_ids
    std::map<std::string, AnnotationSet> annotations_;
    std::map<std::string, std::vector<AnnotationHistoryEntry>> history_;
    std::vector<corpus::ProvenanceEntry> provenance_;
};

// ---------------------------------------------------------------------------
// Vector index
// ---------------------------------------------------------------------------

struct VectorEntry {
    std::string chunk_id;
    std::string doc_id;
    Embedding embedding;
    MetadataView metadata;
};

struct ScoredChunk {
    std::string chunk_id;
    double score = 0.0;

    bool operator==(const ScoredChunk&) const = default;
};

double dot(std::span<const double> a, std::span<const double> b);
double l2_norm(std::span<const double> a);
/// Scales to unit norm; the zero vector is returned unchanged.
Embedding normalized(Embedding v);

/// Exact nearest-neighbour search with conjunctive metadata filters. The
/// virtual interface is the seam for an approximate index.
class VectorIndex {
public:
    explicit VectorIndex(std::size_t dimension = 256) : dimension_(dimension) {}
    virtual ~VectorIndex() = default;

    std::size_t dimension() const noexcept { return dimension_; }

    /// Inserts or supersedes an entry, visible from epoch e.
    /// Throws DimensionMismatch or InvalidArgument (non-unit embedding).
    virtual void upsert(VectorEntry entry, Epoch e);
    /// Closes every live entry of a document at epoch e.
    virtual void retire_document(const std::string& doc_id, Epoch e);
    /// Replaces the metadata snapshot of a document's live entries.
    virtual void refresh_metadata(const std::string& doc_id, const MetadataView& metadata);

    /// Top-k by cosine among entries satisfying every predicate; descending
    /// score, ties by ascending chunk_id.
    virtual std::vector<ScoredChunk> search(std::span<const double> query,
                                            const std::vector<Predicate>& filter, std::size_t k,
                                            std::optional<Epoch> at = std::nullopt) const;

    std::optional<VectorEntry> get(const std::string& chunk_id,
                                   std::optional<Epoch> at = std::nullopt) const;
    std::vector<VectorEntry> entries(std::optional<Epoch> at = std::nullopt) const;
    std::size_t size(std::optional<Epoch> at = std::nullopt) const;

private:
    struct Row {
        VectorEntry entry;
        Epoch from = 0;
        std::optional<Epoch> until;
        bool visible(Epoch e) const { return from <= e && (!until || e < *until); }
    };

    Epoch latest() const;

    std::size_t dimension_;
    mutable std::shared_mutex mu_;
    std::map<std::string, std::vector<Row>> rows_;
    Epoch max_epoch_ = 0;
};

// ---------------------------------------------------------------------------
// Property graph
// ---------------------------------------------------------------------------

enum class NodeLabel : std::uint8_t { Paper, Chunk, Author, Topic, Intervention, Outcome, Descriptor };

std::string_view to_string(NodeLabel l) noexcept;
std::optional<NodeLabel> parse_node_label(std::string_view s);

struct GraphNode {
    std::string node_id;
    NodeLabel label = NodeLabel::Paper;
    Json properties = Json::object();

    bool operator==(const GraphNode&) const = default;
};

/// Always directed.
struct GraphEdge {
    std::string src;
    std::string dst;
    std::string edge_type;

    auto operator<=>(const GraphEdge&) const = default;
};

struct Subgraph {
    std::vector<GraphNode> nodes;  // sorted by node_id
    std::vector<GraphEdge> edges;  // sorted
    std::vector<std::string> seed_ids;
    int hops = 1;
    /// Undirected BFS distance of each node from the nearest seed.
    std::map<std::string, int> distance;

    bool contains(const std::string& node_id) const { return distance.count(node_id) > 0; }
};

struct AddCounts {
    std::size_t nodes = 0;
    std::size_t edges = 0;
};

class GraphStore {
public:
    /// Idempotent on exact duplicates; a re-added node id updates its
    /// properties without counting. Throws DanglingEdge.
    AddCounts add(const std::vector<GraphNode>& nodes, const std::vector<GraphEdge>& edges);
    /// Removes outgoing edges of `src` with the given type; returns count.
    std::size_t remove_edges(const std::string& src, const std::string& edge_type);

    /// Closure over edges in both directions within `hops` (1 or 2) steps,
    /// keeping every stored edge whose endpoints are both inside.
    /// Throws UnknownNode and InvalidArgument (hops outside {1,2}).
    Subgraph neighborhood(const std::vector<std::string>& seed_ids, int hops) const;

    bool has_node(const std::string& id) const;
    std::optional<GraphNode> node(const std::string& id) const;
    std::vector<GraphNode> nodes() const;
    std::vector<GraphEdge> edges() const;
    std::size_t node_count() const;
    std::size_t edge_count() const;

private:
    mutable std::shared_mutex mu_;
    std::map<std::string, GraphNode> nodes_;
    std::set<GraphEdge> edges_;
    std::unordered_map<std::string, std::set<GraphEdge>> out_;
    std::unordered_map<std::string, std::set<GraphEdge>> in_;
};

Json to_json(const GraphNode& n);
GraphNode node_from_json(const Json& j);
Json to_json(const GraphEdge& e);
GraphEdge edge_from_json(const Json& j);
Json to_json(const Subgraph& g);

// ---------------------------------------------------------------------------
// Aggregates over the metadata store
// ---------------------------------------------------------------------------

enum class Metric : std::uint8_t {
    Count,            // documents (optionally grouped)
    ComplianceRate,   // |dimension = yes| / |annotated|
    JointCompliance,  // |all five = yes| / |annotated|
};

struct AggregateSpec {
    Metric metric = Metric::Count;
    std::optional<Dimension> dimension;  // required for ComplianceRate
    std::optional<std::string> group_by;  // any metadata view field, e.g. "year"
};

struct AggregateRow {
    FieldValue group;  // monostate when ungrouped
    std::size_t numerator = 0;
    std::size_t denominator = 0;
    /// Absent when the denominator is zero ("no data").
    std::optional<double> ratio;
};

struct AggregateResult {
    AggregateSpec spec;
    std::vector<AggregateRow> rows;  // sorted by group key
};

Json to_json(const AggregateResult& r);

/// Field names and types visible in metadata views.
const std::vector<FieldSchema>& document_fields();
const std::vector<FieldSchema>& vector_metadata_fields();
/// Restricts a full metadata view to the fields copied into vector entries.
MetadataView vector_snapshot(const MetadataView& full);

// ---------------------------------------------------------------------------
// Tri-store data plane
// ---------------------------------------------------------------------------

class DataPlane {
public:
    explicit DataPlane(std::size_t embedding_dimension = 256);

    MetadataStore& metadata() noexcept { return metadata_; }
    const MetadataStore& metadata() const noexcept { return metadata_; }
    VectorIndex& vectors() noexcept { return *vectors_; }
    const VectorIndex& vectors() const noexcept { return *vectors_; }
    GraphStore& graph() noexcept { return graph_; }
    const GraphStore& graph() const noexcept { return graph_; }

    Epoch epoch() const { return metadata_.current_epoch(); }

    /// Persists annotations (metadata first) and then refreshes the vector
    /// metadata snapshots of the document's chunks. Returns the prior value.
    /// Throws UnknownDocument.
    std::optional<AnnotationSet> upsert_annotations(const std::string& doc_id,
                                                    AnnotationSet annotations,
                                                    const std::string& actor = "model");

    /// Deterministic counts and proportions. Throws UnknownField when group_by
    /// names a field outside the document schema.
    AggregateResult aggregate(const AggregateSpec& spec,
                              std::optional<Epoch> at = std::nullopt) const;

    /// One JSON Lines file per type: records, chunks, annotations, vectors,
    /// nodes, edges, provenance.
    void export_jsonl(const std::filesystem::path& dir) const;
    /// Loads an export into an empty plane as a single batch.
    void import_jsonl(const std::filesystem::path& dir);

private:
    MetadataStore metadata_;
    std::unique_ptr<VectorIndex> vectors_;
    GraphStore graph_;
};

}  // namespace evsynth::stores
