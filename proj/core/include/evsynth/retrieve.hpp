#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "evsynth/provider.hpp"
#include "evsynth/stores.hpp"
#include "evsynth/text.hpp"
#include "evsynth/types.hpp"

namespace evsynth::retrieve {

using stores::Embedding;
using stores::Epoch;

struct StructuredQuery {
    std::string semantic_text;
    std::vector<Predicate> predicates;
    std::size_t k = 8;
};

Json to_json(const StructuredQuery& q);

/// Deterministic rule grammar. Recognizes randomized-trial mentions, year
/// bounds (after, since, before, in, between .. and, from .. to, at least,
/// at most), `venue X`, `by [author] X` and quoted literals. Everything it
/// consumes is removed from the semantic text, as are filler words.
StructuredQuery grammar_self_query(const std::string& natural_query, const std::vector<FieldSchema>& schema);

/// Grammar output merged with provider extraction when the provider returns
/// a JSON object {semantic_text, predicates}. The grammar wins on field
/// conflicts; predicates failing schema validation are discarded.
StructuredQuery parse_self_query(const std::string& natural_query, const std::vector<FieldSchema>& schema,
                                 provider::Provider* provider = nullptr);

/// Whether `p` names a schema field with a compatible comparator and literal.
/// Ternary string literals are normalized in place.
bool validate_predicate(Predicate& p, const std::vector<FieldSchema>& schema);

// ---------------------------------------------------------------------------
// Evidence
// ---------------------------------------------------------------------------

enum class Pathway : std::uint8_t { Vector, Graph, Keyword };

std::string_view to_string(Pathway p) noexcept;

struct DocDescriptor {
    std::string doc_id;
    std::string title;
    std::vector<std::string> authors;
    std::string venue;
    std::optional<int> year;
    std::map<Dimension, TernaryLabel> picos;
    std::optional<bool> study_design_binary;
    std::optional<IncludeDecision> include_decision;
};

struct EvidenceItem {
    std::string chunk_id;
    DocDescriptor descriptor;
    double score = 0.0;
    std::string text;
    std::vector<Pathway> pathways;
    /// Offsets into the source document text that `text` was taken from.
    std::vector<text::Span> original_char_spans;
    bool compression_skipped = false;
};

struct DroppedPredicate {
    Predicate predicate;
    std::string reason;
};

struct EvidenceBundle {
    std::vector<EvidenceItem> items;
    std::optional<std::string> graph_context;
    std::optional<stores::Subgraph> subgraph;
    std::vector<Predicate> applied_predicates;
    std::vector<DroppedPredicate> dropped_predicates;
    std::size_t candidate_count = 0;
    std::size_t dropped_irrelevant = 0;
    std::size_t dropped_by_compression = 0;
    Json trace = Json::object();

    bool contains(const std::string& chunk_id) const;
};

Json to_json(const DocDescriptor& d);
Json to_json(const EvidenceItem& item);
Json to_json(const EvidenceBundle& bundle);

// ---------------------------------------------------------------------------
// Building blocks
// ---------------------------------------------------------------------------

struct MmrCandidate {
    std::string id;
    Embedding vector;
    double relevance = 0.0;
};

/// Greedy MMR: each step takes the candidate maximizing
/// lambda * cos(q, d) - (1 - lambda) * max_{s in selected} cos(d, s),
/// ties by ascending id. Returns min(k, n) ids in selection order.
/// Throws EmptyCandidates when k > 0 and there are no candidates.
std::vector<std::string> mmr_select(const std::vector<MmrCandidate>& candidates, const Embedding& query_vector,
                                    double lambda, std::size_t k, Json* trace = nullptr);

struct CompressResult {
    std::vector<EvidenceItem> items;
    std::size_t dropped = 0;
    /// Stage one failed and items were passed through unchanged.
    bool extraction_fallback = false;
};

/// Stage one: provider extraction of query-relevant sentences. Stage two:
/// drop items whose compressed text embeds below `theta` cosine to the query.
CompressResult compress(std::vector<EvidenceItem> items, const std::string& query, provider::Provider& provider,
                        double theta, const stores::MetadataStore* metadata = nullptr,
                        std::optional<Epoch> at = std::nullopt);

/// Line-oriented rendering of a neighbourhood: seeds, inbound relations,
/// chunk texts, outbound relations (towards Intervention, Outcome and
/// Descriptor nodes). Edges render as `src -[TYPE]-> dst`.
std::string serialize_subgraph(const stores::Subgraph& g, const stores::MetadataStore& metadata,
                               std::optional<Epoch> at = std::nullopt);

struct RetrieveConfig {
    double lambda = 0.7;
    double theta = 0.35;
    std::size_t k = 8;
    /// Vector candidates fetched before MMR, as a multiple of k.
    std::size_t fetch_multiplier = 4;
    int hops = 1;
    bool use_graph = true;
    bool compress = true;
    bool grade = true;
};

/// Read-only view over the stores, optionally pinned to an epoch.
struct RetrievalContext {
    const stores::DataPlane& plane;
    provider::Provider& provider;
    std::optional<Epoch> at;
};

DocDescriptor describe(const stores::MetadataStore& metadata, const std::string& doc_id,
                       std::optional<Epoch> at = std::nullopt);

/// Vector candidates united with keyword matches, expanded to their graph
/// neighbourhood. Chunks absent from the graph are still returned as items.
EvidenceBundle graph_retrieve(const RetrievalContext& ctx, const std::string& query, int hops, std::size_t k,
                              const std::vector<Predicate>& filter = {});

/// Vector pathway (filtered search, MMR, compression) fused with the graph
/// pathway, then relevance-graded.
EvidenceBundle hybrid_retrieve(const RetrievalContext& ctx, const StructuredQuery& sq, const RetrieveConfig& config = {});

/// Vector pathway only, without graph expansion.
EvidenceBundle vector_retrieve(const RetrievalContext& ctx, const StructuredQuery& sq, const RetrieveConfig& config = {});

}  // namespace evsynth::retrieve
