#pragma once

#include <string>
#include <vector>

#include "evsynth/corpus.hpp"
#include "evsynth/provider.hpp"
#include "evsynth/stores.hpp"

namespace evsynth {

/// A line of input that failed normalization.
struct RejectedLine {
    std::size_t line = 0;  // 1-based
    std::string error;
};

struct IndexReport {
    corpus::IngestReport ingest;
    std::size_t chunks_indexed = 0;
    std::vector<RejectedLine> rejected;
};

/// Feeds normalized records through every store: metadata rows and
/// provenance, chunks, chunk embeddings, and Paper/Chunk/Author graph nodes.
///
/// Chunk text comes from the full text, or from the abstract when a record
/// has none. Optional raw keys "descriptors", "interventions" and
/// "outcomes" (string arrays) become typed graph neighbours of the paper.
class Indexer {
public:
    Indexer(stores::DataPlane& plane, provider::Provider& provider, corpus::ChunkPolicy policy = {});

    IndexReport ingest_raw(const std::vector<Json>& raw);
    IndexReport ingest_jsonl(const std::string& path);

    const corpus::ChunkPolicy& policy() const noexcept { return policy_; }

private:
    void index_document(const corpus::DocumentRecord& doc, const Json& extras, stores::Epoch e,
                        std::size_t& chunk_total);

    stores::DataPlane& plane_;
    provider::Provider& provider_;
    corpus::ChunkPolicy policy_;
};

std::string author_node_id(const std::string& canonical_name);

Json to_json(const IndexReport& r);

}  // namespace evsynth
