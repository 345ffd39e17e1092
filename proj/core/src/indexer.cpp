#include "evsynth/indexer.hpp"

#include <algorithm>
#include <fstream>
#include <map>

#include "evsynth/error.hpp"
#include "evsynth/text.hpp"

namespace evsynth {

std::string author_node_id(const std::string& canonical_name) { return "author:" + text::to_lower(canonical_name); }

Indexer::Indexer(stores::DataPlane& plane, provider::Provider& provider, corpus::ChunkPolicy policy)
    : plane_(plane), provider_(provider), policy_(policy) {
    policy_.validate();
    if (provider_.dimension() != plane_.vectors().dimension()) {
        throw Error(ErrorCode::DimensionMismatch, "provider and vector index disagree on dimension");
    }
}

IndexReport Indexer::ingest_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::InvalidArgument, "cannot open " + path);
    std::vector<Json> raw;
    std::vector<std::size_t> line_of;  // file line of each parsed row
    std::vector<RejectedLine> rejected;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (text::trim(line).empty()) continue;
        try {
            raw.push_back(Json::parse(line));
            line_of.push_back(n);
        } catch (const Json::exception& e) {
            rejected.push_back({n, std::string("malformed JSON: ") + e.what()});
        }
    }
    auto report = ingest_raw(raw);
    for (auto& r : report.rejected) r.line = line_of[r.line - 1];
    report.rejected.insert(report.rejected.end(), rejected.begin(), rejected.end());
    std::sort(report.rejected.begin(), report.rejected.end(),
              [](const RejectedLine& a, const RejectedLine& b) { return a.line < b.line; });
    return report;
}

IndexReport Indexer::ingest_raw(const std::vector<Json>& raw) {
    IndexReport report;
    std::vector<corpus::DocumentRecord> records;
    std::map<std::string, Json> extras;  // content_hash -> raw extras
    for (std::size_t i = 0; i < raw.size(); ++i) {
        try {
            auto doc = corpus::normalize_metadata(raw[i]);
            Json x = Json::object();
            for (const char* key : {"descriptors", "interventions", "outcomes"}) {
                if (raw[i].contains(key) && raw[i].at(key).is_array()) x[key] = raw[i].at(key);
            }
            extras[doc.content_hash] = std::move(x);
            records.push_back(std::move(doc));
        } catch (const Error& e) {
            report.rejected.push_back({i + 1, e.what()});
        }
    }
    std::size_t chunk_total = 0;
    report.ingest = corpus::ingest(records, plane_.metadata(),
                                   [&](const corpus::DocumentRecord& doc, stores::Epoch e) {
                                       index_document(doc, extras[doc.content_hash], e, chunk_total);
                                   });
    report.chunks_indexed = chunk_total;
    return report;
}

void Indexer::index_document(const corpus::DocumentRecord& doc, const Json& extras, stores::Epoch e,
                             std::size_t& chunk_total) {
    std::vector<corpus::Chunk> chunks;
    if (doc.full_text) {
        chunks = corpus::chunk_document(doc, policy_);
    } else if (doc.abstract) {
        corpus::DocumentRecord body = doc;
        body.full_text = doc.abstract;
        chunks = corpus::chunk_document(body, policy_);
    }
    plane_.metadata().put_chunks(doc.doc_id, chunks, e);
    plane_.vectors().retire_document(doc.doc_id, e);

    const auto meta = stores::vector_snapshot(stores::MetadataStore::view_of(doc, plane_.metadata().annotations(doc.doc_id)));
    if (!chunks.empty()) {
        std::vector<std::string> texts;
        texts.reserve(chunks.size());
        for (const auto& c : chunks) texts.push_back(c.text);
        const auto vectors = provider_.embed(texts);
        for (std::size_t i = 0; i < chunks.size(); ++i) {
            plane_.vectors().upsert({chunks[i].chunk_id, doc.doc_id, vectors[i], meta}, e);
        }
    }
    chunk_total += chunks.size();

    std::vector<stores::GraphNode> nodes;
    std::vector<stores::GraphEdge> edges;
    Json paper_props{{"title", doc.title}, {"version", doc.version}};
    paper_props["year"] = doc.year ? Json(*doc.year) : Json(nullptr);
    nodes.push_back({doc.doc_id, stores::NodeLabel::Paper, paper_props});
    for (const auto& c : chunks) {
        nodes.push_back({c.chunk_id, stores::NodeLabel::Chunk, Json{{"ordinal", c.ordinal}}});
        edges.push_back({c.chunk_id, doc.doc_id, "PART_OF"});
    }
    for (const auto& a : doc.authors) {
        const auto id = author_node_id(a);
        nodes.push_back({id, stores::NodeLabel::Author, Json{{"name", a}}});
        edges.push_back({doc.doc_id, id, "AUTHORED_BY"});
    }
    const std::tuple<const char*, stores::NodeLabel, const char*> typed[] = {
        {"descriptors", stores::NodeLabel::Descriptor, "HAS_DESCRIPTOR"},
        {"interventions", stores::NodeLabel::Intervention, "STUDIES"},
        {"outcomes", stores::NodeLabel::Outcome, "MEASURES"},
    };
    for (const auto& [key, label, edge_type] : typed) {
        if (!extras.contains(key)) continue;
        for (const auto& v : extras.at(key)) {
            if (!v.is_string()) continue;
            const std::string name = text::collapse_whitespace(v.get<std::string>());
            if (name.empty()) continue;
            const std::string id = text::to_lower(std::string(stores::to_string(label))) + ":" + text::to_lower(name);
            nodes.push_back({id, label, Json{{"name", name}}});
            edges.push_back({doc.doc_id, id, edge_type});
        }
    }
    plane_.graph().add(nodes, edges);
}

Json to_json(const IndexReport& r) {
    Json rejected = Json::array();
    for (const auto& x : r.rejected) rejected.push_back({{"line", x.line}, {"error", x.error}});
    return {{"ingest", corpus::to_json(r.ingest)}, {"chunks_indexed", r.chunks_indexed}, {"rejected", rejected}};
}

}  // namespace evsynth
