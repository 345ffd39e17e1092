#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "evsynth/text.hpp"
#include "evsynth/types.hpp"

namespace evsynth::stores {
class MetadataStore;
}

namespace evsynth::corpus {

/// A normalized bibliographic record. Optional text fields are either
/// absent or non-empty; empty strings never stand in for "missing".
struct DocumentRecord {
    std::string doc_id;
    std::string title;
    std::optional<std::string> abstract;
    std::optional<std::string> full_text;
    std::vector<std::string> authors;
    std::string venue;
    std::optional<int> year;
    std::string source;
    int version = 1;
    std::string content_hash;

    bool operator==(const DocumentRecord&) const = default;
};

struct Chunk {
    std::string chunk_id;
    std::string doc_id;
    std::size_t ordinal = 0;
    std::string text;
    text::Span char_span;

    bool operator==(const Chunk&) const = default;
};

struct ChunkPolicy {
    std::size_t window = 1200;
    std::size_t overlap = 200;
    /// How far back from the window end a sentence boundary may pull the cut.
    std::size_t sentence_backoff = 100;

    std::size_t stride() const noexcept { return window - overlap; }
    /// Throws InvalidArgument unless window > 0 and overlap < window.
    void validate() const;
};

enum class IngestAction { Inserted, Duplicate, Revised };

std::string_view to_string(IngestAction a) noexcept;

struct ProvenanceEntry {
    std::string doc_id;
    IngestAction action = IngestAction::Inserted;
    std::string timestamp;
    int version = 1;
};

struct IngestReport {
    std::size_t new_count = 0;
    std::size_t duplicate_count = 0;
    std::size_t revised_count = 0;
    std::vector<ProvenanceEntry> provenance_entries;
    /// Store epoch at which this batch became visible.
    std::uint64_t epoch = 0;

    std::size_t total() const noexcept { return new_count + duplicate_count + revised_count; }
};

/// Normalizes a raw field map (one JSON Lines object) into a record.
/// Recognized keys: title, abstract, full_text, authors (array or
/// ';'-separated string), venue, year (integer or numeric string), source.
/// Throws MissingTitle / InvalidYear.
DocumentRecord normalize_metadata(const Json& raw);

/// "Family, Given" canonical author form. "Given Family" and "Family, Given"
/// inputs converge on the same output.
std::string canonical_author(std::string_view raw);

/// Hex SHA-256 over normalized title, abstract and full text.
std::string compute_content_hash(const DocumentRecord& doc);
/// First 16 bytes (32 hex chars) of the content hash.
std::string compute_doc_id(const std::string& content_hash);
/// Versioning key: lowercased title without punctuation, plus year.
std::string logical_key(const DocumentRecord& doc);

/// Called for every inserted or revised record while its batch is still
/// open, so dependent rows (chunks, vectors) land in the same epoch.
using StoredHook = std::function<void(const DocumentRecord&, std::uint64_t epoch)>;

/// Deduplicates, versions and inserts a normalized batch. One call is one
/// store epoch. Revisions keep the doc_id assigned to the first version.
IngestReport ingest(const std::vector<DocumentRecord>& records, stores::MetadataStore& store,
                    const StoredHook& on_stored = {});

/// Segments doc.full_text. Throws NoFullText when absent.
std::vector<Chunk> chunk_document(const DocumentRecord& doc, const ChunkPolicy& policy = {});
/// Chunk boundaries over arbitrary text, exposed for reuse and testing.
std::vector<text::Span> chunk_spans(std::string_view text, const ChunkPolicy& policy);

std::string make_chunk_id(const std::string& doc_id, std::size_t ordinal);

Json to_json(const DocumentRecord& d);
DocumentRecord record_from_json(const Json& j);
Json to_json(const Chunk& c);
Chunk chunk_from_json(const Json& j);
Json to_json(const IngestReport& r);

}  // namespace evsynth::corpus
