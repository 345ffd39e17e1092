#include "evsynth/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>

#include "evsynth/error.hpp"
#include "evsynth/hash.hpp"
#include "evsynth/stores.hpp"

namespace evsynth::corpus {

namespace {

std::optional<std::string> optional_text(const Json& raw, const char* key) {
    if (!raw.contains(key) || raw.at(key).is_null()) return std::nullopt;
    const auto& v = raw.at(key);
    std::string s = v.is_string() ? v.get<std::string>() : v.dump();
    s = text::collapse_whitespace(s);
    if (s.empty()) return std::nullopt;
    return s;
}

std::optional<int> parse_year(const Json& raw) {
    if (!raw.contains("year") || raw.at("year").is_null()) return std::nullopt;
    const auto& v = raw.at("year");
    if (v.is_number_integer()) return v.get<int>();
    if (v.is_number_float()) {
        const double d = v.get<double>();
        if (d == static_cast<double>(static_cast<int>(d))) return static_cast<int>(d);
        throw Error(ErrorCode::InvalidYear, "non-integral year " + v.dump());
    }
    if (!v.is_string()) throw Error(ErrorCode::InvalidYear, "year has type " + std::string(v.type_name()));
    const std::string s = text::trim(v.get<std::string>());
    if (s.empty()) return std::nullopt;
    int year = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), year);
    if (ec != std::errc{} || ptr != s.data() + s.size()) {
        throw Error(ErrorCode::InvalidYear, "cannot parse year '" + s + "'");
    }
    return year;
}

bool looks_like_initials(std::string_view tok) {
    if (tok.empty() || tok.size() > 4) return false;
    return std::all_of(tok.begin(), tok.end(), [](char c) {
        return std::isupper(static_cast<unsigned char>(c)) != 0 || c == '.' || c == '-';
    });
}

}  // namespace

void ChunkPolicy::validate() const {
    if (window == 0) throw Error(ErrorCode::InvalidArgument, "chunk window must be > 0");
    if (overlap >= window) throw Error(ErrorCode::InvalidArgument, "chunk overlap must be < window");
}

std::string_view to_string(IngestAction a) noexcept {
    switch (a) {
        case IngestAction::Inserted: return "inserted";
        case IngestAction::Duplicate: return "duplicate";
        case IngestAction::Revised: return "revised";
    }
    return "inserted";
}

std::string canonical_author(std::string_view raw) {
    const std::string s = text::collapse_whitespace(raw);
    if (s.empty()) return s;
    if (const auto comma = s.find(','); comma != std::string::npos) {
        const std::string family = text::trim(s.substr(0, comma));
        const std::string given = text::collapse_whitespace(s.substr(comma + 1));
        return given.empty() ? family : family + ", " + given;
    }
    std::vector<std::string> parts;
    std::size_t i = 0;
    while (i < s.size()) {
        const auto j = s.find(' ', i);
        parts.push_back(s.substr(i, j == std::string::npos ? std::string::npos : j - i));
        if (j == std::string::npos) break;
        i = j + 1;
    }
    if (parts.size() == 1) return parts.front();
    // "Smith JA" (family first, trailing initials) vs "Jane A. Smith".
    if (looks_like_initials(parts.back()) && !looks_like_initials(parts.front())) {
        std::string given;
        for (std::size_t k = 1; k < parts.size(); ++k) given += (k > 1 ? " " : "") + parts[k];
        return parts.front() + ", " + given;
    }
    std::string given;
    for (std::size_t k = 0; k + 1 < parts.size(); ++k) given += (k > 0 ? " " : "") + parts[k];
    return parts.back() + ", " + given;
}

std::string compute_content_hash(const DocumentRecord& doc) {
    std::string payload = doc.title;
    payload.push_back('\x1f');
    payload += doc.abstract.value_or("");
    payload.push_back('\x1f');
    payload += doc.full_text.value_or("");
    return sha256_hex(payload);
}

std::string compute_doc_id(const std::string& content_hash) { return content_hash.substr(0, 32); }

std::string logical_key(const DocumentRecord& doc) {
    std::string key;
    for (const char c : doc.title) {
        const auto u = static_cast<unsigned char>(c);
        if (std::isalnum(u) != 0 || u >= 0x80) {
            key.push_back(static_cast<char>(std::tolower(u)));
        } else if (std::isspace(u) != 0) {
            key.push_back(' ');
        }
    }
    key = text::collapse_whitespace(key);
    key += "|";
    if (doc.year) key += std::to_string(*doc.year);
    return key;
}

DocumentRecord normalize_metadata(const Json& raw) {
    if (!raw.is_object()) throw Error(ErrorCode::InvalidArgument, "raw record must be a JSON object");
    DocumentRecord doc;
    auto title = optional_text(raw, "title");
    if (!title) throw Error(ErrorCode::MissingTitle, "record has no title");
    doc.title = std::move(*title);
    doc.abstract = optional_text(raw, "abstract");
    doc.full_text = optional_text(raw, "full_text");
    doc.venue = optional_text(raw, "venue").value_or("");
    doc.source = optional_text(raw, "source").value_or("");
    doc.year = parse_year(raw);

    if (raw.contains("authors") && !raw.at("authors").is_null()) {
        const auto& a = raw.at("authors");
        std::vector<std::string> names;
        if (a.is_array()) {
            for (const auto& e : a) {
                if (e.is_string()) names.push_back(e.get<std::string>());
            }
        } else if (a.is_string()) {
            const auto s = a.get<std::string>();
            std::size_t i = 0;
            while (i <= s.size()) {
                const auto j = s.find(';', i);
                names.push_back(s.substr(i, j == std::string::npos ? std::string::npos : j - i));
                if (j == std::string::npos) break;
                i = j + 1;
            }
        }
        for (const auto& n : names) {
            auto c = canonical_author(n);
            if (!c.empty()) doc.authors.push_back(std::move(c));
        }
    }

    doc.content_hash = compute_content_hash(doc);
    doc.doc_id = compute_doc_id(doc.content_hash);
    return doc;
}

IngestReport ingest(const std::vector<DocumentRecord>& records, stores::MetadataStore& store,
                    const StoredHook& on_stored) {
    IngestReport report;
    const stores::Epoch e = store.begin_batch();
    try {
        for (DocumentRecord doc : records) {
            ProvenanceEntry entry;
            entry.timestamp = utc_timestamp();
            if (auto existing = store.doc_id_for_hash(doc.content_hash)) {
                entry.doc_id = *existing;
                entry.action = IngestAction::Duplicate;
                entry.version = store.get(*existing, e)->version;
                ++report.duplicate_count;
            } else if (auto logical = store.doc_id_for_logical_key(logical_key(doc))) {
                const auto previous = store.get(*logical, e);
                doc.doc_id = *logical;
                doc.version = previous->version + 1;
                store.revise(doc, e);
                if (on_stored) on_stored(doc, e);
                entry.doc_id = doc.doc_id;
                entry.action = IngestAction::Revised;
                entry.version = doc.version;
                ++report.revised_count;
            } else {
                doc.version = 1;
                store.insert(doc, e);
                if (on_stored) on_stored(doc, e);
                entry.doc_id = doc.doc_id;
                entry.action = IngestAction::Inserted;
                ++report.new_count;
            }
            store.append_provenance(entry);
            report.provenance_entries.push_back(std::move(entry));
        }
    } catch (...) {
        store.commit_batch(e);
        throw;
    }
    store.commit_batch(e);
    report.epoch = e;
    return report;
}

std::vector<text::Span> chunk_spans(std::string_view text, const ChunkPolicy& policy) {
    policy.validate();
    std::vector<text::Span> spans;
    const std::size_t n = text.size();
    std::size_t start = 0;
    while (start < n) {
        std::size_t end = std::min(start + policy.window, n);
        if (end < n) {
            end = text::utf8_floor(text, end);
            // Prefer cutting just after a sentence terminator near the window end.
            const std::size_t floor = end > policy.sentence_backoff ? end - policy.sentence_backoff : 0;
            for (std::size_t p = end; p > floor && p > start + 1; --p) {
                const char prev = text[p - 1];
                const bool terminator = prev == '.' || prev == '!' || prev == '?';
                if (terminator && std::isspace(static_cast<unsigned char>(text[p])) != 0) {
                    if (p > start + policy.overlap) end = p;
                    break;
                }
            }
            if (end <= start) end = std::min(start + policy.window, n);
        }
        spans.push_back({start, end});
        if (end >= n) break;
        std::size_t next = text::utf8_floor(text, end - policy.overlap);
        if (next <= start) next = end;
        start = next;
    }
    return spans;
}

std::string make_chunk_id(const std::string& doc_id, std::size_t ordinal) {
    return doc_id + "#" + std::to_string(ordinal);
}

std::vector<Chunk> chunk_document(const DocumentRecord& doc, const ChunkPolicy& policy) {
    if (!doc.full_text || doc.full_text->empty()) {
        throw Error(ErrorCode::NoFullText, "document " + doc.doc_id + " has no full text");
    }
    const std::string& body = *doc.full_text;
    std::vector<Chunk> chunks;
    for (const auto& span : chunk_spans(body, policy)) {
        Chunk c;
        c.doc_id = doc.doc_id;
        c.ordinal = chunks.size();
        c.chunk_id = make_chunk_id(doc.doc_id, c.ordinal);
        c.char_span = span;
        c.text = body.substr(span.begin, span.size());
        chunks.push_back(std::move(c));
    }
    return chunks;
}

Json to_json(const DocumentRecord& d) {
    Json j{{"doc_id", d.doc_id},   {"title", d.title},     {"authors", d.authors},
           {"venue", d.venue},     {"source", d.source},   {"version", d.version},
           {"content_hash", d.content_hash}};
    j["abstract"] = d.abstract ? Json(*d.abstract) : Json(nullptr);
    j["full_text"] = d.full_text ? Json(*d.full_text) : Json(nullptr);
    j["year"] = d.year ? Json(*d.year) : Json(nullptr);
    return j;
}

DocumentRecord record_from_json(const Json& j) {
    DocumentRecord d;
    d.doc_id = j.at("doc_id").get<std::string>();
    d.title = j.at("title").get<std::string>();
    if (j.contains("abstract") && !j.at("abstract").is_null()) d.abstract = j.at("abstract").get<std::string>();
    if (j.contains("full_text") && !j.at("full_text").is_null()) d.full_text = j.at("full_text").get<std::string>();
    d.authors = j.value("authors", std::vector<std::string>{});
    d.venue = j.value("venue", "");
    d.source = j.value("source", "");
    if (j.contains("year") && !j.at("year").is_null()) d.year = j.at("year").get<int>();
    d.version = j.value("version", 1);
    d.content_hash = j.value("content_hash", "");
    if (d.content_hash.empty()) d.content_hash = compute_content_hash(d);
    return d;
}

Json to_json(const Chunk& c) {
    return Json{{"chunk_id", c.chunk_id},
                {"doc_id", c.doc_id},
                {"ordinal", c.ordinal},
                {"text", c.text},
                {"char_span", {c.char_span.begin, c.char_span.end}}};
}

Chunk chunk_from_json(const Json& j) {
    Chunk c;
    c.chunk_id = j.at("chunk_id").get<std::string>();
    c.doc_id = j.at("doc_id").get<std::string>();
    c.ordinal = j.at("ordinal").get<std::size_t>();
    c.text = j.at("text").get<std::string>();
    c.char_span = {j.at("char_span").at(0).get<std::size_t>(), j.at("char_span").at(1).get<std::size_t>()};
    return c;
}

Json to_json(const IngestReport& r) {
    Json entries = Json::array();
    for (const auto& e : r.provenance_entries) {
        entries.push_back({{"doc_id", e.doc_id},
                           {"action", std::string(to_string(e.action))},
                           {"timestamp", e.timestamp},
                           {"version", e.version}});
    }
    return Json{{"new_count", r.new_count},
                {"duplicate_count", r.duplicate_count},
                {"revised_count", r.revised_count},
                {"epoch", r.epoch},
                {"provenance_entries", entries}};
}

}  // namespace evsynth::corpus
