#pragma once

#include <optional>
#include <string>
#include <vector>

#include "evsynth/provider.hpp"
#include "evsynth/stores.hpp"
#include "evsynth/types.hpp"

namespace evsynth::structq {

struct EntitySchema {
    std::string name;
    std::string key_field;
    /// Field searched when a term filter names the entity itself.
    std::string text_field;
    std::vector<FieldSchema> fields;

    const FieldSchema* field(std::string_view name) const;
};

/// Logical tables exposed to structured queries, derived from the store.
struct SchemaCatalog {
    std::vector<EntitySchema> entities;

    const EntitySchema* entity(std::string_view name) const;
    /// Every entity and field name, deduplicated and sorted.
    std::vector<std::string> names() const;
    Json to_json() const;
};

/// `documents` (one row per record, annotation fields included) and
/// `chunks`. Throws StoreUnavailable when the store is down.
SchemaCatalog catalog_for(const stores::MetadataStore& store);

// ---------------------------------------------------------------------------
// Identifier resolution
// ---------------------------------------------------------------------------

enum class ResolutionMethod : std::uint8_t { Exact, Normalized, Fuzzy };

std::string_view to_string(ResolutionMethod m) noexcept;

struct Resolution {
    std::string raw;
    std::optional<std::string> resolved;
    double score = 0.0;
    std::optional<ResolutionMethod> method;
    /// Best-scoring names; more than one means an ambiguous tie.
    std::vector<std::string> candidates;
};

struct ResolutionReport {
    std::vector<Resolution> entries;

    bool all_resolved() const;
    const Resolution* find(std::string_view raw) const;
    Json to_json() const;
};

inline constexpr double kDefaultFuzzyThreshold = 0.8;

/// Restricted Damerau-Levenshtein (optimal string alignment) distance.
std::size_t edit_distance(std::string_view a, std::string_view b);
/// 1 - distance / max(|a|, |b|); 1 for two empty strings.
double similarity(std::string_view a, std::string_view b);
/// Lowercase, spaces and hyphens to underscores, trailing plural removed.
std::string normalize_identifier(std::string_view raw);

/// Exact, then normalized, then fuzzy (unique argmax >= threshold).
/// Common document synonyms ("papers", "studies", ...) normalize to
/// `documents`. Throws InvalidArgument unless threshold is in (0, 1].
ResolutionReport resolve_identifiers(const std::vector<std::string>& raw, const SchemaCatalog& catalog,
                                     double fuzzy_threshold = kDefaultFuzzyThreshold);

// ---------------------------------------------------------------------------
// AST
// ---------------------------------------------------------------------------

enum class Operation : std::uint8_t { Count, List, GroupCount, Proportion };

std::string_view to_string(Operation op) noexcept;
std::optional<Operation> parse_operation(std::string_view s);

struct QueryAST {
    Operation operation = Operation::Count;
    std::string entity = "documents";
    std::vector<Predicate> where;
    /// Numerator condition of a proportion, evaluated within `where`.
    std::vector<Predicate> condition;
    std::optional<std::string> group_by;
    std::optional<std::int64_t> limit;
    /// Projection for list; the entity's default columns when empty.
    std::vector<std::string> fields;

    bool operator==(const QueryAST&) const = default;
};

Json to_json(const QueryAST& ast);
QueryAST ast_from_json(const Json& j);
/// Read-only display form, e.g. `SELECT COUNT(*) FROM documents WHERE year > 2015`.
std::string render_sql(const QueryAST& ast);

struct GenerateResult {
    /// Absent when any identifier stayed unresolved.
    std::optional<QueryAST> ast;
    ResolutionReport report;
    bool from_provider = false;
};

/// Deterministic templates for count / list / group-by / proportion phrasings.
/// Identifiers are left raw; `generate` resolves them.
std::optional<QueryAST> template_ast(const std::string& natural_query);

/// Provider proposal when it returns a JSON AST, template fallback otherwise;
/// every identifier is resolved before the AST is returned.
GenerateResult generate(const std::string& natural_query, const SchemaCatalog& catalog,
                        provider::Provider* provider = nullptr, double fuzzy_threshold = kDefaultFuzzyThreshold);

/// Every rule violation, never just the first. Empty means valid.
std::vector<std::string> validate(const QueryAST& ast, const SchemaCatalog& catalog);

// ---------------------------------------------------------------------------
// Execution
// ---------------------------------------------------------------------------

struct QueryResult {
    std::vector<std::string> columns;
    std::vector<std::vector<FieldValue>> rows;
    /// Set for proportion; ratio absent when the denominator is zero.
    std::optional<std::size_t> numerator;
    std::optional<std::size_t> denominator;
    std::optional<double> ratio;

    Json to_json() const;
};

/// Runs a validated AST against the snapshot at `epoch`. Throws
/// InvalidQuery when validation fails and SnapshotGone for evicted epochs.
QueryResult execute(const QueryAST& ast, const stores::MetadataStore& store, std::optional<stores::Epoch> epoch,
                    const SchemaCatalog& catalog);
QueryResult execute(const QueryAST& ast, const stores::MetadataStore& store,
                    std::optional<stores::Epoch> epoch = std::nullopt);

}  // namespace evsynth::structq
