#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

namespace evsynth {

using Json = nlohmann::json;

// ---------------------------------------------------------------------------
// PICOS vocabulary
// ---------------------------------------------------------------------------

enum class Dimension : std::uint8_t { P = 0, I = 1, C = 2, O = 3, S = 4 };

inline constexpr std::array<Dimension, 5> kAllDimensions{Dimension::P, Dimension::I, Dimension::C,
                                                         Dimension::O, Dimension::S};

char to_char(Dimension d) noexcept;
std::string to_string(Dimension d);
std::optional<Dimension> parse_dimension(std::string_view s);

/// Fixed encoding no=0, maybe=1, yes=2; the enum order is the label order.
enum class TernaryLabel : std::uint8_t { No = 0, Maybe = 1, Yes = 2 };

std::string_view to_string(TernaryLabel l) noexcept;
std::optional<TernaryLabel> parse_ternary(std::string_view s);

enum class IncludeDecision : std::uint8_t { Include, Exclude, Maybe };

std::string_view to_string(IncludeDecision d) noexcept;
std::optional<IncludeDecision> parse_include_decision(std::string_view s);

// ---------------------------------------------------------------------------
// Typed field values and conjunctive predicates over metadata
// ---------------------------------------------------------------------------

enum class FieldType : std::uint8_t { Text, Integer, Boolean, Ternary, TextList };

std::string_view to_string(FieldType t) noexcept;

using TextList = std::vector<std::string>;

/// monostate means "absent"; comparisons against an absent value are false.
using FieldValue =
    std::variant<std::monostate, bool, std::int64_t, std::string, TernaryLabel, TextList>;

using MetadataView = std::map<std::string, FieldValue, std::less<>>;

enum class Comparator : std::uint8_t { Eq, Ne, Lt, Le, Gt, Ge, Contains, In };

std::string_view to_string(Comparator c) noexcept;
/// Accepts both symbolic ("<=", "!=") and word ("le", "contains") spellings.
std::optional<Comparator> parse_comparator(std::string_view s);

struct Predicate {
    std::string field;
    Comparator op = Comparator::Eq;
    FieldValue literal;

    bool operator==(const Predicate&) const = default;
};

/// Human-readable rendering, e.g. `year > 2015` or `venue = "Lancet"`.
std::string render(const Predicate& p);
std::string render(const FieldValue& v);

/// Evaluates one predicate against a metadata view. Missing fields never match.
bool matches(const Predicate& p, const MetadataView& view);
bool matches_all(const std::vector<Predicate>& preds, const MetadataView& view);

/// Whether `op` can be applied to a field of type `t`.
bool comparator_allowed(FieldType t, Comparator op) noexcept;
/// Whether `literal` is a well-typed operand of `op` on a field of type `t`.
bool literal_compatible(FieldType t, Comparator op, const FieldValue& literal) noexcept;

/// A queryable field of a logical entity.
struct FieldSchema {
    std::string name;
    FieldType type = FieldType::Text;
};

// JSON encodings. FieldValue round-trips through a tagged object when the
// plain JSON type would be ambiguous (ternary vs text).
Json to_json(const FieldValue& v);
FieldValue field_value_from_json(const Json& j);
/// Coerces a JSON literal using the declared field type (e.g. "yes" -> Ternary).
FieldValue coerce_literal(const Json& j, FieldType t);

Json to_json(const Predicate& p);
Predicate predicate_from_json(const Json& j);

/// ISO-8601 UTC timestamp with millisecond precision.
std::string utc_timestamp();

}  // namespace evsynth
