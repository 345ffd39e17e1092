#include "evsynth/types.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <cctype>
#include <sstream>

#include "evsynth/error.hpp"

namespace evsynth {

std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::MissingTitle: return "MissingTitle";
        case ErrorCode::InvalidYear: return "InvalidYear";
        case ErrorCode::NoFullText: return "NoFullText";
        case ErrorCode::StoreUnavailable: return "StoreUnavailable";
        case ErrorCode::UnknownDocument: return "UnknownDocument";
        case ErrorCode::DimensionMismatch: return "DimensionMismatch";
        case ErrorCode::UnknownNode: return "UnknownNode";
        case ErrorCode::DanglingEdge: return "DanglingEdge";
        case ErrorCode::UnknownField: return "UnknownField";
        case ErrorCode::SnapshotGone: return "SnapshotGone";
        case ErrorCode::ProviderUnavailable: return "ProviderUnavailable";
        case ErrorCode::EmptyContextForFactualTask: return "EmptyContextForFactualTask";
        case ErrorCode::EmptyTrainingSet: return "EmptyTrainingSet";
        case ErrorCode::UntrainedModel: return "UntrainedModel";
        case ErrorCode::MissingDimension: return "MissingDimension";
        case ErrorCode::EmptyCandidates: return "EmptyCandidates";
        case ErrorCode::NoApplicableTool: return "NoApplicableTool";
        case ErrorCode::ToolFailure: return "ToolFailure";
        case ErrorCode::DisciplineViolation: return "DisciplineViolation";
        case ErrorCode::EmptyEvidence: return "EmptyEvidence";
        case ErrorCode::UngroundableOutput: return "UngroundableOutput";
        case ErrorCode::UnknownSession: return "UnknownSession";
        case ErrorCode::Unresolvable: return "Unresolvable";
        case ErrorCode::InvalidQuery: return "InvalidQuery";
        case ErrorCode::TooFewDocuments: return "TooFewDocuments";
        case ErrorCode::UnfittedModel: return "UnfittedModel";
        case ErrorCode::MissingYear: return "MissingYear";
        case ErrorCode::UnknownTopic: return "UnknownTopic";
        case ErrorCode::EmptyCounts: return "EmptyCounts";
        case ErrorCode::LengthMismatch: return "LengthMismatch";
        case ErrorCode::EmptyQuerySet: return "EmptyQuerySet";
    }
    return "Unknown";
}

namespace {

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

std::string lower_copy(const std::string& s) { return lower(s); }

// Ordering over comparable scalar pairs; nullopt when the pair is not comparable.
std::optional<int> compare_scalars(const FieldValue& a, const FieldValue& b) {
    if (const auto* x = std::get_if<std::int64_t>(&a)) {
        if (const auto* y = std::get_if<std::int64_t>(&b)) return (*x > *y) - (*x < *y);
        return std::nullopt;
    }
    if (const auto* x = std::get_if<TernaryLabel>(&a)) {
        const TernaryLabel* y = std::get_if<TernaryLabel>(&b);
        std::optional<TernaryLabel> parsed;
        if (y == nullptr) {
            if (const auto* s = std::get_if<std::string>(&b)) parsed = parse_ternary(*s);
            if (!parsed) return std::nullopt;
            y = &*parsed;
        }
        const int xi = static_cast<int>(*x);
        const int yi = static_cast<int>(*y);
        return (xi > yi) - (xi < yi);
    }
    if (const auto* x = std::get_if<bool>(&a)) {
        if (const auto* y = std::get_if<bool>(&b)) return static_cast<int>(*x) - static_cast<int>(*y);
        return std::nullopt;
    }
    if (const auto* x = std::get_if<std::string>(&a)) {
        if (const auto* y = std::get_if<std::string>(&b)) {
            // Text equality is case-insensitive: venue names and author strings
            // arrive with inconsistent capitalisation across sources.
            const auto lx = lower_copy(*x);
            const auto ly = lower_copy(*y);
            return (lx > ly) - (lx < ly);
        }
        return std::nullopt;
    }
    return std::nullopt;
}

bool contains_value(const FieldValue& haystack, const FieldValue& needle) {
    const auto* n = std::get_if<std::string>(&needle);
    if (n == nullptr) return false;
    const auto ln = lower_copy(*n);
    if (const auto* s = std::get_if<std::string>(&haystack)) {
        return lower_copy(*s).find(ln) != std::string::npos;
    }
    if (const auto* list = std::get_if<TextList>(&haystack)) {
        return std::any_of(list->begin(), list->end(), [&](const std::string& item) {
            return lower_copy(item).find(ln) != std::string::npos;
        });
    }
    return false;
}

}  // namespace

char to_char(Dimension d) noexcept {
    static constexpr char kChars[] = {'P', 'I', 'C', 'O', 'S'};
    return kChars[static_cast<int>(d)];
}

std::string to_string(Dimension d) { return std::string(1, to_char(d)); }

std::optional<Dimension> parse_dimension(std::string_view s) {
    const auto l = lower(s);
    if (l == "p" || l == "population" || l == "participants") return Dimension::P;
    if (l == "i" || l == "intervention") return Dimension::I;
    if (l == "c" || l == "comparator" || l == "comparison") return Dimension::C;
    if (l == "o" || l == "outcome" || l == "outcomes") return Dimension::O;
    if (l == "s" || l == "study_design" || l == "study design") return Dimension::S;
    return std::nullopt;
}

std::string_view to_string(TernaryLabel l) noexcept {
    switch (l) {
        case TernaryLabel::No: return "no";
        case TernaryLabel::Maybe: return "maybe";
        case TernaryLabel::Yes: return "yes";
    }
    return "maybe";
}

std::optional<TernaryLabel> parse_ternary(std::string_view s) {
    const auto l = lower(s);
    if (l == "no" || l == "0") return TernaryLabel::No;
    if (l == "maybe" || l == "1") return TernaryLabel::Maybe;
    if (l == "yes" || l == "2") return TernaryLabel::Yes;
    return std::nullopt;
}

std::string_view to_string(IncludeDecision d) noexcept {
    switch (d) {
        case IncludeDecision::Include: return "include";
        case IncludeDecision::Exclude: return "exclude";
        case IncludeDecision::Maybe: return "maybe";
    }
    return "maybe";
}

std::optional<IncludeDecision> parse_include_decision(std::string_view s) {
    const auto l = lower(s);
    if (l == "include") return IncludeDecision::Include;
    if (l == "exclude") return IncludeDecision::Exclude;
    if (l == "maybe") return IncludeDecision::Maybe;
    return std::nullopt;
}

std::string_view to_string(FieldType t) noexcept {
    switch (t) {
        case FieldType::Text: return "text";
        case FieldType::Integer: return "integer";
        case FieldType::Boolean: return "boolean";
        case FieldType::Ternary: return "ternary";
        case FieldType::TextList: return "list-of-text";
    }
    return "text";
}

std::string_view to_string(Comparator c) noexcept {
    switch (c) {
        case Comparator::Eq: return "=";
        case Comparator::Ne: return "!=";
        case Comparator::Lt: return "<";
        case Comparator::Le: return "<=";
        case Comparator::Gt: return ">";
        case Comparator::Ge: return ">=";
        case Comparator::Contains: return "contains";
        case Comparator::In: return "in";
    }
    return "=";
}

std::optional<Comparator> parse_comparator(std::string_view s) {
    const auto l = lower(s);
    if (l == "=" || l == "==" || l == "eq") return Comparator::Eq;
    if (l == "!=" || l == "<>" || l == "ne" || l == "≠") return Comparator::Ne;
    if (l == "<" || l == "lt") return Comparator::Lt;
    if (l == "<=" || l == "le" || l == "≤") return Comparator::Le;
    if (l == ">" || l == "gt") return Comparator::Gt;
    if (l == ">=" || l == "ge" || l == "≥") return Comparator::Ge;
    if (l == "contains") return Comparator::Contains;
    if (l == "in") return Comparator::In;
    return std::nullopt;
}

std::string render(const FieldValue& v) {
    return std::visit(
        [](const auto& x) -> std::string {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, std::monostate>) {
                return "null";
            } else if constexpr (std::is_same_v<T, bool>) {
                return x ? "true" : "false";
            } else if constexpr (std::is_same_v<T, std::int64_t>) {
                return std::to_string(x);
            } else if constexpr (std::is_same_v<T, std::string>) {
                return "\"" + x + "\"";
            } else if constexpr (std::is_same_v<T, TernaryLabel>) {
                return std::string(to_string(x));
            } else {
                std::string out = "[";
                for (std::size_t i = 0; i < x.size(); ++i) {
                    if (i) out += ", ";
                    out += "\"" + x[i] + "\"";
                }
                return out + "]";
            }
        },
        v);
}

std::string render(const Predicate& p) {
    return p.field + " " + std::string(to_string(p.op)) + " " + render(p.literal);
}

bool matches(const Predicate& p, const MetadataView& view) {
    const auto it = view.find(p.field);
    if (it == view.end() || std::holds_alternative<std::monostate>(it->second)) return false;
    const FieldValue& value = it->second;

    switch (p.op) {
        case Comparator::Contains:
            return contains_value(value, p.literal);
        case Comparator::In: {
            const auto* options = std::get_if<TextList>(&p.literal);
            if (options == nullptr) return false;
            return std::any_of(options->begin(), options->end(), [&](const std::string& opt) {
                if (const auto* list = std::get_if<TextList>(&value)) {
                    return std::any_of(list->begin(), list->end(), [&](const std::string& item) {
                        return lower_copy(item) == lower_copy(opt);
                    });
                }
                if (std::holds_alternative<std::int64_t>(value)) {
                    return render(value) == opt;
                }
                const auto cmp = compare_scalars(value, FieldValue{opt});
                return cmp && *cmp == 0;
            });
        }
        default:
            break;
    }

    const auto cmp = compare_scalars(value, p.literal);
    if (!cmp) return false;
    switch (p.op) {
        case Comparator::Eq: return *cmp == 0;
        case Comparator::Ne: return *cmp != 0;
        case Comparator::Lt: return *cmp < 0;
        case Comparator::Le: return *cmp <= 0;
        case Comparator::Gt: return *cmp > 0;
        case Comparator::Ge: return *cmp >= 0;
        default: return false;
    }
}

bool matches_all(const std::vector<Predicate>& preds, const MetadataView& view) {
    return std::all_of(preds.begin(), preds.end(),
                       [&](const Predicate& p) { return matches(p, view); });
}

bool comparator_allowed(FieldType t, Comparator op) noexcept {
    switch (t) {
        case FieldType::Text:
            return op == Comparator::Eq || op == Comparator::Ne || op == Comparator::Contains ||
                   op == Comparator::In;
        case FieldType::Integer:
            return op != Comparator::Contains;
        case FieldType::Boolean:
            return op == Comparator::Eq || op == Comparator::Ne;
        case FieldType::Ternary:
            return op != Comparator::Contains;
        case FieldType::TextList:
            return op == Comparator::Contains || op == Comparator::In;
    }
    return false;
}

bool literal_compatible(FieldType t, Comparator op, const FieldValue& literal) noexcept {
    if (!comparator_allowed(t, op)) return false;
    if (op == Comparator::In) return std::holds_alternative<TextList>(literal);
    if (op == Comparator::Contains) return std::holds_alternative<std::string>(literal);
    switch (t) {
        case FieldType::Text: return std::holds_alternative<std::string>(literal);
        case FieldType::Integer: return std::holds_alternative<std::int64_t>(literal);
        case FieldType::Boolean: return std::holds_alternative<bool>(literal);
        case FieldType::Ternary:
            if (std::holds_alternative<TernaryLabel>(literal)) return true;
            if (const auto* s = std::get_if<std::string>(&literal)) return parse_ternary(*s).has_value();
            return false;
        case FieldType::TextList: return false;
    }
    return false;
}

Json to_json(const FieldValue& v) {
    return std::visit(
        [](const auto& x) -> Json {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, std::monostate>) {
                return nullptr;
            } else if constexpr (std::is_same_v<T, TernaryLabel>) {
                return Json{{"ternary", std::string(to_string(x))}};
            } else {
                return Json(x);
            }
        },
        v);
}

FieldValue field_value_from_json(const Json& j) {
    if (j.is_null()) return std::monostate{};
    if (j.is_boolean()) return j.get<bool>();
    if (j.is_number_integer()) return j.get<std::int64_t>();
    if (j.is_number()) return static_cast<std::int64_t>(j.get<double>());
    if (j.is_string()) return j.get<std::string>();
    if (j.is_object() && j.contains("ternary")) {
        if (auto l = parse_ternary(j.at("ternary").get<std::string>())) return *l;
        throw Error(ErrorCode::InvalidArgument, "bad ternary literal " + j.dump());
    }
    if (j.is_array()) {
        TextList out;
        for (const auto& e : j) out.push_back(e.is_string() ? e.get<std::string>() : e.dump());
        return out;
    }
    throw Error(ErrorCode::InvalidArgument, "unsupported literal " + j.dump());
}

FieldValue coerce_literal(const Json& j, FieldType t) {
    if (j.is_array()) return field_value_from_json(j);
    switch (t) {
        case FieldType::Integer:
            if (j.is_number()) return field_value_from_json(j);
            if (j.is_string()) {
                const auto s = j.get<std::string>();
                try {
                    std::size_t used = 0;
                    const long long v = std::stoll(s, &used);
                    if (used == s.size()) return static_cast<std::int64_t>(v);
                } catch (const std::exception&) {
                }
                return s;  // left ill-typed on purpose so validation reports it
            }
            break;
        case FieldType::Boolean:
            if (j.is_boolean()) return j.get<bool>();
            if (j.is_string()) {
                const auto s = lower(j.get<std::string>());
                if (s == "true" || s == "yes") return true;
                if (s == "false" || s == "no") return false;
                return j.get<std::string>();
            }
            break;
        case FieldType::Ternary:
            if (j.is_string()) {
                if (auto l = parse_ternary(j.get<std::string>())) return *l;
            }
            break;
        default:
            break;
    }
    return field_value_from_json(j);
}

Json to_json(const Predicate& p) {
    return Json{{"field", p.field}, {"op", std::string(to_string(p.op))}, {"value", to_json(p.literal)}};
}

Predicate predicate_from_json(const Json& j) {
    Predicate p;
    p.field = j.at("field").get<std::string>();
    const auto op = parse_comparator(j.at("op").get<std::string>());
    if (!op) throw Error(ErrorCode::InvalidArgument, "unknown comparator " + j.at("op").dump());
    p.op = *op;
    p.literal = field_value_from_json(j.at("value"));
    return p;
}

std::string utc_timestamp() {
    using namespace std::chrono;
    const auto now = system_clock::now();
    const auto ms = duration_cast<milliseconds>(now.time_since_epoch()).count() % 1000;
    const std::time_t t = system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[96];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900,
                  tm.tm_mon + 1, tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec, static_cast<int>(ms));
    return buf;
}

}  // namespace evsynth
