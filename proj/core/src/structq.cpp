#include "evsynth/structq.hpp"

#include <algorithm>
#include <map>
#include <regex>
#include <set>

#include "evsynth/error.hpp"
#include "evsynth/text.hpp"

namespace evsynth::structq {

namespace {

const std::vector<FieldSchema>& chunk_fields() {
    static const std::vector<FieldSchema> kFields{
        {"chunk_id", FieldType::Text},
        {"doc_id", FieldType::Text},
        {"ordinal", FieldType::Integer},
        {"text", FieldType::Text},
    };
    return kFields;
}

// Keyed by normalized form.
const std::map<std::string, std::string>& synonyms() {
    static const std::map<std::string, std::string> kSynonyms{
        {"paper", "documents"},       {"study", "documents"},    {"article", "documents"},
        {"record", "documents"},      {"publication", "documents"}, {"doc", "documents"},
        {"trial", "documents"},       {"passage", "chunks"},     {"segment", "chunks"},
        {"topic", "topic_id"},        {"decision", "include_decision"},
    };
    return kSynonyms;
}

std::vector<std::string> default_columns(const std::string& entity) {
    if (entity == "chunks") return {"chunk_id", "doc_id", "ordinal"};
    return {"doc_id", "title", "year"};
}

MetadataView chunk_view(const corpus::Chunk& c) {
    MetadataView v;
    v["chunk_id"] = c.chunk_id;
    v["doc_id"] = c.doc_id;
    v["ordinal"] = static_cast<std::int64_t>(c.ordinal);
    v["text"] = c.text;
    return v;
}

FieldValue lookup(const MetadataView& v, const std::string& field) {
    const auto it = v.find(field);
    return it == v.end() ? FieldValue{} : it->second;
}

std::string sql_literal(const FieldValue& v) {
    if (const auto* s = std::get_if<std::string>(&v)) {
        std::string out = "'";
        for (char c : *s) {
            out += c;
            if (c == '\'') out += '\'';
        }
        return out + "'";
    }
    if (const auto* l = std::get_if<TernaryLabel>(&v)) return "'" + std::string(to_string(*l)) + "'";
    if (const auto* list = std::get_if<TextList>(&v)) {
        std::string out = "(";
        for (std::size_t i = 0; i < list->size(); ++i) {
            if (i) out += ", ";
            out += sql_literal(FieldValue{(*list)[i]});
        }
        return out + ")";
    }
    return render(v);
}

std::string sql_predicate(const Predicate& p) {
    switch (p.op) {
        case Comparator::Contains: {
            if (const auto* s = std::get_if<std::string>(&p.literal)) {
                return p.field + " LIKE " + sql_literal(FieldValue{"%" + *s + "%"});
            }
            return p.field + " CONTAINS " + sql_literal(p.literal);
        }
        case Comparator::In: return p.field + " IN " + sql_literal(p.literal);
        case Comparator::Ne: return p.field + " <> " + sql_literal(p.literal);
        default: return p.field + " " + std::string(to_string(p.op)) + " " + sql_literal(p.literal);
    }
}

std::string sql_where(const std::vector<Predicate>& preds) {
    std::string out;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        out += i ? " AND " : "";
        out += sql_predicate(preds[i]);
    }
    return out;
}

// Template literal: quoted text stays text, bare integers and booleans are typed.
FieldValue bare_literal(std::string s) {
    s = text::trim(s);
    if (s.size() >= 2 && (s.front() == '\'' || s.front() == '"') && s.back() == s.front()) {
        return s.substr(1, s.size() - 2);
    }
    static const std::regex kInt(R"(^-?\d+$)");
    if (std::regex_match(s, kInt)) return static_cast<std::int64_t>(std::stoll(s));
    const auto lowered = text::to_lower(s);
    if (lowered == "true") return true;
    if (lowered == "false") return false;
    return s;
}

std::string strip_quotes(std::string s) {
    s = text::trim(s);
    static const std::string kQuotes = "'\"";
    while (!s.empty() && kQuotes.find(s.front()) != std::string::npos) s.erase(s.begin());
    while (!s.empty() && kQuotes.find(s.back()) != std::string::npos) s.pop_back();
    // Curly quotes are multi-byte; strip them as whole sequences.
    for (const std::string q : {"“", "”", "‘", "’"}) {
        if (s.rfind(q, 0) == 0) s.erase(0, q.size());
        if (s.size() >= q.size() && s.compare(s.size() - q.size(), q.size(), q) == 0) s.erase(s.size() - q.size());
    }
    return text::trim(s);
}

// "year > 2015 and picos_p = yes" -> predicates with raw field names.
std::optional<std::vector<Predicate>> parse_conditions(const std::string& s) {
    static const std::regex kSplit(R"(\s+and\s+)", std::regex::icase);
    static const std::regex kCond(
        R"re(^\s*([A-Za-z][\w ]*?)\s*(==|!=|<>|<=|>=|=|<|>|\bis not\b|\bis\b|\bequals?\b|\bcontains?\b)\s*(.+?)\s*$)re",
        std::regex::icase);
    std::vector<Predicate> out;
    for (std::sregex_token_iterator it(s.begin(), s.end(), kSplit, -1), end; it != end; ++it) {
        const std::string part = *it;
        std::smatch m;
        if (!std::regex_match(part, m, kCond)) return std::nullopt;
        const auto op_word = text::to_lower(m[2].str());
        Predicate p;
        p.field = text::trim(m[1].str());
        if (op_word == "is not" || op_word == "<>") {
            p.op = Comparator::Ne;
        } else if (op_word == "is" || op_word == "equal" || op_word == "equals" || op_word == "==") {
            p.op = Comparator::Eq;
        } else if (op_word == "contain" || op_word == "contains") {
            p.op = Comparator::Contains;
        } else {
            p.op = *parse_comparator(op_word);
        }
        p.literal = bare_literal(m[3].str());
        out.push_back(std::move(p));
    }
    if (out.empty()) return std::nullopt;
    return out;
}

std::string clean_query(const std::string& q) {
    std::string s = text::collapse_whitespace(q);
    while (!s.empty() && (s.back() == '?' || s.back() == '.' || s.back() == '!')) s.pop_back();
    return text::trim(s);
}

FieldValue coerce_to(const FieldValue& v, FieldType t) {
    if (std::holds_alternative<TextList>(v)) return v;
    return coerce_literal(to_json(v), t);
}

std::string plural_strip(std::string s) {
    const auto seg_start = s.rfind('_') == std::string::npos ? 0 : s.rfind('_') + 1;
    const auto seg_len = s.size() - seg_start;
    if (seg_len >= 4 && s.compare(s.size() - 3, 3, "ies") == 0) {
        s.replace(s.size() - 3, 3, "y");
    } else if (seg_len >= 3 && s.back() == 's' && s[s.size() - 2] != 's') {
        s.pop_back();
    }
    return s;
}

}  // namespace

// ---------------------------------------------------------------------------
// Catalog
// ---------------------------------------------------------------------------

const FieldSchema* EntitySchema::field(std::string_view n) const {
    const auto it = std::find_if(fields.begin(), fields.end(), [&](const FieldSchema& f) { return f.name == n; });
    return it == fields.end() ? nullptr : &*it;
}

const EntitySchema* SchemaCatalog::entity(std::string_view n) const {
    const auto it = std::find_if(entities.begin(), entities.end(), [&](const EntitySchema& e) { return e.name == n; });
    return it == entities.end() ? nullptr : &*it;
}

std::vector<std::string> SchemaCatalog::names() const {
    std::set<std::string> out;
    for (const auto& e : entities) {
        out.insert(e.name);
        for (const auto& f : e.fields) out.insert(f.name);
    }
    return {out.begin(), out.end()};
}

Json SchemaCatalog::to_json() const {
    Json out = Json::object();
    for (const auto& e : entities) {
        Json fields = Json::array();
        for (const auto& f : e.fields) fields.push_back({{"name", f.name}, {"type", std::string(evsynth::to_string(f.type))}});
        out[e.name] = {{"key", e.key_field}, {"fields", fields}};
    }
    return out;
}

SchemaCatalog catalog_for(const stores::MetadataStore& store) {
    (void)store.current_epoch();  // surfaces StoreUnavailable
    SchemaCatalog c;
    c.entities.push_back({"documents", "doc_id", "abstract", stores::document_fields()});
    c.entities.push_back({"chunks", "chunk_id", "text", chunk_fields()});
    return c;
}

// ---------------------------------------------------------------------------
// Resolution
// ---------------------------------------------------------------------------

std::string_view to_string(ResolutionMethod m) noexcept {
    switch (m) {
        case ResolutionMethod::Exact: return "exact";
        case ResolutionMethod::Normalized: return "normalized";
        case ResolutionMethod::Fuzzy: return "fuzzy";
    }
    return "exact";
}

bool ResolutionReport::all_resolved() const {
    return std::all_of(entries.begin(), entries.end(), [](const Resolution& r) { return r.resolved.has_value(); });
}

const Resolution* ResolutionReport::find(std::string_view raw) const {
    const auto it = std::find_if(entries.begin(), entries.end(), [&](const Resolution& r) { return r.raw == raw; });
    return it == entries.end() ? nullptr : &*it;
}

Json ResolutionReport::to_json() const {
    Json out = Json::array();
    for (const auto& r : entries) {
        out.push_back({
            {"raw", r.raw},
            {"resolved", r.resolved ? Json(*r.resolved) : Json(nullptr)},
            {"score", r.score},
            {"method", r.method ? Json(std::string(to_string(*r.method))) : Json(nullptr)},
            {"candidates", r.candidates},
        });
    }
    return out;
}

std::size_t edit_distance(std::string_view a, std::string_view b) {
    const std::size_t n = a.size();
    const std::size_t m = b.size();
    std::vector<std::vector<std::size_t>> d(n + 1, std::vector<std::size_t>(m + 1));
    for (std::size_t i = 0; i <= n; ++i) d[i][0] = i;
    for (std::size_t j = 0; j <= m; ++j) d[0][j] = j;
    for (std::size_t i = 1; i <= n; ++i) {
        for (std::size_t j = 1; j <= m; ++j) {
            const std::size_t cost = a[i - 1] == b[j - 1] ? 0 : 1;
            d[i][j] = std::min({d[i - 1][j] + 1, d[i][j - 1] + 1, d[i - 1][j - 1] + cost});
            if (i > 1 && j > 1 && a[i - 1] == b[j - 2] && a[i - 2] == b[j - 1]) {
                d[i][j] = std::min(d[i][j], d[i - 2][j - 2] + 1);
            }
        }
    }
    return d[n][m];
}

double similarity(std::string_view a, std::string_view b) {
    const std::size_t longest = std::max(a.size(), b.size());
    if (longest == 0) return 1.0;
    return 1.0 - static_cast<double>(edit_distance(a, b)) / static_cast<double>(longest);
}

std::string normalize_identifier(std::string_view raw) {
    std::string s;
    for (char c : text::trim(raw)) {
        if (c == ' ' || c == '-' || c == '\t') {
            if (s.empty() || s.back() != '_') s += '_';
        } else {
            s += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        }
    }
    return plural_strip(std::move(s));
}

ResolutionReport resolve_identifiers(const std::vector<std::string>& raw, const SchemaCatalog& catalog,
                                     double fuzzy_threshold) {
    if (!(fuzzy_threshold > 0.0 && fuzzy_threshold <= 1.0)) {
        throw Error(ErrorCode::InvalidArgument, "fuzzy threshold must lie in (0, 1]");
    }
    const auto names = catalog.names();
    std::map<std::string, std::set<std::string>> by_normal;
    for (const auto& n : names) by_normal[normalize_identifier(n)].insert(n);

    ResolutionReport report;
    std::set<std::string> seen;
    for (const auto& r : raw) {
        if (!seen.insert(r).second) continue;
        Resolution res;
        res.raw = r;
        if (std::find(names.begin(), names.end(), r) != names.end()) {
            res.resolved = r;
            res.score = 1.0;
            res.method = ResolutionMethod::Exact;
            res.candidates = {r};
            report.entries.push_back(std::move(res));
            continue;
        }
        const auto norm = normalize_identifier(r);
        std::set<std::string> hits;
        if (const auto it = by_normal.find(norm); it != by_normal.end()) hits = it->second;
        if (hits.empty()) {
            if (const auto it = synonyms().find(norm); it != synonyms().end() &&
                                                       std::find(names.begin(), names.end(), it->second) != names.end()) {
                hits.insert(it->second);
            }
        }
        if (hits.size() == 1) {
            res.resolved = *hits.begin();
            res.score = 1.0;
            res.method = ResolutionMethod::Normalized;
            res.candidates = {*hits.begin()};
            report.entries.push_back(std::move(res));
            continue;
        }
        if (hits.size() > 1) {
            res.score = 1.0;
            res.candidates.assign(hits.begin(), hits.end());
            report.entries.push_back(std::move(res));
            continue;
        }

        double best = -1.0;
        std::vector<std::string> best_names;
        const auto lowered = text::to_lower(text::trim(r));
        for (const auto& n : names) {
            const double s = similarity(lowered, n);
            if (s > best + 1e-12) {
                best = s;
                best_names = {n};
            } else if (std::abs(s - best) <= 1e-12) {
                best_names.push_back(n);
            }
        }
        res.score = std::max(best, 0.0);
        res.candidates = best_names;
        if (best_names.size() == 1 && best >= fuzzy_threshold - 1e-12) {
            res.resolved = best_names.front();
            res.method = ResolutionMethod::Fuzzy;
        }
        report.entries.push_back(std::move(res));
    }
    return report;
}

// ---------------------------------------------------------------------------
// AST
// ---------------------------------------------------------------------------

std::string_view to_string(Operation op) noexcept {
    switch (op) {
        case Operation::Count: return "count";
        case Operation::List: return "list";
        case Operation::GroupCount: return "group_count";
        case Operation::Proportion: return "proportion";
    }
    return "count";
}

std::optional<Operation> parse_operation(std::string_view s) {
    if (s == "count") return Operation::Count;
    if (s == "list") return Operation::List;
    if (s == "group_count") return Operation::GroupCount;
    if (s == "proportion") return Operation::Proportion;
    return std::nullopt;
}

Json to_json(const QueryAST& ast) {
    Json where = Json::array();
    for (const auto& p : ast.where) where.push_back(to_json(p));
    Json condition = Json::array();
    for (const auto& p : ast.condition) condition.push_back(to_json(p));
    return {
        {"operation", std::string(to_string(ast.operation))},
        {"entity", ast.entity},
        {"where", where},
        {"condition", condition},
        {"group_by", ast.group_by ? Json(*ast.group_by) : Json(nullptr)},
        {"limit", ast.limit ? Json(*ast.limit) : Json(nullptr)},
        {"fields", ast.fields},
    };
}

QueryAST ast_from_json(const Json& j) {
    if (!j.is_object()) throw Error(ErrorCode::InvalidQuery, "query AST must be a JSON object");
    QueryAST ast;
    const auto op = parse_operation(j.value("operation", std::string{}));
    if (!op) throw Error(ErrorCode::InvalidQuery, "unknown operation");
    ast.operation = *op;
    ast.entity = j.value("entity", std::string{"documents"});
    if (j.contains("where") && j["where"].is_array()) {
        for (const auto& p : j["where"]) ast.where.push_back(predicate_from_json(p));
    }
    if (j.contains("condition") && j["condition"].is_array()) {
        for (const auto& p : j["condition"]) ast.condition.push_back(predicate_from_json(p));
    }
    if (j.contains("group_by") && j["group_by"].is_string()) ast.group_by = j["group_by"].get<std::string>();
    if (j.contains("limit") && j["limit"].is_number_integer()) ast.limit = j["limit"].get<std::int64_t>();
    if (j.contains("fields") && j["fields"].is_array()) {
        for (const auto& f : j["fields"]) {
            if (f.is_string()) ast.fields.push_back(f.get<std::string>());
        }
    }
    return ast;
}

std::string render_sql(const QueryAST& ast) {
    std::string sql;
    auto where = ast.where;
    switch (ast.operation) {
        case Operation::Count: sql = "SELECT COUNT(*) FROM " + ast.entity; break;
        case Operation::List: {
            const auto cols = ast.fields.empty() ? default_columns(ast.entity) : ast.fields;
            std::string joined;
            for (std::size_t i = 0; i < cols.size(); ++i) joined += (i ? ", " : "") + cols[i];
            sql = "SELECT " + joined + " FROM " + ast.entity;
            break;
        }
        case Operation::GroupCount: {
            const auto g = ast.group_by.value_or("?");
            sql = "SELECT " + g + ", COUNT(*) FROM " + ast.entity;
            break;
        }
        case Operation::Proportion:
            sql = "SELECT SUM(CASE WHEN " + (ast.condition.empty() ? "?" : sql_where(ast.condition)) +
                  " THEN 1 ELSE 0 END) AS numerator, COUNT(*) AS denominator FROM " + ast.entity;
            break;
    }
    if (!where.empty()) sql += " WHERE " + sql_where(where);
    if (ast.operation == Operation::GroupCount && ast.group_by) {
        sql += " GROUP BY " + *ast.group_by + " ORDER BY " + *ast.group_by;
    }
    if (ast.limit) sql += " LIMIT " + std::to_string(*ast.limit);
    return sql;
}

namespace {

// "papers published after 2019" -> "papers where year > 2019"
std::string rewrite_publication_years(const std::string& q) {
    static const std::regex kPublished(
        R"re(\s+(?:that\s+)?(?:were\s+|was\s+)?published\s+(after|before|in|since)\s+(\d{4}))re", std::regex::icase);
    std::smatch m;
    if (!std::regex_search(q, m, kPublished)) return q;
    const auto word = text::to_lower(m[1].str());
    const char* op = word == "after" ? ">" : word == "before" ? "<" : word == "since" ? ">=" : "=";
    std::string cond = std::string("year ") + op + " " + m[2].str();
    std::string rest = text::trim(m.suffix().str());
    const bool has_where = std::regex_search(rest, std::regex(R"re(^(?:and|where|with)\b)re", std::regex::icase));
    if (has_where) rest = std::regex_replace(rest, std::regex(R"re(^(?:where|with)\b)re", std::regex::icase), "and");
    return m.prefix().str() + " where " + cond + (rest.empty() ? "" : " " + rest);
}

}  // namespace

std::optional<QueryAST> template_ast(const std::string& natural_query) {
    const std::string q = rewrite_publication_years(clean_query(natural_query));
    const auto icase = std::regex::icase;
    static const std::regex kProportion(
        R"re(^(?:what|which)\s+(?:proportion|percentage|fraction|share)\s+of\s+(?:the\s+|all\s+)?([A-Za-z][\w ]*?)\s+(?:have|has|are|is|with|where|meet|satisfy)\s+(.+)$)re",
        icase);
    static const std::regex kGroup(
        R"re(^(?:how many|count(?: the)?|number of|distribution of)\s+(?:the\s+|all\s+)?([A-Za-z][\w ]*?)\s+(?:per|by|for each|in each|grouped by)\s+([A-Za-z][\w ]*?)(?:\s+(?:where|with)\s+(.+))?$)re",
        icase);
    static const std::regex kTerm(
        R"re(^(?:how many|count(?: the)?|number of)\s+(?:the\s+|all\s+)?([A-Za-z][\w]*)\s+(?:that\s+)?(?:contain|containing|contains|mention|mentioning|mentions|include|including|includes)\s+(?:the\s+(?:term|word|phrase)\s+)?(.+)$)re",
        icase);
    static const std::regex kCount(
        R"re(^(?:how many|count(?: the)?|number of)\s+(?:the\s+|all\s+)?([A-Za-z][\w ]*?)(?:\s+(?:are there|exist|are in the corpus|in the corpus|do we have))?(?:\s+(?:where|with|that have|having)\s+(.+))?$)re",
        icase);
    static const std::regex kList(
        R"re(^(?:list|show|give me|display)\s+(?:(?:all|the|every|me)\s+)*(?:(?:top|first)\s+(\d+)\s+)?([A-Za-z][\w ]*?)(?:\s+(?:where|with)\s+(.+?))?(?:\s+limit\s+(\d+))?$)re",
        icase);

    std::smatch m;
    if (std::regex_match(q, m, kProportion)) {
        auto cond = parse_conditions(m[2].str());
        if (!cond) return std::nullopt;
        QueryAST ast;
        ast.operation = Operation::Proportion;
        ast.entity = text::trim(m[1].str());
        ast.condition = *cond;
        return ast;
    }
    if (std::regex_match(q, m, kGroup)) {
        QueryAST ast;
        ast.operation = Operation::GroupCount;
        ast.entity = text::trim(m[1].str());
        ast.group_by = text::trim(m[2].str());
        if (m[3].matched) {
            auto cond = parse_conditions(m[3].str());
            if (!cond) return std::nullopt;
            ast.where = *cond;
        }
        return ast;
    }
    if (std::regex_match(q, m, kTerm)) {
        const std::string term = strip_quotes(m[2].str());
        if (term.empty()) return std::nullopt;
        QueryAST ast;
        ast.operation = Operation::Count;
        ast.entity = m[1].str();
        ast.where.push_back({m[1].str(), Comparator::Contains, FieldValue{term}});
        return ast;
    }
    if (std::regex_match(q, m, kCount)) {
        QueryAST ast;
        ast.operation = Operation::Count;
        ast.entity = text::trim(m[1].str());
        if (m[2].matched) {
            auto cond = parse_conditions(m[2].str());
            if (!cond) return std::nullopt;
            ast.where = *cond;
        }
        return ast;
    }
    if (std::regex_match(q, m, kList)) {
        QueryAST ast;
        ast.operation = Operation::List;
        ast.entity = text::trim(m[2].str());
        if (m[1].matched) ast.limit = std::stoll(m[1].str());
        if (m[4].matched) ast.limit = std::stoll(m[4].str());
        if (m[3].matched) {
            auto cond = parse_conditions(m[3].str());
            if (!cond) return std::nullopt;
            ast.where = *cond;
        }
        return ast;
    }
    return std::nullopt;
}

namespace {

std::vector<std::string> raw_identifiers(const QueryAST& ast) {
    std::vector<std::string> ids{ast.entity};
    for (const auto& p : ast.where) ids.push_back(p.field);
    for (const auto& p : ast.condition) ids.push_back(p.field);
    if (ast.group_by) ids.push_back(*ast.group_by);
    for (const auto& f : ast.fields) ids.push_back(f);
    return ids;
}

// Rewrites raw identifiers to catalog names. An entity position that
// resolved to a field selects the entity owning that field; a field
// position that resolved to an entity becomes that entity's text field.
QueryAST apply_resolution(QueryAST ast, const ResolutionReport& report, const SchemaCatalog& catalog) {
    auto resolved = [&](const std::string& raw) { return *report.find(raw)->resolved; };

    const std::string entity_name = resolved(ast.entity);
    if (const auto* e = catalog.entity(entity_name)) {
        ast.entity = e->name;
    } else {
        ast.entity = "documents";
        for (const auto& e2 : catalog.entities) {
            if (e2.field(entity_name)) {
                ast.entity = e2.name;
                break;
            }
        }
    }
    const auto* entity = catalog.entity(ast.entity);

    auto fix_field = [&](const std::string& raw) {
        const std::string name = resolved(raw);
        if (const auto* as_entity = catalog.entity(name)) return as_entity->text_field;
        return name;
    };
    auto fix_preds = [&](std::vector<Predicate>& preds) {
        for (auto& p : preds) {
            p.field = fix_field(p.field);
            if (const auto* f = entity ? entity->field(p.field) : nullptr) p.literal = coerce_to(p.literal, f->type);
        }
    };
    fix_preds(ast.where);
    fix_preds(ast.condition);
    if (ast.group_by) ast.group_by = fix_field(*ast.group_by);
    for (auto& f : ast.fields) f = fix_field(f);
    return ast;
}

}  // namespace

GenerateResult generate(const std::string& natural_query, const SchemaCatalog& catalog, provider::Provider* provider,
                        double fuzzy_threshold) {
    if (catalog.entities.empty()) throw Error(ErrorCode::InvalidArgument, "schema catalog is empty");

    GenerateResult out;
    std::optional<QueryAST> proposal;
    if (provider != nullptr) {
        provider::GenerationRequest req;
        req.task = provider::Task::StructuredQuery;
        req.instruction =
            "Translate the question into a JSON query AST with keys operation (count, list, group_count, "
            "proportion), entity, where, condition, group_by, limit and fields. Use only names from this "
            "catalog: " +
            catalog.to_json().dump() + "\nQuestion: " + natural_query + "\nReply with the JSON object only.";
        try {
            const std::string reply = provider->generate(req);
            const auto l = reply.find('{');
            const auto r = reply.rfind('}');
            if (l != std::string::npos && r != std::string::npos && r > l) {
                proposal = ast_from_json(Json::parse(reply.substr(l, r - l + 1)));
                out.from_provider = true;
            }
        } catch (const Json::exception&) {
            proposal.reset();
        } catch (const Error& e) {
            if (e.code() == ErrorCode::ProviderUnavailable) throw;
            proposal.reset();
        }
    }
    if (!proposal) {
        out.from_provider = false;
        proposal = template_ast(natural_query);
    }
    if (!proposal) {
        // No template matched: report the content words so the caller sees why.
        std::vector<std::string> words;
        for (const auto& w : text::tokenize_words(natural_query)) {
            if (!text::is_stopword(w)) words.push_back(w);
        }
        out.report = resolve_identifiers(words, catalog, fuzzy_threshold);
        for (auto& e : out.report.entries) {
            e.resolved.reset();
            e.method.reset();
        }
        return out;
    }
    out.report = resolve_identifiers(raw_identifiers(*proposal), catalog, fuzzy_threshold);
    if (!out.report.all_resolved()) return out;
    out.ast = apply_resolution(std::move(*proposal), out.report, catalog);
    return out;
}

std::vector<std::string> validate(const QueryAST& ast, const SchemaCatalog& catalog) {
    std::vector<std::string> errors;
    const auto* entity = catalog.entity(ast.entity);
    if (entity == nullptr) {
        errors.push_back("unknown_entity: " + ast.entity);
    }

    auto check_preds = [&](const std::vector<Predicate>& preds, const char* where) {
        for (const auto& p : preds) {
            const FieldSchema* f = entity ? entity->field(p.field) : nullptr;
            if (f == nullptr) {
                errors.push_back(std::string("unknown_field: ") + where + " " + p.field);
                continue;
            }
            if (!comparator_allowed(f->type, p.op)) {
                errors.push_back("comparator_type: " + std::string(to_string(p.op)) + " on " +
                                 std::string(evsynth::to_string(f->type)) + " field " + p.field);
            } else if (!literal_compatible(f->type, p.op, p.literal)) {
                errors.push_back("literal_type: " + render(p) + " is incompatible with " +
                                 std::string(evsynth::to_string(f->type)) + " field " + p.field);
            }
        }
    };
    check_preds(ast.where, "where");
    check_preds(ast.condition, "condition");

    if (ast.operation == Operation::GroupCount) {
        if (!ast.group_by) {
            errors.push_back("group_by_required: group_count needs a group_by field");
        }
    } else if (ast.group_by) {
        errors.push_back("group_by_unexpected: only group_count groups");
    }
    if (ast.group_by && entity) {
        const auto* f = entity->field(*ast.group_by);
        if (f == nullptr) {
            errors.push_back("unknown_field: group_by " + *ast.group_by);
        } else if (f->type == FieldType::TextList) {
            errors.push_back("group_by_list_field: cannot group by list-typed field " + *ast.group_by);
        }
    }
    if (ast.limit && *ast.limit < 1) errors.push_back("limit_range: limit must be >= 1");
    if (ast.operation == Operation::Proportion) {
        if (ast.condition.empty()) errors.push_back("proportion_partition: proportion needs a condition");
        if (ast.limit) errors.push_back("limit_unexpected: proportion returns a single row");
    } else if (!ast.condition.empty()) {
        errors.push_back("condition_unexpected: only proportion takes a condition");
    }
    if (entity) {
        for (const auto& f : ast.fields) {
            if (!entity->field(f)) errors.push_back("unknown_field: fields " + f);
        }
    }
    if (!ast.fields.empty() && ast.operation != Operation::List) {
        errors.push_back("fields_unexpected: only list projects fields");
    }
    return errors;
}

// ---------------------------------------------------------------------------
// Execution
// ---------------------------------------------------------------------------

Json QueryResult::to_json() const {
    Json rows_json = Json::array();
    for (const auto& row : rows) {
        Json r = Json::array();
        for (const auto& v : row) r.push_back(evsynth::to_json(v));
        rows_json.push_back(std::move(r));
    }
    Json out{{"columns", columns}, {"rows", rows_json}};
    if (numerator) out["numerator"] = *numerator;
    if (denominator) out["denominator"] = *denominator;
    if (numerator || denominator) out["ratio"] = ratio ? Json(*ratio) : Json(nullptr);
    return out;
}

QueryResult execute(const QueryAST& ast, const stores::MetadataStore& store, std::optional<stores::Epoch> epoch,
                    const SchemaCatalog& catalog) {
    const auto errors = validate(ast, catalog);
    if (!errors.empty()) {
        std::string msg;
        for (const auto& e : errors) msg += (msg.empty() ? "" : "; ") + e;
        throw Error(ErrorCode::InvalidQuery, msg);
    }
    const stores::Epoch at = epoch.value_or(store.current_epoch());
    store.require_epoch(at);

    std::vector<MetadataView> rows;
    const auto docs = store.documents(at);
    if (ast.entity == "chunks") {
        for (const auto& d : docs) {
            for (const auto& c : store.chunks(d.doc_id, at)) rows.push_back(chunk_view(c));
        }
        std::sort(rows.begin(), rows.end(), [](const MetadataView& a, const MetadataView& b) {
            return std::get<std::string>(a.at("chunk_id")) < std::get<std::string>(b.at("chunk_id"));
        });
    } else {
        for (const auto& d : docs) rows.push_back(store.view(d.doc_id, at));
        std::sort(rows.begin(), rows.end(), [](const MetadataView& a, const MetadataView& b) {
            return std::get<std::string>(a.at("doc_id")) < std::get<std::string>(b.at("doc_id"));
        });
    }
    std::erase_if(rows, [&](const MetadataView& v) { return !matches_all(ast.where, v); });

    QueryResult out;
    const auto limit = ast.limit ? static_cast<std::size_t>(*ast.limit) : rows.size();
    switch (ast.operation) {
        case Operation::Count:
            out.columns = {"count"};
            out.rows.push_back({static_cast<std::int64_t>(rows.size())});
            break;
        case Operation::List: {
            out.columns = ast.fields.empty() ? default_columns(ast.entity) : ast.fields;
            for (std::size_t i = 0; i < rows.size() && i < limit; ++i) {
                std::vector<FieldValue> r;
                for (const auto& c : out.columns) r.push_back(lookup(rows[i], c));
                out.rows.push_back(std::move(r));
            }
            break;
        }
        case Operation::GroupCount: {
            out.columns = {*ast.group_by, "count"};
            std::map<FieldValue, std::int64_t> groups;
            for (const auto& v : rows) ++groups[lookup(v, *ast.group_by)];
            for (const auto& [key, n] : groups) {
                if (out.rows.size() >= limit) break;
                out.rows.push_back({key, n});
            }
            break;
        }
        case Operation::Proportion: {
            out.columns = {"numerator", "denominator"};
            const auto num = static_cast<std::size_t>(std::count_if(
                rows.begin(), rows.end(), [&](const MetadataView& v) { return matches_all(ast.condition, v); }));
            out.numerator = num;
            out.denominator = rows.size();
            if (!rows.empty()) out.ratio = static_cast<double>(num) / static_cast<double>(rows.size());
            out.rows.push_back({static_cast<std::int64_t>(num), static_cast<std::int64_t>(rows.size())});
            break;
        }
    }
    return out;
}

QueryResult execute(const QueryAST& ast, const stores::MetadataStore& store, std::optional<stores::Epoch> epoch) {
    return execute(ast, store, epoch, catalog_for(store));
}

}  // namespace evsynth::structq
