#include "evsynth/eval.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "evsynth/error.hpp"

namespace evsynth::eval {

namespace {

std::optional<double> ratio(std::size_t num, std::size_t den) {
    if (den == 0) return std::nullopt;
    return static_cast<double>(num) / static_cast<double>(den);
}

Json opt(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

void same_length(std::size_t a, std::size_t b) {
    if (a != b) throw Error(ErrorCode::LengthMismatch, std::to_string(a) + " vs " + std::to_string(b));
    if (a == 0) throw Error(ErrorCode::LengthMismatch, "sequences are empty");
}

std::map<std::vector<std::string>, std::size_t> ngram_counts(const std::vector<std::string>& toks, std::size_t n) {
    std::map<std::vector<std::string>, std::size_t> out;
    if (toks.size() < n) return out;
    for (std::size_t i = 0; i + n <= toks.size(); ++i) ++out[{toks.begin() + static_cast<long>(i), toks.begin() + static_cast<long>(i + n)}];
    return out;
}

std::size_t lcs(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    std::vector<std::size_t> prev(b.size() + 1, 0);
    std::vector<std::size_t> cur(b.size() + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j) {
            cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

RougeScore score_from(std::size_t overlap, std::size_t cand, std::size_t ref) {
    RougeScore s;
    if (cand == 0 || ref == 0) {
        s.empty_input = true;
        return s;
    }
    s.precision = static_cast<double>(overlap) / static_cast<double>(cand);
    s.recall = static_cast<double>(overlap) / static_cast<double>(ref);
    s.f = s.precision + s.recall > 0.0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
    return s;
}

}  // namespace

void ConfusionCounts::add(bool predicted, bool actual) noexcept {
    if (predicted && actual) ++tp;
    else if (predicted) ++fp;
    else if (actual) ++fn;
    else ++tn;
}

MetricReport confusion_metrics(const ConfusionCounts& c) {
    if (c.total() == 0) throw Error(ErrorCode::EmptyCounts, "confusion counts are all zero");
    MetricReport r;
    r.precision = ratio(c.tp, c.tp + c.fp);
    r.recall = ratio(c.tp, c.tp + c.fn);
    r.specificity = ratio(c.tn, c.tn + c.fp);
    r.accuracy = ratio(c.tp + c.tn, c.total());
    if (r.precision && r.recall && *r.precision + *r.recall > 0.0) {
        r.f1 = 2.0 * *r.precision * *r.recall / (*r.precision + *r.recall);
    } else if (r.precision && r.recall) {
        r.f1 = 0.0;
    }
    return r;
}

std::string percent(const std::optional<double>& v) {
    if (!v) return "undefined";
    std::ostringstream os;
    os << std::fixed << std::setprecision(1) << (*v * 100.0);
    return os.str();
}

Json to_json(const ConfusionCounts& c) { return {{"tp", c.tp}, {"fp", c.fp}, {"tn", c.tn}, {"fn", c.fn}}; }

Json to_json(const MetricReport& r) {
    return {{"precision", opt(r.precision)},
            {"recall", opt(r.recall)},
            {"specificity", opt(r.specificity)},
            {"accuracy", opt(r.accuracy)},
            {"f1", opt(r.f1)},
            {"display",
             {{"precision", percent(r.precision)},
              {"recall", percent(r.recall)},
              {"specificity", percent(r.specificity)},
              {"accuracy", percent(r.accuracy)},
              {"f1", percent(r.f1)}}}};
}

std::string to_csv(const MetricReport& r) {
    std::ostringstream os;
    os << "metric,value\n";
    os << "precision," << percent(r.precision) << '\n';
    os << "recall," << percent(r.recall) << '\n';
    os << "specificity," << percent(r.specificity) << '\n';
    os << "accuracy," << percent(r.accuracy) << '\n';
    os << "f1," << percent(r.f1) << '\n';
    return os.str();
}

double cohen_kappa(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    same_length(a.size(), b.size());
    const auto n = static_cast<double>(a.size());
    std::map<std::string, double> ca;
    std::map<std::string, double> cb;
    double agree = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ca[a[i]] += 1.0;
        cb[b[i]] += 1.0;
        if (a[i] == b[i]) agree += 1.0;
    }
    const double po = agree / n;
    double pe = 0.0;
    for (const auto& [label, count] : ca) {
        if (const auto it = cb.find(label); it != cb.end()) pe += (count / n) * (it->second / n);
    }
    if (std::abs(1.0 - pe) < 1e-15) return 1.0;
    return (po - pe) / (1.0 - pe);
}

double agreement_rate(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    same_length(a.size(), b.size());
    std::size_t same = 0;
    for (std::size_t i = 0; i < a.size(); ++i) same += a[i] == b[i];
    return static_cast<double>(same) / static_cast<double>(a.size());
}

double agreement_rate(const std::vector<std::string>& a, const std::vector<std::string>& b,
                      const std::vector<std::string>& c) {
    same_length(a.size(), b.size());
    same_length(a.size(), c.size());
    std::size_t same = 0;
    for (std::size_t i = 0; i < a.size(); ++i) same += a[i] == b[i] && b[i] == c[i];
    return static_cast<double>(same) / static_cast<double>(a.size());
}

std::vector<std::string> as_strings(const std::vector<TernaryLabel>& labels) {
    std::vector<std::string> out;
    for (const auto l : labels) out.emplace_back(to_string(l));
    return out;
}

std::vector<std::string> as_binary_strings(const std::vector<TernaryLabel>& labels) {
    std::vector<std::string> out;
    for (const auto l : labels) out.emplace_back(screen::to_binary(l) ? "true" : "false");
    return out;
}

TernaryAgreement ternary_agreement(const std::vector<TernaryLabel>& a, const std::vector<TernaryLabel>& b) {
    const auto sa = as_strings(a);
    const auto sb = as_strings(b);
    const auto ba = as_binary_strings(a);
    const auto bb = as_binary_strings(b);
    return {agreement_rate(sa, sb), agreement_rate(ba, bb), cohen_kappa(sa, sb), cohen_kappa(ba, bb)};
}

double mrr(const std::vector<std::vector<std::string>>& ranked, const std::vector<std::set<std::string>>& relevant) {
    if (ranked.empty()) throw Error(ErrorCode::EmptyQuerySet, "no queries");
    if (ranked.size() != relevant.size()) {
        throw Error(ErrorCode::LengthMismatch, std::to_string(ranked.size()) + " vs " + std::to_string(relevant.size()));
    }
    double total = 0.0;
    for (std::size_t q = 0; q < ranked.size(); ++q) {
        for (std::size_t r = 0; r < ranked[q].size(); ++r) {
            if (relevant[q].count(ranked[q][r])) {
                total += 1.0 / static_cast<double>(r + 1);
                break;
            }
        }
    }
    return total / static_cast<double>(ranked.size());
}

std::string_view to_string(RougeVariant v) noexcept {
    switch (v) {
        case RougeVariant::Rouge1: return "rouge1";
        case RougeVariant::Rouge2: return "rouge2";
        case RougeVariant::RougeL: return "rougeL";
    }
    return "rouge1";
}

std::optional<RougeVariant> parse_rouge_variant(std::string_view s) {
    if (s == "rouge1") return RougeVariant::Rouge1;
    if (s == "rouge2") return RougeVariant::Rouge2;
    if (s == "rougeL") return RougeVariant::RougeL;
    return std::nullopt;
}

std::vector<std::string> rouge_tokens(std::string_view s) {
    std::vector<std::string> out;
    std::string cur;
    for (const char ch : s) {
        const auto c = static_cast<unsigned char>(ch);
        if (std::isalnum(c) || c >= 0x80) {
            cur += static_cast<char>(std::tolower(c));
        } else if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

RougeScore rouge(const std::string& candidate, const std::string& reference, RougeVariant variant) {
    const auto c = rouge_tokens(candidate);
    const auto r = rouge_tokens(reference);
    if (variant == RougeVariant::RougeL) return score_from(lcs(c, r), c.size(), r.size());
    const std::size_t n = variant == RougeVariant::Rouge1 ? 1 : 2;
    const auto cc = ngram_counts(c, n);
    const auto rc = ngram_counts(r, n);
    std::size_t overlap = 0;
    std::size_t cand_total = 0;
    std::size_t ref_total = 0;
    for (const auto& [g, k] : cc) {
        cand_total += k;
        if (const auto it = rc.find(g); it != rc.end()) overlap += std::min(k, it->second);
    }
    for (const auto& [g, k] : rc) ref_total += k;
    return score_from(overlap, cand_total, ref_total);
}

double redundancy(const std::vector<stores::Embedding>& vectors) {
    if (vectors.size() < 2) return 0.0;
    double total = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < vectors.size(); ++i) {
        for (std::size_t j = i + 1; j < vectors.size(); ++j) {
            const double na = stores::l2_norm(vectors[i]);
            const double nb = stores::l2_norm(vectors[j]);
            total += na > 0.0 && nb > 0.0 ? stores::dot(vectors[i], vectors[j]) / (na * nb) : 0.0;
            ++pairs;
        }
    }
    return total / static_cast<double>(pairs);
}

Json ScreeningEval::to_json() const {
    Json dims = Json::object();
    for (const auto& [d, e] : dimensions) {
        dims[evsynth::to_string(d)] = {{"counts", eval::to_json(e.binary)},
                                       {"metrics", eval::to_json(e.metrics)},
                                       {"agreement",
                                        {{"strict", e.agreement.strict},
                                         {"binary", e.agreement.binary},
                                         {"kappa_strict", e.agreement.kappa_strict},
                                         {"kappa_binary", e.agreement.kappa_binary}}}};
    }
    return {{"examples", examples}, {"decision_agreement", decision_agreement}, {"dimensions", dims}};
}

ScreeningEval evaluate_screening(const std::vector<screen::Labels>& predicted, const std::vector<screen::Labels>& gold) {
    same_length(predicted.size(), gold.size());
    ScreeningEval out;
    out.examples = gold.size();
    for (const auto d : kAllDimensions) {
        const auto i = static_cast<std::size_t>(d);
        std::vector<TernaryLabel> p;
        std::vector<TernaryLabel> g;
        DimensionEval e;
        for (std::size_t n = 0; n < gold.size(); ++n) {
            p.push_back(predicted[n][i]);
            g.push_back(gold[n][i]);
            e.binary.add(screen::to_binary(predicted[n][i]), screen::to_binary(gold[n][i]));
        }
        e.metrics = confusion_metrics(e.binary);
        e.agreement = ternary_agreement(p, g);
        out.dimensions[d] = e;
    }
    std::size_t same = 0;
    for (std::size_t n = 0; n < gold.size(); ++n) {
        same += screen::aggregate_qualification(predicted[n]) == screen::aggregate_qualification(gold[n]);
    }
    out.decision_agreement = static_cast<double>(same) / static_cast<double>(gold.size());
    return out;
}

Json RetrievalEval::to_json() const { return {{"mrr", mrr}, {"queries", queries}, {"hits", hits}}; }

RetrievalEval evaluate_retrieval(const std::vector<Json>& predicted, const std::vector<Json>& gold) {
    std::map<std::string, std::vector<std::string>> ranked_by_id;
    for (const auto& row : predicted) {
        const auto id = row.at("query_id").get<std::string>();
        ranked_by_id[id] = row.value("ranked", std::vector<std::string>{});
    }
    std::vector<std::vector<std::string>> ranked;
    std::vector<std::set<std::string>> relevant;
    for (const auto& row : gold) {
        const auto id = row.at("query_id").get<std::string>();
        const auto rel = row.value("relevant", std::vector<std::string>{});
        ranked.push_back(ranked_by_id.count(id) ? ranked_by_id[id] : std::vector<std::string>{});
        relevant.emplace_back(rel.begin(), rel.end());
    }
    RetrievalEval out;
    out.mrr = eval::mrr(ranked, relevant);
    out.queries = ranked.size();
    for (std::size_t q = 0; q < ranked.size(); ++q) {
        out.hits += std::any_of(ranked[q].begin(), ranked[q].end(),
                                [&](const std::string& id) { return relevant[q].count(id) > 0; });
    }
    return out;
}

}  // namespace evsynth::eval
