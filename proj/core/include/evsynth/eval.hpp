#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "evsynth/screen.hpp"
#include "evsynth/stores.hpp"
#include "evsynth/types.hpp"

namespace evsynth::eval {

// ---------------------------------------------------------------------------
// Confusion matrix
// ---------------------------------------------------------------------------

struct ConfusionCounts {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t tn = 0;
    std::size_t fn = 0;

    std::size_t total() const noexcept { return tp + fp + tn + fn; }
    /// Tallies one (predicted, actual) pair.
    void add(bool predicted, bool actual) noexcept;
};

/// Ratios are absent when their denominator is zero.
struct MetricReport {
    std::optional<double> precision;
    std::optional<double> recall;  // sensitivity
    std::optional<double> specificity;
    std::optional<double> accuracy;
    std::optional<double> f1;
};

/// Throws EmptyCounts when all four counts are zero.
MetricReport confusion_metrics(const ConfusionCounts& c);

/// Percentage with one decimal ("91.4") or "undefined".
std::string percent(const std::optional<double>& ratio);

Json to_json(const ConfusionCounts& c);
Json to_json(const MetricReport& r);
/// "metric,value" lines, percentages at one decimal.
std::string to_csv(const MetricReport& r);

// ---------------------------------------------------------------------------
// Agreement
// ---------------------------------------------------------------------------

/// Unweighted Cohen's kappa; 1 when expected agreement is exactly 1.
/// Throws LengthMismatch (including empty input).
double cohen_kappa(const std::vector<std::string>& a, const std::vector<std::string>& b);

double agreement_rate(const std::vector<std::string>& a, const std::vector<std::string>& b);
/// Share of positions where all three sequences agree.
double agreement_rate(const std::vector<std::string>& a, const std::vector<std::string>& b,
                      const std::vector<std::string>& c);

std::vector<std::string> as_strings(const std::vector<TernaryLabel>& labels);
/// yes and maybe become "true", no becomes "false".
std::vector<std::string> as_binary_strings(const std::vector<TernaryLabel>& labels);

/// Ternary labels compared strictly and after the binary mapping, side by side.
struct TernaryAgreement {
    double strict = 0.0;
    double binary = 0.0;
    double kappa_strict = 0.0;
    double kappa_binary = 0.0;
};

TernaryAgreement ternary_agreement(const std::vector<TernaryLabel>& a, const std::vector<TernaryLabel>& b);

// ---------------------------------------------------------------------------
// Retrieval and generation
// ---------------------------------------------------------------------------

/// Mean reciprocal rank of the first relevant item; misses count 0.
/// Throws EmptyQuerySet and LengthMismatch.
double mrr(const std::vector<std::vector<std::string>>& ranked, const std::vector<std::set<std::string>>& relevant);

enum class RougeVariant : std::uint8_t { Rouge1, Rouge2, RougeL };

std::string_view to_string(RougeVariant v) noexcept;
std::optional<RougeVariant> parse_rouge_variant(std::string_view s);

struct RougeScore {
    double precision = 0.0;
    double recall = 0.0;
    double f = 0.0;
    /// Set when either text has no tokens (or too few for bigrams).
    bool empty_input = false;
};

/// Tokens are lowercased alphanumeric runs; everything else separates.
std::vector<std::string> rouge_tokens(std::string_view s);
RougeScore rouge(const std::string& candidate, const std::string& reference, RougeVariant variant);

/// Mean pairwise cosine of retrieved items (0 for fewer than two).
double redundancy(const std::vector<stores::Embedding>& vectors);

// ---------------------------------------------------------------------------
// Dataset-level reports
// ---------------------------------------------------------------------------

struct DimensionEval {
    ConfusionCounts binary;
    MetricReport metrics;
    TernaryAgreement agreement;
};

struct ScreeningEval {
    std::map<Dimension, DimensionEval> dimensions;
    /// Include/exclude/maybe decisions compared strictly.
    double decision_agreement = 0.0;
    std::size_t examples = 0;

    Json to_json() const;
};

/// Positive class for the confusion matrix is the binary mapping (yes or
/// maybe). Throws LengthMismatch.
ScreeningEval evaluate_screening(const std::vector<screen::Labels>& predicted, const std::vector<screen::Labels>& gold);

struct RetrievalEval {
    double mrr = 0.0;
    std::size_t queries = 0;
    std::size_t hits = 0;  // queries with a relevant item anywhere in the list

    Json to_json() const;
};

/// `predicted` rows carry {"query_id", "ranked": [...]}; `gold` rows carry
/// {"query_id", "relevant": [...]}. Gold queries missing from the
/// predictions count as misses.
RetrievalEval evaluate_retrieval(const std::vector<Json>& predicted, const std::vector<Json>& gold);

}  // namespace evsynth::eval
