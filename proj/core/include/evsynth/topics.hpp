#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "evsynth/retrieve.hpp"
#include "evsynth/stores.hpp"
#include "evsynth/types.hpp"

namespace evsynth::topics {

using stores::Embedding;

inline constexpr int kOutlierTopic = -1;

struct FitConfig {
    /// Number of clusters; chosen by mean silhouette over [2, sqrt(n)] when absent.
    std::optional<std::size_t> k;
    std::uint64_t seed = 42;
    /// Documents farther from their centroid than this nearest-rank
    /// percentile of all distances become outliers. 100 disables the rule.
    double outlier_percentile = 98.0;
    std::size_t max_iterations = 200;
};

struct TopicSummary {
    int topic_id = 0;
    std::string name;  // top four terms joined by '_'
    std::vector<std::pair<std::string, double>> representation;  // top ten, best first
    std::size_t size = 0;
};

struct TopicModel {
    std::vector<Embedding> centroids;
    std::vector<std::string> doc_ids;  // fit order
    std::map<std::string, int> assignments;
    /// Euclidean distance of each document to its nearest centroid.
    std::map<std::string, double> distances;
    double outlier_percentile = 98.0;
    double outlier_cutoff = 0.0;
    std::uint64_t seed = 0;
    std::vector<TopicSummary> summaries;  // filled by topic_terms
    bool fitted = false;

    std::size_t k() const noexcept { return centroids.size(); }
    std::size_t outlier_count() const;
    Json to_json() const;
};

using DocEmbedding = std::pair<std::string, Embedding>;

/// Seeded k-means++ with spherical centroids. Throws TooFewDocuments when
/// there are no documents or fewer than k, InvalidArgument on bad settings.
TopicModel fit(const std::vector<DocEmbedding>& docs, const FitConfig& config = {});

/// Mean silhouette of an assignment (Euclidean distance, singletons score 0).
double silhouette(const std::vector<Embedding>& points, const std::vector<std::size_t>& labels);

/// Nearest-rank percentile of `values` (p in (0, 100]).
double nearest_rank_percentile(std::vector<double> values, double p);

/// Class-based TF-IDF: tf(t, c) * log(1 + A / f(t)), with A the mean class
/// length in tokens and f(t) the frequency of t over all classes. Tokens are
/// stemmed, stopword-free unigrams. Stores and returns one summary per topic
/// (outliers included when present). Throws UnfittedModel and
/// InvalidArgument when a text is missing.
std::vector<TopicSummary> topic_terms(TopicModel& model, const std::map<std::string, std::string>& doc_texts);

struct HeatmapMatrix {
    std::vector<int> topics;  // row labels
    std::vector<int> years;   // column labels, min..max contiguous
    std::vector<std::vector<std::size_t>> cells;
    std::size_t outliers = 0;

    std::size_t total() const;
    std::size_t at(int topic, int year) const;
    /// "topic,year,count" with one line per cell.
    std::string to_csv() const;
    Json to_json() const;
};

/// Counts per (topic, year), zero-filled. Throws MissingYear naming the
/// documents without a year.
HeatmapMatrix heatmap(const TopicModel& model, const std::map<std::string, std::optional<int>>& years,
                      bool include_outliers = false);

/// Top-m representation terms. Throws UnknownTopic and UnfittedModel.
std::vector<std::string> topic_query_terms(const TopicModel& model, int topic_id, std::size_t m);

/// Appends terms to the semantic text; predicates are left untouched.
retrieve::StructuredQuery augment_query(retrieve::StructuredQuery query, const std::vector<std::string>& terms);

/// Mean chunk embedding per document, renormalized, sorted by doc_id.
std::vector<DocEmbedding> document_embeddings(const stores::DataPlane& plane,
                                              std::optional<stores::Epoch> at = std::nullopt);

/// Writes topic_id annotations and Topic nodes with ASSIGNED_TO edges
/// (Paper -> Topic), replacing earlier assignments.
void persist(const TopicModel& model, stores::DataPlane& plane);

}  // namespace evsynth::topics
