#include "evsynth/topics.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <sstream>

#include "evsynth/error.hpp"
#include "evsynth/text.hpp"

namespace evsynth::topics {

namespace {

double sq_dist(const Embedding& a, const Embedding& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

std::size_t nearest(const Embedding& x, const std::vector<Embedding>& centroids) {
    std::size_t best = 0;
    double best_d = sq_dist(x, centroids[0]);
    for (std::size_t c = 1; c < centroids.size(); ++c) {
        const double d = sq_dist(x, centroids[c]);
        if (d < best_d) {
            best_d = d;
            best = c;
        }
    }
    return best;
}

std::vector<Embedding> seed_centroids(const std::vector<Embedding>& pts, std::size_t k, std::mt19937_64& rng) {
    std::vector<Embedding> centroids;
    std::vector<bool> chosen(pts.size(), false);
    std::uniform_int_distribution<std::size_t> first(0, pts.size() - 1);
    const std::size_t f = first(rng);
    centroids.push_back(pts[f]);
    chosen[f] = true;
    std::vector<double> d2(pts.size());
    while (centroids.size() < k) {
        double total = 0.0;
        for (std::size_t i = 0; i < pts.size(); ++i) {
            d2[i] = chosen[i] ? 0.0 : sq_dist(pts[i], centroids[nearest(pts[i], centroids)]);
            total += d2[i];
        }
        std::size_t pick = 0;
        if (total <= 0.0) {
            // Remaining points coincide with centroids; take the first unused one.
            pick = static_cast<std::size_t>(std::find(chosen.begin(), chosen.end(), false) - chosen.begin());
        } else {
            std::uniform_real_distribution<double> u(0.0, total);
            double r = u(rng);
            for (pick = 0; pick < pts.size(); ++pick) {
                if (chosen[pick]) continue;
                r -= d2[pick];
                if (r <= 0.0) break;
            }
            if (pick >= pts.size()) {
                for (pick = pts.size(); pick-- > 0;) {
                    if (!chosen[pick] && d2[pick] > 0.0) break;
                }
            }
        }
        chosen[pick] = true;
        centroids.push_back(pts[pick]);
    }
    return centroids;
}

struct Clustering {
    std::vector<Embedding> centroids;
    std::vector<std::size_t> labels;
};

Clustering lloyd(const std::vector<Embedding>& pts, std::size_t k, std::uint64_t seed, std::size_t max_iterations) {
    std::mt19937_64 rng(seed);
    Clustering c;
    c.centroids = seed_centroids(pts, k, rng);
    c.labels.assign(pts.size(), 0);
    for (std::size_t i = 0; i < pts.size(); ++i) c.labels[i] = nearest(pts[i], c.centroids);

    const std::size_t dim = pts.front().size();
    for (std::size_t it = 0; it < max_iterations; ++it) {
        std::vector<Embedding> sums(k, Embedding(dim, 0.0));
        std::vector<std::size_t> counts(k, 0);
        for (std::size_t i = 0; i < pts.size(); ++i) {
            ++counts[c.labels[i]];
            for (std::size_t d = 0; d < dim; ++d) sums[c.labels[i]][d] += pts[i][d];
        }
        for (std::size_t j = 0; j < k; ++j) {
            if (counts[j] == 0) continue;  // empty cluster keeps its centroid
            auto next = stores::normalized(std::move(sums[j]));
            if (stores::l2_norm(next) > 0.0) c.centroids[j] = std::move(next);
        }
        bool changed = false;
        for (std::size_t i = 0; i < pts.size(); ++i) {
            const auto l = nearest(pts[i], c.centroids);
            if (l != c.labels[i]) {
                c.labels[i] = l;
                changed = true;
            }
        }
        if (!changed) break;
    }
    return c;
}

}  // namespace

std::size_t TopicModel::outlier_count() const {
    return static_cast<std::size_t>(std::count_if(assignments.begin(), assignments.end(),
                                                  [](const auto& kv) { return kv.second == kOutlierTopic; }));
}

Json TopicModel::to_json() const {
    Json topics = Json::array();
    for (const auto& s : summaries) {
        Json rep = Json::array();
        for (const auto& [t, w] : s.representation) rep.push_back({{"term", t}, {"weight", w}});
        topics.push_back({{"topic_id", s.topic_id}, {"name", s.name}, {"size", s.size}, {"representation", rep}});
    }
    Json assign = Json::object();
    for (const auto& [d, t] : assignments) assign[d] = t;
    return {{"k", centroids.size()},
            {"seed", seed},
            {"outlier_percentile", outlier_percentile},
            {"outlier_cutoff", outlier_cutoff},
            {"outliers", outlier_count()},
            {"assignments", assign},
            {"topics", topics}};
}

double silhouette(const std::vector<Embedding>& points, const std::vector<std::size_t>& labels) {
    if (points.size() != labels.size()) throw Error(ErrorCode::LengthMismatch, "points and labels differ in length");
    if (points.empty()) return 0.0;
    const std::size_t k = *std::max_element(labels.begin(), labels.end()) + 1;
    std::vector<std::size_t> size(k, 0);
    for (const auto l : labels) ++size[l];
    double total = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
        if (size[labels[i]] <= 1) continue;
        std::vector<double> sum(k, 0.0);
        for (std::size_t j = 0; j < points.size(); ++j) {
            if (i != j) sum[labels[j]] += std::sqrt(sq_dist(points[i], points[j]));
        }
        const double a = sum[labels[i]] / static_cast<double>(size[labels[i]] - 1);
        double b = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < k; ++c) {
            if (c != labels[i] && size[c] > 0) b = std::min(b, sum[c] / static_cast<double>(size[c]));
        }
        if (!std::isfinite(b)) continue;
        const double m = std::max(a, b);
        total += m > 0.0 ? (b - a) / m : 0.0;
    }
    return total / static_cast<double>(points.size());
}

double nearest_rank_percentile(std::vector<double> values, double p) {
    if (values.empty()) throw Error(ErrorCode::InvalidArgument, "percentile of an empty set");
    if (!(p > 0.0 && p <= 100.0)) throw Error(ErrorCode::InvalidArgument, "percentile must lie in (0, 100]");
    std::sort(values.begin(), values.end());
    auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * static_cast<double>(values.size())));
    rank = std::clamp<std::size_t>(rank, 1, values.size());
    return values[rank - 1];
}

TopicModel fit(const std::vector<DocEmbedding>& docs, const FitConfig& config) {
    if (docs.empty()) throw Error(ErrorCode::TooFewDocuments, "no documents to cluster");
    if (config.k && *config.k == 0) throw Error(ErrorCode::InvalidArgument, "k must be >= 1");
    if (config.k && docs.size() < *config.k) {
        throw Error(ErrorCode::TooFewDocuments,
                    std::to_string(docs.size()) + " documents for k = " + std::to_string(*config.k));
    }
    if (!(config.outlier_percentile > 0.0 && config.outlier_percentile <= 100.0)) {
        throw Error(ErrorCode::InvalidArgument, "outlier percentile must lie in (0, 100]");
    }
    std::vector<Embedding> pts;
    const std::size_t dim = docs.front().second.size();
    for (const auto& [id, e] : docs) {
        if (e.size() != dim || dim == 0) throw Error(ErrorCode::DimensionMismatch, "embedding size differs for " + id);
        pts.push_back(stores::normalized(e));
    }

    Clustering best;
    std::size_t k = 1;
    if (config.k) {
        k = *config.k;
        best = lloyd(pts, k, config.seed, config.max_iterations);
    } else {
        const auto upper = static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(pts.size()))));
        if (upper < 2) {
            best = lloyd(pts, 1, config.seed, config.max_iterations);
        } else {
            double best_score = -std::numeric_limits<double>::infinity();
            for (std::size_t cand = 2; cand <= upper; ++cand) {
                auto c = lloyd(pts, cand, config.seed, config.max_iterations);
                const double s = silhouette(pts, c.labels);
                if (s > best_score + 1e-12) {
                    best_score = s;
                    best = std::move(c);
                    k = cand;
                }
            }
        }
    }

    TopicModel model;
    model.centroids = best.centroids;
    model.seed = config.seed;
    model.outlier_percentile = config.outlier_percentile;
    std::vector<double> dists;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const double d = std::sqrt(sq_dist(pts[i], best.centroids[best.labels[i]]));
        model.doc_ids.push_back(docs[i].first);
        model.distances[docs[i].first] = d;
        dists.push_back(d);
    }
    model.outlier_cutoff = nearest_rank_percentile(dists, config.outlier_percentile);
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const bool outlier = config.outlier_percentile < 100.0 && dists[i] > model.outlier_cutoff + 1e-12;
        model.assignments[docs[i].first] = outlier ? kOutlierTopic : static_cast<int>(best.labels[i]);
    }
    model.fitted = true;
    return model;
}

std::vector<TopicSummary> topic_terms(TopicModel& model, const std::map<std::string, std::string>& doc_texts) {
    if (!model.fitted) throw Error(ErrorCode::UnfittedModel, "fit the topic model first");
    std::map<int, std::map<std::string, double>> tf;
    std::map<int, std::size_t> length;
    std::map<int, std::size_t> sizes;
    for (const auto& [doc, topic] : model.assignments) {
        const auto it = doc_texts.find(doc);
        if (it == doc_texts.end()) throw Error(ErrorCode::InvalidArgument, "no text for document " + doc);
        ++sizes[topic];
        auto& counts = tf[topic];
        for (const auto& t : text::content_terms(it->second)) {
            counts[t] += 1.0;
            ++length[topic];
        }
    }
    std::map<std::string, double> corpus_freq;
    double total_len = 0.0;
    for (const auto& [topic, counts] : tf) {
        for (const auto& [t, n] : counts) corpus_freq[t] += n;
        total_len += static_cast<double>(length[topic]);
    }
    const double avg_len = tf.empty() ? 0.0 : total_len / static_cast<double>(tf.size());

    std::vector<TopicSummary> out;
    for (const auto& [topic, counts] : tf) {
        std::vector<std::pair<std::string, double>> weights;
        for (const auto& [t, n] : counts) weights.emplace_back(t, n * std::log(1.0 + avg_len / corpus_freq[t]));
        std::sort(weights.begin(), weights.end(), [](const auto& a, const auto& b) {
            return a.second != b.second ? a.second > b.second : a.first < b.first;
        });
        if (weights.size() > 10) weights.resize(10);
        TopicSummary s;
        s.topic_id = topic;
        s.size = sizes[topic];
        s.representation = weights;
        for (std::size_t i = 0; i < weights.size() && i < 4; ++i) s.name += (i ? "_" : "") + weights[i].first;
        out.push_back(std::move(s));
    }
    model.summaries = out;
    return out;
}

std::size_t HeatmapMatrix::total() const {
    std::size_t n = 0;
    for (const auto& row : cells) {
        for (const auto c : row) n += c;
    }
    return n;
}

std::size_t HeatmapMatrix::at(int topic, int year) const {
    const auto r = std::find(topics.begin(), topics.end(), topic);
    const auto c = std::find(years.begin(), years.end(), year);
    if (r == topics.end() || c == years.end()) return 0;
    return cells[static_cast<std::size_t>(r - topics.begin())][static_cast<std::size_t>(c - years.begin())];
}

std::string HeatmapMatrix::to_csv() const {
    std::ostringstream os;
    os << "topic,year,count\n";
    for (std::size_t r = 0; r < topics.size(); ++r) {
        for (std::size_t c = 0; c < years.size(); ++c) os << topics[r] << ',' << years[c] << ',' << cells[r][c] << '\n';
    }
    return os.str();
}

Json HeatmapMatrix::to_json() const {
    return {{"topics", topics}, {"years", years}, {"cells", cells}, {"outliers", outliers}};
}

HeatmapMatrix heatmap(const TopicModel& model, const std::map<std::string, std::optional<int>>& years,
                      bool include_outliers) {
    if (!model.fitted) throw Error(ErrorCode::UnfittedModel, "fit the topic model first");
    HeatmapMatrix m;
    std::vector<std::string> missing;
    std::map<int, std::map<int, std::size_t>> counts;
    std::set<int> topic_ids;
    for (int t = 0; t < static_cast<int>(model.k()); ++t) topic_ids.insert(t);
    std::optional<int> lo;
    std::optional<int> hi;
    for (const auto& [doc, topic] : model.assignments) {
        if (topic == kOutlierTopic && !include_outliers) {
            ++m.outliers;
            continue;
        }
        const auto it = years.find(doc);
        if (it == years.end() || !it->second) {
            missing.push_back(doc);
            continue;
        }
        const int y = *it->second;
        topic_ids.insert(topic);
        ++counts[topic][y];
        lo = lo ? std::min(*lo, y) : y;
        hi = hi ? std::max(*hi, y) : y;
    }
    if (!missing.empty()) {
        std::string list;
        for (const auto& d : missing) list += (list.empty() ? "" : ", ") + d;
        throw Error(ErrorCode::MissingYear, list);
    }
    m.topics.assign(topic_ids.begin(), topic_ids.end());
    if (lo) {
        for (int y = *lo; y <= *hi; ++y) m.years.push_back(y);
    }
    for (const int t : m.topics) {
        std::vector<std::size_t> row;
        for (const int y : m.years) {
            const auto ti = counts.find(t);
            std::size_t n = 0;
            if (ti != counts.end()) {
                if (const auto yi = ti->second.find(y); yi != ti->second.end()) n = yi->second;
            }
            row.push_back(n);
        }
        m.cells.push_back(std::move(row));
    }
    return m;
}

std::vector<std::string> topic_query_terms(const TopicModel& model, int topic_id, std::size_t m) {
    if (!model.fitted) throw Error(ErrorCode::UnfittedModel, "fit the topic model first");
    const auto it = std::find_if(model.summaries.begin(), model.summaries.end(),
                                 [&](const TopicSummary& s) { return s.topic_id == topic_id; });
    if (it == model.summaries.end()) throw Error(ErrorCode::UnknownTopic, std::to_string(topic_id));
    std::vector<std::string> out;
    for (std::size_t i = 0; i < it->representation.size() && i < m; ++i) out.push_back(it->representation[i].first);
    return out;
}

retrieve::StructuredQuery augment_query(retrieve::StructuredQuery query, const std::vector<std::string>& terms) {
    for (const auto& t : terms) {
        if (t.empty()) continue;
        if (!query.semantic_text.empty()) query.semantic_text += ' ';
        query.semantic_text += t;
    }
    return query;
}

std::vector<DocEmbedding> document_embeddings(const stores::DataPlane& plane, std::optional<stores::Epoch> at) {
    std::map<std::string, Embedding> sums;
    for (const auto& e : plane.vectors().entries(at)) {
        auto& s = sums[e.doc_id];
        if (s.empty()) s.assign(e.embedding.size(), 0.0);
        for (std::size_t i = 0; i < s.size(); ++i) s[i] += e.embedding[i];
    }
    std::vector<DocEmbedding> out;
    for (auto& [doc, v] : sums) {
        auto n = stores::normalized(std::move(v));
        if (stores::l2_norm(n) > 0.0) out.emplace_back(doc, std::move(n));
    }
    return out;
}

void persist(const TopicModel& model, stores::DataPlane& plane) {
    if (!model.fitted) throw Error(ErrorCode::UnfittedModel, "fit the topic model first");
    std::map<int, std::string> names;
    for (const auto& s : model.summaries) names[s.topic_id] = s.name;

    std::vector<stores::GraphNode> nodes;
    std::set<int> used;
    for (const auto& [doc, topic] : model.assignments) used.insert(topic);
    for (const int t : used) {
        Json props{{"topic_id", t}};
        if (const auto it = names.find(t); it != names.end()) props["name"] = it->second;
        nodes.push_back({"topic:" + std::to_string(t), stores::NodeLabel::Topic, props});
    }
    std::vector<stores::GraphEdge> edges;
    for (const auto& [doc, topic] : model.assignments) {
        auto ann = plane.metadata().annotations(doc).value_or(stores::AnnotationSet{});
        ann.topic_id = topic;
        plane.upsert_annotations(doc, ann, "topics");
        if (!plane.graph().has_node(doc)) {
            const auto rec = plane.metadata().get(doc);
            nodes.push_back({doc, stores::NodeLabel::Paper, Json{{"title", rec ? rec->title : std::string{}}}});
        }
        plane.graph().remove_edges(doc, "ASSIGNED_TO");
        edges.push_back({doc, "topic:" + std::to_string(topic), "ASSIGNED_TO"});
    }
    plane.graph().add(nodes, edges);
}

}  // namespace evsynth::topics
