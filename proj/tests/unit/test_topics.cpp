#include <gtest/gtest.h>

#include <random>

#include "evsynth/topics.hpp"
#include "expect_error.hpp"
#include "fixtures.hpp"

using namespace evsynth;
using namespace evsynth::topics;

namespace {

// n points per blob around two orthogonal axes.
std::vector<DocEmbedding> two_blobs(std::uint64_t seed, std::size_t n, std::map<std::string, int>& truth) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, 0.05);
    std::vector<DocEmbedding> docs;
    for (int blob = 0; blob < 2; ++blob) {
        for (std::size_t i = 0; i < n; ++i) {
            Embedding v(8);
            for (auto& x : v) x = noise(rng);
            v[static_cast<std::size_t>(blob)] += 1.0;
            const std::string id = "b" + std::to_string(blob) + "_" + std::to_string(i);
            truth[id] = blob;
            docs.emplace_back(id, stores::normalized(v));
        }
    }
    return docs;
}

TopicModel manual_model(std::size_t k, std::map<std::string, int> assignments) {
    TopicModel m;
    m.centroids.assign(k, Embedding{1.0});
    m.assignments = std::move(assignments);
    for (const auto& [d, t] : m.assignments) m.doc_ids.push_back(d);
    m.fitted = true;
    return m;
}

}  // namespace

TEST(Fit, TwoBlobsRecovered) {
    std::map<std::string, int> truth;
    const auto docs = two_blobs(1, 12, truth);
    FitConfig cfg;
    cfg.k = 2;
    cfg.outlier_percentile = 100.0;
    const auto m = fit(docs, cfg);
    const int first = m.assignments.at("b0_0");
    for (const auto& [id, blob] : truth) EXPECT_EQ(m.assignments.at(id) == first, blob == 0) << id;
    EXPECT_EQ(m.outlier_count(), 0u);
}

TEST(Fit, SilhouettePicksTwoForTwoBlobs) {
    std::map<std::string, int> truth;
    const auto m = fit(two_blobs(2, 10, truth), FitConfig{std::nullopt, 42, 100.0, 200});
    EXPECT_EQ(m.k(), 2u);
}

TEST(Fit, SingleDocument) {
    const auto m = fit({{"only", {1.0, 0.0}}}, FitConfig{1, 42, 98.0, 200});
    EXPECT_EQ(m.k(), 1u);
    EXPECT_EQ(m.assignments.at("only"), 0);
    EXPECT_EQ(m.outlier_count(), 0u);
}

TEST(Fit, Deterministic) {
    std::map<std::string, int> truth;
    const auto docs = two_blobs(3, 15, truth);
    FitConfig cfg;
    cfg.k = 3;
    EXPECT_EQ(fit(docs, cfg).assignments, fit(docs, cfg).assignments);
}

TEST(Fit, Preconditions) {
    EXPECT_ERROR(fit({}), ErrorCode::TooFewDocuments);
    EXPECT_ERROR(fit({{"a", {1.0}}}, FitConfig{2, 42, 98.0, 200}), ErrorCode::TooFewDocuments);
    EXPECT_ERROR(fit({{"a", {1.0}}}, FitConfig{1, 42, 0.0, 200}), ErrorCode::InvalidArgument);
}

TEST(Fit, FarPointBecomesOutlier) {
    std::map<std::string, int> truth;
    auto docs = two_blobs(4, 30, truth);
    Embedding far(8, 0.0);
    far[5] = 1.0;
    docs.emplace_back("far", far);
    FitConfig cfg;
    cfg.k = 2;
    cfg.outlier_percentile = 98.0;
    const auto m = fit(docs, cfg);
    EXPECT_EQ(m.assignments.at("far"), kOutlierTopic);
}

TEST(Percentile, NearestRank) {
    EXPECT_DOUBLE_EQ(nearest_rank_percentile({1, 2, 3, 4, 5, 6, 7, 8, 9, 10}, 90), 9);
    EXPECT_DOUBLE_EQ(nearest_rank_percentile({5, 1, 3}, 100), 5);
}

TEST(Silhouette, SeparatedClustersScoreHigh) {
    const std::vector<Embedding> pts{{0, 0}, {0, 0.1}, {10, 10}, {10, 10.1}};
    EXPECT_GT(silhouette(pts, {0, 0, 1, 1}), 0.9);
    EXPECT_LT(silhouette(pts, {0, 1, 0, 1}), 0.0);
}

TEST(Terms, DisjointVocabulariesTopTermIsExclusive) {
    auto m = manual_model(2, {{"d1", 0}, {"d2", 0}, {"d3", 0}, {"d4", 1}, {"d5", 1}, {"d6", 1}});
    const std::map<std::string, std::string> texts{
        {"d1", "walking walking balance"}, {"d2", "walking gait"},         {"d3", "walking balance"},
        {"d4", "memory memory cognition"}, {"d5", "memory recall"},       {"d6", "memory cognition"}};
    const auto s = topic_terms(m, texts);
    ASSERT_EQ(s.size(), 2u);
    EXPECT_EQ(s[0].representation.front().first, "walk");
    EXPECT_EQ(s[1].representation.front().first, "memori");
    EXPECT_EQ(s[0].size, 3u);
}

TEST(Terms, NameJoinsTopFourWithUnderscores) {
    auto m = manual_model(1, {{"d1", 0}, {"d2", 0}});
    const auto s = topic_terms(m, {{"d1", "alpha alpha alpha alpha beta beta beta gamma gamma delta"},
                                   {"d2", "epsilon"}});
    EXPECT_EQ(s[0].name, "alpha_beta_gamma_delta");
}

TEST(Terms, SharedTermWeighsLessThanExclusive) {
    auto m = manual_model(2, {{"d1", 0}, {"d2", 1}});
    const auto s = topic_terms(m, {{"d1", "common unique"}, {"d2", "common other"}});
    double common = 0, unique = 0;
    for (const auto& [t, w] : s[0].representation) {
        if (t == "common") common = w;
        if (t == "uniqu") unique = w;
    }
    EXPECT_GT(unique, 0.0);
    EXPECT_LT(common, unique);
}

TEST(Terms, MissingTextOrUnfitted) {
    auto m = manual_model(1, {{"d1", 0}});
    EXPECT_ERROR(topic_terms(m, {}), ErrorCode::InvalidArgument);
    TopicModel unfitted;
    EXPECT_ERROR(topic_terms(unfitted, {}), ErrorCode::UnfittedModel);
}

TEST(QueryTerms, HeadAndTruncation) {
    auto m = manual_model(1, {{"d1", 0}});
    topic_terms(m, {{"d1", "alpha alpha beta"}});
    EXPECT_EQ(topic_query_terms(m, 0, 1), std::vector<std::string>{"alpha"});
    EXPECT_EQ(topic_query_terms(m, 0, 50).size(), 2u);
    EXPECT_ERROR(topic_query_terms(m, 7, 1), ErrorCode::UnknownTopic);
}

TEST(Heatmap, SingleCell) {
    const auto h = heatmap(manual_model(1, {{"d", 0}}), {{"d", 2020}});
    EXPECT_EQ(h.topics, std::vector<int>{0});
    EXPECT_EQ(h.years, std::vector<int>{2020});
    EXPECT_EQ(h.at(0, 2020), 1u);
}

TEST(Heatmap, HandCountedFixture) {
    const auto h = heatmap(manual_model(2, {{"a", 0}, {"b", 0}, {"c", 0}, {"d", 1}}),
                           {{"a", 2020}, {"b", 2020}, {"c", 2021}, {"d", 2021}});
    EXPECT_EQ(h.at(0, 2020), 2u);
    EXPECT_EQ(h.at(0, 2021), 1u);
    EXPECT_EQ(h.at(1, 2021), 1u);
    EXPECT_EQ(h.at(1, 2020), 0u);
    EXPECT_EQ(h.to_csv(), "topic,year,count\n0,2020,2\n0,2021,1\n1,2020,0\n1,2021,1\n");
}

TEST(Heatmap, ConservationWithOutliers) {
    std::mt19937_64 rng(8);
    std::uniform_int_distribution<int> topic(-1, 3), year(2000, 2010);
    for (int trial = 0; trial < 30; ++trial) {
        std::map<std::string, int> a;
        std::map<std::string, std::optional<int>> y;
        const int n = 1 + trial;
        for (int i = 0; i < n; ++i) {
            const std::string id = "d" + std::to_string(i);
            a[id] = topic(rng);
            y[id] = year(rng);
        }
        const auto h = heatmap(manual_model(4, a), y);
        EXPECT_EQ(h.total() + h.outliers, static_cast<std::size_t>(n));
        const auto with = heatmap(manual_model(4, a), y, true);
        EXPECT_EQ(with.total(), static_cast<std::size_t>(n));
    }
}

TEST(Heatmap, MissingYearNamesDocuments) {
    try {
        heatmap(manual_model(1, {{"dated", 0}, {"undated", 0}}), {{"dated", 2020}, {"undated", std::nullopt}});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::MissingYear);
        EXPECT_NE(std::string(e.what()).find("undated"), std::string::npos);
    }
}

TEST(Persist, WritesAnnotationsAndGraph) {
    stores::DataPlane plane;
    provider::StubProvider stub;
    fixtures::load_medical_corpus(plane, stub);
    const auto docs = document_embeddings(plane);
    ASSERT_EQ(docs.size(), 8u);
    FitConfig cfg;
    cfg.k = 2;
    auto m = fit(docs, cfg);
    std::map<std::string, std::string> texts;
    for (const auto& d : plane.metadata().documents()) texts[d.doc_id] = d.title + " " + *d.abstract;
    topic_terms(m, texts);
    persist(m, plane);
    for (const auto& [doc, t] : m.assignments) {
        EXPECT_EQ(plane.metadata().annotations(doc)->topic_id, t);
        EXPECT_TRUE(plane.graph().has_node("topic:" + std::to_string(t)));
    }
    // A second persist replaces the assignment edges instead of adding more.
    const auto edges = plane.graph().edge_count();
    persist(m, plane);
    EXPECT_EQ(plane.graph().edge_count(), edges);
}
