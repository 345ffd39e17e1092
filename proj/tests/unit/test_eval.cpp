#include <gtest/gtest.h>

#include "evsynth/eval.hpp"
#include "expect_error.hpp"

using namespace evsynth;
using namespace evsynth::eval;

namespace {

std::vector<std::string> repeat(std::initializer_list<std::pair<const char*, int>> runs) {
    std::vector<std::string> out;
    for (const auto& [label, n] : runs) out.insert(out.end(), static_cast<std::size_t>(n), label);
    return out;
}

}  // namespace

TEST(Confusion, PublishedTableValues) {
    const auto r = confusion_metrics({74, 7, 83, 0});
    EXPECT_EQ(percent(r.precision), "91.4");
    EXPECT_EQ(percent(r.recall), "100.0");
    EXPECT_EQ(percent(r.specificity), "92.2");
    EXPECT_EQ(percent(r.accuracy), "95.7");
    EXPECT_EQ(percent(r.f1), "95.5");
    EXPECT_DOUBLE_EQ(*r.precision, 74.0 / 81.0);
}

TEST(Confusion, UndefinedRatios) {
    const auto r = confusion_metrics({0, 0, 10, 0});
    EXPECT_EQ(percent(r.precision), "undefined");
    EXPECT_EQ(percent(r.recall), "undefined");
    EXPECT_FALSE(r.f1);
    EXPECT_EQ(percent(r.specificity), "100.0");
    EXPECT_EQ(to_json(r)["precision"], nullptr);
    EXPECT_ERROR(confusion_metrics({}), ErrorCode::EmptyCounts);
}

TEST(Confusion, AddTallies) {
    ConfusionCounts c;
    c.add(true, true);
    c.add(true, false);
    c.add(false, false);
    c.add(false, true);
    EXPECT_EQ(c.tp + c.fp + c.tn + c.fn, 4u);
    EXPECT_EQ(c.fn, 1u);
    EXPECT_EQ(to_csv(confusion_metrics(c)).rfind("metric,value\n", 0), 0u);
}

TEST(Kappa, HandComputed) {
    const auto a = repeat({{"y", 5}, {"n", 5}});
    EXPECT_NEAR(cohen_kappa(a, a), 1.0, 1e-9);
    EXPECT_NEAR(cohen_kappa({"y", "n", "y", "n"}, {"y", "y", "n", "n"}), 0.0, 1e-9);
    // 8/10 observed, 0.5 expected.
    const auto b = repeat({{"y", 4}, {"n", 1}, {"y", 1}, {"n", 4}});
    EXPECT_NEAR(cohen_kappa(a, b), 0.6, 1e-9);
    EXPECT_NEAR(cohen_kappa({"x", "x"}, {"x", "x"}), 1.0, 1e-9);
    EXPECT_ERROR(cohen_kappa({}, {}), ErrorCode::LengthMismatch);
    EXPECT_ERROR(cohen_kappa({"a"}, {}), ErrorCode::LengthMismatch);
}

TEST(Agreement, PairwiseAndThreeWay) {
    const auto truth = repeat({{"i", 100}});
    auto two = truth;
    for (int i = 0; i < 5; ++i) two[static_cast<std::size_t>(i)] = "e";
    EXPECT_DOUBLE_EQ(agreement_rate(truth, two), 0.95);
    auto three = truth;
    for (int i = 5; i < 9; ++i) three[static_cast<std::size_t>(i)] = "e";
    EXPECT_DOUBLE_EQ(agreement_rate(truth, two, three), 0.91);
}

TEST(Agreement, BinaryMappingMergesMaybe) {
    const auto t = ternary_agreement({TernaryLabel::Yes, TernaryLabel::Maybe}, {TernaryLabel::Maybe, TernaryLabel::Maybe});
    EXPECT_DOUBLE_EQ(t.strict, 0.5);
    EXPECT_DOUBLE_EQ(t.binary, 1.0);
}

TEST(Mrr, Fixtures) {
    EXPECT_DOUBLE_EQ(mrr({{"a", "b"}}, {{"a"}}), 1.0);
    EXPECT_DOUBLE_EQ(mrr({{"x", "a"}, {"x", "y", "z", "b"}}, {{"a"}, {"b"}}), 0.375);
    EXPECT_DOUBLE_EQ(mrr({{"x"}}, {{"a"}}), 0.0);
    EXPECT_ERROR(mrr({}, {}), ErrorCode::EmptyQuerySet);
    EXPECT_ERROR(mrr({{"a"}}, {}), ErrorCode::LengthMismatch);
}

TEST(Rouge, Fixtures) {
    const auto same = rouge("The cat sat.", "the cat sat", RougeVariant::Rouge1);
    EXPECT_DOUBLE_EQ(same.f, 1.0);
    const auto part = rouge("the cat sat", "the cat ran", RougeVariant::Rouge1);
    EXPECT_DOUBLE_EQ(part.precision, 2.0 / 3.0);
    EXPECT_DOUBLE_EQ(part.recall, 2.0 / 3.0);
    EXPECT_DOUBLE_EQ(part.f, 2.0 / 3.0);
    EXPECT_DOUBLE_EQ(rouge("alpha beta", "gamma delta", RougeVariant::Rouge1).f, 0.0);
    EXPECT_DOUBLE_EQ(rouge("the cat sat", "the cat ran", RougeVariant::Rouge2).f, 0.5);
    EXPECT_DOUBLE_EQ(rouge("a b c d", "a x c d", RougeVariant::RougeL).f, 0.75);
    EXPECT_TRUE(rouge("", "x", RougeVariant::Rouge1).empty_input);
    EXPECT_EQ(parse_rouge_variant("rougeL"), RougeVariant::RougeL);
    EXPECT_FALSE(parse_rouge_variant("rouge3"));
}

TEST(Redundancy, MeanPairwiseCosine) {
    EXPECT_DOUBLE_EQ(redundancy({{1, 0}}), 0.0);
    EXPECT_NEAR(redundancy({{1, 0}, {1, 0}, {0, 1}}), 1.0 / 3.0, 1e-12);
}

TEST(Datasets, ScreeningReport) {
    using L = TernaryLabel;
    const screen::Labels all_yes{L::Yes, L::Yes, L::Yes, L::Yes, L::Yes};
    const screen::Labels p_no{L::No, L::Yes, L::Yes, L::Yes, L::Yes};
    const auto e = evaluate_screening({all_yes, all_yes}, {all_yes, p_no});
    EXPECT_EQ(e.examples, 2u);
    EXPECT_EQ(e.dimensions.at(Dimension::P).binary.fp, 1u);
    EXPECT_DOUBLE_EQ(e.dimensions.at(Dimension::I).agreement.strict, 1.0);
    EXPECT_DOUBLE_EQ(e.decision_agreement, 0.5);
    EXPECT_ERROR(evaluate_screening({all_yes}, {}), ErrorCode::LengthMismatch);
}

TEST(Datasets, RetrievalReport) {
    const std::vector<Json> pred{{{"query_id", "q1"}, {"ranked", {"d2", "d1"}}}};
    const std::vector<Json> gold{{{"query_id", "q1"}, {"relevant", {"d1"}}},
                                 {{"query_id", "q2"}, {"relevant", {"d9"}}}};
    const auto r = evaluate_retrieval(pred, gold);
    EXPECT_DOUBLE_EQ(r.mrr, 0.25);
    EXPECT_EQ(r.queries, 2u);
    EXPECT_EQ(r.hits, 1u);
}
