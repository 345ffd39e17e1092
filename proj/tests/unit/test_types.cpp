#include <gtest/gtest.h>

#include "evsynth/error.hpp"
#include "evsynth/hash.hpp"
#include "evsynth/text.hpp"
#include "evsynth/types.hpp"

using namespace evsynth;

TEST(Types, DimensionAndLabelRoundTrip) {
    for (auto d : kAllDimensions) EXPECT_EQ(parse_dimension(to_string(d)), d);
    EXPECT_EQ(parse_dimension("p"), Dimension::P);
    EXPECT_FALSE(parse_dimension("X"));
    for (auto l : {TernaryLabel::No, TernaryLabel::Maybe, TernaryLabel::Yes}) {
        EXPECT_EQ(parse_ternary(to_string(l)), l);
    }
    EXPECT_EQ(parse_ternary("YES"), TernaryLabel::Yes);
    EXPECT_FALSE(parse_ternary("perhaps"));
}

TEST(Types, PredicateMatchesTypedFields) {
    MetadataView v{{"year", std::int64_t{2018}}, {"venue", std::string("Lancet")},
                   {"authors", TextList{"Okafor, Ngozi", "Zhang, Wei"}}, {"picos_p", TernaryLabel::Yes}};
    EXPECT_TRUE(matches({"year", Comparator::Gt, std::int64_t{2015}}, v));
    EXPECT_FALSE(matches({"year", Comparator::Lt, std::int64_t{2015}}, v));
    EXPECT_TRUE(matches({"venue", Comparator::Eq, std::string("Lancet")}, v));
    EXPECT_TRUE(matches({"authors", Comparator::Contains, std::string("Zhang, Wei")}, v));
    EXPECT_TRUE(matches({"picos_p", Comparator::Eq, TernaryLabel::Yes}, v));
    EXPECT_FALSE(matches({"missing", Comparator::Ne, std::string("x")}, v));
    EXPECT_EQ(render(Predicate{"year", Comparator::Gt, std::int64_t{2015}}), "year > 2015");
}

TEST(Types, PredicateJsonRoundTrip) {
    const Predicate p{"picos_s", Comparator::Eq, TernaryLabel::Maybe};
    EXPECT_EQ(predicate_from_json(to_json(p)), p);
    const Predicate q{"year", Comparator::Ge, std::int64_t{1900}};
    EXPECT_EQ(predicate_from_json(to_json(q)), q);
    EXPECT_EQ(parse_comparator(">="), Comparator::Ge);
    EXPECT_EQ(parse_comparator("contains"), Comparator::Contains);
}

TEST(Types, ComparatorTyping) {
    EXPECT_FALSE(comparator_allowed(FieldType::Boolean, Comparator::Lt));
    EXPECT_TRUE(comparator_allowed(FieldType::Integer, Comparator::Lt));
    EXPECT_FALSE(literal_compatible(FieldType::Integer, Comparator::Gt, std::string("abc")));
}

TEST(Text, TokenizeKeepsOffsets) {
    const std::string s = "Tai-chi, for BALANCE.";
    const auto toks = text::tokenize(s);
    ASSERT_EQ(toks.size(), 4u);
    EXPECT_EQ(toks[3].text, "balance");
    EXPECT_EQ(s.substr(toks[3].span.begin, toks[3].span.size()), "BALANCE");
}

TEST(Text, PorterStemmer) {
    EXPECT_EQ(text::porter_stem("studies"), "studi");
    EXPECT_EQ(text::porter_stem("running"), "run");
    EXPECT_EQ(text::porter_stem("relational"), "relat");
}

TEST(Text, SentenceSplit) {
    const std::string s = "First one. Second one!  Third?";
    const auto spans = text::split_sentences(s);
    ASSERT_EQ(spans.size(), 3u);
    EXPECT_EQ(s.substr(spans[1].begin, spans[1].size()), "Second one!");
}

TEST(Text, Utf8FloorNeverSplitsCodePoints) {
    const std::string s = "a\xc3\xa9z";  // a, e-acute, z
    EXPECT_EQ(text::utf8_floor(s, 2), 1u);
    EXPECT_EQ(text::utf8_floor(s, 3), 3u);
}

TEST(Hash, Sha256KnownVector) {
    EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    EXPECT_NE(fnv1a64("x", 1), fnv1a64("x", 2));
}

TEST(Error, CarriesCode) {
    try {
        throw Error(ErrorCode::InvalidYear, "bad");
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::InvalidYear);
    }
}
