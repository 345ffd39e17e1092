#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "evsynth/indexer.hpp"
#include "evsynth/provider.hpp"
#include "evsynth/screen.hpp"
#include "evsynth/stores.hpp"
#include "evsynth/types.hpp"

namespace evsynth::fixtures {

/// One raw JSON Lines object as the indexer accepts it.
Json raw_record(const std::string& title, const std::string& abstract, std::optional<int> year,
                const std::vector<std::string>& authors = {}, const std::string& full_text = {});

// ---------------------------------------------------------------------------
// Shared 25-document compliance fixture
// ---------------------------------------------------------------------------

/// 25 records, 7 with P = yes and exactly one with all five dimensions yes.
/// Years cycle 2018..2022. Returns doc ids in ingest order.
std::vector<std::string> load_compliance_fixture(stores::DataPlane& plane, provider::Provider& provider);

/// Hand-count labels of the compliance fixture, indexed by ingest order.
screen::Labels compliance_labels(std::size_t i);

/// Five records: two from 2020, three from 2021.
std::vector<std::string> load_year_fixture(stores::DataPlane& plane, provider::Provider& provider);

// ---------------------------------------------------------------------------
// Medical full-text corpus for retrieval and agent tests
// ---------------------------------------------------------------------------

/// Eight short full-text papers (2012..2023) with distinct authors and
/// typed graph neighbours. Contains no negation words.
std::vector<Json> medical_corpus();
void load_medical_corpus(stores::DataPlane& plane, provider::Provider& provider);

// ---------------------------------------------------------------------------
// Keyword-separable screening corpus
// ---------------------------------------------------------------------------

/// Marker token for a (dimension, label) pair, e.g. "kwpyes".
std::string marker(Dimension d, TernaryLabel l);

struct ScreeningSplit {
    std::vector<screen::LabeledExample> train;
    std::vector<screen::LabeledExample> test;
};

/// `n` documents whose text holds one marker per dimension plus filler;
/// the first 80% train, the rest test.
ScreeningSplit keyword_corpus(std::uint64_t seed, std::size_t n = 200);

// ---------------------------------------------------------------------------
// Random helpers
// ---------------------------------------------------------------------------

stores::Embedding random_unit(std::mt19937_64& rng, std::size_t dim);

/// Random corpus drawn from a small topical vocabulary; every record has a
/// full text of several sentences.
std::vector<Json> random_corpus(std::mt19937_64& rng, std::size_t docs);

/// Two to three content words from the random corpus vocabulary.
std::string random_query(std::mt19937_64& rng);

}  // namespace evsynth::fixtures
