#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "evsynth/provider.hpp"
#include "evsynth/stores.hpp"
#include "evsynth/text.hpp"
#include "evsynth/types.hpp"

namespace evsynth::screen {

using Labels = std::array<TernaryLabel, 5>;  // indexed by Dimension
using Probabilities = std::array<double, 3>;  // indexed by TernaryLabel

// ---------------------------------------------------------------------------
// Features
// ---------------------------------------------------------------------------

inline constexpr std::uint32_t kDefaultFeatureBits = 18;
inline constexpr std::uint64_t kDefaultHashSeed = 0x5c7ee2u;

/// One n-gram occurrence in the screening text.
struct NGram {
    std::string key;  // "u:<tok>" or "b:<tok> <tok>"
    text::Span span;  // into screening_text(title, abstract)
};

/// Lowercased-token n-grams are taken over this exact string.
std::string screening_text(std::string_view title, std::string_view abstract);

/// Unigrams and bigrams in reading order.
std::vector<NGram> ngrams(std::string_view title, std::string_view abstract);

/// Sparse hashed counts, sorted by feature index.
struct FeatureVector {
    std::vector<std::pair<std::uint32_t, double>> entries;

    bool operator==(const FeatureVector&) const = default;
};

std::uint32_t feature_index(std::string_view ngram_key, std::uint32_t bits = kDefaultFeatureBits,
                            std::uint64_t seed = kDefaultHashSeed) noexcept;

FeatureVector featurize(std::string_view title, std::string_view abstract,
                        std::uint32_t bits = kDefaultFeatureBits, std::uint64_t seed = kDefaultHashSeed);

// ---------------------------------------------------------------------------
// Results
// ---------------------------------------------------------------------------

struct DimensionScore {
    TernaryLabel label = TernaryLabel::Maybe;
    double confidence = 0.0;
    Probabilities probabilities{};
    /// Set by the criteria pathway when the provider reply could not be read.
    bool parse_failure = false;
};

struct RationaleSpan {
    text::Span span;
    std::string snippet;
};

struct ScreeningResult {
    std::map<Dimension, DimensionScore> scores;
    std::map<Dimension, std::vector<RationaleSpan>> rationale_spans;
    /// One-sentence free-text rationale from the criteria pathway.
    std::map<Dimension, std::string> rationale_text;
    std::string model_id;
};

/// Argmax with exact ties resolved maybe, then no, then yes.
TernaryLabel argmax_label(const Probabilities& p) noexcept;
Probabilities softmax(const std::array<double, 3>& logits) noexcept;

/// yes and maybe map to true. Throws MissingDimension.
bool to_binary(const ScreeningResult& result, Dimension d);
constexpr bool to_binary(TernaryLabel l) noexcept { return l != TernaryLabel::No; }

/// exclude on any no, include when all five are yes, maybe otherwise.
/// Throws MissingDimension unless all five dimensions are scored.
IncludeDecision aggregate_qualification(const ScreeningResult& result);
IncludeDecision aggregate_qualification(const Labels& labels) noexcept;

/// Labels, confidences, binary study design and aggregate decision.
stores::AnnotationSet to_annotations(const ScreeningResult& result);

Json to_json(const ScreeningResult& r);

// ---------------------------------------------------------------------------
// Multi-head linear model
// ---------------------------------------------------------------------------

struct TrainConfig {
    double learning_rate = 0.5;
    std::size_t warmup_steps = 10;
    std::size_t epochs = 150;
    double weight_decay = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    // Large enough that rare n-grams with tiny gradients move slowly.
    double epsilon = 1e-2;
    std::uint64_t seed = kDefaultHashSeed;  // feature hashing seed
    std::uint32_t feature_bits = kDefaultFeatureBits;
};

Json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const Json& j);

struct LabeledExample {
    std::string title;
    std::string abstract;
    Labels labels{};
};

struct UnlabeledExample {
    std::string title;
    std::string abstract;
};

/// Five softmax heads over a shared hashed n-gram feature map. Only feature
/// columns that occurred in training are materialized; every other column is
/// identically zero, so predictions match a dense 3 x 2^bits head.
class MultiHeadModel {
public:
    static constexpr std::size_t kHeads = 5;
    static constexpr std::size_t kRow = kHeads * 3;  // weights per feature column

    MultiHeadModel() = default;
    explicit MultiHeadModel(TrainConfig config) : config_(config) {}

    const TrainConfig& config() const noexcept { return config_; }
    bool trained() const noexcept { return trained_; }
    void mark_trained() noexcept { trained_ = true; }

    /// Per-head logits for a feature vector.
    std::array<std::array<double, 3>, kHeads> logits(const FeatureVector& x) const;
    /// Throws UntrainedModel.
    ScreeningResult predict(std::string_view title, std::string_view abstract) const;

    /// Weight of (head, class) on feature column `index` (zero when absent).
    double weight(Dimension d, TernaryLabel c, std::uint32_t index) const;
    void set_weight(Dimension d, TernaryLabel c, std::uint32_t index, double w);
    double bias(Dimension d, TernaryLabel c) const;
    void set_bias(Dimension d, TernaryLabel c, double b);

    /// Optional per-head calibration: label yes iff p(yes) >= threshold,
    /// otherwise the tie-broken argmax of the other two classes.
    void set_yes_threshold(Dimension d, std::optional<double> threshold);

    const std::vector<double>& loss_history() const noexcept { return loss_history_; }
    std::string model_id() const;

    Json to_json() const;
    static MultiHeadModel from_json(const Json& j);
    void save(const std::filesystem::path& path) const;
    static MultiHeadModel load(const std::filesystem::path& path);

    bool operator==(const MultiHeadModel& other) const;

private:
    friend MultiHeadModel train(const TrainConfig&, const std::vector<LabeledExample>&);

    std::size_t column(std::uint32_t index);  // creates on demand

    TrainConfig config_;
    bool trained_ = false;
    std::vector<std::uint32_t> feature_ids_;
    std::unordered_map<std::uint32_t, std::size_t> column_of_;
    std::vector<double> weights_;  // column-major: kRow doubles per feature
    std::array<double, kRow> bias_{};
    std::array<std::optional<double>, kHeads> yes_threshold_{};
    std::vector<double> loss_history_;
};

/// Mean of the five per-head mean cross-entropies.
double mean_loss(const MultiHeadModel& model, const std::vector<LabeledExample>& data);

/// Full-batch AdamW (decoupled weight decay, linear warmup). Throws EmptyTrainingSet.
MultiHeadModel train(const TrainConfig& config, const std::vector<LabeledExample>& labeled);

/// True iff every one of the five heads has confidence >= tau.
bool passes_gate(const ScreeningResult& result, double tau) noexcept;

/// Indices of `pool` items whose prediction passes the gate.
std::vector<std::size_t> select_pseudo_labels(const MultiHeadModel& model,
                                              const std::vector<UnlabeledExample>& pool, double tau);

inline constexpr double kDefaultSelfTrainThreshold = 0.90;

struct SelfTrainReport {
    MultiHeadModel model;
    std::vector<std::size_t> pseudo_labels_per_round;
};

/// Conservative self-training: each round pseudo-labels the unlabeled items
/// that pass the all-heads gate, then retrains from scratch on gold plus
/// pseudo-labels. Throws InvalidArgument unless tau is in (0.5, 1].
SelfTrainReport self_train(const MultiHeadModel& model, const std::vector<LabeledExample>& gold,
                           const std::vector<UnlabeledExample>& unlabeled,
                           double tau = kDefaultSelfTrainThreshold, std::size_t max_rounds = 5);

// ---------------------------------------------------------------------------
// Description-based screening
// ---------------------------------------------------------------------------

struct CriterionText {
    std::string include;
    std::string exclude;
    /// Optional keyword table consumed only by the stub provider.
    std::vector<std::string> stub_yes_terms;
    std::vector<std::string> stub_no_terms;
};

struct EligibilityCriteria {
    std::string name;
    std::map<Dimension, CriterionText> dimensions;

    /// Throws InvalidArgument when a listed dimension has an empty include text.
    void validate() const;
    static EligibilityCriteria from_json(const Json& j);
    static EligibilityCriteria load(const std::filesystem::path& path);
    std::vector<provider::ScreeningRule> stub_rules() const;
};

/// Instruction sent for one dimension; exposed so remote prompts can be audited.
std::string criteria_instruction(Dimension d, const CriterionText& c);

/// Reads "label: <yes|no|maybe>" (or a bare leading label word) and an
/// optional "rationale: ..." line. nullopt label means unparseable.
struct ParsedReply {
    std::optional<TernaryLabel> label;
    std::string rationale;
};
ParsedReply parse_reply(std::string_view reply);

/// One provider call per criteria dimension. Unparseable replies become
/// maybe with parse_failure set.
ScreeningResult screen_by_criteria(provider::Provider& provider, const EligibilityCriteria& criteria,
                                   std::string_view title, std::string_view abstract);

// ---------------------------------------------------------------------------
// JSON Lines datasets
// ---------------------------------------------------------------------------

/// {"title", "abstract", "labels": {"P": "yes", ...}}; labels optional.
LabeledExample labeled_from_json(const Json& j);
std::vector<Json> read_jsonl(const std::filesystem::path& path);

}  // namespace evsynth::screen
