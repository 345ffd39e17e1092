#include "evsynth/screen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <regex>
#include <set>

#include "evsynth/error.hpp"
#include "evsynth/hash.hpp"

namespace evsynth::screen {

namespace {

constexpr std::size_t idx(Dimension d) { return static_cast<std::size_t>(d); }
constexpr std::size_t idx(TernaryLabel c) { return static_cast<std::size_t>(c); }

using SparseRow = std::vector<std::pair<std::size_t, double>>;  // (column, value)

/// Counts scaled to unit L2 norm so document length does not dominate logits.
template <typename Lookup>
SparseRow scaled_row(const FeatureVector& x, Lookup&& column_of) {
    double norm = 0.0;
    for (const auto& [i, v] : x.entries) norm += v * v;
    norm = std::sqrt(norm);
    SparseRow row;
    if (norm == 0.0) return row;
    for (const auto& [i, v] : x.entries) {
        if (const auto col = column_of(i)) row.emplace_back(*col, v / norm);
    }
    return row;
}

}  // namespace

// ---------------------------------------------------------------------------
// Features
// ---------------------------------------------------------------------------

std::string screening_text(std::string_view title, std::string_view abstract) {
    std::string s(title);
    s.push_back(' ');
    s += abstract;
    return s;
}

std::vector<NGram> ngrams(std::string_view title, std::string_view abstract) {
    const std::string s = screening_text(title, abstract);
    const auto tokens = text::tokenize(s);
    std::vector<NGram> out;
    out.reserve(tokens.size() * 2);
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        out.push_back({"u:" + tokens[i].text, tokens[i].span});
        if (i + 1 < tokens.size()) {
            out.push_back({"b:" + tokens[i].text + " " + tokens[i + 1].text,
                           {tokens[i].span.begin, tokens[i + 1].span.end}});
        }
    }
    return out;
}

std::uint32_t feature_index(std::string_view ngram_key, std::uint32_t bits, std::uint64_t seed) noexcept {
    const std::uint64_t mask = (std::uint64_t{1} << bits) - 1;
    return static_cast<std::uint32_t>(fnv1a64(ngram_key, seed) & mask);
}

FeatureVector featurize(std::string_view title, std::string_view abstract, std::uint32_t bits, std::uint64_t seed) {
    std::map<std::uint32_t, double> counts;
    for (const auto& g : ngrams(title, abstract)) counts[feature_index(g.key, bits, seed)] += 1.0;
    FeatureVector x;
    x.entries.assign(counts.begin(), counts.end());
    return x;
}

// ---------------------------------------------------------------------------
// Results
// ---------------------------------------------------------------------------

TernaryLabel argmax_label(const Probabilities& p) noexcept {
    TernaryLabel best = TernaryLabel::Maybe;
    for (const auto c : {TernaryLabel::No, TernaryLabel::Yes}) {
        if (p[idx(c)] > p[idx(best)]) best = c;
    }
    return best;
}

Probabilities softmax(const std::array<double, 3>& z) noexcept {
    const double m = std::max({z[0], z[1], z[2]});
    Probabilities p{};
    double sum = 0.0;
    for (std::size_t i = 0; i < 3; ++i) {
        p[i] = std::exp(z[i] - m);
        sum += p[i];
    }
    for (auto& v : p) v /= sum;
    return p;
}

bool to_binary(const ScreeningResult& result, Dimension d) {
    const auto it = result.scores.find(d);
    if (it == result.scores.end()) throw Error(ErrorCode::MissingDimension, "dimension " + to_string(d) + " not scored");
    return to_binary(it->second.label);
}

IncludeDecision aggregate_qualification(const Labels& labels) noexcept {
    if (std::any_of(labels.begin(), labels.end(), [](TernaryLabel l) { return l == TernaryLabel::No; })) {
        return IncludeDecision::Exclude;
    }
    if (std::all_of(labels.begin(), labels.end(), [](TernaryLabel l) { return l == TernaryLabel::Yes; })) {
        return IncludeDecision::Include;
    }
    return IncludeDecision::Maybe;
}

IncludeDecision aggregate_qualification(const ScreeningResult& result) {
    Labels labels{};
    for (const auto d : kAllDimensions) {
        const auto it = result.scores.find(d);
        if (it == result.scores.end()) {
            throw Error(ErrorCode::MissingDimension, "dimension " + to_string(d) + " not scored");
        }
        labels[idx(d)] = it->second.label;
    }
    return aggregate_qualification(labels);
}

stores::AnnotationSet to_annotations(const ScreeningResult& result) {
    stores::AnnotationSet a;
    for (const auto& [d, s] : result.scores) a.picos[d] = {s.label, s.confidence};
    a.sync_study_design();
    if (result.scores.size() == kAllDimensions.size()) a.include_decision = aggregate_qualification(result);
    return a;
}

Json to_json(const ScreeningResult& r) {
    Json dims = Json::object();
    for (const auto& [d, s] : r.scores) {
        Json spans = Json::array();
        if (const auto it = r.rationale_spans.find(d); it != r.rationale_spans.end()) {
            for (const auto& sp : it->second) {
                spans.push_back({{"char_span", {sp.span.begin, sp.span.end}}, {"snippet", sp.snippet}});
            }
        }
        Json jd{{"label", std::string(to_string(s.label))},
                {"confidence", s.confidence},
                {"probabilities", {{"no", s.probabilities[0]}, {"maybe", s.probabilities[1]}, {"yes", s.probabilities[2]}}},
                {"rationale_spans", spans}};
        if (s.parse_failure) jd["parse_failure"] = true;
        if (const auto it = r.rationale_text.find(d); it != r.rationale_text.end()) jd["rationale"] = it->second;
        dims[to_string(d)] = std::move(jd);
    }
    Json j{{"dimensions", dims}, {"model_id", r.model_id}};
    if (r.scores.size() == kAllDimensions.size()) {
        j["aggregate"] = std::string(to_string(aggregate_qualification(r)));
    }
    return j;
}

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

Json to_json(const TrainConfig& c) {
    return Json{{"learning_rate", c.learning_rate}, {"warmup_steps", c.warmup_steps}, {"epochs", c.epochs},
                {"weight_decay", c.weight_decay},   {"beta1", c.beta1},               {"beta2", c.beta2},
                {"epsilon", c.epsilon},             {"seed", c.seed},                 {"feature_bits", c.feature_bits}};
}

TrainConfig train_config_from_json(const Json& j) {
    TrainConfig c;
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.warmup_steps = j.value("warmup_steps", c.warmup_steps);
    c.epochs = j.value("epochs", c.epochs);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.epsilon = j.value("epsilon", c.epsilon);
    c.seed = j.value("seed", c.seed);
    c.feature_bits = j.value("feature_bits", c.feature_bits);
    if (c.feature_bits == 0 || c.feature_bits > 30) throw Error(ErrorCode::InvalidArgument, "feature_bits out of range");
    return c;
}

std::size_t MultiHeadModel::column(std::uint32_t index) {
    if (const auto it = column_of_.find(index); it != column_of_.end()) return it->second;
    const std::size_t col = feature_ids_.size();
    feature_ids_.push_back(index);
    column_of_.emplace(index, col);
    weights_.resize(weights_.size() + kRow, 0.0);
    return col;
}

std::array<std::array<double, 3>, MultiHeadModel::kHeads> MultiHeadModel::logits(const FeatureVector& x) const {
    const auto row = scaled_row(x, [this](std::uint32_t i) -> std::optional<std::size_t> {
        if (const auto it = column_of_.find(i); it != column_of_.end()) return it->second;
        return std::nullopt;
    });
    std::array<std::array<double, 3>, kHeads> z{};
    for (std::size_t h = 0; h < kHeads; ++h) {
        for (std::size_t c = 0; c < 3; ++c) z[h][c] = bias_[h * 3 + c];
    }
    for (const auto& [col, v] : row) {
        const double* w = &weights_[col * kRow];
        for (std::size_t k = 0; k < kRow; ++k) z[k / 3][k % 3] += w[k] * v;
    }
    return z;
}

double MultiHeadModel::weight(Dimension d, TernaryLabel c, std::uint32_t index) const {
    const auto it = column_of_.find(index);
    if (it == column_of_.end()) return 0.0;
    return weights_[it->second * kRow + idx(d) * 3 + idx(c)];
}

void MultiHeadModel::set_weight(Dimension d, TernaryLabel c, std::uint32_t index, double w) {
    const std::uint32_t mask = (config_.feature_bits >= 32) ? ~0u : ((1u << config_.feature_bits) - 1);
    weights_[column(index & mask) * kRow + idx(d) * 3 + idx(c)] = w;
}

double MultiHeadModel::bias(Dimension d, TernaryLabel c) const { return bias_[idx(d) * 3 + idx(c)]; }

void MultiHeadModel::set_bias(Dimension d, TernaryLabel c, double b) { bias_[idx(d) * 3 + idx(c)] = b; }

void MultiHeadModel::set_yes_threshold(Dimension d, std::optional<double> threshold) {
    if (threshold && !(*threshold > 0.0 && *threshold <= 1.0)) {
        throw Error(ErrorCode::InvalidArgument, "threshold must be in (0, 1]");
    }
    yes_threshold_[idx(d)] = threshold;
}

std::string MultiHeadModel::model_id() const {
    std::uint64_t h = fnv1a64(screen::to_json(config_).dump());
    const auto mix = [&h](const void* p, std::size_t n) {
        h = fnv1a64(std::string_view(static_cast<const char*>(p), n), h);
    };
    if (!feature_ids_.empty()) mix(feature_ids_.data(), feature_ids_.size() * sizeof(std::uint32_t));
    if (!weights_.empty()) mix(weights_.data(), weights_.size() * sizeof(double));
    mix(bias_.data(), bias_.size() * sizeof(double));
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return std::string("linear-multihead-") + buf;
}

ScreeningResult MultiHeadModel::predict(std::string_view title, std::string_view abstract) const {
    if (!trained_) throw Error(ErrorCode::UntrainedModel, "model has not been trained or loaded");
    const auto x = featurize(title, abstract, config_.feature_bits, config_.seed);
    const auto z = logits(x);
    const auto grams = ngrams(title, abstract);
    const std::string source = screening_text(title, abstract);

    ScreeningResult r;
    r.model_id = model_id();
    for (const auto d : kAllDimensions) {
        DimensionScore s;
        s.probabilities = softmax(z[idx(d)]);
        s.label = argmax_label(s.probabilities);
        if (const auto t = yes_threshold_[idx(d)]) {
            if (s.probabilities[idx(TernaryLabel::Yes)] >= *t) {
                s.label = TernaryLabel::Yes;
            } else {
                Probabilities rest = s.probabilities;
                rest[idx(TernaryLabel::Yes)] = -1.0;
                s.label = argmax_label(rest);
            }
        }
        s.confidence = std::max({s.probabilities[0], s.probabilities[1], s.probabilities[2]});
        r.scores[d] = s;

        struct Candidate {
            double w;
            std::size_t order;
            const NGram* gram;
        };
        std::vector<Candidate> cands;
        std::set<std::string_view> seen;
        for (std::size_t i = 0; i < grams.size(); ++i) {
            if (!seen.insert(grams[i].key).second) continue;
            const double w = weight(d, s.label, feature_index(grams[i].key, config_.feature_bits, config_.seed));
            if (w > 0.0) cands.push_back({w, i, &grams[i]});
        }
        std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
            return a.w != b.w ? a.w > b.w : a.order < b.order;
        });
        auto& spans = r.rationale_spans[d];
        for (std::size_t k = 0; k < std::min<std::size_t>(3, cands.size()); ++k) {
            const auto& sp = cands[k].gram->span;
            spans.push_back({sp, source.substr(sp.begin, sp.size())});
        }
    }
    return r;
}

Json MultiHeadModel::to_json() const {
    Json thresholds = Json::array();
    for (const auto& t : yes_threshold_) thresholds.push_back(t ? Json(*t) : Json(nullptr));
    return Json{{"format", "evsynth.screen.multihead"},
                {"format_version", 1},
                {"config", screen::to_json(config_)},
                {"trained", trained_},
                {"features", feature_ids_},
                {"weights", weights_},
                {"bias", bias_},
                {"yes_threshold", thresholds},
                {"loss_history", loss_history_}};
}

MultiHeadModel MultiHeadModel::from_json(const Json& j) {
    if (j.value("format", "") != "evsynth.screen.multihead") {
        throw Error(ErrorCode::InvalidArgument, "not a multi-head screening model");
    }
    if (j.value("format_version", 0) != 1) throw Error(ErrorCode::InvalidArgument, "unsupported model format version");
    MultiHeadModel m(train_config_from_json(j.at("config")));
    m.trained_ = j.value("trained", false);
    m.feature_ids_ = j.at("features").get<std::vector<std::uint32_t>>();
    m.weights_ = j.at("weights").get<std::vector<double>>();
    if (m.weights_.size() != m.feature_ids_.size() * kRow) {
        throw Error(ErrorCode::InvalidArgument, "weight matrix does not match feature list");
    }
    const auto b = j.at("bias").get<std::vector<double>>();
    if (b.size() != kRow) throw Error(ErrorCode::InvalidArgument, "bias must have 15 entries");
    std::copy(b.begin(), b.end(), m.bias_.begin());
    for (std::size_t i = 0; i < m.feature_ids_.size(); ++i) m.column_of_.emplace(m.feature_ids_[i], i);
    if (j.contains("yes_threshold")) {
        for (std::size_t h = 0; h < kHeads && h < j.at("yes_threshold").size(); ++h) {
            const auto& t = j.at("yes_threshold").at(h);
            if (!t.is_null()) m.yes_threshold_[h] = t.get<double>();
        }
    }
    m.loss_history_ = j.value("loss_history", std::vector<double>{});
    return m;
}

void MultiHeadModel::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error(ErrorCode::InvalidArgument, "cannot write " + path.string());
    out << to_json().dump() << '\n';
}

MultiHeadModel MultiHeadModel::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::InvalidArgument, "cannot read " + path.string());
    return from_json(Json::parse(in));
}

bool MultiHeadModel::operator==(const MultiHeadModel& o) const {
    return trained_ == o.trained_ && feature_ids_ == o.feature_ids_ && weights_ == o.weights_ && bias_ == o.bias_ &&
           yes_threshold_ == o.yes_threshold_;
}

double mean_loss(const MultiHeadModel& model, const std::vector<LabeledExample>& data) {
    if (data.empty()) return 0.0;
    double total = 0.0;
    for (const auto& ex : data) {
        const auto z = model.logits(featurize(ex.title, ex.abstract, model.config().feature_bits, model.config().seed));
        for (const auto d : kAllDimensions) {
            const auto p = softmax(z[idx(d)]);
            total -= std::log(std::max(p[idx(ex.labels[idx(d)])], 1e-300));
        }
    }
    return total / static_cast<double>(data.size() * MultiHeadModel::kHeads);
}

MultiHeadModel train(const TrainConfig& config, const std::vector<LabeledExample>& labeled) {
    if (labeled.empty()) throw Error(ErrorCode::EmptyTrainingSet, "no labeled examples");
    constexpr std::size_t kRow = MultiHeadModel::kRow;
    MultiHeadModel model(config);

    std::vector<SparseRow> rows;
    rows.reserve(labeled.size());
    for (const auto& ex : labeled) {
        const auto x = featurize(ex.title, ex.abstract, config.feature_bits, config.seed);
        rows.push_back(scaled_row(x, [&](std::uint32_t i) -> std::optional<std::size_t> { return model.column(i); }));
    }

    const std::size_t n_weights = model.weights_.size();
    std::vector<double> m_w(n_weights, 0.0), v_w(n_weights, 0.0), g_w(n_weights, 0.0);
    std::array<double, kRow> m_b{}, v_b{}, g_b{};
    const double scale = 1.0 / static_cast<double>(labeled.size() * MultiHeadModel::kHeads);

    auto adamw = [&](double& w, double& m, double& v, double g, double lr, double b1t, double b2t, bool decay) {
        m = config.beta1 * m + (1.0 - config.beta1) * g;
        v = config.beta2 * v + (1.0 - config.beta2) * g * g;
        const double mhat = m / (1.0 - b1t);
        const double vhat = v / (1.0 - b2t);
        w -= lr * (mhat / (std::sqrt(vhat) + config.epsilon) + (decay ? config.weight_decay * w : 0.0));
    };

    double b1t = 1.0, b2t = 1.0;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        std::fill(g_w.begin(), g_w.end(), 0.0);
        g_b.fill(0.0);
        for (std::size_t i = 0; i < labeled.size(); ++i) {
            std::array<double, kRow> z{};
            for (std::size_t k = 0; k < kRow; ++k) z[k] = model.bias_[k];
            for (const auto& [col, v] : rows[i]) {
                for (std::size_t k = 0; k < kRow; ++k) z[k] += model.weights_[col * kRow + k] * v;
            }
            std::array<double, kRow> delta{};
            for (std::size_t h = 0; h < MultiHeadModel::kHeads; ++h) {
                const auto p = softmax({z[h * 3], z[h * 3 + 1], z[h * 3 + 2]});
                const std::size_t gold = idx(labeled[i].labels[h]);
                for (std::size_t c = 0; c < 3; ++c) delta[h * 3 + c] = (p[c] - (c == gold ? 1.0 : 0.0)) * scale;
            }
            for (std::size_t k = 0; k < kRow; ++k) g_b[k] += delta[k];
            for (const auto& [col, v] : rows[i]) {
                for (std::size_t k = 0; k < kRow; ++k) g_w[col * kRow + k] += delta[k] * v;
            }
        }
        const std::size_t step = epoch + 1;
        const double warm = config.warmup_steps == 0
                                ? 1.0
                                : std::min(1.0, static_cast<double>(step) / static_cast<double>(config.warmup_steps));
        const double lr = config.learning_rate * warm;
        b1t *= config.beta1;
        b2t *= config.beta2;
        for (std::size_t k = 0; k < n_weights; ++k) adamw(model.weights_[k], m_w[k], v_w[k], g_w[k], lr, b1t, b2t, true);
        for (std::size_t k = 0; k < kRow; ++k) adamw(model.bias_[k], m_b[k], v_b[k], g_b[k], lr, b1t, b2t, false);
        model.loss_history_.push_back(mean_loss(model, labeled));
    }
    model.trained_ = true;
    return model;
}

bool passes_gate(const ScreeningResult& result, double tau) noexcept {
    if (result.scores.size() != kAllDimensions.size()) return false;
    return std::all_of(result.scores.begin(), result.scores.end(),
                       [tau](const auto& kv) { return kv.second.confidence >= tau; });
}

std::vector<std::size_t> select_pseudo_labels(const MultiHeadModel& model, const std::vector<UnlabeledExample>& pool,
                                              double tau) {
    std::vector<std::size_t> picked;
    for (std::size_t i = 0; i < pool.size(); ++i) {
        if (passes_gate(model.predict(pool[i].title, pool[i].abstract), tau)) picked.push_back(i);
    }
    return picked;
}

SelfTrainReport self_train(const MultiHeadModel& model, const std::vector<LabeledExample>& gold,
                           const std::vector<UnlabeledExample>& unlabeled, double tau, std::size_t max_rounds) {
    if (!(tau > 0.5 && tau <= 1.0)) throw Error(ErrorCode::InvalidArgument, "tau must lie in (0.5, 1]");
    SelfTrainReport report{model, {}};
    std::vector<LabeledExample> train_set = gold;
    std::vector<UnlabeledExample> pool = unlabeled;
    for (std::size_t round = 0; round < max_rounds && !pool.empty(); ++round) {
        const auto picked = select_pseudo_labels(report.model, pool, tau);
        report.pseudo_labels_per_round.push_back(picked.size());
        if (picked.empty()) break;
        std::vector<UnlabeledExample> rest;
        std::size_t next = 0;
        for (std::size_t i = 0; i < pool.size(); ++i) {
            if (next < picked.size() && picked[next] == i) {
                ++next;
                const auto r = report.model.predict(pool[i].title, pool[i].abstract);
                LabeledExample ex{pool[i].title, pool[i].abstract, {}};
                for (const auto d : kAllDimensions) ex.labels[idx(d)] = r.scores.at(d).label;
                train_set.push_back(std::move(ex));
            } else {
                rest.push_back(pool[i]);
            }
        }
        pool = std::move(rest);
        report.model = train(model.config(), train_set);
    }
    return report;
}

// ---------------------------------------------------------------------------
// Criteria
// ---------------------------------------------------------------------------

void EligibilityCriteria::validate() const {
    if (dimensions.empty()) throw Error(ErrorCode::InvalidArgument, "criteria list no dimensions");
    for (const auto& [d, c] : dimensions) {
        if (text::trim(c.include).empty()) {
            throw Error(ErrorCode::InvalidArgument, "criterion " + to_string(d) + " has no include text");
        }
    }
}

EligibilityCriteria EligibilityCriteria::from_json(const Json& j) {
    EligibilityCriteria c;
    c.name = j.value("name", "");
    for (const auto& [key, v] : j.at("dimensions").items()) {
        const auto d = parse_dimension(key);
        if (!d) throw Error(ErrorCode::InvalidArgument, "unknown dimension " + key);
        CriterionText t;
        t.include = v.value("include", "");
        t.exclude = v.value("exclude", "");
        if (v.contains("stub_rules")) {
            t.stub_yes_terms = v.at("stub_rules").value("yes_terms", std::vector<std::string>{});
            t.stub_no_terms = v.at("stub_rules").value("no_terms", std::vector<std::string>{});
        }
        c.dimensions[*d] = std::move(t);
    }
    c.validate();
    return c;
}

EligibilityCriteria EligibilityCriteria::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::InvalidArgument, "cannot read " + path.string());
    return from_json(Json::parse(in));
}

std::vector<provider::ScreeningRule> EligibilityCriteria::stub_rules() const {
    std::vector<provider::ScreeningRule> rules;
    for (const auto& [d, c] : dimensions) rules.push_back({d, c.stub_yes_terms, c.stub_no_terms});
    return rules;
}

std::string criteria_instruction(Dimension d, const CriterionText& c) {
    std::string s = "You screen a study record against one eligibility criterion (" + to_string(d) + ").\n";
    s += "Satisfied when: " + c.include + "\n";
    if (!c.exclude.empty()) s += "Not satisfied when: " + c.exclude + "\n";
    s += "Answer 'yes' if the record satisfies it, 'no' if it clearly does not, and 'maybe' if the record "
         "does not say enough. Reply in two lines:\nlabel: <yes|no|maybe>\nrationale: <one sentence>";
    return s;
}

ParsedReply parse_reply(std::string_view reply) {
    static const std::regex kLabel(R"(label\s*[:=]\s*\**\s*(yes|no|maybe)\b)", std::regex::icase);
    static const std::regex kLeading(R"(^\W*(yes|no|maybe)\b)", std::regex::icase);
    static const std::regex kRationale(R"(rationale\s*[:=]\s*([^\n]+))", std::regex::icase);
    const std::string s(reply);
    ParsedReply out;
    std::smatch m;
    if (std::regex_search(s, m, kLabel) || std::regex_search(s, m, kLeading)) {
        out.label = parse_ternary(text::to_lower(m.str(1)));
    }
    if (std::regex_search(s, m, kRationale)) {
        out.rationale = text::trim(m.str(1));
    } else if (const auto spans = text::split_sentences(s); !spans.empty()) {
        out.rationale = s.substr(spans.front().begin, spans.front().size());
    }
    return out;
}

ScreeningResult screen_by_criteria(provider::Provider& provider, const EligibilityCriteria& criteria,
                                   std::string_view title, std::string_view abstract) {
    criteria.validate();
    ScreeningResult r;
    r.model_id = "criteria:" + provider.id() + (criteria.name.empty() ? "" : ":" + criteria.name);
    const std::string record = screening_text(title, abstract);
    const std::string lowered = text::to_lower(record);
    for (const auto& [d, c] : criteria.dimensions) {
        provider::GenerationRequest req;
        req.task = provider::Task::Screening;
        req.instruction = criteria_instruction(d, c);
        req.context = {{"record", record}};
        req.dimension = d;
        const auto parsed = parse_reply(provider.generate(req));

        DimensionScore s;
        if (parsed.label) {
            s.label = *parsed.label;
            s.probabilities[idx(s.label)] = 1.0;
            s.confidence = 1.0;
        } else {
            s.label = TernaryLabel::Maybe;
            s.probabilities = {1.0 / 3, 1.0 / 3, 1.0 / 3};
            s.confidence = 1.0 / 3;
            s.parse_failure = true;
        }
        r.scores[d] = s;
        r.rationale_text[d] = parsed.rationale;
        // Anchor quoted rationale terms in the record when they occur there.
        auto& spans = r.rationale_spans[d];
        static const std::regex kQuoted("\"([^\"]+)\"");
        for (auto it = std::sregex_iterator(parsed.rationale.begin(), parsed.rationale.end(), kQuoted);
             it != std::sregex_iterator(); ++it) {
            const auto pos = lowered.find(text::to_lower((*it).str(1)));
            if (pos == std::string::npos) continue;
            const text::Span sp{pos, pos + (*it).str(1).size()};
            spans.push_back({sp, record.substr(sp.begin, sp.size())});
        }
    }
    return r;
}

// ---------------------------------------------------------------------------
// Datasets
// ---------------------------------------------------------------------------

LabeledExample labeled_from_json(const Json& j) {
    LabeledExample ex;
    ex.title = j.value("title", "");
    if (j.contains("abstract") && j.at("abstract").is_string()) ex.abstract = j.at("abstract").get<std::string>();
    ex.labels.fill(TernaryLabel::Maybe);
    if (j.contains("labels")) {
        for (const auto d : kAllDimensions) {
            const auto& labels = j.at("labels");
            if (!labels.contains(to_string(d))) {
                throw Error(ErrorCode::MissingDimension, "example lacks label for " + to_string(d));
            }
            const auto l = parse_ternary(labels.at(to_string(d)).get<std::string>());
            if (!l) throw Error(ErrorCode::InvalidArgument, "bad label " + labels.at(to_string(d)).dump());
            ex.labels[idx(d)] = *l;
        }
    }
    return ex;
}

std::vector<Json> read_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::InvalidArgument, "cannot read " + path.string());
    std::vector<Json> out;
    std::string line;
    while (std::getline(in, line)) {
        if (!text::trim(line).empty()) out.push_back(Json::parse(line));
    }
    return out;
}

}  // namespace evsynth::screen
