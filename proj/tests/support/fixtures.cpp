#include "fixtures.hpp"

#include <cmath>

namespace evsynth::fixtures {

using stores::AnnotationSet;

Json raw_record(const std::string& title, const std::string& abstract, std::optional<int> year,
                const std::vector<std::string>& authors, const std::string& full_text) {
    Json j = {{"title", title}, {"abstract", abstract}, {"venue", "Fixture Journal"}, {"source", "fixture"}};
    if (year) j["year"] = *year;
    if (!authors.empty()) j["authors"] = authors;
    if (!full_text.empty()) j["full_text"] = full_text;
    return j;
}

screen::Labels compliance_labels(std::size_t i) {
    using L = TernaryLabel;
    if (i == 0) return {L::Yes, L::Yes, L::Yes, L::Yes, L::Yes};
    // P: yes on 0..6, no on 7..15, maybe on 16..24.
    const L p = i < 7 ? L::Yes : (i < 16 ? L::No : L::Maybe);
    // C is never yes outside record 0, so no other record is all-yes.
    const L c = i % 2 == 0 ? L::Maybe : L::No;
    const L in = i % 3 == 0 ? L::Maybe : L::Yes;
    const L o = i % 4 == 0 ? L::No : L::Yes;
    const L s = i % 5 == 1 ? L::No : L::Yes;
    return {p, in, c, o, s};
}

std::vector<std::string> load_compliance_fixture(stores::DataPlane& plane, provider::Provider& provider) {
    std::vector<Json> raw;
    for (std::size_t i = 0; i < 25; ++i) {
        raw.push_back(raw_record("Compliance record " + std::to_string(i) + " on geriatric rehabilitation",
                                 "Cohort " + std::to_string(i) + " followed older adults in rehabilitation wards.",
                                 2018 + static_cast<int>(i % 5), {"Author" + std::to_string(i) + ", A."}));
    }
    Indexer indexer(plane, provider);
    indexer.ingest_raw(raw);

    std::vector<std::string> ids;
    const auto docs = plane.metadata().documents();
    std::map<std::string, std::string> by_title;
    for (const auto& d : docs) by_title[d.title] = d.doc_id;
    for (std::size_t i = 0; i < 25; ++i) {
        const auto& id = by_title.at(raw[i]["title"].get<std::string>());
        ids.push_back(id);
        const auto labels = compliance_labels(i);
        screen::ScreeningResult r;
        for (auto d : kAllDimensions) {
            screen::DimensionScore score;
            score.label = labels[static_cast<std::size_t>(d)];
            score.confidence = 0.55 + 0.01 * static_cast<double>((i * 7 + static_cast<std::size_t>(d) * 3) % 40);
            r.scores[d] = score;
        }
        plane.upsert_annotations(id, screen::to_annotations(r));
    }
    return ids;
}

std::vector<std::string> load_year_fixture(stores::DataPlane& plane, provider::Provider& provider) {
    const std::vector<int> years{2020, 2021, 2020, 2021, 2021};
    std::vector<Json> raw;
    for (std::size_t i = 0; i < years.size(); ++i) {
        raw.push_back(raw_record("Year fixture paper " + std::to_string(i),
                                 i == 1 ? "Stroke survivors practised treadmill walking." :
                                          "Community exercise classes for older adults.",
                                 years[i]));
    }
    Indexer(plane, provider).ingest_raw(raw);
    std::vector<std::string> ids;
    for (const auto& d : plane.metadata().documents()) ids.push_back(d.doc_id);
    return ids;
}

std::vector<Json> medical_corpus() {
    struct Paper {
        const char* title;
        int year;
        const char* author;
        const char* text;
        std::vector<std::string> interventions;
        std::vector<std::string> outcomes;
    };
    const std::vector<Paper> papers{
        {"Aerobic exercise and cognition in dementia", 2019, "Okafor, Ngozi",
         "Aerobic exercise was delivered three times weekly to people living with dementia. "
         "Global cognition improved after twelve weeks of aerobic exercise. "
         "Attendance at the aerobic sessions stayed high throughout the programme.",
         {"aerobic exercise"}, {"cognition"}},
        {"Sleep hygiene education for insomnia in older adults", 2021, "Lindqvist, Maja",
         "Sleep hygiene education was taught in small groups of older adults with insomnia. "
         "Sleep quality scores improved at the eight week follow up. "
         "Participants reported shorter sleep onset latency after the education sessions.",
         {"sleep hygiene education"}, {"sleep quality"}},
        {"Resistance training and fall prevention", 2016, "Haddad, Karim",
         "Progressive resistance training targeted leg strength in community dwelling seniors. "
         "Falls decreased over one year among those who completed resistance training. "
         "Muscle strength gains were largest in the first three months.",
         {"resistance training"}, {"falls"}},
        {"Music therapy for agitation in nursing homes", 2014, "Moreau, Claire",
         "Group music therapy sessions were offered to nursing home residents with agitation. "
         "Agitation scores fell during the weeks of music therapy. "
         "Staff rated the sessions as easy to deliver.",
         {"music therapy"}, {"agitation"}},
        {"Tai chi for balance in Parkinson disease", 2012, "Zhang, Wei",
         "Tai chi classes were compared with stretching in adults with Parkinson disease. "
         "Balance and gait stability improved more with tai chi. "
         "The tai chi group also reported greater confidence when walking.",
         {"tai chi"}, {"balance"}},
        {"Mediterranean diet and cardiovascular events", 2018, "Rossi, Luca",
         "A Mediterranean diet supplemented with olive oil was assigned to adults at high cardiovascular risk. "
         "Major cardiovascular events were reduced during follow up. "
         "Adherence to the diet was measured with a fourteen item questionnaire.",
         {"mediterranean diet"}, {"cardiovascular events"}},
        {"Cognitive behavioural therapy for late life depression", 2020, "Patel, Anjali",
         "Cognitive behavioural therapy was delivered by telephone to older adults with depression. "
         "Depressive symptoms improved at six months. "
         "Telephone delivery widened access for rural participants.",
         {"cognitive behavioural therapy"}, {"depression"}},
        {"Vitamin D supplementation and fractures", 2023, "Svensson, Erik",
         "Daily vitamin D supplementation was given to older women living at home. "
         "Hip fracture incidence was recorded over three years of supplementation. "
         "Serum vitamin D levels rose within the first six months.",
         {"vitamin d"}, {"fractures"}},
    };
    std::vector<Json> out;
    for (const auto& p : papers) {
        Json j = raw_record(p.title, std::string(p.text).substr(0, std::string(p.text).find(". ") + 1), p.year,
                            {p.author}, p.text);
        j["interventions"] = p.interventions;
        j["outcomes"] = p.outcomes;
        out.push_back(std::move(j));
    }
    return out;
}

void load_medical_corpus(stores::DataPlane& plane, provider::Provider& provider) {
    Indexer(plane, provider).ingest_raw(medical_corpus());
}

std::string marker(Dimension d, TernaryLabel l) {
    std::string m = "kw";
    m += static_cast<char>(std::tolower(static_cast<unsigned char>(to_char(d))));
    m += to_string(l);
    return m;
}

ScreeningSplit keyword_corpus(std::uint64_t seed, std::size_t n) {
    static const std::vector<std::string> kFiller{
        "patients", "outcome", "trial",    "cohort",  "measured", "baseline", "follow",  "weeks",
        "hospital", "primary", "clinical", "results", "analysis", "reported", "sample",  "groups",
        "study",    "data",    "effect",   "adults",  "protocol", "setting",  "methods", "review"};
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> label(0, 2);
    std::uniform_int_distribution<std::size_t> filler(0, kFiller.size() - 1);
    ScreeningSplit split;
    const std::size_t n_train = n * 8 / 10;
    for (std::size_t i = 0; i < n; ++i) {
        screen::LabeledExample ex;
        std::vector<std::string> words;
        for (auto d : kAllDimensions) {
            const auto l = static_cast<TernaryLabel>(label(rng));
            ex.labels[static_cast<std::size_t>(d)] = l;
            words.push_back(marker(d, l));
        }
        for (int w = 0; w < 6; ++w) words.push_back(kFiller[filler(rng)]);
        std::shuffle(words.begin(), words.end(), rng);
        ex.title = kFiller[filler(rng)] + " " + kFiller[filler(rng)];
        for (std::size_t w = 0; w < words.size(); ++w) ex.abstract += (w ? " " : "") + words[w];
        ex.abstract += ".";
        (i < n_train ? split.train : split.test).push_back(std::move(ex));
    }
    return split;
}

stores::Embedding random_unit(std::mt19937_64& rng, std::size_t dim) {
    std::normal_distribution<double> g(0.0, 1.0);
    stores::Embedding v(dim);
    for (auto& x : v) x = g(rng);
    return stores::normalized(std::move(v));
}

namespace {

const std::vector<std::string>& topical_words() {
    static const std::vector<std::string> kWords{
        "exercise", "cognition", "dementia",  "balance",   "falls",    "sleep",     "insomnia", "depression",
        "diet",     "cardiac",   "stroke",    "walking",   "strength", "memory",    "anxiety",  "therapy",
        "nursing",  "caregiver", "frailty",   "nutrition", "hearing",  "vision",    "pain",     "mobility",
        "fracture", "vitamin",   "telehealth", "music",    "yoga",     "agitation", "delirium", "hydration"};
    return kWords;
}

}  // namespace

std::vector<Json> random_corpus(std::mt19937_64& rng, std::size_t docs) {
    const auto& words = topical_words();
    std::uniform_int_distribution<std::size_t> pick(0, words.size() - 1);
    std::uniform_int_distribution<int> year(2005, 2024);
    std::uniform_int_distribution<int> sentences(2, 5);
    std::vector<Json> out;
    for (std::size_t i = 0; i < docs; ++i) {
        const std::string a = words[pick(rng)];
        const std::string b = words[pick(rng)];
        std::string full;
        const int n = sentences(rng);
        for (int s = 0; s < n; ++s) {
            full += "Participants receiving " + words[pick(rng)] + " support showed changes in " + words[pick(rng)] +
                    " and " + words[pick(rng)] + ". ";
        }
        out.push_back(raw_record("Report " + std::to_string(i) + " on " + a + " and " + b,
                                 "Trial of " + a + " for " + b + ".", year(rng),
                                 {"Writer" + std::to_string(i) + ", R."}, full));
    }
    return out;
}

std::string random_query(std::mt19937_64& rng) {
    const auto& words = topical_words();
    std::uniform_int_distribution<std::size_t> pick(0, words.size() - 1);
    std::uniform_int_distribution<int> n(2, 3);
    std::string q = "effects of " + words[pick(rng)];
    for (int i = 1; i < n(rng); ++i) q += " on " + words[pick(rng)];
    return q;
}

}  // namespace evsynth::fixtures
