#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "evsynth/agent.hpp"
#include "evsynth/indexer.hpp"
#include "expect_error.hpp"
#include "fixtures.hpp"

using namespace evsynth;
using namespace evsynth::agent;

namespace {

EvidenceItem item(const std::string& chunk, const std::string& doc, const std::string& text) {
    EvidenceItem e;
    e.chunk_id = chunk;
    e.descriptor.doc_id = doc;
    e.descriptor.title = "Title of " + doc;
    e.descriptor.year = 2020;
    e.text = text;
    e.score = 0.5;
    return e;
}

SufficiencyReport report_with(std::vector<Constraint> uncovered) {
    SufficiencyReport r;
    for (auto& c : uncovered) r.constraints.push_back({std::move(c), false, {}});
    return r;
}

struct MedicalPlane {
    stores::DataPlane plane;
    provider::StubProvider stub;
    MedicalPlane() { fixtures::load_medical_corpus(plane, stub); }
};

// Every substantive sentence cites chunks that the session actually observed.
void expect_grounded(const Response& r, const std::map<std::string, EvidenceItem>& seen) {
    ASSERT_TRUE(r.answer);
    for (const auto& s : r.answer->sentences) {
        if (!s.substantive) continue;
        ASSERT_FALSE(s.citations.empty()) << s.text;
        for (const auto& c : s.citations) EXPECT_TRUE(seen.count(c)) << c;
    }
}

}  // namespace

TEST(Route, RuleTable) {
    EXPECT_EQ(route("How many abstracts mention stroke?"), Route::Structured);
    EXPECT_EQ(route("What links exercise interventions to cognition outcomes across authors?"), Route::Graph);
    EXPECT_EQ(route("What does PICOS stand for?"), Route::Direct);
    EXPECT_EQ(route("Effects of tai chi on balance"), Route::Vector);
    EXPECT_EQ(route("What is the definition of frailty in studies since 2010?"), Route::Vector);
    EXPECT_EQ(parse_route(to_string(Route::Graph)), Route::Graph);
}

TEST(Plan, Shapes) {
    const auto tools = ToolRegistry::defaults();
    const auto direct = plan("What does PICOS stand for?", Route::Direct, tools);
    EXPECT_EQ(direct.tool_calls(), 0u);
    ASSERT_EQ(direct.steps.size(), 1u);
    EXPECT_EQ(direct.steps[0].kind, StepKind::Synthesis);

    const auto structured = plan("How many abstracts mention stroke?", Route::Structured, tools);
    ASSERT_EQ(structured.steps.size(), 2u);
    EXPECT_EQ(structured.steps[0].tool, kStructqExecute);
    EXPECT_EQ(structured.steps[1].kind, StepKind::Synthesis);

    const auto cmp = plan("Compare aerobic exercise with music therapy", Route::Graph, tools);
    ASSERT_EQ(cmp.tool_calls(), 2u);
    EXPECT_EQ(cmp.steps[0].args["query"], "aerobic exercise");
    EXPECT_EQ(cmp.steps[1].args["query"], "music therapy");
    EXPECT_EQ(cmp.steps.back().kind, StepKind::Synthesis);

    const auto vec = plan("balance training after 2015", Route::Vector, tools);
    EXPECT_EQ(vec.steps[0].tool, kRetrieveHybrid);
    EXPECT_EQ(vec.steps[0].args["predicates"].size(), 1u);
}

TEST(Plan, MissingToolFails) {
    EXPECT_ERROR(plan("x", Route::Vector, ToolRegistry{}), ErrorCode::NoApplicableTool);
    ToolRegistry only_graph;
    only_graph.add({std::string(kRetrieveGraph), "", [](const Json&, const ToolContext&) { return Observation{}; }});
    EXPECT_ERROR(plan("x", Route::Structured, only_graph), ErrorCode::NoApplicableTool);
}

TEST(Plan, PushSkipsImmediateRepeat) {
    Plan p;
    Step s;
    s.tool = "t";
    EXPECT_TRUE(p.push(s));
    EXPECT_FALSE(p.push(s));
    EXPECT_EQ(p.steps.size(), 1u);
}

TEST(Discipline, SynthesisBeforeEvidence) {
    MedicalPlane m;
    Agent a(m.plane, m.stub);
    const auto sid = a.open_session();
    Step synth;
    synth.kind = StepKind::Synthesis;
    EXPECT_ERROR(a.execute_step(sid, synth, Route::Vector), ErrorCode::DisciplineViolation);
    EXPECT_NO_THROW(a.execute_step(sid, synth, Route::Direct));
}

TEST(Tools, IdenticalStepIsCached) {
    MedicalPlane m;
    Agent a(m.plane, m.stub);
    const auto sid = a.open_session();
    Step s;
    s.tool = std::string(kRetrieveHybrid);
    s.args = {{"semantic_text", "tai chi balance"}, {"predicates", Json::array()}};
    const auto first = a.execute_step(sid, s, Route::Vector);
    const auto second = a.execute_step(sid, s, Route::Vector);
    EXPECT_FALSE(first.cached);
    EXPECT_TRUE(second.cached);
    EXPECT_EQ(first.output, second.output);
    const auto log = a.log(sid);
    EXPECT_TRUE(log.back().cached);
}

TEST(Tools, BadArgumentsSurfaceAsToolFailure) {
    MedicalPlane m;
    Agent a(m.plane, m.stub);
    const auto sid = a.open_session();
    Step s;
    s.tool = std::string(kRetrieveHybrid);
    s.args = {{"semantic_text", "x"}, {"k", 0}};
    EXPECT_ERROR(a.execute_step(sid, s, Route::Vector), ErrorCode::ToolFailure);
    EXPECT_EQ(a.log(sid).back().kind, "tool_failure");
}

TEST(Constraints, PredicatesAndConjuncts) {
    const auto cs = extract_constraints("aerobic exercise and sleep quality after 2015");
    std::vector<std::string> semantic;
    std::size_t predicates = 0;
    for (const auto& c : cs) {
        if (c.kind == Constraint::Kind::Semantic) semantic.push_back(c.text);
        else ++predicates;
    }
    EXPECT_EQ(predicates, 1u);
    EXPECT_EQ(semantic, (std::vector<std::string>{"aerobic exercise", "sleep quality"}));
}

TEST(Sufficiency, CoverageClaimsAndConflicts) {
    const std::vector<Constraint> cs{{Constraint::Kind::Semantic, "tai chi", std::nullopt},
                                     {Constraint::Kind::Predicate, "year > 2015",
                                      Predicate{"year", Comparator::Gt, std::int64_t{2015}}}};
    const std::vector<EvidenceItem> ev{item("c1", "d1", "Tai chi improved balance.")};
    auto r = assess_sufficiency(cs, ev, {{"Balance improved.", {"c1"}}});
    EXPECT_TRUE(r.sufficient);

    r = assess_sufficiency(cs, ev, {{"Balance improved.", {"c9"}}});
    EXPECT_FALSE(r.sufficient);
    EXPECT_FALSE(r.claims[0].supported);

    auto old = ev;
    old[0].descriptor.year = 2010;
    r = assess_sufficiency(cs, old, {});
    ASSERT_EQ(r.uncovered().size(), 1u);
    EXPECT_EQ(r.uncovered()[0].kind, Constraint::Kind::Predicate);

    const std::vector<EvidenceItem> split{item("c1", "d1", "Tai chi improved balance."),
                                          item("c2", "d2", "Tai chi did not improve balance.")};
    r = assess_sufficiency(cs, split, {});
    ASSERT_EQ(r.conflicts.size(), 1u);
    EXPECT_FALSE(r.sufficient);
    EXPECT_EQ(r.to_json()["verdict"], "insufficient");
}

TEST(Replan, UncoveredPredicateAppendsFilteredStep) {
    const auto tools = ToolRegistry::defaults();
    const auto p = plan("balance training", Route::Vector, tools);
    const Predicate after{"year", Comparator::Gt, std::int64_t{2015}};
    const auto out = replan(p, report_with({{Constraint::Kind::Predicate, render(after), after}}), 1, 3);
    ASSERT_TRUE(out.plan);
    ASSERT_EQ(out.appended.size(), 1u);
    const auto& step = out.appended[0];
    EXPECT_EQ(step.tool, kRetrieveHybrid);
    EXPECT_EQ(step.args["semantic_text"], "balance training");
    EXPECT_EQ(step.args["predicates"], Json::array({to_json(after)}));
    EXPECT_EQ(out.plan->steps.back().kind, StepKind::Synthesis);
    EXPECT_EQ(out.plan->tool_calls(), 2u);
}

TEST(Replan, TerminationRules) {
    const auto p = plan("balance training", Route::Vector, ToolRegistry::defaults());
    SufficiencyReport ok;
    ok.sufficient = true;
    EXPECT_EQ(replan(p, ok, 1, 3).terminate, Termination::Complete);
    EXPECT_EQ(replan(p, report_with({}), 3, 3).terminate, Termination::BudgetExhausted);

    // Nothing uncovered but still insufficient: relax theta.
    const auto relaxed = replan(p, report_with({}), 1, 3);
    ASSERT_EQ(relaxed.appended.size(), 1u);
    EXPECT_NEAR(relaxed.appended[0].args["theta"].get<double>(), 0.25, 1e-12);

    // Graph plans widen to two hops instead.
    const auto g = plan("What links exercise to cognition?", Route::Graph, ToolRegistry::defaults());
    const auto wider = replan(g, report_with({}), 1, 3);
    ASSERT_EQ(wider.appended.size(), 1u);
    EXPECT_EQ(wider.appended[0].args["hops"], 2);
    // Already at two hops with nothing new to try.
    const auto stuck = replan(*wider.plan, report_with({}), 2, 3, {wider.appended[0]});
    EXPECT_EQ(stuck.terminate, Termination::BudgetExhausted);
}

TEST(Grounding, AcceptsCitedAndCaveats) {
    const std::vector<EvidenceItem> ev{item("c1", "d1", "a"), item("c2", "d2", "b"), item("c3", "d1", "c")};
    const auto check =
        enforce_grounding("Falls fell [cite:c1]. Balance rose [cite:c2]. Overall. Gait held [cite:c3][cite:c1].", ev);
    ASSERT_TRUE(check.ok());
    EXPECT_EQ(check.answer->sentences.size(), 4u);
    EXPECT_FALSE(check.answer->sentences[2].substantive);
    EXPECT_EQ(check.answer->sentences[3].citations, (std::vector<std::string>{"c3", "c1"}));
    EXPECT_EQ(check.answer->sources.size(), 2u);
    EXPECT_TRUE(enforce_grounding("", ev).ok());
    EXPECT_TRUE(enforce_grounding("", ev).answer->sentences.empty());
}

TEST(Grounding, RejectsOutsideAndUncited) {
    const std::vector<EvidenceItem> ev{item("c1", "d1", "a")};
    const auto outside = enforce_grounding("Falls fell [cite:c1]. Balance rose [cite:c7].", ev);
    ASSERT_FALSE(outside.ok());
    EXPECT_EQ(outside.rejection->sentence_index, 1u);
    const auto uncited = enforce_grounding("Falls fell.", ev);
    ASSERT_FALSE(uncited.ok());
    EXPECT_NE(uncited.rejection->reason.find("without a citation"), std::string::npos);
}

TEST(Grounding, RandomCitationSets) {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<EvidenceItem> ev;
        const int n = 1 + static_cast<int>(rng() % 5);
        for (int i = 0; i < n; ++i) ev.push_back(item("c" + std::to_string(i), "d" + std::to_string(i % 2), "t"));
        std::string answer;
        bool bad = false;
        const int sentences = 1 + static_cast<int>(rng() % 4);
        for (int s = 0; s < sentences; ++s) {
            const int cite = static_cast<int>(rng() % static_cast<std::uint64_t>(n + 2));
            if (cite >= n) bad = true;
            answer += "Finding " + std::to_string(s) + " [cite:c" + std::to_string(cite) + "]. ";
        }
        EXPECT_EQ(enforce_grounding(answer, ev).ok(), !bad) << answer;
    }
}

TEST(Synthesize, StubCitesEachItem) {
    provider::StubProvider stub;
    const std::vector<EvidenceItem> ev{item("c1", "d1", "Falls decreased. More."), item("c2", "d2", "Balance improved."),
                                       item("c3", "d1", "Gait held.")};
    const auto a = synthesize("q", ev, stub);
    ASSERT_EQ(a.sentences.size(), 3u);
    for (const auto& s : a.sentences) EXPECT_EQ(s.citations.size(), 1u);
    EXPECT_EQ(a.sources.size(), 2u);
    EXPECT_ERROR(synthesize("q", {}, stub), ErrorCode::EmptyEvidence);
}

namespace {

class UncitedProvider : public provider::StubProvider {
public:
    std::string generate(const provider::GenerationRequest& req) override {
        if (req.task == provider::Task::Synthesis) return "Everything works.";
        return StubProvider::generate(req);
    }
};

}  // namespace

TEST(Synthesize, UngroundableAfterRetry) {
    UncitedProvider p;
    EXPECT_ERROR(synthesize("q", {item("c1", "d1", "x")}, p), ErrorCode::UngroundableOutput);
}

TEST(Negative, EchoesExecutedPredicates) {
    MedicalPlane m;
    Agent a(m.plane, m.stub);
    const auto sid = a.open_session();
    const auto r = a.ask(sid, "studies between 1900 and 1901 on walking");
    ASSERT_EQ(r.kind, ResponseKind::Negative);
    ASSERT_TRUE(r.negative);
    const std::vector<Predicate> expected{{"year", Comparator::Ge, std::int64_t{1900}},
                                          {"year", Comparator::Le, std::int64_t{1901}}};
    EXPECT_EQ(r.negative->echoed.predicates, expected);
    EXPECT_EQ(r.negative->echoed.temporal_window, render(expected[0]) + " AND " + render(expected[1]));
    EXPECT_EQ(r.negative->echoed.metadata_fields, std::vector<std::string>{"year"});
    EXPECT_EQ(r.negative->echoed.corpus_scope, corpus_scope(m.plane.metadata(), m.plane.epoch()));
    EXPECT_NE(r.negative->statement.find("walking"), std::string::npos);
    EXPECT_EQ(r.negative->session_id, sid);
}

TEST(Negative, EmptyCorpusScope) {
    stores::DataPlane plane;
    provider::StubProvider stub;
    Agent a(plane, stub);
    const auto sid = a.open_session();
    const auto r = a.ask(sid, "effects of tai chi on balance");
    ASSERT_EQ(r.kind, ResponseKind::Negative);
    EXPECT_EQ(r.negative->echoed.corpus_scope, "corpus: empty snapshot " + std::to_string(plane.epoch()));
    EXPECT_EQ(r.negative->echoed.temporal_window, "unbounded");
}

TEST(Structured, ZeroCountIsAnAnswer) {
    MedicalPlane m;
    Agent a(m.plane, m.stub);
    const auto r = a.ask(a.open_session(), "How many abstracts mention 'zebrafish'?");
    ASSERT_EQ(r.kind, ResponseKind::Structured);
    EXPECT_EQ(r.structured->result.rows[0][0], FieldValue(std::int64_t{0}));
}

TEST(Direct, Watermarked) {
    MedicalPlane m;
    Agent a(m.plane, m.stub);
    const auto r = a.ask(a.open_session(), "What does PICOS stand for?");
    EXPECT_EQ(r.kind, ResponseKind::Direct);
    EXPECT_TRUE(r.not_corpus_grounded());
    EXPECT_EQ(r.direct_text->rfind("[not corpus-grounded]", 0), 0u);
}

TEST(Loop, AlwaysInsufficientExhaustsBudget) {
    MedicalPlane m;
    AgentConfig cfg;
    cfg.sufficiency_override = [](const SufficiencyReport& r) {
        auto out = r;
        out.sufficient = false;
        return out;
    };
    Agent a(m.plane, m.stub, cfg);
    const auto r = a.ask(a.open_session(), "effects of tai chi on balance");
    EXPECT_LE(r.iterations, cfg.max_iterations);
    EXPECT_EQ(r.termination, Termination::BudgetExhausted);
    ASSERT_EQ(r.kind, ResponseKind::Grounded);
    EXPECT_TRUE(r.answer->partial);
    EXPECT_EQ(r.reports.size(), r.iterations);
}

TEST(Loop, SecondConstraintFetchedByOneReplan) {
    MedicalPlane m;
    AgentConfig cfg;
    cfg.retrieval.k = 1;
    cfg.retrieval.use_graph = false;
    Agent a(m.plane, m.stub, cfg);
    const auto sid = a.open_session();
    const auto r = a.ask(sid, "aerobic exercise and sleep quality");
    ASSERT_EQ(r.reports.size(), 2u);
    EXPECT_FALSE(r.reports[0].sufficient);
    const auto missing = r.reports[0].uncovered();
    ASSERT_EQ(missing.size(), 1u);
    EXPECT_TRUE(r.reports[1].sufficient);
    EXPECT_EQ(r.termination, Termination::Complete);
    ASSERT_EQ(r.plan.tool_calls(), 2u);
    EXPECT_EQ(r.plan.steps[1].args["semantic_text"], missing[0].text);
    expect_grounded(r, a.session_evidence(sid));
}

TEST(Sessions, DistinctIdsAndPinnedEpochs) {
    MedicalPlane m;
    Agent a(m.plane, m.stub);
    const auto s1 = a.open_session();
    const auto s2 = a.open_session();
    EXPECT_NE(s1, s2);
    const auto pinned = a.session_epoch(s1);
    Indexer(m.plane, m.stub).ingest_raw({fixtures::raw_record("Late addition on tai chi", "Tai chi again.", 2024)});
    EXPECT_EQ(a.session_epoch(s1), pinned);
    EXPECT_GT(a.refresh_session(s1), pinned);
    EXPECT_EQ(a.session_epoch(s1), m.plane.epoch());
}

TEST(Sessions, RandomQuestionsStayGrounded) {
    std::mt19937_64 rng(17);
    stores::DataPlane plane;
    provider::StubProvider stub;
    Indexer(plane, stub).ingest_raw(fixtures::random_corpus(rng, 30));
    Agent a(plane, stub);
    for (int i = 0; i < 20; ++i) {
        const auto sid = a.open_session();
        const auto r = a.ask(sid, fixtures::random_query(rng));
        if (r.kind == ResponseKind::Grounded) expect_grounded(r, a.session_evidence(sid));
    }
}

TEST(Audit, ExportAndReplay) {
    MedicalPlane m;
    Agent a(m.plane, m.stub);
    const auto sid = a.open_session();
    a.ask(sid, "effects of tai chi on balance");
    a.ask(sid, "How many abstracts mention 'music'?");
    std::ostringstream out;
    a.export_log(sid, out);
    std::vector<AuditEntry> entries;
    std::istringstream in(out.str());
    for (std::string line; std::getline(in, line);) entries.push_back(AuditEntry::from_json(Json::parse(line)));
    ASSERT_EQ(entries.size(), a.log(sid).size());
    EXPECT_EQ(entries.front().kind, "open");
    for (std::size_t i = 0; i < entries.size(); ++i) EXPECT_EQ(entries[i].seq, i);
    EXPECT_TRUE(a.replay(entries).empty());
}
