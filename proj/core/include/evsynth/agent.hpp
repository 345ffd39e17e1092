#pragma once

#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "evsynth/provider.hpp"
#include "evsynth/retrieve.hpp"
#include "evsynth/stores.hpp"
#include "evsynth/structq.hpp"
#include "evsynth/types.hpp"

namespace evsynth::agent {

using retrieve::EvidenceItem;
using stores::Epoch;

// ---------------------------------------------------------------------------
// Routing
// ---------------------------------------------------------------------------

enum class Route : std::uint8_t { Graph, Vector, Structured, Direct };

std::string_view to_string(Route r) noexcept;
std::optional<Route> parse_route(std::string_view s);
constexpr bool is_factual(Route r) noexcept { return r != Route::Direct; }

/// Rule table, first match wins: aggregation cues go structured, relation and
/// comparison cues go graph, definitional questions without corpus words go
/// direct, everything else goes vector. A provider may only lift a direct
/// decision onto a retrieval pathway.
Route route(const std::string& query, provider::Provider* provider = nullptr);

// ---------------------------------------------------------------------------
// Plans and tools
// ---------------------------------------------------------------------------

inline constexpr std::string_view kRetrieveHybrid = "retrieve.hybrid";
inline constexpr std::string_view kRetrieveGraph = "retrieve.graph";
inline constexpr std::string_view kStructqExecute = "structq.execute";

enum class StepKind : std::uint8_t { ToolCall, Synthesis };

struct Step {
    StepKind kind = StepKind::ToolCall;
    std::string tool;  // empty for synthesis
    Json args = Json::object();
    std::string rationale;

    bool operator==(const Step& o) const { return kind == o.kind && tool == o.tool && args == o.args; }
};

struct Plan {
    Route route = Route::Vector;
    std::vector<Step> steps;

    /// Appends unless the step repeats the immediately preceding tool call.
    bool push(Step step);
    /// Inserts a tool call before the trailing synthesis step.
    bool insert_before_synthesis(Step step);
    std::size_t tool_calls() const;
};

Json to_json(const Step& s);
Json to_json(const Plan& p);

struct Observation {
    std::string tool;
    Json args = Json::object();
    Json output = Json::object();
    std::vector<EvidenceItem> evidence;
    std::vector<Predicate> applied_predicates;
    std::optional<structq::QueryAST> ast;
    std::optional<structq::QueryResult> table;
    std::optional<structq::ResolutionReport> resolution;
    bool cached = false;
};

struct ToolContext {
    const stores::DataPlane& plane;
    provider::Provider& provider;
    Epoch epoch;
    const retrieve::RetrieveConfig& retrieval;
    double fuzzy_threshold;
};

using ToolFn = std::function<Observation(const Json& args, const ToolContext& ctx)>;

struct Tool {
    std::string name;
    std::string description;
    ToolFn run;
};

class ToolRegistry {
public:
    void add(Tool tool);
    const Tool* find(std::string_view name) const;
    std::vector<std::string> names() const;
    bool empty() const noexcept { return tools_.empty(); }

    /// retrieve.hybrid, retrieve.graph and structq.execute.
    static ToolRegistry defaults();

private:
    std::map<std::string, Tool, std::less<>> tools_;
};

/// Template plan for a routed query. Factual plans start with a tool call
/// and end with synthesis. Throws NoApplicableTool.
Plan plan(const std::string& query, Route route, const ToolRegistry& tools,
          const retrieve::RetrieveConfig& config = {}, provider::Provider* provider = nullptr);

// ---------------------------------------------------------------------------
// Sufficiency
// ---------------------------------------------------------------------------

struct Constraint {
    enum class Kind : std::uint8_t { Predicate, Semantic };
    Kind kind = Kind::Semantic;
    std::string text;  // rendered predicate or noun phrase
    std::optional<evsynth::Predicate> predicate;

    bool operator==(const Constraint&) const = default;
};

/// Grammar predicates plus one semantic phrase per conjunct of the query.
std::vector<Constraint> extract_constraints(const std::string& query);

struct Claim {
    std::string text;
    std::vector<std::string> citations;
};

struct ConstraintStatus {
    Constraint constraint;
    bool covered = false;
    std::vector<std::string> chunk_ids;
};

struct ClaimStatus {
    Claim claim;
    bool supported = false;
    std::vector<std::string> chunk_ids;
};

struct Conflict {
    std::string chunk_a;
    std::string chunk_b;
    std::string note;
};

struct SufficiencyReport {
    std::vector<ConstraintStatus> constraints;
    std::vector<ClaimStatus> claims;
    std::vector<Conflict> conflicts;
    bool sufficient = false;

    std::vector<Constraint> uncovered() const;
    Json to_json() const;
};

/// Metadata view reconstructed from an evidence descriptor, for predicate checks.
MetadataView descriptor_view(const retrieve::DocDescriptor& d);

/// True when at least half of the phrase's content terms occur in `text`.
bool lexical_match(const std::string& phrase, const std::string& text);

SufficiencyReport assess_sufficiency(const std::vector<Constraint>& constraints,
                                     const std::vector<EvidenceItem>& evidence, const std::vector<Claim>& claims);

enum class Termination : std::uint8_t { Complete, BudgetExhausted };

std::string_view to_string(Termination t) noexcept;

struct ReplanOutcome {
    std::optional<Plan> plan;
    std::optional<Termination> terminate;
    std::vector<Step> appended;
};

/// `iteration` counts completed execute-assess rounds, starting at 1.
/// `executed` lists tool calls already run in this turn; they are never
/// appended again.
ReplanOutcome replan(const Plan& plan, const SufficiencyReport& report, std::size_t iteration,
                     std::size_t max_iterations, const std::vector<Step>& executed = {});

// ---------------------------------------------------------------------------
// Answers
// ---------------------------------------------------------------------------

struct AnswerSentence {
    std::string text;
    std::vector<std::string> citations;
    bool substantive = true;
};

struct GroundedAnswer {
    std::vector<AnswerSentence> sentences;
    std::vector<retrieve::DocDescriptor> sources;
    std::string session_id;
    bool partial = false;
    bool cached = false;

    std::string text() const;
    Json to_json() const;
};

struct GroundingRejection {
    std::size_t sentence_index = 0;
    std::string sentence;
    std::string reason;
};

struct GroundingCheck {
    std::optional<GroundedAnswer> answer;
    std::optional<GroundingRejection> rejection;

    bool ok() const noexcept { return answer.has_value(); }
};

/// Connective and caveat sentences that may stand without a citation.
bool is_non_substantive(std::string_view sentence);

/// Splits an answer into sentences and parses `[cite:<chunk_id>]` markers.
/// Rejects uncited substantive sentences and citations outside `evidence`.
GroundingCheck enforce_grounding(const std::string& answer_text, const std::vector<EvidenceItem>& evidence);

/// Generation with one retry after a grounding rejection. Throws
/// EmptyEvidence and UngroundableOutput.
GroundedAnswer synthesize(const std::string& query, const std::vector<EvidenceItem>& evidence,
                          provider::Provider& provider);

struct EchoedParameters {
    std::string corpus_scope;
    std::string temporal_window;
    std::vector<Predicate> study_design_filters;
    std::vector<std::string> metadata_fields;
    std::vector<Predicate> predicates;

    bool operator==(const EchoedParameters&) const = default;
};

struct NegativeResult {
    std::string statement;
    EchoedParameters echoed;
    std::size_t candidate_count = 0;
    std::string session_id;

    Json to_json() const;
};

/// "corpus: snapshot <epoch> (<n> documents)" or "corpus: empty snapshot <epoch>".
std::string corpus_scope(const stores::MetadataStore& store, Epoch epoch);

NegativeResult negative_ground(const std::string& query, const std::vector<Predicate>& applied,
                               const std::string& scope);

struct StructuredAnswer {
    structq::QueryAST ast;
    std::string sql;
    structq::QueryResult result;
    structq::ResolutionReport resolution;
    std::string text;
};

enum class ResponseKind : std::uint8_t { Grounded, Negative, Structured, Direct };

std::string_view to_string(ResponseKind k) noexcept;

struct Response {
    ResponseKind kind = ResponseKind::Grounded;
    std::string session_id;
    std::string query;
    Route route = Route::Vector;
    Plan plan;
    std::optional<GroundedAnswer> answer;
    std::optional<NegativeResult> negative;
    std::optional<StructuredAnswer> structured;
    std::optional<std::string> direct_text;
    Termination termination = Termination::Complete;
    std::size_t iterations = 0;
    std::vector<SufficiencyReport> reports;
    bool cached = false;

    bool partial() const noexcept { return termination == Termination::BudgetExhausted; }
    bool not_corpus_grounded() const noexcept { return kind == ResponseKind::Direct; }
    /// Wire format: kind, sentences, sources, flags and the kind-specific payload.
    Json to_json() const;
};

// ---------------------------------------------------------------------------
// Sessions and audit
// ---------------------------------------------------------------------------

struct AuditEntry {
    std::size_t seq = 0;
    std::string timestamp;
    std::string session_id;
    std::string kind;  // open, refresh, plan, tool_call, tool_failure, assess, answer
    std::string tool;
    std::string args_digest;    // sha256 of the compact JSON dump
    std::string output_digest;  // sha256 of the compact JSON dump
    Json args = Json::object();
    Json output = Json::object();
    bool cached = false;

    Json to_json() const;
    static AuditEntry from_json(const Json& j);
};

/// Digest of a JSON value (sha256 over its compact dump, keys sorted).
std::string json_digest(const Json& j);

struct AgentConfig {
    std::size_t max_iterations = 3;
    retrieve::RetrieveConfig retrieval;
    double fuzzy_threshold = structq::kDefaultFuzzyThreshold;
    /// Provider calls allowed per question.
    std::size_t max_provider_calls = 400;
    /// Test seam: replaces each computed sufficiency report.
    std::function<SufficiencyReport(const SufficiencyReport&)> sufficiency_override;
};

/// Session-scoped orchestration over a read-only data plane.
class Agent {
public:
    Agent(const stores::DataPlane& plane, provider::Provider& provider, AgentConfig config = {},
          ToolRegistry tools = ToolRegistry::defaults());
    ~Agent();
    Agent(const Agent&) = delete;
    Agent& operator=(const Agent&) = delete;

    const AgentConfig& config() const noexcept { return config_; }
    const ToolRegistry& tools() const noexcept { return tools_; }

    /// Pins the current epoch (or `at`). Throws SnapshotGone for evicted epochs.
    std::string open_session(std::optional<Epoch> at = std::nullopt);
    /// Re-pins to the latest epoch and clears the tool cache.
    Epoch refresh_session(const std::string& session_id);
    Epoch session_epoch(const std::string& session_id) const;
    std::vector<std::string> session_ids() const;

    Response ask(const std::string& session_id, const std::string& query);

    /// Runs one step in a session. Synthesis steps only check discipline:
    /// a factual synthesis with no evidence in the session throws
    /// DisciplineViolation. Tool errors surface as ToolFailure.
    Observation execute_step(const std::string& session_id, const Step& step, Route route);

    std::vector<AuditEntry> log(const std::string& session_id) const;
    void export_log(const std::string& session_id, std::ostream& out) const;
    /// Evidence items observed in the session, keyed by chunk_id.
    std::map<std::string, EvidenceItem> session_evidence(const std::string& session_id) const;

    /// Re-asks every logged question in a fresh session pinned to the logged
    /// epoch and compares answer digests. Returns the mismatching questions.
    std::vector<std::string> replay(const std::vector<AuditEntry>& entries);

private:
    struct Session;

    std::shared_ptr<Session> session(const std::string& id) const;
    void append(Session& s, AuditEntry entry) const;
    Observation run_tool(Session& s, const Step& step, provider::Provider& provider);

    const stores::DataPlane& plane_;
    provider::Provider& provider_;
    AgentConfig config_;
    ToolRegistry tools_;
    mutable std::mutex mu_;
    std::map<std::string, std::shared_ptr<Session>> sessions_;
    std::uint64_t next_session_ = 1;
};

}  // namespace evsynth::agent
