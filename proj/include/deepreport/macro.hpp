#pragma once

// The outer plan → write → review → replan loop with ε-gated acceptance.

#include "deepreport/core.hpp"
#include "deepreport/llm.hpp"
#include "deepreport/micro.hpp"
#include "deepreport/retrieval.hpp"
#include "deepreport/reviewer.hpp"

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace deepreport::macro {

struct LoopConfig {
  double epsilon = 0.02;
  int max_iterations = 3;  // rounds, the initial one included
  int retry_on_reject = 1;

  void validate() const;  // Error(config)
};

/// Throws Error(contract) for qualities outside [0,1] or epsilon <= 0.
GateDecision gate(double previous_quality, double candidate_quality, double epsilon);

struct HistoryEntry {
  int round = 0;
  int outline_version = 0;
  FeedbackSignal feedback;
  bool accepted = false;
};

struct PlanningContext {
  std::vector<HistoryEntry> history;
};

/// Parses a planner outline reply. Throws Error(parse).
Outline parse_outline_reply(std::string_view reply, int version, std::size_t min_sections);

struct PlannedOutline {
  Outline outline;
  int corrections = 0;
};

/// Outline v0 from the query and the global evidence; one reprompt, then
/// Error(planning).
PlannedOutline plan_outline(llm::Gateway& gateway, const Query& query, const KnowledgeBase& kb);

struct InitialPlan {
  Outline outline;
  KnowledgeBase kb;
  int corrections = 0;
};

/// Global retrieval followed by plan_outline.
InitialPlan initial_plan(llm::Gateway& gateway, retrieval::Retriever& retriever, const Query& query);

struct SuggestionDecision {
  std::size_t index = 0;
  bool applied = false;
  std::string note;
};

struct ReplanResult {
  Outline outline;
  std::vector<SuggestionDecision> decisions;  // one per suggestion
  bool restructured = false;
};

/// Next outline version from the feedback. With no suggestions the outline
/// is carried over without a model call.
ReplanResult replan(llm::Gateway& gateway, const Query& query, const Outline& outline, const FeedbackSignal& feedback,
                    const KnowledgeBase& kb, const PlanningContext& context = {}, int round = 1);

/// Sections whose plan differs from the section with the same id in `before`
/// (new sections count as changed).
int count_plan_changes(const Outline& before, const Outline& after);

/// Everything needed to continue an interrupted run.
struct LoopState {
  Query query;
  KnowledgeBase global_kb;
  Outline accepted_outline;
  Draft accepted_draft;
  FeedbackSignal accepted_feedback;
  KnowledgeBase accepted_kb;
  PlanningContext context;
  std::vector<GateDecision> gates;
  std::vector<double> qualities;  // every reviewed round
  int rounds = 0;
  int rejects_in_row = 0;
  bool finished = false;
  RunManifest manifest;
};

nlohmann::json to_json(const LoopState& state);
LoopState loop_state_from_json(const nlohmann::json& j);

struct RoundRecord {
  int round = 0;
  Outline outline;
  Draft draft;
  FeedbackSignal feedback;
  GateDecision gate;
  std::optional<ReplanResult> replan;
  reviewer::ReviewTranscript transcript;
  std::map<SectionId, micro::SectionTrace> traces;
};

class LoopObserver {
 public:
  virtual ~LoopObserver() = default;
  virtual void on_round(const RoundRecord& record, const LoopState& state) = 0;
};

struct Agents {
  llm::Gateway& gateway;
  retrieval::Retriever& retriever;
  micro::MicroConfig micro;
  micro::Hooks hooks;
};

struct LoopOutcome {
  Outline outline;
  Draft draft;
  FeedbackSignal feedback;
  KnowledgeBase kb;
  RunManifest manifest;
  std::vector<GateDecision> gates;
  std::vector<double> qualities;
};

/// Runs (or resumes) the loop. The returned draft is the last accepted
/// state, which carries the highest accepted quality.
LoopOutcome run_macro_loop(Agents agents, const Query& query, const LoopConfig& config,
                           LoopObserver* observer = nullptr, std::optional<LoopState> resume = std::nullopt);

}  // namespace deepreport::macro
