#pragma once

// Parallel per-section Search → Replan → Write cycle.
//
// Workers only read an immutable snapshot. Each phase ends at a barrier whose
// completion step does the single-threaded work in outline order: committing
// local evidence tiers, aggregating refined plans, and finally assembling the
// draft. Cross-section conflicts are left for the global review.

#include "deepreport/core.hpp"
#include "deepreport/llm.hpp"
#include "deepreport/retrieval.hpp"
#include "deepreport/reviewer.hpp"

#include <functional>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

namespace deepreport::micro {

struct MicroConfig {
  std::size_t worker_cap = 8;
  int max_corrections = 2;
};

struct SectionWorkOrder {
  SectionPlan section_plan;
  std::string outline_digest;
  std::string global_digest;
  int max_corrections = 2;
};

/// Line-oriented trace of one section's stages; never contains conflicts.
using SectionTrace = std::vector<nlohmann::json>;

struct PlanResult {
  SectionPlan refined;
  bool changed = false;
  int corrections = 0;
  bool failed = false;
  std::string failure;
};

struct Hooks {
  /// Called by a worker before each model-backed stage (tests inject delays).
  std::function<void(const SectionId&, reviewer::Stage)> before_stage;
  /// Called once per worker with the cycle's live outline and knowledge base.
  /// Exists to prove that tampering is detected.
  std::function<void(Outline&, KnowledgeBase&)> on_worker_start;
};

struct MicroResult {
  Draft draft;
  KnowledgeBase kb;                      // global tier plus this cycle's local tiers
  std::vector<SectionPlan> final_plans;  // refined and aggregated
  std::map<SectionId, SectionTrace> traces;
  int plan_modifications = 0;
  int planning_corrections = 0;
  double retrieval_seconds = 0.0;
};

/// Drops goals already claimed verbatim by an earlier section and appends a
/// boundary note to the section that lost them. Section count is unchanged.
std::vector<SectionPlan> aggregate_plans(std::vector<SectionPlan> refined);

/// Evidence list shown to planner and writer prompts.
std::string format_evidence(const std::vector<const KnowledgeItem*>& items, std::size_t summary_chars = 600);

class MicroCycle {
 public:
  MicroCycle(llm::Gateway& gateway, retrieval::Retriever& retriever, Query query, MicroConfig config = {});

  void set_hooks(Hooks hooks) { hooks_ = std::move(hooks); }

  /// Refines a section plan against K_eff; the local tier must already be
  /// populated in kb. Never drops a goal: the monitor rejects such plans.
  PlanResult plan_section(const SectionWorkOrder& order, const KnowledgeBase& kb, SectionTrace* trace = nullptr);

  SectionDraft write_section(const SectionPlan& plan, const KnowledgeBase& kb, const IterationSnapshot& snapshot,
                             SectionTrace* trace = nullptr);

  /// Throws Error(isolation) when the outline or K_g changed during the
  /// cycle, Error(structural) listing failed sections.
  MicroResult run(const Outline& outline, const KnowledgeBase& kb);

 private:
  void before(const SectionId& id, reviewer::Stage stage) const;

  llm::Gateway& gateway_;
  retrieval::Retriever& retriever_;
  Query query_;
  MicroConfig config_;
  Hooks hooks_;
};

}  // namespace deepreport::micro
