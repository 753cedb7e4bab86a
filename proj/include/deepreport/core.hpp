#pragma once

// Shared domain types of the report-generation state machine and its pure
// transitions. Nothing here performs I/O.

#include "deepreport/avr.hpp"

#include <atomic>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace deepreport {

using SectionId = std::string;
using RefId = std::int64_t;

inline constexpr RefId first_ref_id = 1001;

struct Query {
  std::string id;
  std::string text;
};

/// Throws Error(contract) when text is blank.
Query make_query(std::string id, std::string text);

struct SectionPlan {
  SectionId section_id;
  std::string title;
  std::vector<std::string> goals;
  std::vector<std::string> writing_constraints;
  std::vector<std::string> visual_intents;
  std::vector<SectionId> derived_from;  // lineage after merge/split restructuring

  bool operator==(const SectionPlan&) const = default;
};

enum class OutlineProvenance { initial, replanned, restructured };

struct Outline {
  int version = 0;
  std::vector<SectionPlan> sections;
  OutlineProvenance provenance = OutlineProvenance::initial;

  bool operator==(const Outline&) const = default;

  const SectionPlan* find(std::string_view section_id) const;
  std::size_t index_of(std::string_view section_id) const;  // npos when absent
};

/// Nonempty sections, unique ids, nonempty titles. Throws Error(structural).
void validate(const Outline& outline);

enum class IngestionMode { snippet, full_summarized };

/// A number harvested from item text together with the words around it.
struct NumericFact {
  std::string label;
  double value = 0.0;

  bool operator==(const NumericFact&) const = default;
};

struct KnowledgeItem {
  RefId ref_id = 0;
  std::string url;
  std::string title;
  std::string summary;
  std::string excerpt;
  std::string retrieved_at;
  IngestionMode mode = IngestionMode::snippet;
  bool fallback = false;  // full-page ingestion degraded to the snippet
  std::vector<NumericFact> facts;

  bool operator==(const KnowledgeItem&) const = default;
};

/// Two-tier evidence store. The global tier is shared and immutable; each
/// section owns a private local tier. A section sees K_g plus its own K_s.
class KnowledgeBase {
 public:
  KnowledgeBase();
  explicit KnowledgeBase(std::vector<KnowledgeItem> global_tier);

  const std::vector<KnowledgeItem>& global_tier() const noexcept { return *global_; }
  std::shared_ptr<const std::vector<KnowledgeItem>> shared_global_tier() const noexcept { return global_; }
  const std::map<SectionId, std::vector<KnowledgeItem>>& local_tiers() const noexcept { return local_; }
  const std::vector<KnowledgeItem>& local_tier(std::string_view section_id) const;

  std::vector<const KnowledgeItem*> effective(std::string_view section_id) const;
  const KnowledgeItem* find(RefId id) const;
  const KnowledgeItem* find_effective(std::string_view section_id, RefId id) const;

  /// Tier owning the url: "global", a section id, or nullopt.
  std::optional<std::string> url_owner(std::string_view url) const;

  /// Adds to section's local tier. Throws Error(internal) on any ref_id or
  /// url collision, which would break tier disjointness.
  void add_local(const SectionId& section_id, KnowledgeItem item);

  RefId max_ref_id() const;
  std::size_t size() const;

  /// Same global tier, no local tiers.
  KnowledgeBase global_only() const;

  /// Throws Error(internal) if any ref_id repeats across tiers.
  void check_invariants() const;

 private:
  std::shared_ptr<const std::vector<KnowledgeItem>> global_;
  std::map<SectionId, std::vector<KnowledgeItem>> local_;
};

/// Monotone citation-key counter.
class RefIdAllocator {
 public:
  explicit RefIdAllocator(RefId first = first_ref_id) : next_(first) {}
  RefId next() noexcept { return next_.fetch_add(1); }
  RefId peek() const noexcept { return next_.load(); }

 private:
  std::atomic<RefId> next_;
};

enum class SectionStatus { pending, written, corrected, failed };

struct SectionDraft {
  SectionId section_id;
  std::string text;
  std::vector<avr::BlockSpan> avr_blocks;
  int revision_count = 0;
  SectionStatus status = SectionStatus::pending;
  std::string failure_reason;
};

struct Draft {
  int version = 0;
  std::vector<SectionDraft> sections;
};

struct CrossSectionConflict {
  SectionId section_a;
  SectionId section_b;
  std::string description;

  bool operator==(const CrossSectionConflict&) const = default;
};

enum class EditAction { trim, expand, merge, split, reorder, add, remove };

bool is_restructuring(EditAction action) noexcept;

struct OutlineSuggestion {
  std::string target_section_id;  // or "new"
  EditAction action = EditAction::expand;
  std::string instruction;

  bool operator==(const OutlineSuggestion&) const = default;
};

struct FeedbackSignal {
  double quality = 0.0;
  std::map<SectionId, std::vector<std::string>> section_findings;
  std::vector<CrossSectionConflict> cross_section_conflicts;
  std::vector<OutlineSuggestion> outline_suggestions;
  std::string notes;

  bool operator==(const FeedbackSignal&) const = default;
};

/// Quality in [0,1] and every section reference present in the outline.
void validate(const FeedbackSignal& feedback, const Outline& outline);

struct GateDecision {
  bool accepted = false;
  double previous_quality = 0.0;
  double candidate_quality = 0.0;
  double epsilon = 0.0;
  std::string reason;
};

struct RequestLatency {
  std::string phase;
  double seconds = 0.0;
};

struct RunManifest {
  int macro_iterations = 0;
  int accepted_updates = 0;
  std::vector<double> accepted_qualities;
  double plan_modifications_per_section = 0.0;
  double content_modifications_per_section = 0.0;
  double zero_shot_success_rate = 0.0;
  int restructure_events = 0;
  double restructure_rate = 0.0;
  double retrieval_duration = 0.0;   // seconds
  double generation_duration = 0.0;  // seconds
  std::map<std::string, std::int64_t> token_usage;
  std::vector<RequestLatency> per_request_latencies;

  // Raw counters the rates are derived from.
  int plan_modifications = 0;
  int sections_planned = 0;
  int section_drafts_written = 0;
  int section_revisions = 0;
  int zero_shot_sections = 0;
  int planning_corrections = 0;
  int visuals_requested = 0;
  int visuals_rendered = 0;
  int visuals_degraded = 0;
  int charts_flagged_pre_audit = 0;
  int charts_flagged_final = 0;
  std::vector<std::string> warnings;

  /// Recomputes the rate fields from the raw counters.
  void finalize_rates();
};

/// Immutable view handed to every worker of one micro-cycle.
struct IterationSnapshot {
  std::shared_ptr<const Outline> outline;
  std::shared_ptr<const std::vector<KnowledgeItem>> global_tier;
  std::string outline_digest;
  std::string global_digest;
};

std::string digest(const Outline& outline);
std::string digest(const std::vector<KnowledgeItem>& tier);

/// Validates the outline and deep-copies it next to the shared global tier.
IterationSnapshot freeze_snapshot(const Outline& outline, const KnowledgeBase& kb);

/// Orders section drafts by the outline. Throws Error(structural) when a
/// section is missing, duplicated, unknown or not finished.
Draft assemble_draft(std::vector<SectionDraft> section_drafts, const Outline& outline);

}  // namespace deepreport
