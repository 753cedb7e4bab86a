#pragma once

// Post-hoc global review (quality score plus structured findings) and the
// rule-first monitor that watches each micro-cycle stage.

#include "deepreport/core.hpp"
#include "deepreport/llm.hpp"

#include <set>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace deepreport::reviewer {

struct ReviewRubric {
  std::vector<std::pair<std::string, std::string>> dimensions;  // name, description
  std::string output_schema_note;

  static const ReviewRubric& standard();
};

/// Parses a reviewer reply against the outline. Throws Error(parse) with a
/// message suitable for a corrective reprompt.
FeedbackSignal parse_review(std::string_view reply, const Outline& outline);

struct ReviewTranscript {
  std::vector<std::string> prompts;
  std::vector<std::string> replies;
};

/// One call, one corrective reprompt, then Error(review).
FeedbackSignal global_review(llm::Gateway& gateway, const Query& query, const Draft& draft, const Outline& outline,
                             int round = 0, const ReviewRubric& rubric = ReviewRubric::standard(),
                             ReviewTranscript* transcript = nullptr);

/// Draft as the reviewer sees it: headed sections in outline order.
std::string render_draft_for_review(const Draft& draft, const Outline& outline);

// ---------------------------------------------------------------------------
// Monitoring mode

enum class Stage { search, replan, write };

const char* to_string(Stage stage) noexcept;

struct MonitorVerdict {
  Stage stage = Stage::write;
  bool ok = true;
  std::string correction_instruction;  // nonempty iff !ok
};

struct SearchOutput {
  std::vector<std::string> queries;
  std::size_t candidates = 0;
};

struct ReplanOutput {
  SectionPlan refined;
};

struct WriteOutput {
  std::string text;
};

using StageOutput = std::variant<SearchOutput, ReplanOutput, WriteOutput>;

struct MonitorConstraints {
  SectionPlan plan;                  // the plan the stage had to honour
  std::set<RefId> resolvable_refs;   // K_eff of the section
};

/// Deterministic rule checks:
///   search: at least one nonempty query;
///   replan: every original goal retained verbatim, title nonempty;
///   write:  nonempty text, every <ref:N> resolvable (including AVR
///           Data_Source lines), every AVR block parses.
MonitorVerdict monitor(const StageOutput& output, const MonitorConstraints& constraints);

/// Goals whose content words barely occur in the text (heuristic).
std::vector<std::string> uncovered_goals(const std::vector<std::string>& goals, std::string_view text);

/// Rules first; for the write stage, when rules pass but goals look uncovered,
/// asks the reviewer model. An unparseable model verdict counts as ok.
MonitorVerdict monitor_with_escalation(llm::Gateway& gateway, const StageOutput& output,
                                       const MonitorConstraints& constraints);

}  // namespace deepreport::reviewer
