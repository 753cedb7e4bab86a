#include "deepreport/reviewer.hpp"

#include "deepreport/error.hpp"
#include "deepreport/json_io.hpp"
#include "deepreport/text.hpp"

#include <algorithm>
#include <sstream>

namespace deepreport::reviewer {

namespace {

std::string bullets(const std::vector<std::string>& items) {
  if (items.empty()) return "- (none)";
  std::string out;
  for (const auto& i : items) out += "- " + i + "\n";
  out.pop_back();
  return out;
}

void require_section(const Outline& outline, const std::string& id, const char* where) {
  if (!outline.find(id)) throw Error(ErrorKind::parse, "unknown section id '" + id + "' in " + where);
}

std::string string_field(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return {};
  if (!it->is_string()) throw Error(ErrorKind::parse, std::string("field '") + key + "' must be a string");
  return it->get<std::string>();
}

}  // namespace

const ReviewRubric& ReviewRubric::standard() {
  static const ReviewRubric rubric{
      {{"coverage", "Every outline goal is addressed by its section."},
       {"depth", "Sections explain mechanisms and causes, not only facts; depth is balanced."},
       {"consistency", "No contradictions or duplicated material between sections."},
       {"grounding", "Claims carry <ref:N> citations to the listed evidence."},
       {"visuals", "Planned visualizations add information the prose does not already give."}},
      "quality_0_100 is one overall score; findings reference section ids from the outline."};
  return rubric;
}

FeedbackSignal parse_review(std::string_view reply, const Outline& outline) {
  auto parsed = parse_reply_object(reply);
  if (!parsed) throw Error(ErrorKind::parse, "reply is not a JSON object");
  const json& j = *parsed;
  FeedbackSignal fb;
  try {
    if (!j.contains("quality_0_100") || !j["quality_0_100"].is_number())
      throw Error(ErrorKind::parse, "missing numeric quality_0_100");
    double q = j["quality_0_100"].get<double>();
    if (!(q >= 0.0 && q <= 100.0)) {
      std::ostringstream msg;
      msg << "quality_0_100 out of range: " << q;
      throw Error(ErrorKind::parse, msg.str());
    }
    fb.quality = q / 100.0;

    if (auto it = j.find("section_findings"); it != j.end() && !it->is_null()) {
      if (!it->is_object()) throw Error(ErrorKind::parse, "section_findings must be an object");
      for (const auto& [sid, issues] : it->items()) {
        require_section(outline, sid, "section_findings");
        auto& list = fb.section_findings[sid];
        if (issues.is_string()) list.push_back(issues.get<std::string>());
        else
          for (const auto& issue : issues) list.push_back(issue.get<std::string>());
      }
    }
    if (auto it = j.find("conflicts"); it != j.end() && !it->is_null()) {
      for (const auto& c : *it) {
        CrossSectionConflict conflict{string_field(c, "section_a"), string_field(c, "section_b"),
                                      string_field(c, "description")};
        require_section(outline, conflict.section_a, "conflicts");
        require_section(outline, conflict.section_b, "conflicts");
        if (conflict.section_a == conflict.section_b)
          throw Error(ErrorKind::parse, "conflict must name two different sections");
        fb.cross_section_conflicts.push_back(std::move(conflict));
      }
    }
    if (auto it = j.find("suggestions"); it != j.end() && !it->is_null()) {
      for (const auto& s : *it) {
        OutlineSuggestion sug;
        sug.target_section_id = string_field(s, "target");
        if (sug.target_section_id.empty()) sug.target_section_id = "new";
        if (sug.target_section_id != "new") require_section(outline, sug.target_section_id, "suggestions");
        sug.action = edit_action_from_string(string_field(s, "action"));
        sug.instruction = string_field(s, "instruction");
        fb.outline_suggestions.push_back(std::move(sug));
      }
    }
    if (auto it = j.find("dimension_notes"); it != j.end() && !it->is_null())
      fb.notes = it->is_string() ? it->get<std::string>() : it->dump();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::parse, std::string("malformed review field: ") + e.what());
  }
  validate(fb, outline);
  return fb;
}

std::string render_draft_for_review(const Draft& draft, const Outline& outline) {
  std::string out;
  for (const auto& sd : draft.sections) {
    const auto* plan = outline.find(sd.section_id);
    out += "## " + (plan ? plan->title : sd.section_id) + " [" + sd.section_id + "]\n\n";
    out += sd.text;
    out += "\n\n";
  }
  return out;
}

FeedbackSignal global_review(llm::Gateway& gateway, const Query& query, const Draft& draft, const Outline& outline,
                             int round, const ReviewRubric& rubric, ReviewTranscript* transcript) {
  if (draft.version != outline.version)
    throw Error(ErrorKind::contract, "draft version " + std::to_string(draft.version) +
                                         " does not match outline version " + std::to_string(outline.version));
  if (draft.sections.size() != outline.sections.size())
    throw Error(ErrorKind::contract, "draft is incomplete");
  if (rubric.dimensions.empty()) throw Error(ErrorKind::contract, "review rubric has no dimensions");

  std::string dims;
  for (const auto& [name, desc] : rubric.dimensions) dims += "- " + name + ": " + desc + "\n";
  dims += rubric.output_schema_note;

  llm::Bindings b{{"query", query.text},
                  {"version", std::to_string(outline.version)},
                  {"round", std::to_string(round)},
                  {"outline", json(outline).dump(2)},
                  {"draft", render_draft_for_review(draft, outline)},
                  {"dimensions", dims},
                  {"format_reminder", ""}};
  std::string last_error;
  for (int attempt = 0; attempt < 2; ++attempt) {
    auto prompt = llm::render_prompt("reviewer.global", b);
    auto reply = gateway.complete(llm::AgentRole::reviewer, "review", prompt);
    if (transcript) {
      transcript->prompts.push_back(prompt);
      transcript->replies.push_back(reply.text);
    }
    try {
      return parse_review(reply.text, outline);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::parse) throw;
      last_error = e.what();
      b["format_reminder"] = "\nYour previous reply was rejected (" + last_error +
                             "). Reply with the JSON object only; quality_0_100 must lie in 0-100 and every "
                             "section id must come from the outline.";
    }
  }
  throw Error(ErrorKind::review, "reviewer reply unusable after reprompt: " + last_error);
}

// ---------------------------------------------------------------------------

const char* to_string(Stage stage) noexcept {
  switch (stage) {
    case Stage::search: return "search";
    case Stage::replan: return "replan";
    case Stage::write: return "write";
  }
  return "unknown";
}

namespace {

MonitorVerdict check(const SearchOutput& out, const MonitorConstraints&) {
  for (const auto& q : out.queries)
    if (!text::trim(q).empty()) return {Stage::search, true, {}};
  return {Stage::search, false,
          "Search produced no usable query; issue at least one concrete query for the section goals."};
}

MonitorVerdict check(const ReplanOutput& out, const MonitorConstraints& c) {
  std::vector<std::string> issues;
  if (text::trim(out.refined.title).empty()) issues.push_back("The refined plan has an empty title.");
  std::vector<std::string> dropped;
  for (const auto& g : c.plan.goals)
    if (std::find(out.refined.goals.begin(), out.refined.goals.end(), g) == out.refined.goals.end())
      dropped.push_back("\"" + g + "\"");
  if (!dropped.empty())
    issues.push_back("The refined plan dropped goal(s) " + text::join(dropped, ", ") +
                     "; keep every original goal verbatim.");
  if (issues.empty()) return {Stage::replan, true, {}};
  return {Stage::replan, false, text::join(issues, " ")};
}

MonitorVerdict check(const WriteOutput& out, const MonitorConstraints& c) {
  if (text::trim(out.text).empty()) return {Stage::write, false, "Section text is empty; write the section body."};
  std::vector<std::string> issues;
  std::vector<std::string> unresolved;
  for (auto id : avr::ref_markers(out.text)) {
    auto marker = "<ref:" + std::to_string(id) + ">";
    if (!c.resolvable_refs.count(id) && std::find(unresolved.begin(), unresolved.end(), marker) == unresolved.end())
      unresolved.push_back(marker);
  }
  if (!unresolved.empty()) {
    std::vector<std::string> allowed;
    for (auto id : c.resolvable_refs) allowed.push_back(std::to_string(id));
    issues.push_back("Unresolvable citation(s) " + text::join(unresolved, ", ") +
                     "; cite only these ref ids: " + (allowed.empty() ? std::string("(none)") : text::join(allowed, ", ")) +
                     ".");
  }
  auto spans = avr::extract_blocks(out.text);
  for (std::size_t i = 0; i < spans.size(); ++i)
    if (!spans[i].ok())
      issues.push_back("Visualization block " + std::to_string(i + 1) + " is invalid: " + spans[i].error + ".");
  if (issues.empty()) return {Stage::write, true, {}};
  return {Stage::write, false, text::join(issues, " ")};
}

}  // namespace

MonitorVerdict monitor(const StageOutput& output, const MonitorConstraints& constraints) {
  return std::visit([&](const auto& out) { return check(out, constraints); }, output);
}

std::vector<std::string> uncovered_goals(const std::vector<std::string>& goals, std::string_view text) {
  auto have = text::content_words(text, 4);
  std::vector<std::string> out;
  for (const auto& g : goals) {
    auto need = text::content_words(g, 4);
    if (need.empty()) continue;
    std::size_t hits = 0;
    for (const auto& w : need) hits += have.count(w);
    if (hits * 3 < need.size()) out.push_back(g);
  }
  return out;
}

MonitorVerdict monitor_with_escalation(llm::Gateway& gateway, const StageOutput& output,
                                       const MonitorConstraints& constraints) {
  auto verdict = monitor(output, constraints);
  const auto* write = std::get_if<WriteOutput>(&output);
  if (!verdict.ok || !write) return verdict;
  auto missing = uncovered_goals(constraints.plan.goals, write->text);
  if (missing.empty()) return verdict;

  auto prompt = llm::render_prompt("reviewer.monitor", {{"stage", to_string(Stage::write)},
                                                        {"section_title", constraints.plan.title},
                                                        {"goals", bullets(constraints.plan.goals)},
                                                        {"output", write->text}});
  auto reply = gateway.complete(llm::AgentRole::reviewer, "review", prompt);
  auto parsed = parse_reply_object(reply.text);
  if (!parsed || !parsed->contains("ok") || !(*parsed)["ok"].is_boolean() || (*parsed)["ok"].get<bool>())
    return verdict;
  std::string instruction = parsed->value("instruction", std::string());
  if (text::trim(instruction).empty())
    instruction = "Cover the section goals: " + text::join(missing, "; ") + ".";
  return {Stage::write, false, instruction};
}

}  // namespace deepreport::reviewer
