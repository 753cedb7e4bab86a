#include "deepreport/macro.hpp"

#include "deepreport/error.hpp"
#include "deepreport/json_io.hpp"
#include "deepreport/text.hpp"

#include <algorithm>
#include <chrono>
#include <set>
#include <sstream>

namespace deepreport::macro {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

std::vector<std::string> string_list(const json& j, std::initializer_list<const char*> keys) {
  for (const char* key : keys) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) continue;
    std::vector<std::string> out;
    if (it->is_string()) {
      out.push_back(it->get<std::string>());
      return out;
    }
    if (!it->is_array()) throw Error(ErrorKind::parse, std::string("field '") + key + "' must be a list of strings");
    for (const auto& v : *it) {
      if (!v.is_string()) throw Error(ErrorKind::parse, std::string("field '") + key + "' must be a list of strings");
      if (!text::trim(v.get<std::string>()).empty()) out.push_back(v.get<std::string>());
    }
    return out;
  }
  return {};
}

std::string history_text(const PlanningContext& ctx) {
  if (ctx.history.empty()) return "(none)";
  std::ostringstream out;
  for (const auto& h : ctx.history) {
    out << "- round " << h.round << ", outline v" << h.outline_version << ": quality " << h.feedback.quality
        << (h.accepted ? " (accepted)" : " (rejected)");
    std::size_t issues = 0;
    for (const auto& [_, list] : h.feedback.section_findings) issues += list.size();
    out << ", " << issues << " section findings, " << h.feedback.cross_section_conflicts.size() << " conflicts\n";
  }
  auto s = out.str();
  s.pop_back();
  return s;
}

std::string evidence_text(const KnowledgeBase& kb) {
  std::vector<const KnowledgeItem*> items;
  for (const auto& item : kb.global_tier()) items.push_back(&item);
  return micro::format_evidence(items, 300);
}

void count_drafts(RunManifest& m, const Draft& draft) {
  for (const auto& s : draft.sections) {
    ++m.section_drafts_written;
    m.section_revisions += s.revision_count;
    if (s.revision_count == 0) ++m.zero_shot_sections;
  }
}

}  // namespace

void LoopConfig::validate() const {
  if (!(epsilon > 0.0)) throw Error(ErrorKind::config, "epsilon must be > 0");
  if (max_iterations < 1) throw Error(ErrorKind::config, "max_iterations must be >= 1");
  if (retry_on_reject < 0) throw Error(ErrorKind::config, "retry_on_reject must be >= 0");
}

GateDecision gate(double previous_quality, double candidate_quality, double epsilon) {
  auto in_unit = [](double q) { return q >= 0.0 && q <= 1.0; };
  if (!in_unit(previous_quality) || !in_unit(candidate_quality))
    throw Error(ErrorKind::contract, "gate qualities must lie in [0,1]");
  if (!(epsilon > 0.0)) throw Error(ErrorKind::contract, "gate epsilon must be > 0");
  GateDecision d;
  d.previous_quality = previous_quality;
  d.candidate_quality = candidate_quality;
  d.epsilon = epsilon;
  const double gain = candidate_quality - previous_quality;
  // Scores are hundredths, so a gain of exactly epsilon may land a rounding
  // step below it.
  d.accepted = gain >= epsilon - 1e-9;
  std::ostringstream reason;
  reason << "gain " << gain << (d.accepted ? " >= " : " < ") << "epsilon " << epsilon;
  d.reason = reason.str();
  return d;
}

Outline parse_outline_reply(std::string_view reply, int version, std::size_t min_sections) {
  auto parsed = parse_reply_object(reply);
  if (!parsed) throw Error(ErrorKind::parse, "reply is not a JSON object");
  auto it = parsed->find("sections");
  if (it == parsed->end() || !it->is_array()) throw Error(ErrorKind::parse, "missing 'sections' array");
  Outline outline;
  outline.version = version;
  try {
    for (const auto& s : *it) {
      if (!s.is_object()) throw Error(ErrorKind::parse, "section entries must be objects");
      SectionPlan plan;
      plan.title = s.value("title", std::string());
      plan.section_id = s.value("id", s.value("section_id", std::string()));
      if (plan.section_id.empty()) plan.section_id = text::slugify(plan.title);
      plan.goals = string_list(s, {"goals"});
      plan.writing_constraints = string_list(s, {"constraints", "writing_constraints"});
      plan.visual_intents = string_list(s, {"visual_intents"});
      plan.derived_from = string_list(s, {"derived_from"});
      if (plan.goals.empty()) throw Error(ErrorKind::parse, "section '" + plan.section_id + "' has no goals");
      outline.sections.push_back(std::move(plan));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::parse, std::string("malformed section: ") + e.what());
  }
  if (outline.sections.size() < min_sections)
    throw Error(ErrorKind::parse, "outline needs at least " + std::to_string(min_sections) + " sections, got " +
                                      std::to_string(outline.sections.size()));
  try {
    validate(outline);
  } catch (const Error& e) {
    throw Error(ErrorKind::parse, e.what());
  }
  return outline;
}

PlannedOutline plan_outline(llm::Gateway& gateway, const Query& query, const KnowledgeBase& kb) {
  if (text::trim(query.text).empty()) throw Error(ErrorKind::contract, "query text is empty");
  llm::Bindings b{{"query", query.text}, {"version", "0"}, {"evidence", evidence_text(kb)}, {"format_reminder", ""}};
  std::string last_error;
  for (int attempt = 0; attempt < 2; ++attempt) {
    auto reply = gateway.complete(llm::AgentRole::planner, "planning", llm::render_prompt("planner.outline", b));
    try {
      PlannedOutline out{parse_outline_reply(reply.text, 0, 2), attempt};
      out.outline.provenance = OutlineProvenance::initial;
      return out;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::parse) throw;
      last_error = e.what();
      b["format_reminder"] = "\nYour previous reply was rejected (" + last_error +
                             "). Reply with the JSON object only, at least two sections, each with an id, a "
                             "title and at least one goal.";
    }
  }
  throw Error(ErrorKind::planning, "planner reply unusable after reprompt: " + last_error);
}

InitialPlan initial_plan(llm::Gateway& gateway, retrieval::Retriever& retriever, const Query& query) {
  if (text::trim(query.text).empty()) throw Error(ErrorKind::contract, "query text is empty");
  auto kb = retriever.build_global_tier(query);
  auto planned = plan_outline(gateway, query, kb);
  return {std::move(planned.outline), std::move(kb), planned.corrections};
}

int count_plan_changes(const Outline& before, const Outline& after) {
  int changed = 0;
  for (const auto& s : after.sections) {
    const auto* prev = before.find(s.section_id);
    if (!prev || *prev != s) ++changed;
  }
  return changed;
}

ReplanResult replan(llm::Gateway& gateway, const Query& query, const Outline& outline, const FeedbackSignal& feedback,
                    const KnowledgeBase& kb, const PlanningContext& context, int round) {
  validate(outline);
  validate(feedback, outline);
  ReplanResult result;
  if (feedback.outline_suggestions.empty()) {
    result.outline = outline;
    result.outline.version = outline.version + 1;
    result.outline.provenance = OutlineProvenance::replanned;
    return result;
  }

  llm::Bindings b{{"query", query.text},
                  {"version", std::to_string(outline.version + 1)},
                  {"round", std::to_string(round)},
                  {"outline", json(outline).dump(2)},
                  {"feedback", json(feedback).dump(2)},
                  {"history", history_text(context)},
                  {"evidence", evidence_text(kb)},
                  {"format_reminder", ""}};
  std::string last_error;
  for (int attempt = 0; attempt < 2; ++attempt) {
    auto reply = gateway.complete(llm::AgentRole::planner, "planning", llm::render_prompt("planner.replan", b));
    try {
      result.outline = parse_outline_reply(reply.text, outline.version + 1, 1);
      result.decisions.clear();
      for (std::size_t i = 0; i < feedback.outline_suggestions.size(); ++i) result.decisions.push_back({i, false, ""});
      auto parsed = parse_reply_object(reply.text);
      if (auto it = parsed->find("decisions"); it != parsed->end() && it->is_array()) {
        for (const auto& d : *it) {
          if (!d.is_object() || !d.contains("index") || !d["index"].is_number_integer()) continue;
          auto idx = d["index"].get<long long>();
          if (idx < 0 || static_cast<std::size_t>(idx) >= result.decisions.size()) continue;
          auto& dec = result.decisions[static_cast<std::size_t>(idx)];
          dec.applied = d.value("applied", false);
          dec.note = d.value("note", std::string());
        }
      }
      break;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::parse) throw;
      last_error = e.what();
      if (attempt == 1) throw Error(ErrorKind::planning, "replanning reply unusable after reprompt: " + last_error);
      b["format_reminder"] = "\nYour previous reply was rejected (" + last_error +
                             "). Reply with the JSON object only and keep at least one section.";
    }
  }

  // Applied edits become explicit directives on their target section, so the
  // writer sees them even when the planner only acknowledged them.
  for (const auto& dec : result.decisions) {
    if (!dec.applied) continue;
    const auto& sug = feedback.outline_suggestions[dec.index];
    if (is_restructuring(sug.action)) result.restructured = true;
    if (sug.instruction.empty() || sug.target_section_id == "new") continue;
    for (auto& s : result.outline.sections) {
      bool targeted = s.section_id == sug.target_section_id ||
                      std::find(s.derived_from.begin(), s.derived_from.end(), sug.target_section_id) !=
                          s.derived_from.end();
      if (!targeted) continue;
      auto mentions = [&](const std::vector<std::string>& v) {
        return std::any_of(v.begin(), v.end(), [&](const auto& x) { return x.find(sug.instruction) != std::string::npos; });
      };
      if (!mentions(s.goals) && !mentions(s.writing_constraints))
        s.writing_constraints.push_back("Revision (" + to_string(sug.action) + "): " + sug.instruction);
    }
  }
  result.outline.provenance = result.restructured ? OutlineProvenance::restructured : OutlineProvenance::replanned;
  return result;
}

// ---------------------------------------------------------------------------

json to_json(const LoopState& s) {
  json history = json::array();
  for (const auto& h : s.context.history)
    history.push_back({{"round", h.round},
                       {"outline_version", h.outline_version},
                       {"feedback", h.feedback},
                       {"accepted", h.accepted}});
  return json{{"query", s.query},
              {"global_kb", s.global_kb},
              {"accepted_outline", s.accepted_outline},
              {"accepted_draft", s.accepted_draft},
              {"accepted_feedback", s.accepted_feedback},
              {"accepted_kb", s.accepted_kb},
              {"history", history},
              {"gates", s.gates},
              {"qualities", s.qualities},
              {"rounds", s.rounds},
              {"rejects_in_row", s.rejects_in_row},
              {"finished", s.finished},
              {"manifest", s.manifest}};
}

LoopState loop_state_from_json(const json& j) {
  LoopState s;
  try {
    s.query = j.at("query").get<Query>();
    s.global_kb = j.at("global_kb").get<KnowledgeBase>();
    s.accepted_outline = j.at("accepted_outline").get<Outline>();
    s.accepted_draft = j.at("accepted_draft").get<Draft>();
    s.accepted_feedback = j.at("accepted_feedback").get<FeedbackSignal>();
    s.accepted_kb = j.at("accepted_kb").get<KnowledgeBase>();
    for (const auto& h : j.at("history"))
      s.context.history.push_back({h.at("round").get<int>(), h.at("outline_version").get<int>(),
                                   h.at("feedback").get<FeedbackSignal>(), h.at("accepted").get<bool>()});
    s.gates = j.at("gates").get<std::vector<GateDecision>>();
    s.qualities = j.at("qualities").get<std::vector<double>>();
    s.rounds = j.at("rounds").get<int>();
    s.rejects_in_row = j.at("rejects_in_row").get<int>();
    s.finished = j.at("finished").get<bool>();
    s.manifest = j.at("manifest").get<RunManifest>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::parse, std::string("corrupt loop state: ") + e.what());
  }
  return s;
}

// ---------------------------------------------------------------------------

LoopOutcome run_macro_loop(Agents agents, const Query& query, const LoopConfig& config, LoopObserver* observer,
                           std::optional<LoopState> resume) {
  config.validate();
  const auto started = Clock::now();
  micro::MicroCycle cycle(agents.gateway, agents.retriever, query, agents.micro);
  cycle.set_hooks(agents.hooks);

  LoopState state;
  const auto tokens_before = resume ? resume->manifest.token_usage : std::map<std::string, std::int64_t>{};
  const auto latencies_before = resume ? resume->manifest.per_request_latencies : std::vector<RequestLatency>{};
  const double retrieval_before = resume ? resume->manifest.retrieval_duration : 0.0;
  const double generation_before = resume ? resume->manifest.generation_duration : 0.0;
  double retrieval_seconds = 0.0;

  auto finalize = [&](LoopState& s) {
    auto& m = s.manifest;
    m.macro_iterations = s.rounds;
    m.token_usage = tokens_before;
    for (const auto& [phase, n] : agents.gateway.ledger().tokens_by_phase()) m.token_usage[phase] += n;
    m.per_request_latencies = latencies_before;
    for (const auto& [phase, secs] : agents.gateway.ledger().latencies()) m.per_request_latencies.push_back({phase, secs});
    m.retrieval_duration = retrieval_before + retrieval_seconds;
    m.generation_duration = generation_before + std::max(0.0, seconds_since(started) - retrieval_seconds);
    m.finalize_rates();
  };

  if (resume) {
    state = std::move(*resume);
  } else {
    // Round 0: initial plan, first draft, first review. Failures here fail the run.
    state.query = query;
    auto t = Clock::now();
    state.global_kb = agents.retriever.build_global_tier(query);
    retrieval_seconds += seconds_since(t);
    auto planned = plan_outline(agents.gateway, query, state.global_kb);
    state.manifest.planning_corrections += planned.corrections;

    auto result = cycle.run(planned.outline, state.global_kb);
    retrieval_seconds += result.retrieval_seconds;
    RoundRecord record;
    record.round = 0;
    record.feedback = reviewer::global_review(agents.gateway, query, result.draft, planned.outline, 0,
                                              reviewer::ReviewRubric::standard(), &record.transcript);
    record.outline = planned.outline;
    record.draft = result.draft;
    record.traces = std::move(result.traces);
    record.gate.accepted = true;
    record.gate.candidate_quality = record.feedback.quality;
    record.gate.epsilon = config.epsilon;
    record.gate.reason = "initial state";

    auto& m = state.manifest;
    m.sections_planned += static_cast<int>(planned.outline.sections.size());
    m.plan_modifications += result.plan_modifications;
    m.planning_corrections += result.planning_corrections;
    count_drafts(m, result.draft);
    m.accepted_qualities.push_back(record.feedback.quality);

    state.accepted_outline = planned.outline;
    state.accepted_draft = result.draft;
    state.accepted_feedback = record.feedback;
    state.accepted_kb = std::move(result.kb);
    state.context.history.push_back({0, planned.outline.version, record.feedback, true});
    state.gates.push_back(record.gate);
    state.qualities.push_back(record.feedback.quality);
    state.rounds = 1;
    state.finished = state.rounds >= config.max_iterations;
    finalize(state);
    if (observer) observer->on_round(record, state);
  }

  while (!state.finished && state.rounds < config.max_iterations) {
    const int round = state.rounds;
    RoundRecord record;
    record.round = round;
    try {
      auto rp = replan(agents.gateway, query, state.accepted_outline, state.accepted_feedback, state.global_kb,
                       state.context, round);
      auto result = cycle.run(rp.outline, state.global_kb);
      retrieval_seconds += result.retrieval_seconds;
      record.feedback = reviewer::global_review(agents.gateway, query, result.draft, rp.outline, round,
                                                reviewer::ReviewRubric::standard(), &record.transcript);
      record.outline = rp.outline;
      record.draft = result.draft;
      record.traces = std::move(result.traces);

      auto& m = state.manifest;
      m.sections_planned += static_cast<int>(rp.outline.sections.size());
      m.plan_modifications += count_plan_changes(state.accepted_outline, rp.outline) + result.plan_modifications;
      m.planning_corrections += result.planning_corrections;
      if (rp.restructured) ++m.restructure_events;
      count_drafts(m, result.draft);

      record.gate = gate(state.accepted_feedback.quality, record.feedback.quality, config.epsilon);
      record.replan = std::move(rp);
      state.rounds = round + 1;
      state.gates.push_back(record.gate);
      state.qualities.push_back(record.feedback.quality);
      state.context.history.push_back({round, record.outline.version, record.feedback, record.gate.accepted});
      if (record.gate.accepted) {
        ++m.accepted_updates;
        m.accepted_qualities.push_back(record.feedback.quality);
        state.accepted_outline = record.outline;
        state.accepted_draft = record.draft;
        state.accepted_feedback = record.feedback;
        state.accepted_kb = std::move(result.kb);
        state.rejects_in_row = 0;
      } else if (++state.rejects_in_row > config.retry_on_reject) {
        state.finished = true;
      }
    } catch (const Error& e) {
      state.rounds = round + 1;
      state.finished = true;
      state.manifest.warnings.push_back("round " + std::to_string(round) + " failed (" + to_string(e.kind()) +
                                        "): " + e.what() + "; keeping the best accepted draft");
      finalize(state);
      if (observer) {
        record.outline = state.accepted_outline;
        record.draft = state.accepted_draft;
        record.feedback = state.accepted_feedback;
        record.gate.reason = std::string("round failed: ") + e.what();
        record.gate.epsilon = config.epsilon;
        record.gate.previous_quality = state.accepted_feedback.quality;
        record.gate.candidate_quality = state.accepted_feedback.quality;
        observer->on_round(record, state);
      }
      break;
    }
    if (state.rounds >= config.max_iterations) state.finished = true;
    finalize(state);
    if (observer) observer->on_round(record, state);
  }
  state.finished = true;
  finalize(state);

  LoopOutcome out;
  out.outline = state.accepted_outline;
  out.draft = state.accepted_draft;
  out.feedback = state.accepted_feedback;
  out.kb = state.accepted_kb;
  out.manifest = state.manifest;
  out.gates = state.gates;
  out.qualities = state.qualities;
  return out;
}

}  // namespace deepreport::macro
