#include "deepreport/micro.hpp"

#include "deepreport/error.hpp"
#include "deepreport/json_io.hpp"
#include "deepreport/text.hpp"

#include <algorithm>
#include <barrier>
#include <chrono>
#include <exception>
#include <mutex>
#include <set>
#include <thread>

namespace deepreport::micro {

namespace {

std::string bullets(const std::vector<std::string>& items) {
  if (items.empty()) return "- (none)";
  std::string out;
  for (const auto& i : items) out += "- " + i + "\n";
  out.pop_back();
  return out;
}

std::string clip(std::string_view s, std::size_t n) {
  if (s.size() <= n) return std::string(s);
  std::size_t cut = n;
  while (cut > 0 && (static_cast<unsigned char>(s[cut]) & 0xC0) == 0x80) --cut;
  return std::string(s.substr(0, cut)) + "...";
}

std::vector<std::string> string_list(const json& j, const char* key) {
  std::vector<std::string> out;
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return out;
  if (it->is_string()) {
    out.push_back(it->get<std::string>());
    return out;
  }
  for (const auto& v : *it)
    if (v.is_string() && !text::trim(v.get<std::string>()).empty()) out.push_back(v.get<std::string>());
  return out;
}

std::set<RefId> effective_ids(const KnowledgeBase& kb, const SectionId& id) {
  std::set<RefId> out;
  for (const auto* item : kb.effective(id)) out.insert(item->ref_id);
  return out;
}

}  // namespace

std::string format_evidence(const std::vector<const KnowledgeItem*>& items, std::size_t summary_chars) {
  if (items.empty()) return "(no evidence yet)";
  std::string out;
  for (const auto* item : items) {
    out += "<ref:" + std::to_string(item->ref_id) + "> " + item->title + " (" + item->url + ")\n";
    out += "    " + clip(text::replace_all(item->summary, "\n", " "), summary_chars) + "\n";
  }
  out.pop_back();
  return out;
}

std::vector<SectionPlan> aggregate_plans(std::vector<SectionPlan> refined) {
  std::map<std::string, SectionId> owner;
  for (auto& plan : refined) {
    std::vector<std::string> kept;
    for (auto& goal : plan.goals) {
      auto [it, inserted] = owner.emplace(goal, plan.section_id);
      if (inserted || it->second == plan.section_id) {
        kept.push_back(std::move(goal));
      } else {
        plan.writing_constraints.push_back("Boundary: \"" + goal + "\" is covered by section '" + it->second +
                                           "'; refer to it instead of repeating it.");
      }
    }
    plan.goals = std::move(kept);
  }
  return refined;
}

MicroCycle::MicroCycle(llm::Gateway& gateway, retrieval::Retriever& retriever, Query query, MicroConfig config)
    : gateway_(gateway), retriever_(retriever), query_(std::move(query)), config_(config) {
  if (config_.worker_cap < 1) throw Error(ErrorKind::config, "worker_cap must be >= 1");
  if (config_.max_corrections < 0) throw Error(ErrorKind::config, "max_corrections must be >= 0");
}

void MicroCycle::before(const SectionId& id, reviewer::Stage stage) const {
  if (hooks_.before_stage) hooks_.before_stage(id, stage);
}

PlanResult MicroCycle::plan_section(const SectionWorkOrder& order, const KnowledgeBase& kb, SectionTrace* trace) {
  const SectionPlan& original = order.section_plan;
  PlanResult result;
  result.refined = original;
  std::string correction;
  reviewer::MonitorConstraints constraints{original, effective_ids(kb, original.section_id)};

  for (int attempt = 0; attempt <= order.max_corrections; ++attempt) {
    before(original.section_id, reviewer::Stage::replan);
    auto prompt = llm::render_prompt("planner.section_refine",
                                     {{"query", query_.text},
                                      {"section_id", original.section_id},
                                      {"section_title", original.title},
                                      {"goals", bullets(original.goals)},
                                      {"constraints", bullets(original.writing_constraints)},
                                      {"evidence", format_evidence(kb.effective(original.section_id))},
                                      {"correction", correction}});
    auto reply = gateway_.complete(llm::AgentRole::planner, "planning", prompt).text;

    std::optional<SectionPlan> candidate;
    reviewer::MonitorVerdict verdict;
    if (text::starts_with(text::trim(reply), "NO_CHANGE")) {
      candidate = original;
    } else if (auto j = parse_reply_object(reply)) {
      SectionPlan p = original;
      p.title = j->value("title", original.title);
      p.goals = string_list(*j, "goals");
      p.writing_constraints = string_list(*j, "constraints");
      p.visual_intents = string_list(*j, "visual_intents");
      candidate = std::move(p);
    }
    if (candidate) {
      verdict = reviewer::monitor(reviewer::ReplanOutput{*candidate}, constraints);
    } else {
      verdict = {reviewer::Stage::replan, false,
                 "Reply was neither NO_CHANGE nor a JSON plan object with title, goals, constraints and "
                 "visual_intents."};
    }
    if (trace) {
      json ev{{"stage", "replan"}, {"attempt", attempt}, {"ok", verdict.ok}};
      if (!verdict.ok) ev["instruction"] = verdict.correction_instruction;
      if (verdict.ok) ev["changed"] = *candidate != original;
      trace->push_back(std::move(ev));
    }
    if (verdict.ok) {
      result.refined = std::move(*candidate);
      result.changed = result.refined != original;
      return result;
    }
    if (attempt < order.max_corrections) ++result.corrections;
    correction = "\nCorrection from the reviewer: " + verdict.correction_instruction + "\n";
  }
  result.failed = true;
  result.failure = "plan refinement rejected after " + std::to_string(order.max_corrections) + " corrections";
  return result;
}

SectionDraft MicroCycle::write_section(const SectionPlan& plan, const KnowledgeBase& kb,
                                       const IterationSnapshot& snapshot, SectionTrace* trace) {
  SectionDraft draft;
  draft.section_id = plan.section_id;
  std::vector<std::string> titles;
  for (const auto& s : snapshot.outline->sections) titles.push_back(s.title);
  reviewer::MonitorConstraints constraints{plan, effective_ids(kb, plan.section_id)};
  const std::string evidence = format_evidence(kb.effective(plan.section_id));
  std::string correction;

  for (int attempt = 0; attempt <= config_.max_corrections; ++attempt) {
    before(plan.section_id, reviewer::Stage::write);
    auto prompt = llm::render_prompt("writer.section", {{"query", query_.text},
                                                        {"outline_titles", text::join(titles, " | ")},
                                                        {"section_id", plan.section_id},
                                                        {"section_title", plan.title},
                                                        {"goals", bullets(plan.goals)},
                                                        {"constraints", bullets(plan.writing_constraints)},
                                                        {"visual_intents", bullets(plan.visual_intents)},
                                                        {"evidence", evidence},
                                                        {"chart_types", avr::Vocabulary::standard().listing()},
                                                        {"correction", correction}});
    std::string body(text::trim(gateway_.complete(llm::AgentRole::writer, "writing", prompt).text));
    auto verdict = reviewer::monitor_with_escalation(gateway_, reviewer::WriteOutput{body}, constraints);
    if (trace) {
      json ev{{"stage", "write"}, {"attempt", attempt}, {"ok", verdict.ok}};
      if (!verdict.ok) ev["instruction"] = verdict.correction_instruction;
      trace->push_back(std::move(ev));
    }
    if (verdict.ok) {
      draft.text = std::move(body);
      draft.avr_blocks = avr::extract_blocks(draft.text);
      draft.revision_count = attempt;
      draft.status = attempt == 0 ? SectionStatus::written : SectionStatus::corrected;
      return draft;
    }
    correction = "\nYour previous draft was rejected by the reviewer: " + verdict.correction_instruction +
                 "\nRewrite the whole section.\n";
  }
  draft.status = SectionStatus::failed;
  draft.revision_count = config_.max_corrections;
  draft.failure_reason = "write rejected after " + std::to_string(config_.max_corrections) + " corrections";
  return draft;
}

MicroResult MicroCycle::run(const Outline& outline, const KnowledgeBase& kb) {
  const IterationSnapshot snapshot = freeze_snapshot(outline, kb);
  const Outline& plan_view = *snapshot.outline;
  const std::size_t n = plan_view.sections.size();
  const std::size_t workers = std::max<std::size_t>(1, std::min(n, config_.worker_cap));

  Outline live_outline = outline;
  KnowledgeBase cycle_kb = kb.global_only();
  const KnowledgeBase base = kb.global_only();

  struct Slot {
    std::vector<KnowledgeItem> candidates;
    PlanResult plan;
    SectionDraft draft;
    SectionTrace trace;
    std::string failure;
  };
  std::vector<Slot> slots(n);
  std::vector<SectionPlan> final_plans;
  int phase = 0;
  std::exception_ptr completion_error;
  std::mutex hook_mutex;
  const auto started = std::chrono::steady_clock::now();
  double retrieval_seconds = 0.0;

  auto on_phase_done = [&]() noexcept {
    try {
      if (phase == 0) {
        retrieval_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        // Ids are handed out here, in outline order, so they do not depend on
        // which worker finished first.
        RefIdAllocator ids(std::max(first_ref_id, cycle_kb.max_ref_id() + 1));
        for (std::size_t i = 0; i < n; ++i) {
          if (!slots[i].failure.empty()) continue;
          auto added = retrieval::Retriever::commit_local(cycle_kb, plan_view.sections[i].section_id,
                                                          std::move(slots[i].candidates), ids);
          slots[i].trace.push_back({{"stage", "commit"}, {"local_items", added}});
        }
      } else if (phase == 1) {
        std::vector<SectionPlan> refined;
        for (std::size_t i = 0; i < n; ++i)
          refined.push_back(slots[i].failure.empty() ? slots[i].plan.refined : plan_view.sections[i]);
        final_plans = aggregate_plans(std::move(refined));
      }
    } catch (...) {
      if (!completion_error) completion_error = std::current_exception();
    }
    ++phase;
  };
  std::barrier sync(static_cast<std::ptrdiff_t>(workers), on_phase_done);

  auto worker = [&](std::size_t w) {
    if (hooks_.on_worker_start) {
      std::lock_guard lock(hook_mutex);
      hooks_.on_worker_start(live_outline, cycle_kb);
    }
    for (std::size_t i = w; i < n; i += workers) {
      auto& slot = slots[i];
      const auto& sec = plan_view.sections[i];
      try {
        before(sec.section_id, reviewer::Stage::search);
        std::vector<std::string> queries;
        auto candidates = retriever_.collect_candidates(sec, base, &queries);
        auto verdict = reviewer::monitor(reviewer::SearchOutput{queries, candidates.size()}, {sec, {}});
        json ev{{"stage", "search"}, {"attempt", 0}, {"ok", verdict.ok}, {"queries", queries},
                {"candidates", candidates.size()}};
        if (!verdict.ok) ev["instruction"] = verdict.correction_instruction;
        slot.trace.push_back(std::move(ev));
        if (verdict.ok) slot.candidates = std::move(candidates);
        else slot.failure = verdict.correction_instruction;
      } catch (const std::exception& e) {
        slot.failure = std::string("search failed: ") + e.what();
      }
    }
    sync.arrive_and_wait();

    for (std::size_t i = w; i < n; i += workers) {
      auto& slot = slots[i];
      if (!slot.failure.empty()) continue;
      try {
        SectionWorkOrder order{plan_view.sections[i], snapshot.outline_digest, snapshot.global_digest,
                               config_.max_corrections};
        slot.plan = plan_section(order, cycle_kb, &slot.trace);
        if (slot.plan.failed) slot.failure = slot.plan.failure;
      } catch (const std::exception& e) {
        slot.failure = std::string("plan refinement failed: ") + e.what();
      }
    }
    sync.arrive_and_wait();

    for (std::size_t i = w; i < n; i += workers) {
      auto& slot = slots[i];
      const auto& id = plan_view.sections[i].section_id;
      if (slot.failure.empty()) {
        try {
          slot.draft = write_section(final_plans.at(i), cycle_kb, snapshot, &slot.trace);
        } catch (const std::exception& e) {
          slot.failure = std::string("writing failed: ") + e.what();
        }
      }
      if (!slot.failure.empty()) {
        slot.draft = SectionDraft{};
        slot.draft.section_id = id;
        slot.draft.status = SectionStatus::failed;
        slot.draft.failure_reason = slot.failure;
      }
    }
    sync.arrive_and_wait();
  };

  {
    std::vector<std::jthread> threads;
    threads.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) threads.emplace_back(worker, w);
  }
  if (completion_error) std::rethrow_exception(completion_error);

  if (digest(live_outline) != snapshot.outline_digest)
    throw Error(ErrorKind::isolation, "write isolation violated: the outline changed during the micro-cycle");
  if (digest(cycle_kb.global_tier()) != snapshot.global_digest)
    throw Error(ErrorKind::isolation, "write isolation violated: the global knowledge tier changed during the micro-cycle");
  cycle_kb.check_invariants();

  MicroResult result;
  std::vector<SectionDraft> drafts;
  for (std::size_t i = 0; i < n; ++i) {
    drafts.push_back(std::move(slots[i].draft));
    result.traces[plan_view.sections[i].section_id] = std::move(slots[i].trace);
    if (slots[i].plan.changed) ++result.plan_modifications;
    result.planning_corrections += slots[i].plan.corrections;
  }
  result.draft = assemble_draft(std::move(drafts), plan_view);
  result.kb = std::move(cycle_kb);
  result.final_plans = std::move(final_plans);
  result.retrieval_seconds = retrieval_seconds;
  return result;
}

}  // namespace deepreport::micro
