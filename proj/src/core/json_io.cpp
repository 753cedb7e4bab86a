#include "deepreport/json_io.hpp"

#include "deepreport/error.hpp"
#include "deepreport/text.hpp"

#include <fstream>
#include <sstream>

namespace deepreport {

namespace {

template <typename E, std::size_t N>
E enum_from(std::string_view s, const std::pair<E, const char*> (&table)[N], const char* what) {
  for (const auto& [e, name] : table)
    if (s == name) return e;
  throw Error(ErrorKind::parse, std::string("unknown ") + what + ": " + std::string(s));
}

template <typename E, std::size_t N>
std::string enum_to(E e, const std::pair<E, const char*> (&table)[N]) {
  for (const auto& [v, name] : table)
    if (v == e) return name;
  return "unknown";
}

constexpr std::pair<OutlineProvenance, const char*> kProvenance[] = {
    {OutlineProvenance::initial, "initial"},
    {OutlineProvenance::replanned, "replanned"},
    {OutlineProvenance::restructured, "restructured"}};
constexpr std::pair<IngestionMode, const char*> kModes[] = {
    {IngestionMode::snippet, "snippet"}, {IngestionMode::full_summarized, "full_summarized"}};
constexpr std::pair<SectionStatus, const char*> kStatus[] = {{SectionStatus::pending, "pending"},
                                                             {SectionStatus::written, "written"},
                                                             {SectionStatus::corrected, "corrected"},
                                                             {SectionStatus::failed, "failed"}};
constexpr std::pair<EditAction, const char*> kActions[] = {
    {EditAction::trim, "trim"},       {EditAction::expand, "expand"}, {EditAction::merge, "merge"},
    {EditAction::split, "split"},     {EditAction::reorder, "reorder"}, {EditAction::add, "add"},
    {EditAction::remove, "remove"}};

template <typename T>
T value_or(const json& j, const char* key, T fallback) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return fallback;
  return it->get<T>();
}

}  // namespace

std::string to_string(OutlineProvenance p) { return enum_to(p, kProvenance); }
std::string to_string(IngestionMode m) { return enum_to(m, kModes); }
std::string to_string(SectionStatus s) { return enum_to(s, kStatus); }
std::string to_string(EditAction a) { return enum_to(a, kActions); }
OutlineProvenance provenance_from_string(std::string_view s) { return enum_from(s, kProvenance, "provenance"); }
IngestionMode ingestion_mode_from_string(std::string_view s) { return enum_from(s, kModes, "ingestion mode"); }
SectionStatus section_status_from_string(std::string_view s) { return enum_from(s, kStatus, "section status"); }
EditAction edit_action_from_string(std::string_view s) { return enum_from(s, kActions, "edit action"); }

void to_json(json& j, const Query& v) { j = json{{"id", v.id}, {"text", v.text}}; }
void from_json(const json& j, Query& v) {
  v.id = value_or<std::string>(j, "id", "");
  v.text = j.at("text").get<std::string>();
}

void to_json(json& j, const SectionPlan& v) {
  j = json{{"section_id", v.section_id},
           {"title", v.title},
           {"goals", v.goals},
           {"writing_constraints", v.writing_constraints},
           {"visual_intents", v.visual_intents}};
  if (!v.derived_from.empty()) j["derived_from"] = v.derived_from;
}
void from_json(const json& j, SectionPlan& v) {
  v.section_id = j.at("section_id").get<std::string>();
  v.title = j.at("title").get<std::string>();
  v.goals = value_or<std::vector<std::string>>(j, "goals", {});
  v.writing_constraints = value_or<std::vector<std::string>>(j, "writing_constraints", {});
  v.visual_intents = value_or<std::vector<std::string>>(j, "visual_intents", {});
  v.derived_from = value_or<std::vector<std::string>>(j, "derived_from", {});
}

void to_json(json& j, const Outline& v) {
  j = json{{"version", v.version}, {"sections", v.sections}, {"provenance", to_string(v.provenance)}};
}
void from_json(const json& j, Outline& v) {
  v.version = j.at("version").get<int>();
  v.sections = j.at("sections").get<std::vector<SectionPlan>>();
  v.provenance = provenance_from_string(value_or<std::string>(j, "provenance", "initial"));
}

void to_json(json& j, const NumericFact& v) { j = json{{"label", v.label}, {"value", v.value}}; }
void from_json(const json& j, NumericFact& v) {
  v.label = j.at("label").get<std::string>();
  v.value = j.at("value").get<double>();
}

void to_json(json& j, const KnowledgeItem& v) {
  j = json{{"ref_id", v.ref_id},   {"url", v.url},
           {"title", v.title},     {"summary", v.summary},
           {"excerpt", v.excerpt}, {"retrieved_at", v.retrieved_at},
           {"mode", to_string(v.mode)}, {"fallback", v.fallback},
           {"facts", v.facts}};
}
void from_json(const json& j, KnowledgeItem& v) {
  v.ref_id = j.at("ref_id").get<RefId>();
  v.url = j.at("url").get<std::string>();
  v.title = value_or<std::string>(j, "title", "");
  v.summary = j.at("summary").get<std::string>();
  v.excerpt = value_or<std::string>(j, "excerpt", "");
  v.retrieved_at = value_or<std::string>(j, "retrieved_at", "");
  v.mode = ingestion_mode_from_string(value_or<std::string>(j, "mode", "snippet"));
  v.fallback = value_or<bool>(j, "fallback", false);
  v.facts = value_or<std::vector<NumericFact>>(j, "facts", {});
}

void to_json(json& j, const KnowledgeBase& v) {
  j = json{{"global_tier", v.global_tier()}, {"local_tiers", v.local_tiers()}};
}
void from_json(const json& j, KnowledgeBase& v) {
  KnowledgeBase kb(j.at("global_tier").get<std::vector<KnowledgeItem>>());
  auto locals = value_or<std::map<std::string, std::vector<KnowledgeItem>>>(j, "local_tiers", {});
  for (auto& [sid, items] : locals)
    for (auto& item : items) kb.add_local(sid, std::move(item));
  v = std::move(kb);
}

namespace avr {
void to_json(json& j, const AvrBlock& v) {
  j = json{{"title", v.title},
           {"chart_type", v.chart_type},
           {"data_source", v.data_source},
           {"purpose", v.purpose}};
  if (v.x_axis) j["x_axis"] = *v.x_axis;
  if (v.y_axis) j["y_axis"] = *v.y_axis;
  json extra = json::array();
  for (const auto& [k, val] : v.extra_fields) extra.push_back(json::array({k, val}));
  j["extra_fields"] = extra;
}
void from_json(const json& j, AvrBlock& v) {
  v.title = j.at("title").get<std::string>();
  v.chart_type = j.at("chart_type").get<std::string>();
  v.data_source = j.at("data_source").get<std::vector<std::int64_t>>();
  v.purpose = j.at("purpose").get<std::string>();
  v.x_axis = j.contains("x_axis") ? std::optional<std::string>(j["x_axis"].get<std::string>()) : std::nullopt;
  v.y_axis = j.contains("y_axis") ? std::optional<std::string>(j["y_axis"].get<std::string>()) : std::nullopt;
  v.extra_fields.clear();
  if (j.contains("extra_fields"))
    for (const auto& pair : j["extra_fields"])
      v.extra_fields.emplace_back(pair.at(0).get<std::string>(), pair.at(1).get<std::string>());
}
}  // namespace avr

void to_json(json& j, const SectionDraft& v) {
  json spans = json::array();
  for (const auto& s : v.avr_blocks) {
    json span{{"start", s.start_offset}, {"end", s.end_offset}};
    if (s.block) span["block"] = *s.block;
    else span["error"] = s.error;
    spans.push_back(std::move(span));
  }
  j = json{{"section_id", v.section_id},
           {"text", v.text},
           {"avr_blocks", spans},
           {"revision_count", v.revision_count},
           {"status", to_string(v.status)}};
  if (!v.failure_reason.empty()) j["failure_reason"] = v.failure_reason;
}
void from_json(const json& j, SectionDraft& v) {
  v.section_id = j.at("section_id").get<std::string>();
  v.text = j.at("text").get<std::string>();
  v.revision_count = value_or<int>(j, "revision_count", 0);
  v.status = section_status_from_string(value_or<std::string>(j, "status", "pending"));
  v.failure_reason = value_or<std::string>(j, "failure_reason", "");
  v.avr_blocks.clear();
  if (j.contains("avr_blocks")) {
    for (const auto& s : j["avr_blocks"]) {
      avr::BlockSpan span;
      span.start_offset = s.at("start").get<std::size_t>();
      span.end_offset = s.at("end").get<std::size_t>();
      if (s.contains("block")) span.block = s["block"].get<avr::AvrBlock>();
      else span.error = value_or<std::string>(s, "error", "");
      v.avr_blocks.push_back(std::move(span));
    }
  }
}

void to_json(json& j, const Draft& v) { j = json{{"version", v.version}, {"sections", v.sections}}; }
void from_json(const json& j, Draft& v) {
  v.version = j.at("version").get<int>();
  v.sections = j.at("sections").get<std::vector<SectionDraft>>();
}

void to_json(json& j, const CrossSectionConflict& v) {
  j = json{{"section_a", v.section_a}, {"section_b", v.section_b}, {"description", v.description}};
}
void from_json(const json& j, CrossSectionConflict& v) {
  v.section_a = j.at("section_a").get<std::string>();
  v.section_b = j.at("section_b").get<std::string>();
  v.description = value_or<std::string>(j, "description", "");
}

void to_json(json& j, const OutlineSuggestion& v) {
  j = json{{"target_section_id", v.target_section_id},
           {"action", to_string(v.action)},
           {"instruction", v.instruction}};
}
void from_json(const json& j, OutlineSuggestion& v) {
  v.target_section_id = j.at("target_section_id").get<std::string>();
  v.action = edit_action_from_string(j.at("action").get<std::string>());
  v.instruction = value_or<std::string>(j, "instruction", "");
}

void to_json(json& j, const FeedbackSignal& v) {
  j = json{{"quality", v.quality},
           {"section_findings", v.section_findings},
           {"cross_section_conflicts", v.cross_section_conflicts},
           {"outline_suggestions", v.outline_suggestions},
           {"notes", v.notes}};
}
void from_json(const json& j, FeedbackSignal& v) {
  v.quality = j.at("quality").get<double>();
  v.section_findings = value_or<std::map<SectionId, std::vector<std::string>>>(j, "section_findings", {});
  v.cross_section_conflicts = value_or<std::vector<CrossSectionConflict>>(j, "cross_section_conflicts", {});
  v.outline_suggestions = value_or<std::vector<OutlineSuggestion>>(j, "outline_suggestions", {});
  v.notes = value_or<std::string>(j, "notes", "");
}

void to_json(json& j, const GateDecision& v) {
  j = json{{"accepted", v.accepted},
           {"previous_quality", v.previous_quality},
           {"candidate_quality", v.candidate_quality},
           {"epsilon", v.epsilon},
           {"reason", v.reason}};
}
void from_json(const json& j, GateDecision& v) {
  v.accepted = j.at("accepted").get<bool>();
  v.previous_quality = j.at("previous_quality").get<double>();
  v.candidate_quality = j.at("candidate_quality").get<double>();
  v.epsilon = j.at("epsilon").get<double>();
  v.reason = value_or<std::string>(j, "reason", "");
}

void to_json(json& j, const RunManifest& v) {
  json latencies = json::array();
  for (const auto& l : v.per_request_latencies) latencies.push_back({{"phase", l.phase}, {"seconds", l.seconds}});
  j = json{{"macro_iterations", v.macro_iterations},
           {"accepted_updates", v.accepted_updates},
           {"accepted_qualities", v.accepted_qualities},
           {"plan_modifications_per_section", v.plan_modifications_per_section},
           {"content_modifications_per_section", v.content_modifications_per_section},
           {"zero_shot_success_rate", v.zero_shot_success_rate},
           {"restructure_events", v.restructure_events},
           {"restructure_rate", v.restructure_rate},
           {"retrieval_duration", v.retrieval_duration},
           {"generation_duration", v.generation_duration},
           {"token_usage", v.token_usage},
           {"per_request_latencies", latencies},
           {"counters",
            {{"plan_modifications", v.plan_modifications},
             {"sections_planned", v.sections_planned},
             {"section_drafts_written", v.section_drafts_written},
             {"section_revisions", v.section_revisions},
             {"zero_shot_sections", v.zero_shot_sections},
             {"planning_corrections", v.planning_corrections},
             {"visuals_requested", v.visuals_requested},
             {"visuals_rendered", v.visuals_rendered},
             {"visuals_degraded", v.visuals_degraded},
             {"charts_flagged_pre_audit", v.charts_flagged_pre_audit},
             {"charts_flagged_final", v.charts_flagged_final}}},
           {"warnings", v.warnings}};
}
void from_json(const json& j, RunManifest& v) {
  v.macro_iterations = value_or<int>(j, "macro_iterations", 0);
  v.accepted_updates = value_or<int>(j, "accepted_updates", 0);
  v.accepted_qualities = value_or<std::vector<double>>(j, "accepted_qualities", {});
  v.plan_modifications_per_section = value_or<double>(j, "plan_modifications_per_section", 0.0);
  v.content_modifications_per_section = value_or<double>(j, "content_modifications_per_section", 0.0);
  v.zero_shot_success_rate = value_or<double>(j, "zero_shot_success_rate", 0.0);
  v.restructure_events = value_or<int>(j, "restructure_events", 0);
  v.restructure_rate = value_or<double>(j, "restructure_rate", 0.0);
  v.retrieval_duration = value_or<double>(j, "retrieval_duration", 0.0);
  v.generation_duration = value_or<double>(j, "generation_duration", 0.0);
  v.token_usage = value_or<std::map<std::string, std::int64_t>>(j, "token_usage", {});
  v.per_request_latencies.clear();
  if (j.contains("per_request_latencies"))
    for (const auto& l : j["per_request_latencies"])
      v.per_request_latencies.push_back({l.at("phase").get<std::string>(), l.at("seconds").get<double>()});
  if (j.contains("counters")) {
    const auto& c = j["counters"];
    v.plan_modifications = value_or<int>(c, "plan_modifications", 0);
    v.sections_planned = value_or<int>(c, "sections_planned", 0);
    v.section_drafts_written = value_or<int>(c, "section_drafts_written", 0);
    v.section_revisions = value_or<int>(c, "section_revisions", 0);
    v.zero_shot_sections = value_or<int>(c, "zero_shot_sections", 0);
    v.planning_corrections = value_or<int>(c, "planning_corrections", 0);
    v.visuals_requested = value_or<int>(c, "visuals_requested", 0);
    v.visuals_rendered = value_or<int>(c, "visuals_rendered", 0);
    v.visuals_degraded = value_or<int>(c, "visuals_degraded", 0);
    v.charts_flagged_pre_audit = value_or<int>(c, "charts_flagged_pre_audit", 0);
    v.charts_flagged_final = value_or<int>(c, "charts_flagged_final", 0);
  }
  v.warnings = value_or<std::vector<std::string>>(j, "warnings", {});
}

// ---------------------------------------------------------------------------

void write_text_file(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::io, "cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw Error(ErrorKind::io, "short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_json_file(const std::filesystem::path& path, const json& value) {
  write_text_file(path, value.dump(2) + "\n");
}

json read_json_file(const std::filesystem::path& path) {
  auto content = read_text_file(path);
  try {
    return json::parse(content);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::parse, path.string() + ": " + e.what());
  }
}

std::optional<json> parse_reply_object(std::string_view reply) {
  auto body = text::extract_json_object(text::strip_code_fences(reply));
  if (!body) return std::nullopt;
  auto parsed = json::parse(*body, nullptr, /*allow_exceptions=*/false, /*ignore_comments=*/true);
  if (parsed.is_discarded() || !parsed.is_object()) return std::nullopt;
  return parsed;
}

}  // namespace deepreport
