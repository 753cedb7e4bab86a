#pragma once

// Canonical JSON forms of the core types. Object keys are sorted, so
// json::dump() of these values is a canonical serialization.

#include "deepreport/core.hpp"

#include <filesystem>
#include <optional>
#include <json.hpp>

namespace deepreport {

using nlohmann::json;

std::string to_string(OutlineProvenance p);
std::string to_string(IngestionMode m);
std::string to_string(SectionStatus s);
std::string to_string(EditAction a);
OutlineProvenance provenance_from_string(std::string_view s);
IngestionMode ingestion_mode_from_string(std::string_view s);
SectionStatus section_status_from_string(std::string_view s);
EditAction edit_action_from_string(std::string_view s);

void to_json(json& j, const Query& v);
void from_json(const json& j, Query& v);
void to_json(json& j, const SectionPlan& v);
void from_json(const json& j, SectionPlan& v);
void to_json(json& j, const Outline& v);
void from_json(const json& j, Outline& v);
void to_json(json& j, const NumericFact& v);
void from_json(const json& j, NumericFact& v);
void to_json(json& j, const KnowledgeItem& v);
void from_json(const json& j, KnowledgeItem& v);
void to_json(json& j, const KnowledgeBase& v);
void from_json(const json& j, KnowledgeBase& v);
void to_json(json& j, const SectionDraft& v);
void from_json(const json& j, SectionDraft& v);
void to_json(json& j, const Draft& v);
void from_json(const json& j, Draft& v);
void to_json(json& j, const CrossSectionConflict& v);
void from_json(const json& j, CrossSectionConflict& v);
void to_json(json& j, const OutlineSuggestion& v);
void from_json(const json& j, OutlineSuggestion& v);
void to_json(json& j, const FeedbackSignal& v);
void from_json(const json& j, FeedbackSignal& v);
void to_json(json& j, const GateDecision& v);
void from_json(const json& j, GateDecision& v);
void to_json(json& j, const RunManifest& v);
void from_json(const json& j, RunManifest& v);

namespace avr {
void to_json(json& j, const AvrBlock& v);
void from_json(const json& j, AvrBlock& v);
}  // namespace avr

/// First JSON object in a model reply, tolerating code fences, surrounding
/// prose and // comments. nullopt when none parses.
std::optional<json> parse_reply_object(std::string_view reply);

/// Pretty JSON with a trailing newline, written via a temp file + rename.
void write_json_file(const std::filesystem::path& path, const json& value);
json read_json_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view content);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace deepreport
