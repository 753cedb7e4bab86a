#pragma once

// Pairwise report evaluation: five judged dimensions, relative advantage
// scores, bootstrap significance, the corpus filter predicate and run
// statistics.

#include "deepreport/core.hpp"
#include "deepreport/llm.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace deepreport::clef {

enum class Dimension { organization, depth, relevance, alignment, synergy };

inline constexpr std::array<Dimension, 5> all_dimensions = {Dimension::organization, Dimension::depth,
                                                            Dimension::relevance, Dimension::alignment,
                                                            Dimension::synergy};

const char* to_string(Dimension d) noexcept;
Dimension dimension_from_string(std::string_view s);  // Error(parse)

/// Rubric asset text for the dimension.
const std::string& rubric_text(Dimension d);
/// Human-readable name, taken from the rubric's header line.
std::string display_name(Dimension d);

struct ComparisonResult {
  Dimension dimension = Dimension::organization;
  int model_score = 0;
  int reference_score = 0;
  std::string reasoning;
  std::vector<std::string> evidence_model;
  std::vector<std::string> evidence_reference;
  std::vector<std::string> suggestions_model;
  std::vector<std::string> suggestions_reference;
};

nlohmann::json to_json(const ComparisonResult& r);

/// Scores must be integers 1-5 and reasoning nonempty. Throws Error(parse).
ComparisonResult parse_judgement(std::string_view reply, Dimension dimension);

/// S_model / (S_model + S_ref). Negative scores or both zero throw
/// Error(contract). Accepts averaged (non-integer) scores.
double relative_advantage(double model_score, double reference_score);

/// Mean of exactly five values in [0,1]; Error(contract) otherwise.
double aggregate(const std::vector<double>& per_dimension);

struct RelativeAdvantage {
  std::map<Dimension, double> per_dimension;
  double final = 0.0;
};

/// One result per dimension required.
RelativeAdvantage score(const std::vector<ComparisonResult>& results);

/// Mean of several judges' scores for one dimension, for multi-judge setups.
double mean_score(const std::vector<int>& scores);

struct BootstrapResult {
  double mean = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double p_two_sided = 1.0;
};

/// Percentile bootstrap of the mean. Resample indices come from
/// mt19937_64(seed) as (rng() * n) >> 64; percentiles interpolate linearly
/// between order statistics. p = min(1, 2 * min(P(mean* <= 0), P(mean* >= 0))).
/// Throws Error(contract) for n < 2, B < 1000 or confidence outside (0,1).
BootstrapResult bootstrap_significance(const std::vector<double>& paired_deltas, int resamples, std::uint64_t seed,
                                       double confidence = 0.95);

// ---------------------------------------------------------------------------
// Corpus filter

struct DocumentStats {
  std::size_t char_count = 0;  // code points
  std::size_t word_count = 0;
  std::size_t image_count = 0;
  std::string title;
};

/// Counts over a Markdown document; images are ![..](..) links and <img> tags.
DocumentStats measure_document(std::string_view markdown, std::string title);

enum class DropReason { length, words, images, keyword };

const char* to_string(DropReason r) noexcept;

struct FilterDecision {
  bool keep = true;
  std::vector<DropReason> reasons;  // every failed rule, in rule order
};

inline constexpr std::size_t min_chars = 15000;
inline constexpr std::size_t max_chars = 60000;
inline constexpr std::size_t min_words = 2500;
inline constexpr std::size_t min_images = 3;
inline constexpr std::size_t max_images = 15;

const std::vector<std::string>& excluded_title_keywords();

FilterDecision filter_document(const DocumentStats& stats);

// ---------------------------------------------------------------------------
// Judging

struct ReportDocument {
  std::string text;                 // Markdown
  std::filesystem::path base_dir;   // resolves relative image links
};

/// Reads a Markdown report. Throws Error(io).
ReportDocument load_report(const std::filesystem::path& path);

/// Report text split at image links; readable images become image parts.
std::vector<llm::ContentPart> interleave(const ReportDocument& report);

/// One judge call for one dimension; one reprompt with a schema reminder,
/// then Error(judging).
ComparisonResult judge_dimension(llm::Gateway& gateway, const ReportDocument& model_report,
                                 const ReportDocument& reference_report, Dimension dimension,
                                 const std::string& query = {});

struct PairEvaluation {
  std::string pair_id;
  std::vector<ComparisonResult> results;  // dimension order
  RelativeAdvantage advantage;
};

/// All five dimensions, judged concurrently.
PairEvaluation evaluate_pair(llm::Gateway& gateway, const std::string& pair_id, const ReportDocument& model_report,
                             const ReportDocument& reference_report, const std::string& query = {});

/// One row per pair per dimension, with a header.
std::string to_csv(const std::vector<PairEvaluation>& evaluations);
nlohmann::json summary_json(const std::vector<PairEvaluation>& evaluations);

// ---------------------------------------------------------------------------
// Execution statistics

struct StatRow {
  std::string key;
  std::string name;  // display name
  std::optional<double> value;
  std::string unit;  // "", "s", "%", "tokens"
};

struct StatsTable {
  std::vector<StatRow> rows;
  bool partial = false;

  const StatRow* find(std::string_view key) const;
  nlohmann::json to_json() const;
  std::string to_text() const;  // missing values print as "missing"
};

struct StatsInputs {
  std::optional<RunManifest> manifest;
  std::vector<Draft> drafts;               // every reviewed draft
  std::vector<bool> replan_restructured;  // one per replanning round
  int rounds = 0;
};

StatsTable compute_stats(const StatsInputs& inputs);

/// Reads manifest.json and iterations/iter-*/ of a run directory. Throws
/// Error(io) when the directory holds neither.
StatsTable collect_run_stats(const std::filesystem::path& run_dir);

}  // namespace deepreport::clef
