#pragma once

// Run configuration, the generate / evaluate / stats commands and the
// run-directory layout they share.

#include "deepreport/clef.hpp"
#include "deepreport/core.hpp"
#include "deepreport/error.hpp"
#include "deepreport/llm.hpp"
#include "deepreport/macro.hpp"
#include "deepreport/micro.hpp"
#include "deepreport/render.hpp"
#include "deepreport/retrieval.hpp"

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace deepreport::app {

struct BackendSettings {
  std::string kind = "scripted";         // scripted | http
  std::filesystem::path script;          // scripted: rules file
  std::string endpoint = "https://api.openai.com/v1";
  std::string api_key_env = "OPENAI_API_KEY";
  llm::ModelConfig models;
  llm::RetryPolicy retry;
  int timeout_seconds = 120;
};

struct SearchSettings {
  std::string kind = "mock";             // mock | tavily
  std::filesystem::path index;           // mock: document fixture
  std::string endpoint = "https://api.tavily.com/search";
  std::string api_key_env = "TAVILY_API_KEY";
};

struct RunConfig {
  std::string query;
  std::filesystem::path query_file;
  std::string query_id = "query";
  std::uint64_t seed = 0;
  std::filesystem::path output_dir;
  BackendSettings backend;
  SearchSettings search;
  macro::LoopConfig loop;
  retrieval::RetrievalConfig retrieval;
  micro::MicroConfig micro;
  render::RenderConfig render;
  int harness_timeout_seconds = 30;
  std::string fixed_timestamp = "2025-01-01T00:00:00Z";  // retrieval timestamps in scripted mode

  bool scripted() const noexcept { return backend.kind == "scripted"; }

  /// Relative paths resolve against base_dir. Throws Error(config).
  static RunConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
  static RunConfig load(const std::filesystem::path& path);
  nlohmann::json to_json() const;

  /// Query text, from the file when one is configured.
  std::string query_text() const;

  /// Referenced files exist, keys of live backends are present, numbers are
  /// in range. Throws Error(config) before any model call.
  void validate() const;
};

struct GenerateResult {
  std::filesystem::path run_dir;
  RunManifest manifest;
  bool resumed = false;
  std::size_t sections = 0;
  std::vector<render::VisualOutcome> visuals;
};

/// Runs (or resumes) a full generation into config.output_dir. A harness
/// passed in replaces the configured subprocess harness.
GenerateResult generate(const RunConfig& config, std::shared_ptr<render::Harness> harness = nullptr);

/// Final Markdown: <ref:N> markers become sequential [k] citations, AVR
/// blocks become image links or notes, followed by the reference list.
std::string render_report(const Query& query, const Outline& outline, const Draft& draft, const KnowledgeBase& kb,
                          const std::vector<render::VisualOutcome>& visuals);

struct EvaluateOptions {
  std::filesystem::path model_report;
  std::filesystem::path reference_report;
  std::filesystem::path out_dir;
  std::string query;
  std::string pair_id = "pair-1";
  BackendSettings backend;
};

/// Judges one report pair; writes evaluation.csv and summary.json.
clef::PairEvaluation evaluate(const EvaluateOptions& options);

/// Writes stats.json into the run directory and returns the table.
clef::StatsTable stats(const std::filesystem::path& run_dir);

/// Gateway over the configured backend (scripted runs never sleep).
std::unique_ptr<llm::Gateway> make_gateway(const BackendSettings& settings, std::uint64_t seed);

/// Process exit status for an error category.
int exit_code_for(ErrorKind kind) noexcept;

}  // namespace deepreport::app
