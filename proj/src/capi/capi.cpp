#include "deepreport/deepreport.h"

#include "deepreport/app.hpp"
#include "deepreport/avr.hpp"
#include "deepreport/clef.hpp"
#include "deepreport/error.hpp"
#include "deepreport/json_io.hpp"

#include <cstdlib>
#include <cstring>
#include <string>

struct dr_config {
  deepreport::app::RunConfig config;
};

namespace {

using deepreport::Error;
using deepreport::ErrorKind;

thread_local std::string last_error;

dr_status status_for(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::config: return DR_ERR_CONFIG;
    case ErrorKind::transport: return DR_ERR_TRANSPORT;
    case ErrorKind::protocol: return DR_ERR_PROTOCOL;
    case ErrorKind::planning: return DR_ERR_PLANNING;
    case ErrorKind::review: return DR_ERR_REVIEW;
    case ErrorKind::judging: return DR_ERR_JUDGING;
    case ErrorKind::rendering_environment: return DR_ERR_RENDERING_ENVIRONMENT;
    case ErrorKind::contract: return DR_ERR_CONTRACT;
    case ErrorKind::structural: return DR_ERR_STRUCTURAL;
    case ErrorKind::parse: return DR_ERR_PARSE;
    case ErrorKind::io: return DR_ERR_IO;
    case ErrorKind::isolation: return DR_ERR_ISOLATION;
    case ErrorKind::internal: return DR_ERR_INTERNAL;
  }
  return DR_ERR_INTERNAL;
}

template <typename F>
dr_status guarded(F&& f) noexcept {
  try {
    last_error.clear();
    f();
    return DR_OK;
  } catch (const Error& e) {
    last_error = std::string(deepreport::to_string(e.kind())) + ": " + e.what();
    return status_for(e.kind());
  } catch (const std::exception& e) {
    last_error = std::string("internal: ") + e.what();
    return DR_ERR_INTERNAL;
  } catch (...) {
    last_error = "internal: unknown exception";
    return DR_ERR_INTERNAL;
  }
}

dr_status invalid(const char* what) noexcept {
  last_error = std::string("invalid argument: ") + what;
  return DR_ERR_INVALID_ARGUMENT;
}

char* dup(const std::string& s) {
  char* p = static_cast<char*>(std::malloc(s.size() + 1));
  if (!p) throw std::bad_alloc();
  std::memcpy(p, s.c_str(), s.size() + 1);
  return p;
}

}  // namespace

extern "C" {

const char* dr_version(void) { return "0.1.0"; }

const char* dr_status_name(dr_status status) {
  switch (status) {
    case DR_OK: return "ok";
    case DR_ERR_CONFIG: return "config";
    case DR_ERR_TRANSPORT: return "transport";
    case DR_ERR_PROTOCOL: return "protocol";
    case DR_ERR_PLANNING: return "planning";
    case DR_ERR_REVIEW: return "review";
    case DR_ERR_JUDGING: return "judging";
    case DR_ERR_RENDERING_ENVIRONMENT: return "rendering_environment";
    case DR_ERR_CONTRACT: return "contract";
    case DR_ERR_STRUCTURAL: return "structural";
    case DR_ERR_PARSE: return "parse";
    case DR_ERR_IO: return "io";
    case DR_ERR_ISOLATION: return "isolation";
    case DR_ERR_INTERNAL: return "internal";
    case DR_ERR_INVALID_ARGUMENT: return "invalid_argument";
  }
  return "unknown";
}

const char* dr_last_error(void) { return last_error.c_str(); }

int dr_exit_code(dr_status status) {
  switch (status) {
    case DR_OK: return 0;
    case DR_ERR_CONFIG:
    case DR_ERR_INVALID_ARGUMENT: return 2;
    case DR_ERR_TRANSPORT:
    case DR_ERR_PROTOCOL: return 3;
    case DR_ERR_PLANNING:
    case DR_ERR_REVIEW:
    case DR_ERR_JUDGING: return 4;
    case DR_ERR_RENDERING_ENVIRONMENT: return 5;
    case DR_ERR_IO: return 6;
    default: return 1;
  }
}

void dr_string_free(char* s) { std::free(s); }

dr_status dr_config_load(const char* path, dr_config** out) {
  if (!path || !out) return invalid("path and out are required");
  return guarded([&] { *out = new dr_config{deepreport::app::RunConfig::load(path)}; });
}

dr_status dr_config_from_json(const char* json, const char* base_dir, dr_config** out) {
  if (!json || !out) return invalid("json and out are required");
  return guarded([&] {
    auto j = nlohmann::json::parse(json, nullptr, false, true);
    if (j.is_discarded()) throw Error(ErrorKind::config, "config is not valid JSON");
    *out = new dr_config{deepreport::app::RunConfig::from_json(j, base_dir ? base_dir : "")};
  });
}

dr_status dr_config_set_query(dr_config* config, const char* query) {
  if (!config || !query) return invalid("config and query are required");
  config->config.query = query;
  config->config.query_file.clear();
  return DR_OK;
}

dr_status dr_config_set_output_dir(dr_config* config, const char* dir) {
  if (!config || !dir) return invalid("config and dir are required");
  config->config.output_dir = dir;
  return DR_OK;
}

dr_status dr_config_set_seed(dr_config* config, uint64_t seed) {
  if (!config) return invalid("config is required");
  config->config.seed = seed;
  return DR_OK;
}

dr_status dr_config_set_ingestion_mode(dr_config* config, const char* mode) {
  if (!config || !mode) return invalid("config and mode are required");
  std::string m = mode;
  if (m == "full") config->config.retrieval.ingestion.mode = deepreport::IngestionMode::full_summarized;
  else if (m == "snippet") config->config.retrieval.ingestion.mode = deepreport::IngestionMode::snippet;
  else return invalid("mode must be 'full' or 'snippet'");
  return DR_OK;
}

dr_status dr_config_set_harness(dr_config* config, const char* path) {
  if (!config || !path) return invalid("config and path are required");
  config->config.render.harness = path;
  return DR_OK;
}

dr_status dr_config_to_json(const dr_config* config, char** out) {
  if (!config || !out) return invalid("config and out are required");
  return guarded([&] { *out = dup(config->config.to_json().dump(2)); });
}

void dr_config_free(dr_config* config) { delete config; }

dr_status dr_generate(const dr_config* config, char** summary_out) {
  if (!config) return invalid("config is required");
  return guarded([&] {
    auto r = deepreport::app::generate(config->config);
    if (summary_out) {
      nlohmann::json s{{"run_dir", r.run_dir.string()},
                       {"resumed", r.resumed},
                       {"sections", r.sections},
                       {"visuals_requested", r.manifest.visuals_requested},
                       {"visuals_rendered", r.manifest.visuals_rendered},
                       {"visuals_degraded", r.manifest.visuals_degraded},
                       {"macro_iterations", r.manifest.macro_iterations},
                       {"warnings", r.manifest.warnings}};
      *summary_out = dup(s.dump(2));
    }
  });
}

dr_status dr_evaluate(const char* model_report, const char* reference_report, const char* out_dir,
                      const char* config_path, const char* query, char** summary_out) {
  if (!model_report || !reference_report || !out_dir || !config_path)
    return invalid("model_report, reference_report, out_dir and config_path are required");
  return guarded([&] {
    deepreport::app::EvaluateOptions o;
    o.model_report = model_report;
    o.reference_report = reference_report;
    o.out_dir = out_dir;
    o.backend = deepreport::app::RunConfig::load(config_path).backend;
    if (query) o.query = query;
    auto e = deepreport::app::evaluate(o);
    if (summary_out) *summary_out = dup(deepreport::clef::summary_json({e}).dump(2));
  });
}

dr_status dr_stats(const char* run_dir, char** json_out, char** text_out) {
  if (!run_dir) return invalid("run_dir is required");
  return guarded([&] {
    auto t = deepreport::app::stats(run_dir);
    if (json_out) *json_out = dup(t.to_json().dump(2));
    if (text_out) *text_out = dup(t.to_text());
  });
}

dr_status dr_relative_advantage(double model_score, double reference_score, double* out) {
  if (!out) return invalid("out is required");
  return guarded([&] { *out = deepreport::clef::relative_advantage(model_score, reference_score); });
}

dr_status dr_aggregate(const double* values, size_t count, double* out) {
  if (!out || (!values && count)) return invalid("values and out are required");
  return guarded([&] { *out = deepreport::clef::aggregate(std::vector<double>(values, values + count)); });
}

dr_status dr_bootstrap(const double* deltas, size_t count, int resamples, uint64_t seed, double confidence,
                       dr_bootstrap_result* out) {
  if (!out || (!deltas && count)) return invalid("deltas and out are required");
  return guarded([&] {
    auto r = deepreport::clef::bootstrap_significance(std::vector<double>(deltas, deltas + count), resamples, seed,
                                                       confidence);
    *out = {r.mean, r.ci_low, r.ci_high, r.p_two_sided};
  });
}

dr_status dr_filter_document(size_t char_count, size_t word_count, size_t image_count, const char* title, int* keep,
                             char** reasons_out) {
  if (!keep) return invalid("keep is required");
  return guarded([&] {
    auto d = deepreport::clef::filter_document({char_count, word_count, image_count, title ? title : ""});
    *keep = d.keep ? 1 : 0;
    if (reasons_out) {
      std::string reasons;
      for (auto r : d.reasons) reasons += (reasons.empty() ? "" : ",") + std::string(deepreport::clef::to_string(r));
      *reasons_out = dup(reasons);
    }
  });
}

dr_status dr_avr_parse(const char* block_text, char** json_out) {
  if (!block_text || !json_out) return invalid("block_text and json_out are required");
  return guarded([&] {
    nlohmann::json j;
    deepreport::avr::to_json(j, deepreport::avr::parse_block(block_text));
    *json_out = dup(j.dump(2));
  });
}

}  // extern "C"
