// Command-line front end over the C API.

#include "deepreport/deepreport.h"

#include <CLI11.hpp>

#include <cstdio>
#include <string>

namespace {

int fail(dr_status status) {
  std::fprintf(stderr, "deepreport: %s\n", dr_last_error());
  return dr_exit_code(status);
}

void print_and_free(char* s) {
  if (!s) return;
  std::fputs(s, stdout);
  std::fputc('\n', stdout);
  dr_string_free(s);
}

// Live defaults used when generate runs without --config.
constexpr const char* live_defaults = R"({"backend": {"kind": "http"}, "search": {"kind": "tavily"}})";

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-agent multimodal report generation and evaluation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(dr_version()));

  auto* gen = app.add_subcommand("generate", "Generate (or resume) a report");
  std::string query, config_path, out_dir, mode, harness;
  std::uint64_t seed = 0;
  gen->add_option("--query", query, "Query text (overrides the config)");
  gen->add_option("--config", config_path, "Run configuration JSON")->check(CLI::ExistingFile);
  gen->add_option("--out", out_dir, "Run directory (overrides the config)");
  auto* seed_opt = gen->add_option("--seed", seed, "Seed for scripted backends");
  gen->add_option("--mode", mode, "Ingestion mode")->check(CLI::IsMember({"full", "snippet"}));
  gen->add_option("--harness", harness, "Render harness executable (overrides the config)");

  auto* eval = app.add_subcommand("evaluate", "Judge a model report against a reference report");
  std::string model_report, reference_report, eval_out, eval_config, eval_query;
  eval->add_option("--model", model_report, "Model report (Markdown)")->required();
  eval->add_option("--reference", reference_report, "Reference report (Markdown)")->required();
  eval->add_option("--out", eval_out, "Output directory")->required();
  eval->add_option("--config", eval_config, "Config JSON with a backend section")->required();
  eval->add_option("--query", eval_query, "Query both reports answer");

  auto* st = app.add_subcommand("stats", "Execution statistics of a run directory");
  std::string run_dir;
  st->add_option("run_dir", run_dir, "Run directory")->required();

  CLI11_PARSE(app, argc, argv);

  if (*gen) {
    dr_config* config = nullptr;
    dr_status s = config_path.empty() ? dr_config_from_json(live_defaults, nullptr, &config)
                                      : dr_config_load(config_path.c_str(), &config);
    if (s != DR_OK) return fail(s);
    if (s == DR_OK && !query.empty()) s = dr_config_set_query(config, query.c_str());
    if (s == DR_OK && !out_dir.empty()) s = dr_config_set_output_dir(config, out_dir.c_str());
    if (s == DR_OK && seed_opt->count()) s = dr_config_set_seed(config, seed);
    if (s == DR_OK && !mode.empty()) s = dr_config_set_ingestion_mode(config, mode.c_str());
    if (s == DR_OK && !harness.empty()) s = dr_config_set_harness(config, harness.c_str());
    char* summary = nullptr;
    if (s == DR_OK) s = dr_generate(config, &summary);
    dr_config_free(config);
    if (s != DR_OK) return fail(s);
    print_and_free(summary);
    return 0;
  }
  if (*eval) {
    char* summary = nullptr;
    dr_status s = dr_evaluate(model_report.c_str(), reference_report.c_str(), eval_out.c_str(), eval_config.c_str(),
                              eval_query.empty() ? nullptr : eval_query.c_str(), &summary);
    if (s != DR_OK) return fail(s);
    print_and_free(summary);
    return 0;
  }
  char* text = nullptr;
  dr_status s = dr_stats(run_dir.c_str(), nullptr, &text);
  if (s != DR_OK) return fail(s);
  print_and_free(text);
  return 0;
}
