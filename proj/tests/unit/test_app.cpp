#include "deepreport/app.hpp"
#include "deepreport/json_io.hpp"

#include "support.hpp"

#include <doctest.h>

#include <cstdlib>

using namespace deepreport;
using namespace deepreport::app;
using nlohmann::json;

namespace {

RunConfig smoke_config(const std::filesystem::path& out) {
  auto c = RunConfig::load(drtest::fixture("smoke/config.json"));
  c.output_dir = out;
  c.render.harness = DR_STUB_HARNESS;
  return c;
}

ErrorKind validation_error(const RunConfig& c) {
  try {
    c.validate();
  } catch (const Error& e) {
    return e.kind();
  }
  return ErrorKind::internal;
}

KnowledgeBase report_kb() {
  std::vector<KnowledgeItem> items(3);
  for (int i = 0; i < 3; ++i) {
    items[i].ref_id = 1001 + i;
    items[i].url = "https://s/" + std::to_string(i);
    items[i].title = i == 2 ? "" : "Source " + std::to_string(i);
    items[i].summary = "s";
  }
  return KnowledgeBase(items);
}

const char* kBlock =
    "[DATA_VISUALIZATION]\nTitle: Output\nChart_Type: Bar Chart\nX_Axis: Year\nY_Axis: TWh\n"
    "Data_Source: <ref:1001>\nPurpose: Show growth\n[/DATA_VISUALIZATION]";

}  // namespace

TEST_CASE("config loading resolves relative paths and applies defaults") {
  auto c = RunConfig::load(drtest::fixture("smoke/config.json"));
  CHECK(c.query_id == "solar-wind");
  CHECK(c.seed == 7);
  CHECK(c.scripted());
  CHECK(c.backend.script == drtest::fixture("smoke/scripted_model.json").lexically_normal());
  CHECK(c.search.index.is_absolute());
  CHECK(c.loop.max_iterations == 3);
  CHECK(c.render.width == 800);
  CHECK(c.render.format == render::AssetFormat::svg);
  CHECK(c.micro.worker_cap == 4);
  CHECK(c.harness_timeout_seconds == 30);

  // Serialized config reads back to the same settings.
  auto again = RunConfig::from_json(c.to_json(), {});
  CHECK(again.to_json() == c.to_json());
}

TEST_CASE("config errors are config errors") {
  drtest::TempDir dir;
  CHECK_THROWS_AS(RunConfig::load(dir / "absent.json"), Error);
  std::ofstream(dir / "bad.json") << "{ not json";
  CHECK_THROWS_WITH_AS(RunConfig::load(dir / "bad.json"), doctest::Contains("not valid JSON"), Error);
  CHECK_THROWS_AS(RunConfig::from_json(json::array(), {}), Error);
  CHECK_THROWS_WITH_AS(RunConfig::from_json(json{{"loop", 3}}, {}), "config section 'loop' is not an object", Error);
  CHECK_THROWS_WITH_AS(RunConfig::from_json(json{{"seed", "seven"}}, {}), doctest::Contains("config field 'seed'"), Error);
  CHECK_THROWS_AS(RunConfig::from_json(json{{"retrieval", {{"mode", "psychic"}}}}, {}), Error);
  CHECK_THROWS_AS(RunConfig::from_json(json{{"render", {{"format", "gif"}}}}, {}), Error);
}

TEST_CASE("validation runs before any model call") {
  drtest::TempDir dir;
  auto base = smoke_config(dir / "run");
  CHECK_NOTHROW(base.validate());

  auto c = base;
  c.query.clear();
  CHECK(validation_error(c) == ErrorKind::config);
  c = base;
  c.output_dir.clear();
  CHECK(validation_error(c) == ErrorKind::config);
  c = base;
  c.backend.script = dir / "none.json";
  CHECK(validation_error(c) == ErrorKind::config);
  c = base;
  c.backend.kind = "http";
  c.backend.api_key_env = "DR_TEST_SURELY_UNSET_KEY";
  CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("DR_TEST_SURELY_UNSET_KEY"), Error);
  c = base;
  c.search.kind = "tavily";
  c.search.api_key_env = "DR_TEST_SURELY_UNSET_KEY";
  CHECK(validation_error(c) == ErrorKind::config);
  c = base;
  c.loop.epsilon = -1;
  CHECK(validation_error(c) == ErrorKind::config);
  c = base;
  c.render.concurrency = 0;
  CHECK(validation_error(c) == ErrorKind::config);
  c = base;
  c.render.harness = drtest::fixture("golden/chart.svg");  // not executable
  CHECK(validation_error(c) == ErrorKind::config);

  c = base;
  c.query.clear();
  std::ofstream(dir / "q.txt") << "  From a file?\n";
  c.query_file = dir / "q.txt";
  CHECK(c.query_text() == "From a file?");
  c.query_file = dir / "nope.txt";
  CHECK(validation_error(c) == ErrorKind::config);
}

TEST_CASE("exit codes per error category") {
  CHECK(exit_code_for(ErrorKind::config) == 2);
  CHECK(exit_code_for(ErrorKind::transport) == 3);
  CHECK(exit_code_for(ErrorKind::protocol) == 3);
  CHECK(exit_code_for(ErrorKind::review) == 4);
  CHECK(exit_code_for(ErrorKind::judging) == 4);
  CHECK(exit_code_for(ErrorKind::rendering_environment) == 5);
  CHECK(exit_code_for(ErrorKind::io) == 6);
  CHECK(exit_code_for(ErrorKind::internal) == 1);
}

TEST_CASE("report rendering renumbers citations in order of first use") {
  auto q = make_query("q", "Energy?");
  Outline o;
  o.sections = {{"a", "Alpha", {"g"}, {}, {}, {}}, {"b", "Beta", {"g"}, {}, {}, {}}};
  Draft d;
  d.sections = {{"a", "First <ref:1003> then <ref:1001> and <ref:9999>.\n" + std::string(kBlock) + "\nAfter <ref:1003>.",
                 {}, 0, SectionStatus::written, {}},
                {"b", "Second.\n" + std::string(kBlock), {}, 0, SectionStatus::written, {}}};

  render::VisualOutcome ok;
  ok.section_id = "a";
  ok.block_index = 0;
  ok.block = *avr::extract_blocks(kBlock).front().block;
  ok.visual = render::RenderedVisual{};
  ok.visual->asset_path = "/x/assets/a-1.svg";
  ok.flagged_final = true;
  render::PointCheck pc;
  pc.point = {"Solar", "2022", 1500};
  pc.kb_value = 1300;
  pc.flagged = true;
  ok.audit.checks = {pc};
  render::VisualOutcome degraded;
  degraded.section_id = "b";
  degraded.block = ok.block;
  degraded.degraded = true;

  auto md = render_report(q, o, d, report_kb(), {ok, degraded});
  CHECK(md.rfind("# Energy?\n\n## Alpha\n\nFirst [1] then [2] and .", 0) == 0);
  CHECK(md.find("After [1].") != std::string::npos);
  CHECK(md.find("![Output](assets/a-1.svg)") != std::string::npos);
  CHECK(md.find("*Figure 1. Output* — Show growth") != std::string::npos);
  CHECK(md.find("> Data check: 1 value(s)") != std::string::npos);
  CHECK(md.find("> Visualization unavailable: Output — Show growth") != std::string::npos);
  CHECK(md.find("[1] https://s/2. <https://s/2>\n[2] Source 0. <https://s/0>\n") != std::string::npos);
  CHECK(md.find("| Output | Solar | 2022 | 1500 | 1300 |") != std::string::npos);
  CHECK(md.find("DATA_VISUALIZATION") == std::string::npos);

  Draft plain;
  plain.sections = {{"a", "No sources.", {}, 0, SectionStatus::written, {}}};
  auto bare = render_report(q, o, plain, report_kb(), {});
  CHECK(bare.find("No sources were cited.") != std::string::npos);
  CHECK(bare.find("Appendix") == std::string::npos);
}

TEST_CASE("generate, resume and stats on the scripted smoke run") {
  drtest::TempDir dir;
  auto config = smoke_config(dir / "run");
  auto result = generate(config);
  CHECK_FALSE(result.resumed);
  CHECK(result.sections >= 3);
  CHECK(result.manifest.visuals_rendered >= 1);
  for (const char* f : {"report.md", "manifest.json", "outline.json", "draft.json", "knowledge_base.json",
                        "audit.json", "config.json", "loop_state.json", "traces/model_calls.jsonl"})
    CHECK_MESSAGE(std::filesystem::exists(dir / "run" / f), f);

  const auto report = drtest::slurp(dir / "run/report.md");
  CHECK(report.find("## References") != std::string::npos);
  CHECK(report.find("](assets/") != std::string::npos);

  auto manifest = read_json_file(dir / "run/manifest.json");
  for (const char* key : {"macro_iterations", "accepted_updates", "plan_modifications_per_section",
                          "content_modifications_per_section", "zero_shot_success_rate", "restructure_rate",
                          "retrieval_duration", "generation_duration", "token_usage", "per_request_latencies"})
    CHECK_MESSAGE(manifest.contains(key), key);

  // Resuming a finished run picks up the stored state.
  auto again = generate(config);
  CHECK(again.resumed);
  CHECK(drtest::slurp(dir / "run/report.md") == report);

  auto other = config;
  other.query = "A different question entirely";
  CHECK_THROWS_AS(generate(other), Error);

  auto table = stats(dir / "run");
  CHECK(std::filesystem::exists(dir / "run/stats.json"));
  CHECK(table.find("total_tokens")->value.value_or(0) > 0);
  CHECK_FALSE(table.partial);
}

TEST_CASE("generate needs a harness") {
  drtest::TempDir dir;
  auto config = smoke_config(dir / "run");
  config.render.harness.clear();
  try {
    generate(config);
    FAIL("expected rendering environment error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::rendering_environment);
  }
}

TEST_CASE("evaluate writes csv and summary") {
  drtest::TempDir dir;
  EvaluateOptions opt;
  opt.model_report = drtest::fixture("eval/model/report.md");
  opt.reference_report = drtest::fixture("eval/reference/report.md");
  opt.out_dir = dir / "eval";
  opt.backend.kind = "scripted";
  opt.backend.script = drtest::fixture("eval/judge_model.json");
  auto pe = evaluate(opt);
  CHECK(pe.results.size() == 5);
  CHECK(pe.advantage.final > 0.0);
  CHECK(drtest::slurp(dir / "eval/evaluation.csv").rfind("pair_id,dimension", 0) == 0);
  CHECK(read_json_file(dir / "eval/summary.json")["pair_count"] == 1);

  auto missing = opt;
  missing.model_report = dir / "none.md";
  CHECK_THROWS_AS(evaluate(missing), Error);
  auto no_out = opt;
  no_out.out_dir.clear();
  CHECK_THROWS_AS(evaluate(no_out), Error);
}
