#include "deepreport/error.hpp"
#include "deepreport/json_io.hpp"
#include "deepreport/render.hpp"

#include "support.hpp"

#include <doctest.h>

#include <atomic>

using namespace deepreport;
using namespace deepreport::render;
using drtest::reply;

namespace {

avr::AvrBlock bar_block(std::vector<std::int64_t> refs = {1001}) {
  return {"Solar output", "Bar Chart", std::move(refs), "Show growth", "Year", "TWh", {}};
}

avr::AvrBlock flow_block() { return {"Pipeline", "Flowchart", {1001}, "Show steps", std::nullopt, std::nullopt, {}}; }

KnowledgeBase kb() {
  KnowledgeItem k;
  k.ref_id = 1001;
  k.url = "https://s";
  k.title = "Solar stats";
  k.summary = "Solar output was 1000 TWh in 2021 and 1300 TWh in 2022.";
  k.facts = {{"solar output 2021", 1000}, {"solar output 2022", 1300}};
  return KnowledgeBase({k});
}

const char* kGood =
    R"({"xAxis": {"type": "category", "data": ["2021", "2022"]}, "yAxis": {"type": "value"},
        "series": [{"name": "Solar output", "type": "bar", "data": [1000, 1300]}]})";
const char* kInflated =
    R"({"xAxis": {"type": "category", "data": ["2021", "2022"]}, "yAxis": {"type": "value"},
        "series": [{"name": "Solar output", "type": "bar", "data": [1000, 1500]}]})";

void write_svg(const std::filesystem::path& p, int w, int h) {
  std::ofstream(p) << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\"></svg>";
}

/// In-process harness: writes a small SVG, or fails on demand.
class FakeHarness final : public Harness {
 public:
  std::atomic<int> calls{0};
  int fail_first = 0;
  bool broken_env = false;
  bool write_nothing = false;
  void render(const HarnessRequest& r) override {
    int n = calls++;
    if (broken_env) throw Error(ErrorKind::rendering_environment, "no browser");
    if (n < fail_first) throw Error(ErrorKind::protocol, "render crashed");
    if (!write_nothing) write_svg(r.output_path, r.width, r.height);
  }
};

}  // namespace

TEST_CASE("routing is a table lookup") {
  CHECK(route("Bar Chart") == Target::chart_grammar);
  CHECK(route("Sankey") == Target::chart_grammar);
  CHECK(route("Flowchart") == Target::diagram_grammar);
  CHECK(route("Roadmap") == Target::diagram_grammar);
  CHECK(asset_format_from_string("png") == AssetFormat::png);
  CHECK_THROWS_AS(asset_format_from_string("gif"), Error);
}

TEST_CASE("data point extraction covers the common option shapes") {
  SUBCASE("categories plus plain values") {
    auto pts = extract_data_points(json::parse(kGood));
    CHECK(pts == std::vector<DataPoint>{{"Solar output", "2021", 1000}, {"Solar output", "2022", 1300}});
  }
  SUBCASE("named objects, string numbers and pairs") {
    auto pts = extract_data_points(json::parse(
        R"({"series": [{"type": "pie", "data": [{"name": "Coal", "value": "1,200"}, {"name": "Gas", "value": 800}]},
                       {"name": "s", "type": "scatter", "data": [[1, 2.5], [3, 4]]}]})"));
    REQUIRE(pts.size() == 4);
    CHECK(pts[0] == DataPoint{"series 1", "Coal", 1200});
    CHECK(pts[1].value == 800);
    CHECK(pts[2] == DataPoint{"s", "1", 2.5});
  }
  SUBCASE("heatmap triples resolve both axes") {
    auto pts = extract_data_points(json::parse(
        R"({"xAxis": {"data": ["Q1", "Q2"]}, "yAxis": {"data": ["EU", "US"]},
            "series": {"type": "heatmap", "data": [[1, 0, 7]]}})"));
    CHECK(pts == std::vector<DataPoint>{{"series 1", "Q2 EU", 7}});
  }
  SUBCASE("sankey links") {
    auto pts = extract_data_points(json::parse(
        R"({"series": [{"type": "sankey", "links": [{"source": "Coal", "target": "Power", "value": 40}]}]})"));
    CHECK(pts == std::vector<DataPoint>{{"series 1", "Coal -> Power", 40}});
  }
  SUBCASE("non-numeric and non-object inputs yield nothing") {
    CHECK(extract_data_points(json::parse(R"({"series": [{"data": ["n/a", null]}]})")).empty());
    CHECK(extract_data_points(json::array()).empty());
  }
}

TEST_CASE("syntax validation") {
  CHECK(validate_syntax(make_spec(bar_block(), kGood)).empty());
  CHECK(validate_syntax(make_spec(bar_block(), "{not json")).front().find("well-formed") != std::string::npos);
  CHECK(validate_syntax(make_spec(bar_block(), R"({"series": [{"data": [1]}]})")) ==
        std::vector<std::string>{"missing axis"});
  CHECK(validate_syntax(make_spec(bar_block(), R"({"xAxis": {}, "yAxis": {}})")) ==
        std::vector<std::string>{"missing series"});
  CHECK(validate_syntax(make_spec(bar_block(), R"({"xAxis": {}, "yAxis": {}, "series": [{"type": "bar"}]})")) ==
        std::vector<std::string>{"series without data"});
  CHECK(validate_syntax(make_spec(bar_block(), R"({"xAxis": {}, "yAxis": {}, "series": [{"data": ["x"]}]})")) ==
        std::vector<std::string>{"no numeric data points"});

  avr::AvrBlock pie{"Mix", "Pie Chart", {1}, "p", std::nullopt, std::nullopt, {}};
  CHECK(validate_syntax(make_spec(pie, R"({"series": [{"data": [{"name": "a", "value": 1}]}]})")).empty());

  CHECK(validate_syntax(make_spec(flow_block(), "flowchart LR\n  A[Mine] --> B(Refine)")).empty());
  CHECK(validate_syntax(make_spec(flow_block(), "%% comment\ngraph TD\n  A --> B")).empty());
  CHECK(validate_syntax(make_spec(flow_block(), "flowchart LR\n  A[Mine --> B")) ==
        std::vector<std::string>{"unbalanced brackets"});
  CHECK(validate_syntax(make_spec(flow_block(), "flowchart LR")) ==
        std::vector<std::string>{"diagram has no nodes or edges"});
  CHECK(validate_syntax(make_spec(flow_block(), "boxes\n A")) == std::vector<std::string>{"unknown diagram header"});
  CHECK(validate_syntax(make_spec(flow_block(), "flowchart LR\n  A[\"label ]\"] --> B")).empty());
}

TEST_CASE("audit matches declared values to cited facts") {
  auto good = audit(make_spec(bar_block(), kGood), kb());
  CHECK_FALSE(good.hallucinated);
  REQUIRE(good.checks.size() == 2);
  CHECK(good.checks[0].kb_value == 1000.0);
  CHECK(good.checks[1].kb_value == 1300.0);

  auto bad = audit(make_spec(bar_block(), kInflated), kb());
  CHECK(bad.hallucinated);
  CHECK_FALSE(bad.checks[0].flagged);
  CHECK(bad.checks[1].flagged);
  CHECK(bad.checks[1].relative_error == doctest::Approx(200.0 / 1300.0));

  // Within tolerance.
  CHECK_FALSE(audit(make_spec(bar_block(), kInflated), kb(), 0.2).hallucinated);

  // Citing an item without facts flags every point.
  auto unknown = audit(make_spec(bar_block({4242}), kGood), kb());
  CHECK(unknown.hallucinated);
  CHECK_FALSE(unknown.checks[0].kb_value.has_value());

  auto diagram = audit(make_spec(flow_block(), "flowchart LR\n A --> B"), kb());
  CHECK(diagram.exempt);
  CHECK_FALSE(diagram.hallucinated);
}

TEST_CASE("audit report rate excludes exempt charts") {
  AuditReport report;
  ChartAudit flagged, clean, exempt;
  flagged.hallucinated = true;
  exempt.exempt = true;
  report.add(flagged);
  report.add(clean);
  report.add(exempt);
  CHECK(report.summary_rate == doctest::Approx(0.5));
  CHECK(AuditReport{}.summary_rate == 0.0);
}

TEST_CASE("cited facts listing") {
  auto text = cited_facts(bar_block(), kb());
  CHECK(text.find("- solar output 2022 = 1300 <ref:1001>") != std::string::npos);
  CHECK(cited_facts(bar_block({7}), kb()) == "(no numeric facts recorded)");
}

TEST_CASE("translation") {
  SUBCASE("chart reply in fences") {
    auto gw = drtest::scripted_gateway({reply("RENDER_TRANSLATE", {std::string("```json\n") + kGood + "\n```"})});
    auto spec = translate(*gw, bar_block(), kb());
    CHECK(spec.target == Target::chart_grammar);
    CHECK(spec.declared_data_points.size() == 2);
  }
  SUBCASE("prose gets one reprompt") {
    auto gw = drtest::scripted_gateway({reply("RENDER_TRANSLATE", {"Sure, here is a chart.", kGood})});
    CHECK(translate(*gw, bar_block(), kb()).declared_data_points.size() == 2);
    auto never = drtest::scripted_gateway({reply("RENDER_TRANSLATE", {"Sure."})});
    try {
      translate(*never, bar_block(), kb());
      FAIL("expected protocol error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::protocol);
    }
  }
  SUBCASE("diagrams come back as text") {
    auto gw = drtest::scripted_gateway({reply("RENDER_TRANSLATE", {"```mermaid\nflowchart LR\n  A --> B\n```"})});
    auto spec = translate(*gw, flow_block(), kb());
    CHECK(spec.target == Target::diagram_grammar);
    CHECK(spec.payload == "flowchart LR\n  A --> B");
  }
  SUBCASE("the prompt carries the evidence facts and the correction") {
    std::string seen;
    auto gw = drtest::scripted_gateway({drtest::generated("RENDER_TRANSLATE", [&](const std::string& p, std::uint64_t) {
      seen = p;
      return std::string(kGood);
    })});
    translate(*gw, bar_block(), kb(), "Fix it.");
    CHECK(seen.find("Title: Solar output\nChart_Type: Bar Chart") != std::string::npos);
    CHECK(seen.find("solar output 2022 = 1300") != std::string::npos);
    CHECK(seen.find("Fix it.") != std::string::npos);
  }
  SUBCASE("unresolvable sources are a contract breach") {
    auto gw = drtest::scripted_gateway({});
    CHECK_THROWS_AS(translate(*gw, bar_block({9}), kb()), Error);
  }
}

TEST_CASE("image dimensions") {
  drtest::TempDir dir;
  write_svg(dir / "a.svg", 640, 480);
  CHECK(read_image_dimensions(dir / "a.svg")->width == 640);
  std::ofstream(dir / "vb.svg") << "<?xml version=\"1.0\"?>\n<svg viewBox=\"0 0 300 150\">";
  auto vb = read_image_dimensions(dir / "vb.svg");
  REQUIRE(vb);
  CHECK(vb->height == 150);
  std::string png = "\x89PNG\r\n\x1a\n";
  png += std::string("\0\0\0\rIHDR", 8);
  png += std::string("\0\0\x03\x84\0\0\x02\x30", 8);  // 900 x 560
  std::ofstream(dir / "a.png", std::ios::binary) << png;
  auto p = read_image_dimensions(dir / "a.png");
  REQUIRE(p);
  CHECK(p->width == 900);
  CHECK(p->height == 560);
  std::ofstream(dir / "x.txt") << "hello";
  CHECK_FALSE(read_image_dimensions(dir / "x.txt"));
  CHECK_FALSE(read_image_dimensions(dir / "absent"));
  CHECK(read_image_dimensions(drtest::fixture("golden/chart.svg"))->width == 900);
}

TEST_CASE("pipeline: happy path writes spec and asset") {
  drtest::TempDir dir;
  auto gw = drtest::scripted_gateway({reply("RENDER_TRANSLATE", {kGood})});
  auto harness = std::make_shared<FakeHarness>();
  RenderPipeline pipe(*gw, harness, {}, dir / "assets", dir / "specs");
  auto out = pipe.process("solar", 0, bar_block(), kb());
  REQUIRE(out.visual);
  CHECK(out.visual->asset_path == dir / "assets/solar-1.svg");
  CHECK(out.visual->width == 900);
  CHECK(std::filesystem::exists(dir / "specs/solar-1.json"));
  CHECK(out.audited);
  CHECK_FALSE(out.flagged_pre_audit);
  CHECK(out.translations == 1);
}

TEST_CASE("pipeline: a flagged chart is retranslated with the source values") {
  drtest::TempDir dir;
  std::string second_prompt;
  int n = 0;
  auto gw = drtest::scripted_gateway({drtest::generated("RENDER_TRANSLATE", [&](const std::string& p, std::uint64_t) {
    if (n++ == 0) return std::string(kInflated);
    second_prompt = p;
    return std::string(kGood);
  })});
  RenderPipeline pipe(*gw, std::make_shared<FakeHarness>(), {}, dir / "assets", dir / "specs");
  auto out = pipe.process("solar", 0, bar_block(), kb());
  CHECK(out.flagged_pre_audit);
  CHECK_FALSE(out.flagged_final);
  CHECK(out.translations == 2);
  CHECK(out.visual);
  CHECK(second_prompt.find("The audit found values that do not match the sources") != std::string::npos);
  CHECK(second_prompt.find("declared 1500, source says 1300") != std::string::npos);
}

TEST_CASE("pipeline: a stubborn chart is rendered but stays flagged") {
  drtest::TempDir dir;
  auto gw = drtest::scripted_gateway({reply("RENDER_TRANSLATE", {kInflated})});
  RenderPipeline pipe(*gw, std::make_shared<FakeHarness>(), {}, dir / "assets", dir / "specs");
  auto out = pipe.process("solar", 0, bar_block(), kb());
  CHECK(out.flagged_pre_audit);
  CHECK(out.flagged_final);
  CHECK(out.visual);
}

TEST_CASE("pipeline: syntax and render failures spend the budget, then degrade") {
  drtest::TempDir dir;
  SUBCASE("invalid spec every time") {
    auto gw = drtest::scripted_gateway({reply("RENDER_TRANSLATE", {R"({"series": []})"})});
    RenderPipeline pipe(*gw, std::make_shared<FakeHarness>(), {}, dir / "assets", dir / "specs");
    auto out = pipe.process("solar", 1, bar_block(), kb());
    CHECK(out.degraded);
    CHECK_FALSE(out.visual);
    CHECK(out.translations == 4);  // 1 + retry budget 2 + audit retry 1
    CHECK(out.note.find("\"Solar output\" could not be rendered: syntax check failed") != std::string::npos);
  }
  SUBCASE("renderer crashes") {
    auto gw = drtest::scripted_gateway({reply("RENDER_TRANSLATE", {kGood})});
    auto harness = std::make_shared<FakeHarness>();
    harness->fail_first = 100;
    RenderPipeline pipe(*gw, harness, {}, dir / "assets", dir / "specs");
    auto out = pipe.process("solar", 0, bar_block(), kb());
    CHECK(out.degraded);
    CHECK(out.render_failures == 3);
  }
  SUBCASE("one crash then success") {
    auto gw = drtest::scripted_gateway({reply("RENDER_TRANSLATE", {kGood})});
    auto harness = std::make_shared<FakeHarness>();
    harness->fail_first = 1;
    RenderPipeline pipe(*gw, harness, {}, dir / "assets", dir / "specs");
    auto out = pipe.process("solar", 0, bar_block(), kb());
    CHECK(out.visual);
    CHECK(out.render_failures == 1);
  }
  SUBCASE("no asset written") {
    auto gw = drtest::scripted_gateway({reply("RENDER_TRANSLATE", {kGood})});
    auto harness = std::make_shared<FakeHarness>();
    harness->write_nothing = true;
    RenderPipeline pipe(*gw, harness, {}, dir / "assets", dir / "specs");
    auto out = pipe.process("solar", 0, bar_block(), kb());
    CHECK(out.degraded);
    CHECK(out.note.find("no asset") != std::string::npos);
  }
  SUBCASE("unresolvable source degrades at once") {
    auto gw = drtest::scripted_gateway({});
    RenderPipeline pipe(*gw, std::make_shared<FakeHarness>(), {}, dir / "assets", dir / "specs");
    auto out = pipe.process("solar", 0, bar_block({77}), kb());
    CHECK(out.degraded);
    CHECK(out.translations == 1);
  }
  SUBCASE("a broken environment is fatal") {
    auto gw = drtest::scripted_gateway({reply("RENDER_TRANSLATE", {kGood})});
    auto harness = std::make_shared<FakeHarness>();
    harness->broken_env = true;
    RenderPipeline pipe(*gw, harness, {}, dir / "assets", dir / "specs");
    CHECK_THROWS_AS(pipe.process("solar", 0, bar_block(), kb()), Error);
  }
}

TEST_CASE("pipeline: process_all keeps draft order and skips invalid blocks") {
  drtest::TempDir dir;
  auto gw = drtest::scripted_gateway({reply("Chart_Type: Flowchart", {"flowchart LR\n  A --> B"}),
                                      reply("RENDER_TRANSLATE", {kGood})});
  RenderPipeline pipe(*gw, std::make_shared<FakeHarness>(), {}, dir / "assets", dir / "specs");
  Draft d;
  d.sections = {{"a", avr::serialize(bar_block()) + "\n[DATA_VISUALIZATION]\nTitle: x\n[/DATA_VISUALIZATION]\n" +
                          avr::serialize(flow_block()),
                 {}, 0, SectionStatus::written, {}},
                {"b", "no visuals", {}, 0, SectionStatus::written, {}},
                {"c", avr::serialize(bar_block()), {}, 0, SectionStatus::written, {}}};
  auto outs = pipe.process_all(d, kb());
  REQUIRE(outs.size() == 3);
  CHECK(outs[0].section_id == "a");
  CHECK(outs[0].block_index == 0);
  CHECK(outs[1].block_index == 1);
  CHECK(outs[1].audit.exempt);
  CHECK_FALSE(outs[1].audited);
  CHECK(outs[2].section_id == "c");
  CHECK(outs[2].visual->asset_path.filename() == "c-1.svg");
}

TEST_CASE("pipeline configuration") {
  auto gw = drtest::scripted_gateway({});
  CHECK_THROWS_AS(RenderPipeline(*gw, nullptr, {}, "a", "s"), Error);
  RenderConfig neg;
  neg.retry_budget = -1;
  CHECK_THROWS_AS(RenderPipeline(*gw, std::make_shared<FakeHarness>(), neg, "a", "s"), Error);
  RenderConfig flat;
  flat.height = 0;
  CHECK_THROWS_AS(RenderPipeline(*gw, std::make_shared<FakeHarness>(), flat, "a", "s"), Error);
}
