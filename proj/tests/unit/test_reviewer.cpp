#include "deepreport/error.hpp"
#include "deepreport/reviewer.hpp"

#include "support.hpp"

#include <doctest.h>

using namespace deepreport;
using namespace deepreport::reviewer;
using drtest::reply;

namespace {

Outline outline() {
  Outline o;
  o.version = 2;
  o.sections = {{"solar", "Solar growth", {"Quantify solar capacity additions"}, {}, {}, {}},
                {"wind", "Wind growth", {"Compare onshore and offshore wind"}, {}, {}, {}}};
  return o;
}

Draft draft(int version = 2) {
  Draft d;
  d.version = version;
  d.sections = {{"solar", "Solar text <ref:1001>.", {}, 0, SectionStatus::written, {}},
                {"wind", "Wind text.", {}, 0, SectionStatus::written, {}}};
  return d;
}

MonitorConstraints constraints() {
  return {outline().sections[0], {1001, 1002}};
}

const char* kBlock =
    "[DATA_VISUALIZATION]\nTitle: T\nChart_Type: Bar Chart\nX_Axis: Year\nY_Axis: GW\n"
    "Data_Source: <ref:1002>\nPurpose: P\n[/DATA_VISUALIZATION]";

}  // namespace

TEST_CASE("review parsing") {
  auto fb = parse_review(R"({"quality_0_100": 72,
      "section_findings": {"solar": ["thin"], "wind": "no numbers"},
      "conflicts": [{"section_a": "solar", "section_b": "wind", "description": "units differ"}],
      "suggestions": [{"target": "wind", "action": "expand", "instruction": "add offshore data"},
                      {"target": null, "action": "add", "instruction": "add outlook"}],
      "dimension_notes": {"depth": "ok"}})",
                         outline());
  CHECK(fb.quality == doctest::Approx(0.72));
  CHECK(fb.section_findings["solar"] == std::vector<std::string>{"thin"});
  CHECK(fb.section_findings["wind"] == std::vector<std::string>{"no numbers"});
  REQUIRE(fb.cross_section_conflicts.size() == 1);
  REQUIRE(fb.outline_suggestions.size() == 2);
  CHECK(fb.outline_suggestions[1].target_section_id == "new");
  CHECK(fb.outline_suggestions[1].action == EditAction::add);
  CHECK(fb.notes.find("depth") != std::string::npos);
}

TEST_CASE("review parsing rejections carry a usable reason") {
  const auto o = outline();
  CHECK_THROWS_WITH_AS(parse_review("no json", o), "reply is not a JSON object", Error);
  CHECK_THROWS_WITH_AS(parse_review(R"({"quality_0_100": "high"})", o), "missing numeric quality_0_100", Error);
  CHECK_THROWS_WITH_AS(parse_review(R"({"quality_0_100": 140})", o), doctest::Contains("out of range"), Error);
  CHECK_THROWS_WITH_AS(parse_review(R"({"quality_0_100": 50, "section_findings": {"ghost": []}})", o),
                       doctest::Contains("ghost"), Error);
  CHECK_THROWS_AS(parse_review(R"({"quality_0_100": 50, "conflicts": [{"section_a": "solar", "section_b": "solar"}]})", o),
                  Error);
  CHECK_THROWS_AS(parse_review(R"({"quality_0_100": 50, "suggestions": [{"target": "wind", "action": "explode"}]})", o),
                  Error);
  CHECK_THROWS_AS(parse_review(R"({"quality_0_100": 50, "section_findings": []})", o), Error);
}

TEST_CASE("global review reprompts once, then gives up") {
  ReviewTranscript t;
  auto gw = drtest::scripted_gateway({reply("GLOBAL_REVIEW", {R"({"quality_0_100": 300})", R"({"quality_0_100": 64})"})});
  auto fb = global_review(*gw, make_query("q", "renewables"), draft(), outline(), 1, ReviewRubric::standard(), &t);
  CHECK(fb.quality == doctest::Approx(0.64));
  REQUIRE(t.prompts.size() == 2);
  CHECK(t.prompts[0].find("Review round: 1") != std::string::npos);
  CHECK(t.prompts[0].find("rejected") == std::string::npos);
  CHECK(t.prompts[1].find("rejected (quality_0_100 out of range") != std::string::npos);

  auto bad = drtest::scripted_gateway({reply("GLOBAL_REVIEW", {"garbage"})});
  try {
    global_review(*bad, make_query("q", "x"), draft(), outline());
    FAIL("expected review error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::review);
  }
}

TEST_CASE("global review preconditions") {
  auto gw = drtest::scripted_gateway({});
  CHECK_THROWS_AS(global_review(*gw, make_query("q", "x"), draft(1), outline()), Error);
  auto partial = draft();
  partial.sections.pop_back();
  CHECK_THROWS_AS(global_review(*gw, make_query("q", "x"), partial, outline()), Error);
  ReviewRubric empty;
  CHECK_THROWS_AS(global_review(*gw, make_query("q", "x"), draft(), outline(), 0, empty), Error);
}

TEST_CASE("draft rendering for review") {
  auto text = render_draft_for_review(draft(), outline());
  CHECK(text.find("## Solar growth [solar]\n\nSolar text <ref:1001>.") == 0);
  CHECK(text.find("## Wind growth [wind]") != std::string::npos);
}

TEST_CASE("monitor: search stage") {
  CHECK(monitor(SearchOutput{{"", "solar capacity"}, 0}, constraints()).ok);
  auto v = monitor(SearchOutput{{" ", ""}, 0}, constraints());
  CHECK_FALSE(v.ok);
  CHECK(v.stage == Stage::search);
  CHECK_FALSE(v.correction_instruction.empty());
}

TEST_CASE("monitor: replan stage keeps goals verbatim") {
  auto refined = outline().sections[0];
  refined.goals.push_back("Add cost data");
  CHECK(monitor(ReplanOutput{refined}, constraints()).ok);

  refined.goals = {"Quantify solar additions"};
  auto v = monitor(ReplanOutput{refined}, constraints());
  CHECK_FALSE(v.ok);
  CHECK(v.correction_instruction.find("\"Quantify solar capacity additions\"") != std::string::npos);

  refined = outline().sections[0];
  refined.title = " ";
  CHECK_FALSE(monitor(ReplanOutput{refined}, constraints()).ok);
}

TEST_CASE("monitor: write stage") {
  CHECK(monitor(WriteOutput{"Capacity grew <ref:1001>.\n" + std::string(kBlock)}, constraints()).ok);
  CHECK_FALSE(monitor(WriteOutput{"  "}, constraints()).ok);

  auto v = monitor(WriteOutput{"A <ref:1001> B <ref:2001> C <ref:2001>."}, constraints());
  CHECK_FALSE(v.ok);
  CHECK(v.correction_instruction.find("<ref:2001>") != std::string::npos);
  CHECK(v.correction_instruction.find("1001, 1002") != std::string::npos);

  std::string unresolved_block = kBlock;
  unresolved_block.replace(unresolved_block.find("1002"), 4, "3003");
  CHECK_FALSE(monitor(WriteOutput{"Text.\n" + unresolved_block}, constraints()).ok);

  std::string broken = kBlock;
  broken.replace(broken.find("Bar Chart"), 9, "Pie Chart");
  auto bv = monitor(WriteOutput{"Text.\n" + broken}, constraints());
  CHECK_FALSE(bv.ok);
  CHECK(bv.correction_instruction.find("Visualization block 1 is invalid") != std::string::npos);
}

TEST_CASE("goal coverage heuristic") {
  std::vector<std::string> goals = {"Quantify solar capacity additions", "Explain grid curtailment"};
  auto missing = uncovered_goals(goals, "Solar capacity additions reached records.");
  CHECK(missing == std::vector<std::string>{"Explain grid curtailment"});
  CHECK(uncovered_goals({"a an of"}, "").empty());
}

TEST_CASE("escalation only asks the model when rules pass and goals look uncovered") {
  auto gw = drtest::scripted_gateway({reply("### TASK: MONITOR", {R"({"ok": false, "instruction": "Add capacity data."})"})});
  auto covered = monitor_with_escalation(*gw, WriteOutput{"Solar capacity additions grew <ref:1001>."}, constraints());
  CHECK(covered.ok);
  auto uncovered = monitor_with_escalation(*gw, WriteOutput{"Prices fell <ref:1001>."}, constraints());
  CHECK_FALSE(uncovered.ok);
  CHECK(uncovered.correction_instruction == "Add capacity data.");

  auto lenient = drtest::scripted_gateway({reply("### TASK: MONITOR", {"not sure"})});
  CHECK(monitor_with_escalation(*lenient, WriteOutput{"Prices fell."}, constraints()).ok);

  auto blank = drtest::scripted_gateway({reply("### TASK: MONITOR", {R"({"ok": false})"})});
  auto v = monitor_with_escalation(*blank, WriteOutput{"Prices fell."}, constraints());
  CHECK_FALSE(v.ok);
  CHECK(v.correction_instruction.find("Quantify solar capacity additions") != std::string::npos);

  // Rule failures never reach the model.
  auto never = drtest::scripted_gateway({reply("### TASK: MONITOR", {R"({"ok": true})"})});
  CHECK_FALSE(monitor_with_escalation(*never, WriteOutput{"x <ref:9>"}, constraints()).ok);
}
