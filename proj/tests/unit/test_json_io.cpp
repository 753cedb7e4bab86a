#include "deepreport/error.hpp"
#include "deepreport/json_io.hpp"

#include "support.hpp"

#include <doctest.h>

#include <random>

using namespace deepreport;

namespace {

template <class T>
T round_trip(const T& v) {
  return json::parse(json(v).dump()).get<T>();
}

}  // namespace

TEST_CASE("enum names round-trip") {
  for (auto a : {EditAction::trim, EditAction::expand, EditAction::merge, EditAction::split, EditAction::reorder,
                 EditAction::add, EditAction::remove})
    CHECK(edit_action_from_string(to_string(a)) == a);
  for (auto s : {SectionStatus::pending, SectionStatus::written, SectionStatus::corrected, SectionStatus::failed})
    CHECK(section_status_from_string(to_string(s)) == s);
  for (auto p : {OutlineProvenance::initial, OutlineProvenance::replanned, OutlineProvenance::restructured})
    CHECK(provenance_from_string(to_string(p)) == p);
  for (auto m : {IngestionMode::snippet, IngestionMode::full_summarized})
    CHECK(ingestion_mode_from_string(to_string(m)) == m);
  CHECK_THROWS_AS(edit_action_from_string("explode"), Error);
}

TEST_CASE("core types round-trip") {
  Outline o;
  o.version = 3;
  o.provenance = OutlineProvenance::restructured;
  o.sections = {{"a", "A", {"g1", "g2"}, {"c"}, {"chart"}, {"x", "y"}}};
  CHECK(round_trip(o) == o);

  KnowledgeItem k;
  k.ref_id = 1004;
  k.url = "https://example.org/p";
  k.title = "T";
  k.summary = "S";
  k.excerpt = "E";
  k.mode = IngestionMode::full_summarized;
  k.fallback = true;
  k.facts = {{"output 2023", 1630.5}};
  CHECK(round_trip(k) == k);

  FeedbackSignal fb;
  fb.quality = 0.73;
  fb.section_findings["a"] = {"thin evidence"};
  fb.cross_section_conflicts = {{"a", "b", "numbers differ"}};
  fb.outline_suggestions = {{"new", EditAction::add, "add methods"}};
  fb.notes = "n";
  CHECK(round_trip(fb) == fb);

  avr::AvrBlock b{"T", "Bar Chart", {1, 2}, "P", "x", std::nullopt, {{"Note", "v"}}};
  CHECK(round_trip(b) == b);
}

TEST_CASE("knowledge base round-trip keeps both tiers") {
  KnowledgeItem g{1001, "g", "G", "s", "", "", IngestionMode::snippet, false, {}};
  KnowledgeItem l{1002, "l", "L", "s", "", "", IngestionMode::snippet, false, {}};
  KnowledgeBase kb({g});
  kb.add_local("sec", l);
  auto back = round_trip(kb);
  CHECK(back.global_tier() == kb.global_tier());
  CHECK(back.local_tier("sec") == kb.local_tier("sec"));
}

TEST_CASE("serialization is canonical: sorted keys, stable dump") {
  Outline o;
  o.sections = {{"a", "A", {"g"}, {}, {}, {}}};
  auto dumped = json(o).dump();
  CHECK(dumped == json(round_trip(o)).dump());
  auto j = json::parse(dumped);
  std::string prev;
  for (auto it = j.begin(); it != j.end(); ++it) {
    CHECK(prev < it.key());
    prev = it.key();
  }
}

TEST_CASE("missing required keys are errors") {
  CHECK_THROWS(json::parse(R"({"title":"x"})").get<SectionPlan>());
  CHECK_THROWS(json::parse(R"({"quality":"high"})").get<FeedbackSignal>());
}

TEST_CASE("parse_reply_object tolerates wrapping") {
  CHECK((*parse_reply_object(R"({"a":1})"))["a"] == 1);
  CHECK((*parse_reply_object("```json\n{\"a\": 2}\n```"))["a"] == 2);
  CHECK((*parse_reply_object("Here you go:\n{\"a\": 3} hope it helps"))["a"] == 3);
  CHECK((*parse_reply_object("{\n  // score\n  \"a\": 4\n}"))["a"] == 4);
  CHECK_FALSE(parse_reply_object("no json").has_value());
  CHECK_FALSE(parse_reply_object("{\"a\": }").has_value());
  CHECK_FALSE(parse_reply_object("[1,2]").has_value());
}

TEST_CASE("file helpers write atomically and read back") {
  drtest::TempDir dir;
  auto p = dir / "sub/out.json";
  write_json_file(p, json{{"k", 1}});
  auto raw = read_text_file(p);
  CHECK(raw.back() == '\n');
  CHECK(read_json_file(p)["k"] == 1);
  CHECK_FALSE(std::filesystem::exists(p.string() + ".tmp"));

  write_text_file(dir / "bad.json", "{nope");
  CHECK_THROWS_AS(read_json_file(dir / "bad.json"), Error);
  CHECK_THROWS_AS(read_text_file(dir / "absent.txt"), Error);
}
