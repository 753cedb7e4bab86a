#include "deepreport/core.hpp"
#include "deepreport/error.hpp"
#include "deepreport/json_io.hpp"

#include <doctest.h>
#include <openssl/sha.h>

#include <algorithm>
#include <cstdio>
#include <random>

using namespace deepreport;

namespace {

Outline three_sections() {
  Outline o;
  o.sections = {{"intro", "Introduction", {"Set the scene"}, {}, {}, {}},
                {"trends", "Trends", {"Quantify growth"}, {}, {}, {}},
                {"outlook", "Outlook", {"Project 2030"}, {}, {}, {}}};
  return o;
}

KnowledgeItem item(RefId id, std::string url) {
  KnowledgeItem k;
  k.ref_id = id;
  k.url = std::move(url);
  k.title = "t";
  k.summary = "s";
  return k;
}

SectionDraft written(const std::string& id) {
  SectionDraft d;
  d.section_id = id;
  d.text = "Text for " + id;
  d.status = SectionStatus::written;
  return d;
}

std::string sha256(const std::string& s) {
  unsigned char md[SHA256_DIGEST_LENGTH];
  SHA256(reinterpret_cast<const unsigned char*>(s.data()), s.size(), md);
  std::string hex;
  char buf[3];
  for (auto c : md) {
    std::snprintf(buf, sizeof buf, "%02x", c);
    hex += buf;
  }
  return hex;
}

}  // namespace

TEST_CASE("query text must be nonblank") {
  CHECK(make_query("q1", "What changed?").text == "What changed?");
  CHECK_THROWS_AS(make_query("q1", "  \n"), Error);
}

TEST_CASE("outline validation") {
  auto o = three_sections();
  CHECK_NOTHROW(validate(o));
  CHECK(o.index_of("trends") == 1);
  CHECK(o.find("missing") == nullptr);

  auto dup = o;
  dup.sections[2].section_id = "intro";
  CHECK_THROWS_WITH_AS(validate(dup), doctest::Contains("intro"), Error);

  auto empty = o;
  empty.sections.clear();
  CHECK_THROWS_AS(validate(empty), Error);

  auto untitled = o;
  untitled.sections[0].title = "";
  CHECK_THROWS_AS(validate(untitled), Error);
}

TEST_CASE("snapshot digests") {
  auto o = three_sections();
  KnowledgeBase kb({item(1001, "u1"), item(1002, "u2")});
  auto snap = freeze_snapshot(o, kb);

  SUBCASE("recomputing without mutation yields the same digest") {
    CHECK(digest(*snap.outline) == snap.outline_digest);
    CHECK(digest(kb.global_tier()) == snap.global_digest);
  }
  SUBCASE("digest is the SHA-256 of the canonical serialization") {
    CHECK(snap.outline_digest == sha256(json(o).dump()));
    CHECK(snap.global_digest == sha256(json(kb.global_tier()).dump()));
  }
  SUBCASE("local-tier mutation leaves the global digest alone") {
    kb.add_local("trends", item(1003, "u3"));
    CHECK(digest(kb.global_tier()) == snap.global_digest);
  }
  SUBCASE("mutating the original outline does not reach the snapshot") {
    o.sections[0].goals.push_back("more");
    CHECK(digest(*snap.outline) == snap.outline_digest);
    CHECK(digest(o) != snap.outline_digest);
  }
  SUBCASE("two freezes of identical state agree") {
    CHECK(freeze_snapshot(three_sections(), kb).outline_digest == snap.outline_digest);
  }
  SUBCASE("invalid outline is rejected") {
    auto bad = o;
    bad.sections[1].section_id = "intro";
    CHECK_THROWS_AS(freeze_snapshot(bad, kb), Error);
  }
}

TEST_CASE("knowledge base tiers stay disjoint") {
  KnowledgeBase kb({item(1001, "g1"), item(1002, "g2")});
  kb.add_local("a", item(1003, "a1"));
  kb.add_local("b", item(1004, "b1"));
  CHECK(kb.size() == 4);
  CHECK(kb.max_ref_id() == 1004);
  CHECK(kb.url_owner("g1") == std::optional<std::string>("global"));
  CHECK(kb.url_owner("b1") == std::optional<std::string>("b"));
  CHECK_FALSE(kb.url_owner("zz").has_value());

  CHECK_THROWS_AS(kb.add_local("b", item(1003, "b2")), Error);  // id owned by a
  CHECK_THROWS_AS(kb.add_local("b", item(1001, "b3")), Error);  // id owned by global
  CHECK_THROWS_AS(kb.add_local("a", item(1005, "g2")), Error);  // url owned by global
  CHECK_NOTHROW(kb.check_invariants());

  auto eff = kb.effective("a");
  REQUIRE(eff.size() == 3);
  CHECK(kb.find_effective("a", 1003) != nullptr);
  CHECK(kb.find_effective("a", 1004) == nullptr);
  CHECK(kb.find(1004) != nullptr);
  CHECK(kb.global_only().size() == 2);
}

TEST_CASE("ref id allocator is monotone from 1001") {
  RefIdAllocator ids;
  CHECK(ids.next() == 1001);
  CHECK(ids.next() == 1002);
  CHECK(ids.peek() == 1003);
}

TEST_CASE("assemble_draft orders by outline") {
  auto o = three_sections();
  auto d = assemble_draft({written("outlook"), written("intro"), written("trends")}, o);
  REQUIRE(d.sections.size() == 3);
  CHECK(d.sections[0].section_id == "intro");
  CHECK(d.sections[1].section_id == "trends");
  CHECK(d.sections[2].section_id == "outlook");

  CHECK_THROWS_WITH_AS(assemble_draft({written("outlook"), written("intro")}, o), doctest::Contains("trends"), Error);

  auto failed = written("trends");
  failed.status = SectionStatus::failed;
  CHECK_THROWS_WITH_AS(assemble_draft({written("intro"), failed, written("outlook")}, o),
                       doctest::Contains("failed"), Error);
  CHECK_THROWS_AS(assemble_draft({written("intro"), written("trends"), written("outlook"), written("x")}, o), Error);
}

TEST_CASE("assemble_draft is independent of completion order") {
  Outline o;
  for (int i = 0; i < 5; ++i) o.sections.push_back({"s" + std::to_string(i), "S", {"g"}, {}, {}, {}});
  std::vector<SectionDraft> drafts;
  for (const auto& s : o.sections) drafts.push_back(written(s.section_id));
  const auto reference = json(assemble_draft(drafts, o)).dump();
  std::mt19937 rng(11);
  for (int n = 0; n < 100; ++n) {
    std::shuffle(drafts.begin(), drafts.end(), rng);
    CHECK(json(assemble_draft(drafts, o)).dump() == reference);
  }
}

TEST_CASE("feedback validation") {
  auto o = three_sections();
  FeedbackSignal fb;
  fb.quality = 0.7;
  fb.section_findings["trends"] = {"thin"};
  CHECK_NOTHROW(validate(fb, o));

  auto out_of_range = fb;
  out_of_range.quality = 1.2;
  CHECK_THROWS_AS(validate(out_of_range, o), Error);

  auto unknown = fb;
  unknown.outline_suggestions.push_back({"ghost", EditAction::trim, "cut"});
  CHECK_THROWS_AS(validate(unknown, o), Error);

  auto add_new = fb;
  add_new.outline_suggestions.push_back({"new", EditAction::add, "add a methods section"});
  CHECK_NOTHROW(validate(add_new, o));
}

TEST_CASE("restructuring actions") {
  CHECK(is_restructuring(EditAction::merge));
  CHECK(is_restructuring(EditAction::split));
  CHECK(is_restructuring(EditAction::reorder));
  CHECK(is_restructuring(EditAction::remove));
  CHECK_FALSE(is_restructuring(EditAction::expand));
  CHECK_FALSE(is_restructuring(EditAction::trim));
  CHECK_FALSE(is_restructuring(EditAction::add));
}

TEST_CASE("manifest rates follow the counters") {
  RunManifest m;
  m.sections_planned = 8;
  m.plan_modifications = 4;
  m.section_drafts_written = 10;
  m.section_revisions = 3;
  m.zero_shot_sections = 8;
  m.macro_iterations = 4;
  m.restructure_events = 1;
  m.finalize_rates();
  CHECK(m.plan_modifications_per_section == doctest::Approx(0.5));
  CHECK(m.content_modifications_per_section == doctest::Approx(0.3));
  CHECK(m.zero_shot_success_rate == doctest::Approx(0.8));
  CHECK(m.restructure_rate == doctest::Approx(0.25));

  RunManifest empty;
  empty.finalize_rates();
  CHECK(empty.zero_shot_success_rate == 0.0);
  CHECK(empty.restructure_rate == 0.0);
}
