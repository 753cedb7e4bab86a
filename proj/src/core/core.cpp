#include "deepreport/core.hpp"

#include "deepreport/error.hpp"
#include "deepreport/json_io.hpp"
#include "deepreport/text.hpp"

#include <openssl/sha.h>

#include <algorithm>
#include <cmath>
#include <set>

namespace deepreport {

Query make_query(std::string id, std::string text) {
  if (text::trim(text).empty()) throw Error(ErrorKind::contract, "query text is empty");
  return Query{std::move(id), std::move(text)};
}

const SectionPlan* Outline::find(std::string_view section_id) const {
  for (const auto& s : sections)
    if (s.section_id == section_id) return &s;
  return nullptr;
}

std::size_t Outline::index_of(std::string_view section_id) const {
  for (std::size_t i = 0; i < sections.size(); ++i)
    if (sections[i].section_id == section_id) return i;
  return std::string::npos;
}

void validate(const Outline& outline) {
  if (outline.version < 0) throw Error(ErrorKind::structural, "outline version is negative");
  if (outline.sections.empty()) throw Error(ErrorKind::structural, "outline has no sections");
  std::set<std::string_view> ids;
  for (const auto& s : outline.sections) {
    if (s.section_id.empty()) throw Error(ErrorKind::structural, "section with empty id");
    if (!ids.insert(s.section_id).second)
      throw Error(ErrorKind::structural, "duplicate section id: " + s.section_id);
    if (text::trim(s.title).empty())
      throw Error(ErrorKind::structural, "section " + s.section_id + " has an empty title");
  }
}

// ---------------------------------------------------------------------------

KnowledgeBase::KnowledgeBase() : global_(std::make_shared<const std::vector<KnowledgeItem>>()) {}

KnowledgeBase::KnowledgeBase(std::vector<KnowledgeItem> global_tier)
    : global_(std::make_shared<const std::vector<KnowledgeItem>>(std::move(global_tier))) {
  check_invariants();
}

const std::vector<KnowledgeItem>& KnowledgeBase::local_tier(std::string_view section_id) const {
  static const std::vector<KnowledgeItem> empty;
  auto it = local_.find(std::string(section_id));
  return it == local_.end() ? empty : it->second;
}

std::vector<const KnowledgeItem*> KnowledgeBase::effective(std::string_view section_id) const {
  std::vector<const KnowledgeItem*> out;
  for (const auto& item : *global_) out.push_back(&item);
  for (const auto& item : local_tier(section_id)) out.push_back(&item);
  return out;
}

const KnowledgeItem* KnowledgeBase::find(RefId id) const {
  for (const auto& item : *global_)
    if (item.ref_id == id) return &item;
  for (const auto& [_, tier] : local_)
    for (const auto& item : tier)
      if (item.ref_id == id) return &item;
  return nullptr;
}

const KnowledgeItem* KnowledgeBase::find_effective(std::string_view section_id, RefId id) const {
  for (const auto& item : *global_)
    if (item.ref_id == id) return &item;
  for (const auto& item : local_tier(section_id))
    if (item.ref_id == id) return &item;
  return nullptr;
}

std::optional<std::string> KnowledgeBase::url_owner(std::string_view url) const {
  for (const auto& item : *global_)
    if (item.url == url) return std::string("global");
  for (const auto& [sid, tier] : local_)
    for (const auto& item : tier)
      if (item.url == url) return sid;
  return std::nullopt;
}

void KnowledgeBase::add_local(const SectionId& section_id, KnowledgeItem item) {
  if (item.ref_id <= 0) throw Error(ErrorKind::internal, "local item without a ref_id");
  if (find(item.ref_id))
    throw Error(ErrorKind::internal,
                "ref_id " + std::to_string(item.ref_id) + " already present in the knowledge base");
  if (auto owner = url_owner(item.url))
    throw Error(ErrorKind::internal, "url " + item.url + " already owned by tier " + *owner);
  local_[section_id].push_back(std::move(item));
}

RefId KnowledgeBase::max_ref_id() const {
  RefId m = 0;
  for (const auto& item : *global_) m = std::max(m, item.ref_id);
  for (const auto& [_, tier] : local_)
    for (const auto& item : tier) m = std::max(m, item.ref_id);
  return m;
}

std::size_t KnowledgeBase::size() const {
  std::size_t n = global_->size();
  for (const auto& [_, tier] : local_) n += tier.size();
  return n;
}

KnowledgeBase KnowledgeBase::global_only() const {
  KnowledgeBase kb;
  kb.global_ = global_;
  return kb;
}

void KnowledgeBase::check_invariants() const {
  std::set<RefId> ids;
  auto visit = [&ids](const KnowledgeItem& item) {
    if (!ids.insert(item.ref_id).second)
      throw Error(ErrorKind::internal, "duplicate ref_id " + std::to_string(item.ref_id));
  };
  for (const auto& item : *global_) visit(item);
  for (const auto& [_, tier] : local_)
    for (const auto& item : tier) visit(item);
}

// ---------------------------------------------------------------------------

bool is_restructuring(EditAction action) noexcept {
  return action == EditAction::merge || action == EditAction::split || action == EditAction::reorder ||
         action == EditAction::remove;
}

void validate(const FeedbackSignal& feedback, const Outline& outline) {
  if (!(feedback.quality >= 0.0 && feedback.quality <= 1.0))
    throw Error(ErrorKind::structural, "feedback quality outside [0,1]");
  auto require = [&outline](const std::string& id) {
    if (!outline.find(id)) throw Error(ErrorKind::structural, "feedback references unknown section " + id);
  };
  for (const auto& [sid, _] : feedback.section_findings) require(sid);
  for (const auto& c : feedback.cross_section_conflicts) {
    require(c.section_a);
    require(c.section_b);
  }
  for (const auto& s : feedback.outline_suggestions)
    if (s.target_section_id != "new") require(s.target_section_id);
}

void RunManifest::finalize_rates() {
  plan_modifications_per_section =
      sections_planned > 0 ? static_cast<double>(plan_modifications) / sections_planned : 0.0;
  content_modifications_per_section =
      section_drafts_written > 0 ? static_cast<double>(section_revisions) / section_drafts_written : 0.0;
  zero_shot_success_rate =
      section_drafts_written > 0 ? static_cast<double>(zero_shot_sections) / section_drafts_written : 0.0;
  restructure_rate = macro_iterations > 0 ? static_cast<double>(restructure_events) / macro_iterations : 0.0;
}

// ---------------------------------------------------------------------------

namespace {

std::string sha256_hex(std::string_view data) {
  unsigned char md[SHA256_DIGEST_LENGTH];
  SHA256(reinterpret_cast<const unsigned char*>(data.data()), data.size(), md);
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * SHA256_DIGEST_LENGTH);
  for (unsigned char b : md) {
    out += hex[b >> 4];
    out += hex[b & 0xF];
  }
  return out;
}

}  // namespace

std::string digest(const Outline& outline) { return sha256_hex(json(outline).dump()); }

std::string digest(const std::vector<KnowledgeItem>& tier) { return sha256_hex(json(tier).dump()); }

IterationSnapshot freeze_snapshot(const Outline& outline, const KnowledgeBase& kb) {
  validate(outline);
  IterationSnapshot snap;
  snap.outline = std::make_shared<const Outline>(outline);
  snap.global_tier = kb.shared_global_tier();
  snap.outline_digest = digest(*snap.outline);
  snap.global_digest = digest(*snap.global_tier);
  return snap;
}

Draft assemble_draft(std::vector<SectionDraft> section_drafts, const Outline& outline) {
  std::map<SectionId, SectionDraft> by_id;
  for (auto& d : section_drafts) {
    if (!outline.find(d.section_id))
      throw Error(ErrorKind::structural, "draft for unknown section: " + d.section_id);
    auto id = d.section_id;
    if (!by_id.emplace(id, std::move(d)).second)
      throw Error(ErrorKind::structural, "duplicate draft for section: " + id);
  }
  std::vector<std::string> missing, failed, unfinished;
  for (const auto& plan : outline.sections) {
    auto it = by_id.find(plan.section_id);
    if (it == by_id.end()) missing.push_back(plan.section_id);
    else if (it->second.status == SectionStatus::failed)
      failed.push_back(plan.section_id + (it->second.failure_reason.empty() ? "" : " (" + it->second.failure_reason + ")"));
    else if (it->second.status == SectionStatus::pending)
      unfinished.push_back(plan.section_id);
  }
  if (!missing.empty())
    throw Error(ErrorKind::structural, "missing section drafts: " + text::join(missing, ", "));
  if (!failed.empty()) throw Error(ErrorKind::structural, "failed sections: " + text::join(failed, ", "));
  if (!unfinished.empty())
    throw Error(ErrorKind::structural, "unfinished sections: " + text::join(unfinished, ", "));

  Draft draft;
  draft.version = outline.version;
  for (const auto& plan : outline.sections) draft.sections.push_back(std::move(by_id.at(plan.section_id)));
  return draft;
}

}  // namespace deepreport
