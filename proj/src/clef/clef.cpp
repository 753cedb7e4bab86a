#include "deepreport/clef.hpp"

#include "deepreport/error.hpp"
#include "deepreport/json_io.hpp"
#include "deepreport/text.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <regex>
#include <sstream>
#include <thread>

namespace deepreport::clef {

const char* to_string(Dimension d) noexcept {
  switch (d) {
    case Dimension::organization: return "organization";
    case Dimension::depth: return "depth";
    case Dimension::relevance: return "relevance";
    case Dimension::alignment: return "alignment";
    case Dimension::synergy: return "synergy";
  }
  return "unknown";
}

Dimension dimension_from_string(std::string_view s) {
  for (auto d : all_dimensions)
    if (s == to_string(d)) return d;
  throw Error(ErrorKind::parse, "unknown dimension: " + std::string(s));
}

const std::string& rubric_text(Dimension d) {
  return llm::PromptRegistry::builtin().get(std::string("rubric.") + to_string(d)).text;
}

std::string display_name(Dimension d) {
  static constexpr std::string_view tag = "[Evaluation Dimension]";
  const auto& rubric = rubric_text(d);
  auto pos = rubric.find(tag);
  if (pos == std::string::npos) return to_string(d);
  auto start = pos + tag.size();
  auto end = rubric.find('\n', start);
  return std::string(text::trim(std::string_view(rubric).substr(start, end - start)));
}

json to_json(const ComparisonResult& r) {
  return json{{"dimension", to_string(r.dimension)},
              {"model_score", r.model_score},
              {"reference_score", r.reference_score},
              {"reasoning", r.reasoning},
              {"evidence_model", r.evidence_model},
              {"evidence_reference", r.evidence_reference},
              {"suggestions_model", r.suggestions_model},
              {"suggestions_reference", r.suggestions_reference}};
}

namespace {

int score_field(const json& j, const char* key) {
  if (!j.contains(key)) throw Error(ErrorKind::parse, std::string("missing ") + key);
  const auto& v = j.at(key);
  if (!v.is_number()) throw Error(ErrorKind::parse, std::string(key) + " is not a number");
  double d = v.get<double>();
  if (d != std::floor(d) || d < 1 || d > 5)
    throw Error(ErrorKind::parse, std::string(key) + " must be an integer from 1 to 5");
  return static_cast<int>(d);
}

std::vector<std::string> string_list(const json& j, const char* key) {
  std::vector<std::string> out;
  if (!j.contains(key)) return out;
  const auto& v = j.at(key);
  if (!v.is_array()) throw Error(ErrorKind::parse, std::string(key) + " is not a list");
  for (const auto& e : v)
    if (e.is_string()) out.push_back(e.get<std::string>());
  return out;
}

}  // namespace

ComparisonResult parse_judgement(std::string_view reply, Dimension dimension) {
  auto obj = parse_reply_object(reply);
  if (!obj) throw Error(ErrorKind::parse, "no JSON object in judge reply");
  ComparisonResult r;
  r.dimension = dimension;
  r.model_score = score_field(*obj, "model_score");
  r.reference_score = score_field(*obj, "reference_score");
  if (!obj->contains("reasoning") || !(*obj)["reasoning"].is_string() ||
      text::trim((*obj)["reasoning"].get<std::string>()).empty())
    throw Error(ErrorKind::parse, "reasoning is missing or empty");
  r.reasoning = (*obj)["reasoning"].get<std::string>();
  r.evidence_model = string_list(*obj, "evidence_model");
  r.evidence_reference = string_list(*obj, "evidence_reference");
  r.suggestions_model = string_list(*obj, "suggestions_model");
  r.suggestions_reference = string_list(*obj, "suggestions_reference");
  return r;
}

double relative_advantage(double model_score, double reference_score) {
  if (!std::isfinite(model_score) || !std::isfinite(reference_score) || model_score < 0 || reference_score < 0)
    throw Error(ErrorKind::contract, "scores must be finite and non-negative");
  if (model_score + reference_score == 0.0) throw Error(ErrorKind::contract, "relative advantage undefined for 0/0");
  return model_score / (model_score + reference_score);
}

double aggregate(const std::vector<double>& per_dimension) {
  if (per_dimension.size() != all_dimensions.size())
    throw Error(ErrorKind::contract, "expected 5 dimension scores, got " + std::to_string(per_dimension.size()));
  double sum = 0.0;
  for (double v : per_dimension) {
    if (!(v >= 0.0 && v <= 1.0)) throw Error(ErrorKind::contract, "dimension score outside [0,1]");
    sum += v;
  }
  return sum / static_cast<double>(per_dimension.size());
}

RelativeAdvantage score(const std::vector<ComparisonResult>& results) {
  RelativeAdvantage ra;
  for (const auto& r : results) {
    if (ra.per_dimension.count(r.dimension))
      throw Error(ErrorKind::contract, std::string("duplicate dimension: ") + to_string(r.dimension));
    ra.per_dimension[r.dimension] = relative_advantage(r.model_score, r.reference_score);
  }
  std::vector<double> values;
  for (auto d : all_dimensions) {
    auto it = ra.per_dimension.find(d);
    if (it == ra.per_dimension.end())
      throw Error(ErrorKind::contract, std::string("missing dimension: ") + to_string(d));
    values.push_back(it->second);
  }
  ra.final = aggregate(values);
  return ra;
}

double mean_score(const std::vector<int>& scores) {
  if (scores.empty()) throw Error(ErrorKind::contract, "no scores to average");
  double sum = 0.0;
  for (int s : scores) {
    if (s < 1 || s > 5) throw Error(ErrorKind::contract, "score outside 1-5");
    sum += s;
  }
  return sum / static_cast<double>(scores.size());
}

// ---------------------------------------------------------------------------

namespace {

// Offsets from the first sample keep constant inputs exact.
double mean_of(const std::vector<double>& xs) {
  double acc = 0.0;
  for (double x : xs) acc += x - xs.front();
  return xs.front() + acc / static_cast<double>(xs.size());
}

double percentile(const std::vector<double>& sorted, double q) {
  double h = (static_cast<double>(sorted.size()) - 1.0) * q;
  auto lo = static_cast<std::size_t>(std::floor(h));
  auto hi = std::min(lo + 1, sorted.size() - 1);
  double frac = h - static_cast<double>(lo);
  if (frac == 0.0 || sorted[lo] == sorted[hi]) return sorted[lo];
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

}  // namespace

BootstrapResult bootstrap_significance(const std::vector<double>& paired_deltas, int resamples, std::uint64_t seed,
                                       double confidence) {
  const auto n = paired_deltas.size();
  if (n < 2) throw Error(ErrorKind::contract, "bootstrap needs at least 2 samples");
  if (resamples < 1000) throw Error(ErrorKind::contract, "bootstrap needs at least 1000 resamples");
  if (!(confidence > 0.0 && confidence < 1.0)) throw Error(ErrorKind::contract, "confidence must lie in (0,1)");
  for (double d : paired_deltas)
    if (!std::isfinite(d)) throw Error(ErrorKind::contract, "non-finite delta");

  std::mt19937_64 rng(seed);
  std::vector<double> means(static_cast<std::size_t>(resamples));
  std::vector<double> sample(n);
  std::size_t at_or_below = 0, at_or_above = 0;
  for (auto& m : means) {
    for (auto& s : sample) {
      auto idx = static_cast<std::size_t>((static_cast<unsigned __int128>(rng()) * n) >> 64);
      s = paired_deltas[idx];
    }
    m = mean_of(sample);
    if (m <= 0.0) ++at_or_below;
    if (m >= 0.0) ++at_or_above;
  }
  std::sort(means.begin(), means.end());

  BootstrapResult r;
  r.mean = mean_of(paired_deltas);
  const double alpha = 1.0 - confidence;
  r.ci_low = percentile(means, alpha / 2.0);
  r.ci_high = percentile(means, 1.0 - alpha / 2.0);
  const double b = static_cast<double>(resamples);
  r.p_two_sided = std::min(1.0, 2.0 * std::min(at_or_below / b, at_or_above / b));
  return r;
}

// ---------------------------------------------------------------------------

DocumentStats measure_document(std::string_view markdown, std::string title) {
  DocumentStats s;
  s.title = std::move(title);
  s.char_count = text::utf8_length(markdown);
  std::istringstream in{std::string(markdown)};
  std::string token;
  while (in >> token) ++s.word_count;
  static const std::regex image(R"(!\[[^\]]*\]\([^)]*\)|<img\b)", std::regex::icase);
  std::string body(markdown);
  s.image_count = static_cast<std::size_t>(
      std::distance(std::sregex_iterator(body.begin(), body.end(), image), std::sregex_iterator()));
  return s;
}

const char* to_string(DropReason r) noexcept {
  switch (r) {
    case DropReason::length: return "length";
    case DropReason::words: return "words";
    case DropReason::images: return "images";
    case DropReason::keyword: return "keyword";
  }
  return "unknown";
}

const std::vector<std::string>& excluded_title_keywords() {
  static const std::vector<std::string> keywords = {"announcing", "welcoming"};
  return keywords;
}

FilterDecision filter_document(const DocumentStats& s) {
  FilterDecision d;
  if (s.char_count < min_chars || s.char_count > max_chars) d.reasons.push_back(DropReason::length);
  if (s.word_count < min_words) d.reasons.push_back(DropReason::words);
  if (s.image_count < min_images || s.image_count > max_images) d.reasons.push_back(DropReason::images);
  for (const auto& k : excluded_title_keywords())
    if (text::contains_ci(s.title, k)) {
      d.reasons.push_back(DropReason::keyword);
      break;
    }
  d.keep = d.reasons.empty();
  return d;
}

// ---------------------------------------------------------------------------

ReportDocument load_report(const std::filesystem::path& path) {
  std::error_code ec;
  if (!std::filesystem::is_regular_file(path, ec))
    throw Error(ErrorKind::io, "report not found: " + path.string());
  return {read_text_file(path), path.parent_path()};
}

namespace {

std::string base64(const std::string& bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                          reinterpret_cast<const unsigned char*>(bytes.data()), static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

std::optional<std::string> media_type_for(const std::filesystem::path& p) {
  auto ext = text::to_lower(p.extension().string());
  if (ext == ".svg") return "image/svg+xml";
  if (ext == ".png") return "image/png";
  if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
  if (ext == ".gif") return "image/gif";
  if (ext == ".webp") return "image/webp";
  return std::nullopt;
}

void append_text(std::vector<llm::ContentPart>& parts, std::string s) {
  if (s.empty()) return;
  if (!parts.empty() && parts.back().kind == llm::ContentPart::Kind::text) parts.back().text += s;
  else parts.push_back({llm::ContentPart::Kind::text, std::move(s), {}, {}});
}

void append_parts(std::vector<llm::ContentPart>& parts, std::vector<llm::ContentPart> more) {
  for (auto& p : more) {
    if (p.kind == llm::ContentPart::Kind::text) append_text(parts, std::move(p.text));
    else parts.push_back(std::move(p));
  }
}

}  // namespace

std::vector<llm::ContentPart> interleave(const ReportDocument& report) {
  static const std::regex image(R"(!\[([^\]]*)\]\(([^)\s]+)[^)]*\))");
  std::vector<llm::ContentPart> parts;
  const std::string& body = report.text;
  std::size_t last = 0;
  for (auto it = std::sregex_iterator(body.begin(), body.end(), image); it != std::sregex_iterator(); ++it) {
    const auto& m = *it;
    auto target = m[2].str();
    auto pos = static_cast<std::size_t>(m.position(0));
    auto media = media_type_for(target);
    std::filesystem::path file = report.base_dir / target;
    std::error_code ec;
    if (target.find("://") != std::string::npos || !media || !std::filesystem::is_regular_file(file, ec)) continue;
    append_text(parts, body.substr(last, pos - last));
    parts.push_back({llm::ContentPart::Kind::image, m[1].str().empty() ? target : m[1].str(), *media,
                     base64(read_text_file(file))});
    last = pos + static_cast<std::size_t>(m.length(0));
  }
  append_text(parts, body.substr(last));
  return parts;
}

ComparisonResult judge_dimension(llm::Gateway& gateway, const ReportDocument& model_report,
                                 const ReportDocument& reference_report, Dimension dimension,
                                 const std::string& query) {
  // Rendered with markers standing in for the reports, then split so image
  // parts can sit inside the report bodies.
  static constexpr std::string_view m1 = "\x1e@REPORT1@\x1e", m2 = "\x1e@REPORT2@\x1e";
  llm::Bindings b{{"query_section", query.empty() ? "" : "[User Query]\n" + query + "\n\n"},
                  {"rubric", rubric_text(dimension)},
                  {"report1", std::string(m1)},
                  {"report2", std::string(m2)},
                  {"dimension_name", display_name(dimension)}};
  const auto prompt = llm::render_prompt("judge.evaluation", b);
  const auto p1 = prompt.find(m1), p2 = prompt.find(m2);
  if (p1 == std::string::npos || p2 == std::string::npos || p2 < p1)
    throw Error(ErrorKind::internal, "judge template lost its report slots");

  llm::Message message;
  message.role = llm::Role::user;
  append_text(message.parts, prompt.substr(0, p1) + "[Report A (Model Report)]\n");
  append_parts(message.parts, interleave(model_report));
  append_text(message.parts, prompt.substr(p1 + m1.size(), p2 - p1 - m1.size()) + "[Report B (Reference Report)]\n");
  append_parts(message.parts, interleave(reference_report));
  append_text(message.parts, prompt.substr(p2 + m2.size()));

  std::string last_error;
  for (int attempt = 0; attempt < 2; ++attempt) {
    auto msg = message;
    if (attempt > 0)
      append_text(msg.parts, "\n\nYour previous reply was rejected (" + last_error +
                                 "). Output only the JSON object; model_score and reference_score must be "
                                 "integers from 1 to 5 and reasoning must be nonempty.");
    auto reply = gateway.complete(llm::AgentRole::judge, "evaluation", {msg});
    try {
      return parse_judgement(reply.text, dimension);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::parse) throw;
      last_error = e.what();
    }
  }
  throw Error(ErrorKind::judging,
              std::string("judge reply unusable for ") + to_string(dimension) + ": " + last_error);
}

PairEvaluation evaluate_pair(llm::Gateway& gateway, const std::string& pair_id, const ReportDocument& model_report,
                             const ReportDocument& reference_report, const std::string& query) {
  std::vector<std::optional<ComparisonResult>> slots(all_dimensions.size());
  std::vector<std::exception_ptr> errors(all_dimensions.size());
  {
    std::vector<std::jthread> workers;
    for (std::size_t i = 0; i < all_dimensions.size(); ++i)
      workers.emplace_back([&, i] {
        try {
          slots[i] = judge_dimension(gateway, model_report, reference_report, all_dimensions[i], query);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      });
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  PairEvaluation pe;
  pe.pair_id = pair_id;
  for (auto& s : slots) pe.results.push_back(std::move(*s));
  pe.advantage = score(pe.results);
  return pe;
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  return "\"" + text::replace_all(s, "\"", "\"\"") + "\"";
}

std::string fixed4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

}  // namespace

std::string to_csv(const std::vector<PairEvaluation>& evaluations) {
  std::string out = "pair_id,dimension,model_score,reference_score,relative_advantage,reasoning\n";
  for (const auto& pe : evaluations)
    for (const auto& r : pe.results)
      out += csv_field(pe.pair_id) + "," + to_string(r.dimension) + "," + std::to_string(r.model_score) + "," +
             std::to_string(r.reference_score) + "," + fixed4(pe.advantage.per_dimension.at(r.dimension)) + "," +
             csv_field(r.reasoning) + "\n";
  return out;
}

json summary_json(const std::vector<PairEvaluation>& evaluations) {
  json pairs = json::array();
  std::map<Dimension, double> sums;
  double final_sum = 0.0;
  for (const auto& pe : evaluations) {
    json dims = json::object();
    for (const auto& [d, v] : pe.advantage.per_dimension) {
      dims[to_string(d)] = v;
      sums[d] += v;
    }
    json results = json::array();
    for (const auto& r : pe.results) results.push_back(to_json(r));
    pairs.push_back({{"pair_id", pe.pair_id}, {"per_dimension", dims}, {"final", pe.advantage.final},
                     {"results", results}});
    final_sum += pe.advantage.final;
  }
  json out{{"pairs", pairs}, {"pair_count", evaluations.size()}};
  if (!evaluations.empty()) {
    json mean = json::object();
    const auto n = static_cast<double>(evaluations.size());
    for (const auto& [d, v] : sums) mean[to_string(d)] = v / n;
    out["mean_per_dimension"] = mean;
    out["mean_final"] = final_sum / n;
  }
  return out;
}

// ---------------------------------------------------------------------------

const StatRow* StatsTable::find(std::string_view key) const {
  for (const auto& r : rows)
    if (r.key == key) return &r;
  return nullptr;
}

json StatsTable::to_json() const {
  json metrics = json::object();
  json missing = json::array();
  for (const auto& r : rows) {
    metrics[r.key] = r.value ? json(*r.value) : json(nullptr);
    if (!r.value) missing.push_back(r.key);
  }
  return {{"metrics", metrics}, {"missing", missing}, {"partial", partial}};
}

std::string StatsTable::to_text() const {
  std::size_t width = 0;
  for (const auto& r : rows) width = std::max(width, r.name.size());
  std::string out;
  for (const auto& r : rows) {
    out += r.name + std::string(width - r.name.size() + 2, ' ');
    if (!r.value) {
      out += "missing\n";
      continue;
    }
    char buf[64];
    if (r.unit == "%") std::snprintf(buf, sizeof buf, "%.1f%%", *r.value * 100.0);
    else if (r.unit == "tokens") std::snprintf(buf, sizeof buf, "%.0f", *r.value);
    else if (r.unit == "s") std::snprintf(buf, sizeof buf, "%.2f s", *r.value);
    else std::snprintf(buf, sizeof buf, "%.2f", *r.value);
    out += std::string(buf) + "\n";
  }
  if (partial) out += "(partial run: some metrics are missing)\n";
  return out;
}

StatsTable compute_stats(const StatsInputs& in) {
  using opt = std::optional<double>;
  const RunManifest* m = in.manifest ? &*in.manifest : nullptr;

  opt plan_mods, content_mods, zero_shot, restructure, retrieval_s, generation_s, retrieval_lat, generation_lat,
      total_tokens, retrieval_share, generation_share;

  if (m && m->sections_planned > 0) plan_mods = static_cast<double>(m->plan_modifications) / m->sections_planned;

  std::size_t sections = 0, revisions = 0, zero = 0;
  for (const auto& d : in.drafts)
    for (const auto& s : d.sections) {
      ++sections;
      revisions += static_cast<std::size_t>(std::max(0, s.revision_count));
      if (s.revision_count == 0 && s.status != SectionStatus::failed) ++zero;
    }
  if (sections > 0) {
    content_mods = static_cast<double>(revisions) / sections;
    zero_shot = static_cast<double>(zero) / sections;
  } else if (m && m->section_drafts_written > 0) {
    content_mods = m->content_modifications_per_section;
    zero_shot = m->zero_shot_success_rate;
  }

  if (in.rounds > 0) {
    auto events = std::count(in.replan_restructured.begin(), in.replan_restructured.end(), true);
    restructure = static_cast<double>(events) / in.rounds;
  } else if (m && m->macro_iterations > 0) {
    restructure = m->restructure_rate;
  }

  if (m) {
    retrieval_s = m->retrieval_duration;
    generation_s = m->generation_duration;
    double r_sum = 0, g_sum = 0;
    std::size_t r_n = 0, g_n = 0;
    for (const auto& l : m->per_request_latencies) {
      if (l.phase == "retrieval") r_sum += l.seconds, ++r_n;
      else g_sum += l.seconds, ++g_n;
    }
    if (r_n) retrieval_lat = r_sum / r_n;
    if (g_n) generation_lat = g_sum / g_n;
    double total = 0, retrieval = 0;
    for (const auto& [phase, tokens] : m->token_usage) {
      total += static_cast<double>(tokens);
      if (phase == "retrieval") retrieval += static_cast<double>(tokens);
    }
    total_tokens = total;
    if (total > 0) {
      retrieval_share = retrieval / total;
      generation_share = 1.0 - retrieval / total;
    }
  }

  StatsTable t;
  t.rows = {{"retrieval_duration", "Retrieval Duration", retrieval_s, "s"},
            {"generation_duration", "Generation Duration", generation_s, "s"},
            {"retrieval_latency_per_request", "Retrieval Latency / req", retrieval_lat, "s"},
            {"generation_latency_per_request", "Generation Latency / req", generation_lat, "s"},
            {"total_tokens", "Total Tokens", total_tokens, "tokens"},
            {"retrieval_token_share", "Retrieval Phase", retrieval_share, "%"},
            {"generation_token_share", "Generation Phase", generation_share, "%"},
            {"plan_modifications", "Plan Modifications", plan_mods, ""},
            {"content_modifications", "Content Modifications", content_mods, ""},
            {"zero_shot_success", "Zero-Shot Success", zero_shot, "%"},
            {"restructure_rate", "Restructure Rate", restructure, "%"}};
  // A run without requests has no latencies to report; only a missing
  // manifest makes the table partial.
  t.partial = !m;
  for (const auto& r : t.rows)
    if (!r.value && r.key != "retrieval_latency_per_request" && r.key != "generation_latency_per_request")
      t.partial = true;
  return t;
}

StatsTable collect_run_stats(const std::filesystem::path& run_dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (!fs::is_directory(run_dir, ec)) throw Error(ErrorKind::io, "not a directory: " + run_dir.string());
  const auto manifest_path = run_dir / "manifest.json";
  const auto iterations = run_dir / "iterations";
  const bool has_manifest = fs::is_regular_file(manifest_path, ec);
  const bool has_iterations = fs::is_directory(iterations, ec);
  if (!has_manifest && !has_iterations) throw Error(ErrorKind::io, "not a run directory: " + run_dir.string());

  StatsInputs in;
  if (has_manifest) {
    try {
      in.manifest = read_json_file(manifest_path).get<RunManifest>();
    } catch (const std::exception&) {
      in.manifest.reset();  // truncated by an interrupted write
    }
  }
  if (has_iterations) {
    std::vector<fs::path> dirs;
    for (const auto& e : fs::directory_iterator(iterations))
      if (e.is_directory() && text::starts_with(e.path().filename().string(), "iter-")) dirs.push_back(e.path());
    std::sort(dirs.begin(), dirs.end());
    for (const auto& dir : dirs) {
      if (!fs::is_regular_file(dir / "gate.json", ec)) continue;  // round did not finish
      ++in.rounds;
      if (fs::is_regular_file(dir / "draft.json", ec)) {
        try {
          in.drafts.push_back(read_json_file(dir / "draft.json").get<Draft>());
        } catch (const std::exception&) {
        }
      }
      if (fs::is_regular_file(dir / "replan.json", ec)) {
        try {
          in.replan_restructured.push_back(read_json_file(dir / "replan.json").value("restructured", false));
        } catch (const std::exception&) {
        }
      }
    }
  }
  return compute_stats(in);
}

}  // namespace deepreport::clef
