#include "deepreport/render.hpp"

#include "deepreport/error.hpp"
#include "deepreport/json_io.hpp"
#include "deepreport/text.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <limits>
#include <regex>
#include <set>
#include <sstream>
#include <thread>

namespace deepreport::render {

namespace {

constexpr std::string_view kMermaidHeaders[] = {
    "flowchart", "graph",   "sequenceDiagram", "timeline", "gantt", "classDiagram",  "stateDiagram",
    "erDiagram", "journey", "mindmap",         "pie",      "quadrantChart", "gitGraph"};

std::optional<double> as_number(const json& v) {
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) {
    auto s = text::replace_all(std::string(text::trim(v.get<std::string>())), ",", "");
    if (s.empty()) return std::nullopt;
    char* end = nullptr;
    double d = std::strtod(s.c_str(), &end);
    if (end && *end == '\0' && std::isfinite(d)) return d;
  }
  return std::nullopt;
}

std::string label_of(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  if (v.is_number()) {
    std::ostringstream s;
    s << v.get<double>();
    return s.str();
  }
  if (v.is_object() && v.contains("value")) return label_of(v["value"]);
  return v.dump();
}

const json* first_axis(const json& option, const char* key) {
  auto it = option.find(key);
  if (it == option.end()) return nullptr;
  if (it->is_array()) return it->empty() ? nullptr : &(*it)[0];
  if (it->is_object()) return &*it;
  return nullptr;
}

const json* category_data(const json* axis) {
  if (!axis) return nullptr;
  auto it = axis->find("data");
  return it != axis->end() && it->is_array() ? &*it : nullptr;
}

bool has_axis(const json& option, const char* key) { return first_axis(option, key) != nullptr; }

std::string mermaid_header(std::string_view payload) {
  for (const auto& raw : text::split_lines(payload)) {
    auto line = text::trim(raw);
    if (line.empty() || text::starts_with(line, "%%")) continue;
    for (auto h : kMermaidHeaders)
      if (text::starts_with(line, h)) return std::string(h);
    return {};
  }
  return {};
}

std::vector<std::string> lint_mermaid(std::string_view payload) {
  std::vector<std::string> errors;
  if (text::trim(payload).empty()) return {"diagram payload is empty"};
  if (mermaid_header(payload).empty()) errors.push_back("unknown diagram header");
  std::vector<char> stack;
  bool in_quote = false;
  for (char c : payload) {
    if (c == '"') in_quote = !in_quote;
    if (in_quote) continue;
    if (c == '[' || c == '(' || c == '{') stack.push_back(c);
    else if (c == ']' || c == ')' || c == '}') {
      char open = c == ']' ? '[' : c == ')' ? '(' : '{';
      if (stack.empty() || stack.back() != open) {
        errors.push_back("unbalanced brackets");
        stack.clear();
        in_quote = false;
        break;
      }
      stack.pop_back();
    }
  }
  if (!stack.empty() || in_quote) errors.push_back("unbalanced brackets");
  std::size_t body = 0;
  bool header_seen = false;
  for (const auto& raw : text::split_lines(payload)) {
    auto line = text::trim(raw);
    if (line.empty() || text::starts_with(line, "%%")) continue;
    if (!header_seen) {
      header_seen = true;
      continue;
    }
    ++body;
  }
  if (body == 0) errors.push_back("diagram has no nodes or edges");
  std::sort(errors.begin(), errors.end());
  errors.erase(std::unique(errors.begin(), errors.end()), errors.end());
  return errors;
}

std::set<std::string> label_words(std::string_view s) {
  auto w = text::words(s);
  return {w.begin(), w.end()};
}

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(12);
  s << v;
  return s.str();
}

}  // namespace

const char* to_string(Target t) noexcept { return t == Target::chart_grammar ? "chart" : "diagram"; }
const char* to_string(AssetFormat f) noexcept { return f == AssetFormat::svg ? "svg" : "png"; }

AssetFormat asset_format_from_string(std::string_view s) {
  if (s == "svg") return AssetFormat::svg;
  if (s == "png") return AssetFormat::png;
  throw Error(ErrorKind::config, "unknown asset format: " + std::string(s));
}

void AuditReport::add(ChartAudit chart) {
  per_chart.push_back(std::move(chart));
  std::size_t audited = 0, flagged = 0;
  for (const auto& c : per_chart) {
    if (c.exempt) continue;
    ++audited;
    flagged += c.hallucinated;
  }
  summary_rate = audited ? static_cast<double>(flagged) / static_cast<double>(audited) : 0.0;
}

Target route(std::string_view chart_type, const avr::Vocabulary& vocab) {
  return vocab.is_diagram(chart_type) ? Target::diagram_grammar : Target::chart_grammar;
}

std::vector<DataPoint> extract_data_points(const json& option) {
  std::vector<DataPoint> points;
  if (!option.is_object()) return points;
  auto sit = option.find("series");
  if (sit == option.end()) return points;
  json series = sit->is_array() ? *sit : json::array({*sit});

  const json* xcats = category_data(first_axis(option, "xAxis"));
  const json* ycats = category_data(first_axis(option, "yAxis"));
  const json* cats = xcats ? xcats : ycats;

  for (std::size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    if (!s.is_object()) continue;
    std::string name = s.contains("name") ? label_of(s["name"]) : "series " + std::to_string(si + 1);
    if (auto lit = s.find("links"); lit != s.end() && lit->is_array()) {
      for (const auto& link : *lit) {
        if (!link.is_object() || !link.contains("value")) continue;
        if (auto v = as_number(link["value"]))
          points.push_back({name, label_of(link.value("source", json(""))) + " -> " +
                                      label_of(link.value("target", json(""))), *v});
      }
    }
    auto dit = s.find("data");
    if (dit == s.end() || !dit->is_array()) continue;
    for (std::size_t k = 0; k < dit->size(); ++k) {
      const auto& d = (*dit)[k];
      std::string label = cats && k < cats->size() ? label_of((*cats)[k]) : std::to_string(k + 1);
      std::optional<double> value;
      if (d.is_object()) {
        if (d.contains("name")) label = label_of(d["name"]);
        if (d.contains("value")) {
          const auto& v = d["value"];
          if (v.is_array() && !v.empty()) value = as_number(v.back());
          else value = as_number(v);
        }
      } else if (d.is_array()) {
        if (d.size() >= 3 && xcats && ycats && d[0].is_number_integer() && d[1].is_number_integer()) {
          auto xi = d[0].get<long long>(), yi = d[1].get<long long>();
          if (xi >= 0 && yi >= 0 && static_cast<std::size_t>(xi) < xcats->size() &&
              static_cast<std::size_t>(yi) < ycats->size())
            label = label_of((*xcats)[xi]) + " " + label_of((*ycats)[yi]);
        } else if (!d.empty()) {
          label = label_of(d[0]);
        }
        if (!d.empty()) value = as_number(d.back());
      } else {
        value = as_number(d);
      }
      if (value) points.push_back({name, label, *value});
    }
  }
  return points;
}

ChartSpec make_spec(const avr::AvrBlock& block, std::string payload, const avr::Vocabulary& vocab) {
  ChartSpec spec;
  spec.target = route(block.chart_type, vocab);
  spec.source_block = block;
  spec.payload = std::move(payload);
  if (spec.target == Target::chart_grammar) {
    auto parsed = json::parse(spec.payload, nullptr, false, true);
    if (!parsed.is_discarded()) spec.declared_data_points = extract_data_points(parsed);
  }
  return spec;
}

std::vector<std::string> validate_syntax(const ChartSpec& spec, const avr::Vocabulary& vocab) {
  if (spec.target == Target::diagram_grammar) return lint_mermaid(spec.payload);
  std::vector<std::string> errors;
  json option;
  try {
    option = json::parse(spec.payload, nullptr, true, true);
  } catch (const json::exception& e) {
    return {std::string("payload is not well-formed JSON: ") + e.what()};
  }
  if (!option.is_object()) return {"payload must be a JSON object"};
  auto sit = option.find("series");
  if (sit == option.end() || !(sit->is_object() || (sit->is_array() && !sit->empty())))
    errors.push_back("missing series");
  else {
    json series = sit->is_array() ? *sit : json::array({*sit});
    for (const auto& s : series)
      if (!s.is_object() || !(s.contains("data") || s.contains("links"))) {
        errors.push_back("series without data");
        break;
      }
  }
  if (vocab.has_axes(spec.source_block.chart_type) && (!has_axis(option, "xAxis") || !has_axis(option, "yAxis")))
    errors.push_back("missing axis");
  if (errors.empty() && extract_data_points(option).empty()) errors.push_back("no numeric data points");
  return errors;
}

std::string cited_facts(const avr::AvrBlock& block, const KnowledgeBase& kb) {
  std::string out;
  for (auto id : block.data_source) {
    const auto* item = kb.find(id);
    if (!item) continue;
    for (const auto& f : item->facts) out += "- " + f.label + " = " + fmt(f.value) + " <ref:" + std::to_string(id) + ">\n";
  }
  return out.empty() ? "(no numeric facts recorded)" : out;
}

ChartSpec translate(llm::Gateway& gateway, const avr::AvrBlock& block, const KnowledgeBase& kb,
                    const std::string& correction, const avr::Vocabulary& vocab) {
  std::string evidence;
  for (auto id : block.data_source) {
    const auto* item = kb.find(id);
    if (!item) throw Error(ErrorKind::contract, "unresolvable data source <ref:" + std::to_string(id) + ">");
    evidence += "<ref:" + std::to_string(id) + "> " + item->title + "\n" + item->summary + "\n";
  }
  evidence += "Numeric facts:\n" + cited_facts(block, kb);
  const Target target = route(block.chart_type, vocab);

  llm::Bindings b{{"title", block.title},
                  {"chart_type", block.chart_type},
                  {"x_axis", block.x_axis.value_or("(none)")},
                  {"y_axis", block.y_axis.value_or("(none)")},
                  {"purpose", block.purpose},
                  {"evidence", evidence},
                  {"target", target == Target::chart_grammar ? "echarts" : "mermaid"},
                  {"correction", correction.empty() ? "" : "\n" + correction}};
  for (int attempt = 0; attempt < 2; ++attempt) {
    auto reply = gateway.complete(llm::AgentRole::render, "render", llm::render_prompt("render.translate", b)).text;
    if (target == Target::chart_grammar) {
      if (auto option = parse_reply_object(reply)) return make_spec(block, option->dump(), vocab);
    } else {
      auto program = text::strip_code_fences(reply);
      if (!mermaid_header(program).empty()) return make_spec(block, std::string(text::trim(program)), vocab);
    }
    b["correction"] = std::string("\nYour previous reply was prose, not a specification. ") +
                      (target == Target::chart_grammar ? "Reply with the ECharts option JSON object only."
                                                       : "Reply with Mermaid diagram text only, starting with the "
                                                         "diagram type line.");
  }
  throw Error(ErrorKind::protocol, "render agent returned prose instead of a " +
                                       std::string(target == Target::chart_grammar ? "chart" : "diagram") +
                                       " spec for '" + block.title + "'");
}

ChartAudit audit(const ChartSpec& spec, const KnowledgeBase& kb, double tolerance) {
  ChartAudit out;
  out.block = spec.source_block;
  if (spec.target == Target::diagram_grammar) {
    out.exempt = true;
    return out;
  }
  struct Candidate {
    const NumericFact* fact;
    std::set<std::string> words;
  };
  std::vector<Candidate> facts;
  for (auto id : spec.source_block.data_source)
    if (const auto* item = kb.find(id))
      for (const auto& f : item->facts) facts.push_back({&f, label_words(f.label)});

  for (const auto& p : spec.declared_data_points) {
    PointCheck check;
    check.point = p;
    const NumericFact* best = nullptr;
    std::size_t best_overlap = 0;
    double best_distance = std::numeric_limits<double>::infinity();
    auto want = label_words(p.label + " " + p.series);
    for (const auto& c : facts) {
      std::size_t overlap = 0;
      for (const auto& w : want) overlap += c.words.count(w);
      double distance = std::fabs(c.fact->value - p.value);
      if (overlap > best_overlap || (overlap == best_overlap && distance < best_distance)) {
        best = c.fact;
        best_overlap = overlap;
        best_distance = distance;
      }
    }
    if (best) {
      check.kb_value = best->value;
      check.kb_label = best->label;
      double denom = std::fabs(best->value);
      check.relative_error = denom > 0 ? std::fabs(p.value - best->value) / denom
                                       : (p.value == 0 ? 0.0 : std::numeric_limits<double>::infinity());
      check.flagged = check.relative_error > tolerance;
    } else {
      check.relative_error = std::numeric_limits<double>::infinity();
      check.flagged = true;
    }
    out.hallucinated |= check.flagged;
    out.checks.push_back(std::move(check));
  }
  return out;
}

// ---------------------------------------------------------------------------

std::optional<Dimensions> read_image_dimensions(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  std::string head(4096, '\0');
  in.read(head.data(), static_cast<std::streamsize>(head.size()));
  head.resize(static_cast<std::size_t>(in.gcount()));
  if (head.size() >= 24 && head.compare(0, 8, "\x89PNG\r\n\x1a\n") == 0) {
    auto be32 = [&](std::size_t off) {
      return (static_cast<unsigned char>(head[off]) << 24) | (static_cast<unsigned char>(head[off + 1]) << 16) |
             (static_cast<unsigned char>(head[off + 2]) << 8) | static_cast<unsigned char>(head[off + 3]);
    };
    return Dimensions{static_cast<int>(be32(16)), static_cast<int>(be32(20))};
  }
  auto svg = head.find("<svg");
  if (svg == std::string::npos) return std::nullopt;
  auto end = head.find('>', svg);
  std::string tag = head.substr(svg, end == std::string::npos ? std::string::npos : end - svg);
  static const std::regex w(R"(\swidth\s*=\s*["']\s*([0-9.]+))"), h(R"(\sheight\s*=\s*["']\s*([0-9.]+))"),
      vb(R"(viewBox\s*=\s*["']\s*[-0-9.]+[\s,]+[-0-9.]+[\s,]+([0-9.]+)[\s,]+([0-9.]+))");
  std::smatch mw, mh, mv;
  if (std::regex_search(tag, mw, w) && std::regex_search(tag, mh, h))
    return Dimensions{static_cast<int>(std::stod(mw[1])), static_cast<int>(std::stod(mh[1]))};
  if (std::regex_search(tag, mv, vb))
    return Dimensions{static_cast<int>(std::stod(mv[1])), static_cast<int>(std::stod(mv[2]))};
  return std::nullopt;
}

// ---------------------------------------------------------------------------

RenderPipeline::RenderPipeline(llm::Gateway& gateway, std::shared_ptr<Harness> harness, RenderConfig config,
                               std::filesystem::path assets_dir, std::filesystem::path specs_dir)
    : gateway_(gateway),
      harness_(std::move(harness)),
      config_(std::move(config)),
      assets_dir_(std::move(assets_dir)),
      specs_dir_(std::move(specs_dir)) {
  if (!harness_) throw Error(ErrorKind::rendering_environment, "no render harness configured");
  if (config_.retry_budget < 0 || config_.audit_retries < 0) throw Error(ErrorKind::config, "negative retry budget");
  if (config_.width <= 0 || config_.height <= 0) throw Error(ErrorKind::config, "render dimensions must be positive");
}

RenderedVisual RenderPipeline::render(const ChartSpec& spec, const std::string& stem) {
  std::filesystem::create_directories(specs_dir_);
  std::filesystem::create_directories(assets_dir_);
  HarnessRequest req;
  req.spec_path = specs_dir_ / (stem + (spec.target == Target::chart_grammar ? ".json" : ".mmd"));
  req.target = spec.target;
  req.format = config_.format;
  req.output_path = assets_dir_ / (stem + "." + to_string(config_.format));
  req.width = config_.width;
  req.height = config_.height;
  write_text_file(req.spec_path, spec.payload);
  std::filesystem::remove(req.output_path);
  harness_->render(req);

  std::error_code ec;
  auto size = std::filesystem::file_size(req.output_path, ec);
  if (ec || size == 0) throw Error(ErrorKind::protocol, "harness produced no asset at " + req.output_path.string());
  auto dims = read_image_dimensions(req.output_path);
  if (!dims || dims->width <= 0 || dims->height <= 0)
    throw Error(ErrorKind::protocol, "asset " + req.output_path.string() + " has no readable dimensions");
  return {req.output_path, config_.format, dims->width, dims->height, spec};
}

VisualOutcome RenderPipeline::process(const SectionId& section_id, std::size_t index, const avr::AvrBlock& block,
                                      const KnowledgeBase& kb) {
  VisualOutcome out;
  out.section_id = section_id;
  out.block_index = index;
  out.block = block;
  const std::string stem = section_id + "-" + std::to_string(index + 1);
  const int max_translations = 1 + config_.retry_budget + config_.audit_retries;
  int audit_retries_left = config_.audit_retries;
  std::string correction;
  std::string last_error;

  while (out.translations < max_translations) {
    ++out.translations;
    ChartSpec spec;
    try {
      spec = translate(gateway_, block, kb, correction);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::contract) {
        last_error = e.what();
        break;  // a missing source cannot be fixed by asking again
      }
      if (e.kind() != ErrorKind::protocol) throw;
      last_error = e.what();
      continue;
    }
    if (auto errors = validate_syntax(spec); !errors.empty()) {
      last_error = "syntax check failed: " + text::join(errors, "; ");
      correction = "The previous specification failed validation (" + text::join(errors, "; ") +
                   "). Return a corrected, complete specification.";
      continue;
    }
    auto checked = audit(spec, kb, config_.tolerance);
    if (!out.audited) {
      out.audited = !checked.exempt;
      out.flagged_pre_audit = checked.hallucinated;
    }
    out.audit = checked;
    out.flagged_final = checked.hallucinated;
    if (checked.hallucinated && audit_retries_left > 0) {
      --audit_retries_left;
      std::string bad;
      for (const auto& c : checked.checks)
        if (c.flagged)
          bad += "\n- " + c.point.series + " / " + c.point.label + ": declared " + fmt(c.point.value) +
                 (c.kb_value ? ", source says " + fmt(*c.kb_value) : ", no source value");
      correction = "The audit found values that do not match the sources:" + bad +
                   "\nUse exactly these source values:\n" + cited_facts(block, kb);
      continue;
    }
    try {
      out.visual = render(spec, stem);
      return out;
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::rendering_environment) throw;
      last_error = e.what();
      if (++out.render_failures > config_.retry_budget) break;
      correction = std::string("The renderer rejected the previous specification: ") + e.what() +
                   ". Return a simpler, valid specification.";
    }
  }
  out.degraded = true;
  out.note = "Visualization \"" + block.title + "\" could not be rendered" +
             (last_error.empty() ? std::string(".") : ": " + last_error);
  return out;
}

std::vector<VisualOutcome> RenderPipeline::process_all(const Draft& draft, const KnowledgeBase& kb) {
  struct Job {
    SectionId section;
    std::size_t index;
    avr::AvrBlock block;
  };
  std::vector<Job> jobs;
  for (const auto& s : draft.sections) {
    std::size_t k = 0;
    for (const auto& span : avr::extract_blocks(s.text))
      if (span.ok()) jobs.push_back({s.section_id, k++, *span.block});
  }
  std::vector<VisualOutcome> outcomes(jobs.size());
  std::vector<std::exception_ptr> errors(jobs.size());
  {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> threads;
    for (std::size_t w = 0; w < std::min<std::size_t>(jobs.size(), 8); ++w) {
      threads.emplace_back([&] {
        for (std::size_t i; (i = next.fetch_add(1)) < jobs.size();) {
          try {
            outcomes[i] = process(jobs[i].section, jobs[i].index, jobs[i].block, kb);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return outcomes;
}

}  // namespace deepreport::render
