#include "deepreport/app.hpp"

#include "deepreport/error.hpp"
#include "deepreport/json_io.hpp"
#include "deepreport/reviewer.hpp"
#include "deepreport/text.hpp"

#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <regex>

namespace deepreport::app {

namespace fs = std::filesystem;

namespace {

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.is_object() || !j.contains(key) || j.at(key).is_null()) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::config, std::string("config field '") + key + "': " + e.what());
  }
}

fs::path resolve(const fs::path& base, const std::string& p) {
  if (p.empty()) return {};
  fs::path path(p);
  return path.is_absolute() || base.empty() ? path : (base / path).lexically_normal();
}

const json& section(const json& j, const char* key) {
  static const json empty = json::object();
  if (!j.contains(key)) return empty;
  if (!j.at(key).is_object()) throw Error(ErrorKind::config, std::string("config section '") + key + "' is not an object");
  return j.at(key);
}

std::optional<llm::AgentRole> role_from_string(std::string_view s) {
  for (auto r : {llm::AgentRole::planner, llm::AgentRole::writer, llm::AgentRole::reviewer, llm::AgentRole::render,
                 llm::AgentRole::query_expansion, llm::AgentRole::summarizer, llm::AgentRole::judge})
    if (s == llm::to_string(r)) return r;
  return std::nullopt;
}

BackendSettings backend_from_json(const json& b, const fs::path& base) {
  BackendSettings s;
  s.kind = get_or<std::string>(b, "kind", s.kind);
  s.script = resolve(base, get_or<std::string>(b, "script", ""));
  s.endpoint = get_or<std::string>(b, "endpoint", s.endpoint);
  s.api_key_env = get_or<std::string>(b, "api_key_env", s.api_key_env);
  s.models.default_model = get_or<std::string>(b, "default_model", s.models.default_model);
  s.models.temperature = get_or<double>(b, "temperature", s.models.temperature);
  s.models.max_output = get_or<int>(b, "max_output", s.models.max_output);
  for (const auto& [role, model] : section(b, "models").items()) {
    auto r = role_from_string(role);
    if (!r) throw Error(ErrorKind::config, "unknown agent role in backend.models: " + role);
    s.models.per_role[*r] = model.get<std::string>();
  }
  s.retry.max_attempts = get_or<int>(b, "max_attempts", s.retry.max_attempts);
  s.retry.initial_backoff = std::chrono::milliseconds(get_or<int>(b, "initial_backoff_ms", 250));
  s.timeout_seconds = get_or<int>(b, "timeout_seconds", s.timeout_seconds);
  return s;
}

json backend_to_json(const BackendSettings& s) {
  json models = json::object();
  for (const auto& [role, model] : s.models.per_role) models[llm::to_string(role)] = model;
  return {{"kind", s.kind},
          {"script", s.script.string()},
          {"endpoint", s.endpoint},
          {"api_key_env", s.api_key_env},
          {"default_model", s.models.default_model},
          {"models", models},
          {"temperature", s.models.temperature},
          {"max_output", s.models.max_output},
          {"max_attempts", s.retry.max_attempts},
          {"initial_backoff_ms", s.retry.initial_backoff.count()},
          {"timeout_seconds", s.timeout_seconds}};
}

std::string env(const std::string& name) {
  const char* v = name.empty() ? nullptr : std::getenv(name.c_str());
  return v ? v : "";
}

void require_file(const fs::path& p, const std::string& what) {
  std::error_code ec;
  if (p.empty()) throw Error(ErrorKind::config, what + " is not set");
  if (!fs::is_regular_file(p, ec)) throw Error(ErrorKind::config, what + " not found: " + p.string());
}

void validate_backend(const BackendSettings& b) {
  if (b.kind == "scripted") {
    require_file(b.script, "backend.script");
  } else if (b.kind == "http") {
    if (b.endpoint.empty()) throw Error(ErrorKind::config, "backend.endpoint is not set");
    if (env(b.api_key_env).empty())
      throw Error(ErrorKind::config, "missing API key: environment variable " + b.api_key_env + " is not set");
  } else {
    throw Error(ErrorKind::config, "backend.kind must be 'scripted' or 'http'");
  }
  if (b.models.temperature < 0.0 || b.models.temperature > 2.0)
    throw Error(ErrorKind::config, "backend.temperature must lie in [0,2]");
  if (b.retry.max_attempts < 1) throw Error(ErrorKind::config, "backend.max_attempts must be >= 1");
}

}  // namespace

RunConfig RunConfig::from_json(const json& j, const fs::path& base_dir) {
  if (!j.is_object()) throw Error(ErrorKind::config, "config must be a JSON object");
  RunConfig c;
  c.query = get_or<std::string>(j, "query", "");
  c.query_file = resolve(base_dir, get_or<std::string>(j, "query_file", ""));
  c.query_id = get_or<std::string>(j, "query_id", c.query_id);
  c.seed = get_or<std::uint64_t>(j, "seed", 0);
  c.output_dir = resolve(base_dir, get_or<std::string>(j, "output_dir", ""));
  c.fixed_timestamp = get_or<std::string>(j, "fixed_timestamp", c.fixed_timestamp);
  c.backend = backend_from_json(section(j, "backend"), base_dir);

  const auto& s = section(j, "search");
  c.search.kind = get_or<std::string>(s, "kind", c.search.kind);
  c.search.index = resolve(base_dir, get_or<std::string>(s, "index", ""));
  c.search.endpoint = get_or<std::string>(s, "endpoint", c.search.endpoint);
  c.search.api_key_env = get_or<std::string>(s, "api_key_env", c.search.api_key_env);

  const auto& l = section(j, "loop");
  c.loop.epsilon = get_or<double>(l, "epsilon", c.loop.epsilon);
  c.loop.max_iterations = get_or<int>(l, "max_iterations", c.loop.max_iterations);
  c.loop.retry_on_reject = get_or<int>(l, "retry_on_reject", c.loop.retry_on_reject);

  const auto& r = section(j, "retrieval");
  try {
    c.retrieval.ingestion.mode = ingestion_mode_from_string(get_or<std::string>(r, "mode", "full_summarized"));
  } catch (const Error& e) {
    throw Error(ErrorKind::config, std::string("retrieval.mode: ") + e.what());
  }
  c.retrieval.ingestion.results_per_query = get_or<int>(r, "results_per_query", c.retrieval.ingestion.results_per_query);
  c.retrieval.ingestion.summarizer_model = get_or<std::string>(r, "summarizer_model", "");
  c.retrieval.global_queries = get_or<int>(r, "global_queries", c.retrieval.global_queries);
  c.retrieval.section_queries = get_or<int>(r, "section_queries", c.retrieval.section_queries);
  c.retrieval.excerpt_chars = get_or<std::size_t>(r, "excerpt_chars", c.retrieval.excerpt_chars);

  const auto& m = section(j, "micro");
  c.micro.worker_cap = get_or<std::size_t>(m, "worker_cap", c.micro.worker_cap);
  c.micro.max_corrections = get_or<int>(m, "max_corrections", c.micro.max_corrections);

  const auto& v = section(j, "render");
  c.render.harness = resolve(base_dir, get_or<std::string>(v, "harness", ""));
  if (auto h = env("DEEPREPORT_HARNESS"); !h.empty()) c.render.harness = h;
  c.render.concurrency = get_or<int>(v, "concurrency", c.render.concurrency);
  c.render.tolerance = get_or<double>(v, "tolerance", c.render.tolerance);
  c.render.retry_budget = get_or<int>(v, "retry_budget", c.render.retry_budget);
  c.render.audit_retries = get_or<int>(v, "audit_retries", c.render.audit_retries);
  c.render.width = get_or<int>(v, "width", c.render.width);
  c.render.height = get_or<int>(v, "height", c.render.height);
  try {
    c.render.format = render::asset_format_from_string(get_or<std::string>(v, "format", "svg"));
  } catch (const Error& e) {
    throw Error(ErrorKind::config, std::string("render.format: ") + e.what());
  }
  c.harness_timeout_seconds = get_or<int>(v, "timeout_seconds", c.harness_timeout_seconds);
  return c;
}

RunConfig RunConfig::load(const fs::path& path) {
  std::error_code ec;
  if (!fs::is_regular_file(path, ec)) throw Error(ErrorKind::config, "config file not found: " + path.string());
  json j = json::parse(read_text_file(path), nullptr, false, true);
  if (j.is_discarded()) throw Error(ErrorKind::config, "config file is not valid JSON: " + path.string());
  return from_json(j, fs::absolute(path).parent_path());
}

json RunConfig::to_json() const {
  return {{"query", query},
          {"query_file", query_file.string()},
          {"query_id", query_id},
          {"seed", seed},
          {"output_dir", output_dir.string()},
          {"fixed_timestamp", fixed_timestamp},
          {"backend", backend_to_json(backend)},
          {"search",
           {{"kind", search.kind}, {"index", search.index.string()}, {"endpoint", search.endpoint},
            {"api_key_env", search.api_key_env}}},
          {"loop",
           {{"epsilon", loop.epsilon}, {"max_iterations", loop.max_iterations},
            {"retry_on_reject", loop.retry_on_reject}}},
          {"retrieval",
           {{"mode", deepreport::to_string(retrieval.ingestion.mode)},
            {"results_per_query", retrieval.ingestion.results_per_query},
            {"summarizer_model", retrieval.ingestion.summarizer_model},
            {"global_queries", retrieval.global_queries},
            {"section_queries", retrieval.section_queries},
            {"excerpt_chars", retrieval.excerpt_chars}}},
          {"micro", {{"worker_cap", micro.worker_cap}, {"max_corrections", micro.max_corrections}}},
          {"render",
           {{"harness", render.harness.string()}, {"concurrency", render.concurrency},
            {"tolerance", render.tolerance}, {"retry_budget", render.retry_budget},
            {"audit_retries", render.audit_retries}, {"width", render.width}, {"height", render.height},
            {"format", render::to_string(render.format)}, {"timeout_seconds", harness_timeout_seconds}}}};
}

std::string RunConfig::query_text() const {
  if (!query_file.empty()) {
    std::error_code ec;
    if (!fs::is_regular_file(query_file, ec)) throw Error(ErrorKind::config, "query file not found: " + query_file.string());
    return std::string(text::trim(read_text_file(query_file)));
  }
  return std::string(text::trim(query));
}

void RunConfig::validate() const {
  if (query_text().empty()) throw Error(ErrorKind::config, "no query given");
  if (output_dir.empty()) throw Error(ErrorKind::config, "output_dir is not set");
  validate_backend(backend);
  if (search.kind == "mock") {
    require_file(search.index, "search.index");
  } else if (search.kind == "tavily") {
    if (env(search.api_key_env).empty())
      throw Error(ErrorKind::config, "missing API key: environment variable " + search.api_key_env + " is not set");
  } else {
    throw Error(ErrorKind::config, "search.kind must be 'mock' or 'tavily'");
  }
  try {
    loop.validate();
  } catch (const Error& e) {
    throw Error(ErrorKind::config, std::string("loop: ") + e.what());
  }
  if (retrieval.ingestion.results_per_query < 1 || retrieval.global_queries < 1 || retrieval.section_queries < 1)
    throw Error(ErrorKind::config, "retrieval counts must be >= 1");
  if (micro.worker_cap < 1 || micro.max_corrections < 0) throw Error(ErrorKind::config, "invalid micro settings");
  if (render.concurrency < 1 || render.concurrency > 64) throw Error(ErrorKind::config, "render.concurrency must lie in 1-64");
  if (!(render.tolerance > 0.0)) throw Error(ErrorKind::config, "render.tolerance must be > 0");
  if (render.retry_budget < 0 || render.audit_retries < 0) throw Error(ErrorKind::config, "render retries must be >= 0");
  if (render.width < 1 || render.height < 1) throw Error(ErrorKind::config, "render dimensions must be positive");
  if (harness_timeout_seconds < 1) throw Error(ErrorKind::config, "render.timeout_seconds must be >= 1");
  if (!render.harness.empty()) {
    std::error_code ec;
    if (!fs::is_regular_file(render.harness, ec) || access(render.harness.c_str(), X_OK) != 0)
      throw Error(ErrorKind::config, "render.harness is not an executable file: " + render.harness.string());
  }
}

// ---------------------------------------------------------------------------

std::unique_ptr<llm::Gateway> make_gateway(const BackendSettings& settings, std::uint64_t seed) {
  std::shared_ptr<llm::Backend> backend;
  if (settings.kind == "scripted") {
    auto spec = read_json_file(settings.script);
    spec["seed"] = seed;
    backend = llm::ScriptedBackend::from_json(spec);
  } else {
    backend = std::make_shared<llm::HttpBackend>(
        llm::HttpBackendConfig{settings.endpoint, env(settings.api_key_env), std::chrono::seconds(settings.timeout_seconds)});
  }
  auto gateway = std::make_unique<llm::Gateway>(backend, settings.models, settings.retry);
  if (settings.kind == "scripted") gateway->set_sleeper([](std::chrono::milliseconds) {});
  return gateway;
}

int exit_code_for(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::config: return 2;
    case ErrorKind::transport:
    case ErrorKind::protocol: return 3;
    case ErrorKind::planning:
    case ErrorKind::review:
    case ErrorKind::judging: return 4;
    case ErrorKind::rendering_environment: return 5;
    case ErrorKind::io: return 6;
    default: return 1;
  }
}

// ---------------------------------------------------------------------------

namespace {

std::string iteration_dir_name(int round) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "iter-%03d", round);
  return buf;
}

json gate_json(const GateDecision& g) {
  json j;
  to_json(j, g);
  return j;
}

/// Persists every round so an interrupted run can resume from loop_state.json.
class RunDirWriter final : public macro::LoopObserver {
 public:
  explicit RunDirWriter(fs::path run_dir) : run_dir_(std::move(run_dir)) {}

  void on_round(const macro::RoundRecord& record, const macro::LoopState& state) override {
    const auto dir = run_dir_ / "iterations" / iteration_dir_name(record.round);
    fs::create_directories(dir);
    const bool failed = record.round > 0 && !record.replan;
    json gate = gate_json(record.gate);
    gate["round"] = record.round;
    gate["failed"] = failed;
    if (!failed) {
      write_json_file(dir / "outline.json", json(record.outline));
      write_json_file(dir / "draft.json", json(record.draft));
      write_json_file(dir / "feedback.json", json(record.feedback));
      write_json_file(dir / "review_transcript.json",
                      {{"prompts", record.transcript.prompts}, {"replies", record.transcript.replies}});
      if (record.replan) {
        json decisions = json::array();
        for (const auto& d : record.replan->decisions)
          decisions.push_back({{"index", d.index}, {"applied", d.applied}, {"note", d.note}});
        write_json_file(dir / "replan.json", {{"outline_version", record.replan->outline.version},
                                              {"restructured", record.replan->restructured},
                                              {"decisions", decisions}});
      }
      fs::create_directories(run_dir_ / "traces" / "sections");
      for (const auto& [section, events] : record.traces) {
        std::ofstream out(run_dir_ / "traces" / "sections" / (section + ".jsonl"), std::ios::app);
        for (auto ev : events) {
          ev["round"] = record.round;
          out << ev.dump() << "\n";
        }
      }
    }
    // The gate file marks the round complete, so it goes last.
    write_json_file(dir / "gate.json", gate);
    write_json_file(run_dir_ / "manifest.json", json(state.manifest));
    write_json_file(run_dir_ / "loop_state.json", macro::to_json(state));
  }

 private:
  fs::path run_dir_;
};

std::string format_value(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

json audit_json(const std::vector<render::VisualOutcome>& visuals) {
  json charts = json::array();
  for (const auto& v : visuals) {
    json checks = json::array();
    for (const auto& c : v.audit.checks)
      checks.push_back({{"series", c.point.series}, {"label", c.point.label}, {"declared", c.point.value},
                        {"source", c.kb_value ? json(*c.kb_value) : json(nullptr)}, {"source_label", c.kb_label},
                        {"relative_error", c.relative_error}, {"flagged", c.flagged}});
    charts.push_back({{"section_id", v.section_id}, {"block_index", v.block_index}, {"title", v.block.title},
                      {"chart_type", v.block.chart_type}, {"rendered", v.visual.has_value()},
                      {"asset", v.visual ? "assets/" + v.visual->asset_path.filename().string() : ""},
                      {"degraded", v.degraded}, {"note", v.note}, {"audited", v.audited}, {"exempt", v.audit.exempt},
                      {"flagged_pre_audit", v.flagged_pre_audit}, {"flagged_final", v.flagged_final},
                      {"translations", v.translations}, {"render_failures", v.render_failures}, {"checks", checks}});
  }
  return {{"charts", charts}};
}

}  // namespace

std::string render_report(const Query& query, const Outline& outline, const Draft& draft, const KnowledgeBase& kb,
                          const std::vector<render::VisualOutcome>& visuals) {
  std::map<std::pair<SectionId, std::size_t>, const render::VisualOutcome*> by_block;
  for (const auto& v : visuals) by_block[{v.section_id, v.block_index}] = &v;

  std::map<RefId, int> citation_number;
  std::vector<RefId> cited;
  static const std::regex ref_marker(R"(<ref:(\d+)>)");
  auto cite = [&](const std::string& s) {
    std::string out;
    std::size_t last = 0;
    for (auto it = std::sregex_iterator(s.begin(), s.end(), ref_marker); it != std::sregex_iterator(); ++it) {
      out += s.substr(last, static_cast<std::size_t>(it->position(0)) - last);
      last = static_cast<std::size_t>(it->position(0) + it->length(0));
      RefId id = std::stoll((*it)[1].str());
      if (!kb.find(id)) continue;  // unresolvable markers are dropped
      auto [pos, inserted] = citation_number.emplace(id, static_cast<int>(cited.size()) + 1);
      if (inserted) cited.push_back(id);
      out += "[" + std::to_string(pos->second) + "]";
    }
    return out + s.substr(last);
  };

  int figure = 0;
  std::vector<const render::VisualOutcome*> flagged;
  std::string out = "# " + query.text + "\n\n";
  for (const auto& sd : draft.sections) {
    const auto* plan = outline.find(sd.section_id);
    out += "## " + (plan ? plan->title : sd.section_id) + "\n\n";
    std::string body;
    std::size_t last = 0, k = 0;
    for (const auto& span : avr::extract_blocks(sd.text)) {
      body += cite(sd.text.substr(last, span.start_offset - last));
      last = span.end_offset;
      if (!span.ok()) {
        body += "> Visualization omitted: " + span.error + "\n";
        continue;
      }
      const auto& block = *span.block;
      auto it = by_block.find({sd.section_id, k++});
      const auto* v = it == by_block.end() ? nullptr : it->second;
      if (v && v->visual) {
        ++figure;
        body += "![" + block.title + "](assets/" + v->visual->asset_path.filename().string() + ")\n\n";
        body += "*Figure " + std::to_string(figure) + ". " + block.title + "* — " + block.purpose + "\n";
        if (v->flagged_final) {
          std::size_t n = 0;
          for (const auto& c : v->audit.checks) n += c.flagged ? 1 : 0;
          body += "\n> Data check: " + std::to_string(n) +
                  " value(s) in this figure could not be matched to the cited sources (see appendix).\n";
          flagged.push_back(v);
        }
      } else {
        body += "> Visualization unavailable: " + block.title + " — " + block.purpose + "\n";
      }
    }
    body += cite(sd.text.substr(last));
    out += std::string(text::trim(body)) + "\n\n";
  }

  out += "## References\n\n";
  for (std::size_t i = 0; i < cited.size(); ++i) {
    const auto* item = kb.find(cited[i]);
    out += "[" + std::to_string(i + 1) + "] " + (item->title.empty() ? item->url : item->title) + ". <" + item->url +
           ">\n";
  }
  if (cited.empty()) out += "No sources were cited.\n";

  if (!flagged.empty()) {
    out += "\n## Appendix: Data Check\n\n| Figure | Series | Label | Declared | Source |\n|---|---|---|---|---|\n";
    for (const auto* v : flagged)
      for (const auto& c : v->audit.checks)
        if (c.flagged)
          out += "| " + v->block.title + " | " + c.point.series + " | " + c.point.label + " | " +
                 format_value(c.point.value) + " | " + (c.kb_value ? format_value(*c.kb_value) : "none") + " |\n";
  }
  return out;
}

GenerateResult generate(const RunConfig& config, std::shared_ptr<render::Harness> harness) {
  config.validate();
  if (!harness) {
    if (config.render.harness.empty())
      throw Error(ErrorKind::rendering_environment, "no render harness configured (render.harness)");
    harness = std::make_shared<render::SubprocessHarness>(config.render.harness, config.render.concurrency,
                                                          std::chrono::seconds(config.harness_timeout_seconds));
  }
  const auto query = make_query(config.query_id, config.query_text());
  const fs::path run_dir = config.output_dir;
  fs::create_directories(run_dir);

  GenerateResult result;
  result.run_dir = run_dir;
  std::optional<macro::LoopState> resume;
  if (fs::is_regular_file(run_dir / "loop_state.json")) {
    resume = macro::loop_state_from_json(read_json_file(run_dir / "loop_state.json"));
    if (resume->query.text != query.text)
      throw Error(ErrorKind::config, "run directory " + run_dir.string() + " belongs to a different query");
    result.resumed = true;
  }
  write_json_file(run_dir / "config.json", config.to_json());

  auto gateway = make_gateway(config.backend, config.seed);
  gateway->set_trace(std::make_shared<llm::TraceSink>(run_dir / "traces" / "model_calls.jsonl"));

  std::shared_ptr<retrieval::SearchBackend> search;
  std::shared_ptr<retrieval::PageFetcher> fetcher;
  if (config.search.kind == "mock") {
    auto index = retrieval::MockSearchIndex::load(config.search.index);
    search = index;
    fetcher = std::make_shared<retrieval::MockFetcher>(index);
  } else {
    search = std::make_shared<retrieval::TavilySearch>(env(config.search.api_key_env), config.search.endpoint);
    fetcher = std::make_shared<retrieval::HttpFetcher>();
  }
  retrieval::Retriever retriever(search, fetcher, *gateway, config.retrieval);
  if (config.scripted()) retriever.set_clock([ts = config.fixed_timestamp] { return ts; });

  const auto tokens_before = resume ? resume->manifest.token_usage : std::map<std::string, std::int64_t>{};
  const auto latencies_before = resume ? resume->manifest.per_request_latencies : std::vector<RequestLatency>{};

  RunDirWriter writer(run_dir);
  macro::Agents agents{*gateway, retriever, config.micro, {}};
  auto outcome = macro::run_macro_loop(agents, query, config.loop, &writer, std::move(resume));

  // Visual rendering of the accepted draft.
  const auto render_started = std::chrono::steady_clock::now();
  fs::create_directories(run_dir / "assets");
  fs::create_directories(run_dir / "specs");
  render::RenderPipeline pipeline(*gateway, harness, config.render, run_dir / "assets", run_dir / "specs");
  result.visuals = pipeline.process_all(outcome.draft, outcome.kb);
  const double render_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - render_started).count();

  auto& m = outcome.manifest;
  m.visuals_requested = static_cast<int>(result.visuals.size());
  m.visuals_rendered = m.visuals_degraded = m.charts_flagged_pre_audit = m.charts_flagged_final = 0;
  for (const auto& v : result.visuals) {
    m.visuals_rendered += v.visual ? 1 : 0;
    m.visuals_degraded += v.degraded ? 1 : 0;
    m.charts_flagged_pre_audit += v.flagged_pre_audit ? 1 : 0;
    m.charts_flagged_final += v.flagged_final ? 1 : 0;
    if (v.degraded) m.warnings.push_back(v.note);
  }
  m.generation_duration += render_seconds;
  m.token_usage = tokens_before;
  for (const auto& [phase, n] : gateway->ledger().tokens_by_phase()) m.token_usage[phase] += n;
  m.per_request_latencies = latencies_before;
  for (const auto& [phase, secs] : gateway->ledger().latencies()) m.per_request_latencies.push_back({phase, secs});
  m.finalize_rates();

  write_json_file(run_dir / "outline.json", json(outcome.outline));
  write_json_file(run_dir / "draft.json", json(outcome.draft));
  write_json_file(run_dir / "knowledge_base.json", json(outcome.kb));
  write_json_file(run_dir / "audit.json", audit_json(result.visuals));
  write_text_file(run_dir / "report.md", render_report(query, outcome.outline, outcome.draft, outcome.kb, result.visuals));
  write_json_file(run_dir / "manifest.json", json(m));

  result.manifest = m;
  result.sections = outcome.draft.sections.size();
  return result;
}

// ---------------------------------------------------------------------------

clef::PairEvaluation evaluate(const EvaluateOptions& options) {
  auto model = clef::load_report(options.model_report);
  auto reference = clef::load_report(options.reference_report);
  validate_backend(options.backend);
  if (options.out_dir.empty()) throw Error(ErrorKind::config, "no output directory given");
  auto gateway = make_gateway(options.backend, 0);
  auto evaluation = clef::evaluate_pair(*gateway, options.pair_id, model, reference, options.query);
  fs::create_directories(options.out_dir);
  write_text_file(options.out_dir / "evaluation.csv", clef::to_csv({evaluation}));
  write_json_file(options.out_dir / "summary.json", clef::summary_json({evaluation}));
  return evaluation;
}

clef::StatsTable stats(const fs::path& run_dir) {
  auto table = clef::collect_run_stats(run_dir);
  write_json_file(run_dir / "stats.json", table.to_json());
  return table;
}

}  // namespace deepreport::app
