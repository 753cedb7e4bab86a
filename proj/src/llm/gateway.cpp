#include "deepreport/llm.hpp"

#include "../core/http.hpp"
#include "deepreport/error.hpp"
#include "deepreport/text.hpp"

#include <cmath>
#include <fstream>
#include <thread>

namespace deepreport::llm {

using nlohmann::json;

Message Message::text(Role role, std::string content) {
  Message m;
  m.role = role;
  m.parts.push_back(ContentPart{ContentPart::Kind::text, std::move(content), {}, {}});
  return m;
}

std::string Message::flattened() const {
  std::string out;
  for (const auto& p : parts) {
    if (p.kind == ContentPart::Kind::text) out += p.text;
    else out += "[image: " + p.text + "]";
  }
  return out;
}

const char* to_string(AgentRole role) noexcept {
  switch (role) {
    case AgentRole::planner: return "planner";
    case AgentRole::writer: return "writer";
    case AgentRole::reviewer: return "reviewer";
    case AgentRole::render: return "render";
    case AgentRole::query_expansion: return "query_expansion";
    case AgentRole::summarizer: return "summarizer";
    case AgentRole::judge: return "judge";
  }
  return "unknown";
}

void ChatRequest::validate() const {
  if (messages.empty()) throw Error(ErrorKind::contract, "chat request has no messages");
  if (!(temperature >= 0.0 && temperature <= 2.0))
    throw Error(ErrorKind::contract, "temperature must lie in [0,2]");
  if (max_output <= 0) throw Error(ErrorKind::contract, "max_output must be positive");
}

std::string ChatRequest::rendered_prompt() const {
  std::string out;
  for (const auto& m : messages) {
    if (!out.empty()) out += "\n\n";
    out += m.flattened();
  }
  return out;
}

json to_openai_body(const ChatRequest& request) {
  json messages = json::array();
  for (const auto& m : request.messages) {
    json msg{{"role", m.role == Role::system ? "system" : "user"}};
    bool has_image = false;
    for (const auto& p : m.parts) has_image |= p.kind == ContentPart::Kind::image;
    if (!has_image) {
      msg["content"] = m.flattened();
    } else {
      json parts = json::array();
      for (const auto& p : m.parts) {
        if (p.kind == ContentPart::Kind::text) {
          parts.push_back({{"type", "text"}, {"text", p.text}});
        } else {
          parts.push_back({{"type", "image_url"},
                           {"image_url", {{"url", "data:" + p.media_type + ";base64," + p.base64_data}}}});
        }
      }
      msg["content"] = parts;
    }
    messages.push_back(std::move(msg));
  }
  return json{{"model", request.model_name},
              {"messages", messages},
              {"temperature", request.temperature},
              {"max_tokens", request.max_output}};
}

// ---------------------------------------------------------------------------

ScriptedBackend::ScriptedBackend(std::vector<Rule> rules, std::string default_response, std::uint64_t seed)
    : default_response_(std::move(default_response)), seed_(seed) {
  for (auto& r : rules) {
    CompiledRule c{std::move(r), std::nullopt};
    if (c.rule.regex) {
      try {
        c.re.emplace(c.rule.pattern, std::regex::ECMAScript);
      } catch (const std::regex_error& e) {
        throw Error(ErrorKind::config, "bad scripted rule regex '" + c.rule.pattern + "': " + e.what());
      }
    }
    rules_.push_back(std::move(c));
  }
}

std::shared_ptr<ScriptedBackend> ScriptedBackend::from_json(const json& spec) {
  std::vector<Rule> rules;
  if (spec.contains("rules")) {
    for (const auto& r : spec["rules"]) {
      Rule rule;
      rule.pattern = r.at("match").get<std::string>();
      rule.regex = r.value("regex", false);
      if (r.contains("responses")) rule.responses = r["responses"].get<std::vector<std::string>>();
      else if (r.contains("response")) rule.responses.push_back(r["response"].get<std::string>());
      else throw Error(ErrorKind::config, "scripted rule '" + rule.pattern + "' has no response");
      auto scope = r.value("scope", std::string("rule"));
      if (scope == "rule") rule.scope = Scope::rule;
      else if (scope == "prompt") rule.scope = Scope::prompt;
      else throw Error(ErrorKind::config, "unknown scripted rule scope: " + scope);
      rules.push_back(std::move(rule));
    }
  }
  return std::make_shared<ScriptedBackend>(std::move(rules), spec.value("default_response", std::string()),
                                           spec.value("seed", std::uint64_t{0}));
}

std::shared_ptr<ScriptedBackend> ScriptedBackend::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::config, "cannot read scripted backend file " + path.string());
  try {
    return from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::config, "bad scripted backend file " + path.string() + ": " + e.what());
  }
}

ChatResponse ScriptedBackend::send(const ChatRequest& request) {
  const std::string prompt = request.rendered_prompt();
  std::string reply;
  bool matched = false;
  {
    std::lock_guard lock(mutex_);
    ++calls_;
    for (std::size_t i = 0; i < rules_.size() && !matched; ++i) {
      const auto& c = rules_[i];
      std::smatch m;
      if (c.re) {
        if (!std::regex_search(prompt, m, *c.re)) continue;
      } else if (prompt.find(c.rule.pattern) == std::string::npos) {
        continue;
      }
      matched = true;
      if (c.rule.responses.empty()) {
        reply = c.rule.generator ? c.rule.generator(prompt, seed_ ^ text::fnv1a(prompt)) : std::string();
        break;
      }
      std::uint64_t key = c.rule.scope == Scope::prompt ? text::fnv1a(prompt) : 0;
      std::size_t n = counters_[{i, key}]++;
      const auto& chosen = c.rule.responses[std::min(n, c.rule.responses.size() - 1)];
      reply = c.re ? m.format(chosen) : chosen;
    }
    if (!matched) reply = default_response_;
  }
  ChatResponse resp;
  resp.text = std::move(reply);
  resp.prompt_tokens = static_cast<std::int64_t>(text::proxy_token_count(prompt));
  resp.completion_tokens = static_cast<std::int64_t>(text::proxy_token_count(resp.text));
  return resp;
}

std::size_t ScriptedBackend::call_count() const {
  std::lock_guard lock(mutex_);
  return calls_;
}

ChatResponse RecordingBackend::send(const ChatRequest& request) {
  {
    std::lock_guard lock(mutex_);
    bodies_.push_back(to_openai_body(request));
  }
  return inner_->send(request);
}

std::vector<json> RecordingBackend::recorded() const {
  std::lock_guard lock(mutex_);
  return bodies_;
}

// ---------------------------------------------------------------------------

HttpBackend::HttpBackend(HttpBackendConfig config) : config_(std::move(config)) {
  if (config_.endpoint.empty()) throw Error(ErrorKind::config, "chat endpoint is not configured");
  if (config_.api_key.empty()) throw Error(ErrorKind::config, "chat API key is not configured");
}

ChatResponse HttpBackend::send(const ChatRequest& request) {
  std::string url = config_.endpoint;
  while (!url.empty() && url.back() == '/') url.pop_back();
  url += "/chat/completions";
  auto started = std::chrono::steady_clock::now();
  auto res = detail::http_post(url, {{"Authorization", "Bearer " + config_.api_key}},
                               to_openai_body(request).dump(), "application/json", config_.timeout);
  double latency = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  if (res.status == 429 || res.status >= 500)
    throw Error(ErrorKind::transport, "chat backend returned HTTP " + std::to_string(res.status));
  if (res.status != 200)
    throw Error(ErrorKind::protocol,
                "chat backend returned HTTP " + std::to_string(res.status) + ": " + res.body.substr(0, 300));
  try {
    auto body = json::parse(res.body);
    ChatResponse out;
    const auto& content = body.at("choices").at(0).at("message").at("content");
    out.text = content.is_string() ? content.get<std::string>() : std::string();
    if (body.contains("usage")) {
      out.prompt_tokens = body["usage"].value("prompt_tokens", std::int64_t{0});
      out.completion_tokens = body["usage"].value("completion_tokens", std::int64_t{0});
    }
    out.latency = latency;
    return out;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::protocol, std::string("malformed chat completion reply: ") + e.what());
  }
}

// ---------------------------------------------------------------------------

void UsageLedger::record(const std::string& phase, const ChatResponse& response) {
  std::lock_guard lock(mutex_);
  tokens_[phase] += response.prompt_tokens + response.completion_tokens;
  latencies_.emplace_back(phase, response.latency);
}

void UsageLedger::add_duration(const std::string& bucket, double seconds) {
  std::lock_guard lock(mutex_);
  durations_[bucket] += seconds;
}

std::map<std::string, std::int64_t> UsageLedger::tokens_by_phase() const {
  std::lock_guard lock(mutex_);
  return tokens_;
}

std::int64_t UsageLedger::total_tokens() const {
  std::lock_guard lock(mutex_);
  std::int64_t total = 0;
  for (const auto& [_, n] : tokens_) total += n;
  return total;
}

std::vector<std::pair<std::string, double>> UsageLedger::latencies() const {
  std::lock_guard lock(mutex_);
  return latencies_;
}

double UsageLedger::duration(const std::string& bucket) const {
  std::lock_guard lock(mutex_);
  auto it = durations_.find(bucket);
  return it == durations_.end() ? 0.0 : it->second;
}

std::size_t UsageLedger::request_count() const {
  std::lock_guard lock(mutex_);
  return latencies_.size();
}

std::string ModelConfig::model_for(AgentRole role) const {
  auto it = per_role.find(role);
  return it == per_role.end() || it->second.empty() ? default_model : it->second;
}

TraceSink::TraceSink(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  out_.open(path, std::ios::app);
  if (!out_) throw Error(ErrorKind::io, "cannot open trace file " + path.string());
}

void TraceSink::write(const json& record) {
  std::lock_guard lock(mutex_);
  out_ << record.dump() << '\n';
  out_.flush();
}

// ---------------------------------------------------------------------------

Gateway::Gateway(std::shared_ptr<Backend> backend, ModelConfig models, RetryPolicy retry,
                 std::shared_ptr<UsageLedger> ledger)
    : backend_(std::move(backend)),
      models_(std::move(models)),
      retry_(retry),
      ledger_(std::move(ledger)),
      sleeper_([](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); }) {
  if (!backend_) throw Error(ErrorKind::config, "gateway has no backend");
  if (retry_.max_attempts < 1) retry_.max_attempts = 1;
}

ChatResponse Gateway::complete(const ChatRequest& request) {
  request.validate();
  auto backoff = retry_.initial_backoff;
  for (int attempt = 1;; ++attempt) {
    try {
      auto started = std::chrono::steady_clock::now();
      ChatResponse resp = backend_->send(request);
      if (resp.latency <= 0.0)
        resp.latency = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
      if (resp.prompt_tokens < 0 || resp.completion_tokens < 0)
        throw Error(ErrorKind::protocol, "backend reported negative token counts");
      ledger_->record(request.phase, resp);
      if (trace_) {
        trace_->write({{"phase", request.phase},
                       {"request", to_openai_body(request)},
                       {"response", {{"text", resp.text},
                                     {"prompt_tokens", resp.prompt_tokens},
                                     {"completion_tokens", resp.completion_tokens}}}});
      }
      if (text::trim(resp.text).empty()) throw Error(ErrorKind::protocol, "empty response from model backend");
      return resp;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::transport || attempt >= retry_.max_attempts) throw;
      sleeper_(backoff);
      backoff = std::chrono::milliseconds(static_cast<long long>(backoff.count() * retry_.multiplier));
    }
  }
}

ChatResponse Gateway::complete(AgentRole role, const std::string& phase, std::vector<Message> messages) {
  ChatRequest req;
  req.messages = std::move(messages);
  req.temperature = models_.temperature;
  req.model_name = models_.model_for(role);
  req.max_output = models_.max_output;
  req.phase = phase;
  return complete(req);
}

ChatResponse Gateway::complete(AgentRole role, const std::string& phase, const std::string& user_prompt) {
  return complete(role, phase, {Message::text(Role::user, user_prompt)});
}

}  // namespace deepreport::llm
