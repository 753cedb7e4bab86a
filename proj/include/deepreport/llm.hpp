#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <regex>
#include <string>
#include <vector>

#include <json.hpp>

namespace deepreport::llm {

enum class Role { system, user };

struct ContentPart {
  enum class Kind { text, image } kind = Kind::text;
  std::string text;          // text parts; a label for image parts
  std::string media_type;    // image parts, e.g. image/png
  std::string base64_data;   // image parts
};

struct Message {
  Role role = Role::user;
  std::vector<ContentPart> parts;

  static Message text(Role role, std::string content);
  /// Text with images replaced by "[image: label]".
  std::string flattened() const;
};

/// Which agent a call is made for. Each role can be bound to its own model.
enum class AgentRole { planner, writer, reviewer, render, query_expansion, summarizer, judge };

const char* to_string(AgentRole role) noexcept;

struct ChatRequest {
  std::vector<Message> messages;
  double temperature = 0.5;
  std::string model_name;
  int max_output = 4096;
  std::string phase = "generation";  // token accounting bucket

  /// Throws Error(contract) for empty messages or temperature outside [0,2].
  void validate() const;
  /// Concatenation of all flattened messages; what scripted rules match on.
  std::string rendered_prompt() const;
};

struct ChatResponse {
  std::string text;
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;
  double latency = 0.0;  // seconds
};

/// Body of an OpenAI-compatible chat-completions request.
nlohmann::json to_openai_body(const ChatRequest& request);

class Backend {
 public:
  virtual ~Backend() = default;
  /// Throws Error(transport) for retryable failures, Error(protocol) for
  /// malformed replies.
  virtual ChatResponse send(const ChatRequest& request) = 0;
};

/// Deterministic offline backend. Rules are tried in order against the
/// rendered prompt; the first match answers.
class ScriptedBackend final : public Backend {
 public:
  using Generator = std::function<std::string(const std::string& prompt, std::uint64_t seed)>;

  /// How a rule with several responses picks one: by the number of times the
  /// rule fired (rule), or by the number of times this exact prompt was seen
  /// under the rule (prompt). The last response repeats once exhausted.
  enum class Scope { rule, prompt };

  struct Rule {
    std::string pattern;
    bool regex = false;
    std::vector<std::string> responses;  // "$1"-style captures expand for regex rules
    Generator generator;                 // used when responses is empty
    Scope scope = Scope::rule;
  };

  ScriptedBackend(std::vector<Rule> rules, std::string default_response, std::uint64_t seed = 0);

  /// {"seed": 7, "default_response": "...", "rules": [{"match": "...",
  ///  "regex": false, "responses": ["..."], "scope": "rule"}]}
  static std::shared_ptr<ScriptedBackend> from_json(const nlohmann::json& spec);
  static std::shared_ptr<ScriptedBackend> load(const std::filesystem::path& path);

  ChatResponse send(const ChatRequest& request) override;

  std::size_t call_count() const;
  std::uint64_t seed() const noexcept { return seed_; }

 private:
  struct CompiledRule {
    Rule rule;
    std::optional<std::regex> re;
  };

  std::vector<CompiledRule> rules_;
  std::string default_response_;
  std::uint64_t seed_;
  mutable std::mutex mutex_;
  std::map<std::pair<std::size_t, std::uint64_t>, std::size_t> counters_;
  std::size_t calls_ = 0;
};

/// Wraps another backend and keeps the request bodies it would put on the wire.
class RecordingBackend final : public Backend {
 public:
  explicit RecordingBackend(std::shared_ptr<Backend> inner) : inner_(std::move(inner)) {}

  ChatResponse send(const ChatRequest& request) override;
  std::vector<nlohmann::json> recorded() const;

 private:
  std::shared_ptr<Backend> inner_;
  mutable std::mutex mutex_;
  std::vector<nlohmann::json> bodies_;
};

struct HttpBackendConfig {
  std::string endpoint;  // e.g. https://api.openai.com/v1
  std::string api_key;
  std::chrono::seconds timeout{120};
};

/// OpenAI-compatible chat-completions client.
class HttpBackend final : public Backend {
 public:
  explicit HttpBackend(HttpBackendConfig config);
  ChatResponse send(const ChatRequest& request) override;

 private:
  HttpBackendConfig config_;
};

/// Thread-safe token and latency accumulator.
class UsageLedger {
 public:
  void record(const std::string& phase, const ChatResponse& response);
  void add_duration(const std::string& bucket, double seconds);

  std::map<std::string, std::int64_t> tokens_by_phase() const;
  std::int64_t total_tokens() const;
  std::vector<std::pair<std::string, double>> latencies() const;
  double duration(const std::string& bucket) const;
  std::size_t request_count() const;

 private:
  mutable std::mutex mutex_;
  std::map<std::string, std::int64_t> tokens_;
  std::vector<std::pair<std::string, double>> latencies_;
  std::map<std::string, double> durations_;
};

struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds initial_backoff{250};
  double multiplier = 2.0;
};

struct ModelConfig {
  std::string default_model = "gpt-4.1";
  std::map<AgentRole, std::string> per_role = {{AgentRole::query_expansion, "gpt-4.1-mini"}};
  double temperature = 0.5;
  int max_output = 4096;

  std::string model_for(AgentRole role) const;
};

/// Appends request/response pairs as JSON lines.
class TraceSink {
 public:
  explicit TraceSink(const std::filesystem::path& path);
  void write(const nlohmann::json& record);

 private:
  std::mutex mutex_;
  std::ofstream out_;
};

/// Single entry point for all model completions.
class Gateway {
 public:
  using Sleeper = std::function<void(std::chrono::milliseconds)>;

  Gateway(std::shared_ptr<Backend> backend, ModelConfig models, RetryPolicy retry = {},
          std::shared_ptr<UsageLedger> ledger = std::make_shared<UsageLedger>());

  ChatResponse complete(const ChatRequest& request);

  /// Fills model and temperature from the role configuration.
  ChatResponse complete(AgentRole role, const std::string& phase, std::vector<Message> messages);
  ChatResponse complete(AgentRole role, const std::string& phase, const std::string& user_prompt);

  UsageLedger& ledger() noexcept { return *ledger_; }
  const ModelConfig& models() const noexcept { return models_; }
  void set_sleeper(Sleeper sleeper) { sleeper_ = std::move(sleeper); }
  void set_trace(std::shared_ptr<TraceSink> sink) { trace_ = std::move(sink); }

 private:
  std::shared_ptr<Backend> backend_;
  ModelConfig models_;
  RetryPolicy retry_;
  std::shared_ptr<UsageLedger> ledger_;
  Sleeper sleeper_;
  std::shared_ptr<TraceSink> trace_;
};

// ---------------------------------------------------------------------------
// Prompt templates

using Bindings = std::map<std::string, std::string>;

/// Single-pass {name} expansion. "{{" and "}}" emit literal braces; braces
/// not enclosing an identifier are copied through. Bound values are emitted
/// verbatim. Throws Error(contract) "unbound: name".
std::string render_template(std::string_view tmpl, const Bindings& bindings);

/// Identifiers referenced by {name} placeholders, in order of first use.
std::vector<std::string> placeholders(std::string_view tmpl);

struct PromptTemplate {
  std::string id;
  int version = 1;
  std::string text;
};

class PromptRegistry {
 public:
  /// Registry preloaded with the built-in agent and judge templates.
  static const PromptRegistry& builtin();

  void add(PromptTemplate tmpl);
  bool contains(std::string_view id) const;
  const PromptTemplate& get(std::string_view id) const;  // Error(contract) "unknown template: id"
  std::vector<std::string> ids() const;

  /// Overrides templates from <dir>/<id>.txt files.
  void load_overrides(const std::filesystem::path& dir);

 private:
  std::map<std::string, PromptTemplate, std::less<>> templates_;
};

std::string render_prompt(const PromptRegistry& registry, std::string_view template_id, const Bindings& bindings);
std::string render_prompt(std::string_view template_id, const Bindings& bindings);

}  // namespace deepreport::llm
