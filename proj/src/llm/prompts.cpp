#include "deepreport/llm.hpp"

#include "deepreport/error.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

namespace deepreport::llm {

namespace detail {
// Generated at configure time from assets/prompts/*.txt.
const std::vector<std::pair<std::string_view, std::string_view>>& embedded_prompts();
}  // namespace detail

namespace {

bool ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

// Length of "{ident}" starting at tmpl[i] == '{', or 0 if not a placeholder.
std::size_t placeholder_at(std::string_view tmpl, std::size_t i) {
  std::size_t j = i + 1;
  if (j >= tmpl.size() || !ident_start(tmpl[j])) return 0;
  while (j < tmpl.size() && ident_char(tmpl[j])) ++j;
  if (j >= tmpl.size() || tmpl[j] != '}') return 0;
  return j - i + 1;
}

template <typename OnText, typename OnName>
void scan(std::string_view tmpl, OnText on_text, OnName on_name) {
  for (std::size_t i = 0; i < tmpl.size();) {
    char c = tmpl[i];
    if ((c == '{' || c == '}') && i + 1 < tmpl.size() && tmpl[i + 1] == c) {
      on_text(std::string_view(&tmpl[i], 1));
      i += 2;
    } else if (std::size_t n = c == '{' ? placeholder_at(tmpl, i) : 0) {
      on_name(tmpl.substr(i + 1, n - 2));
      i += n;
    } else {
      on_text(tmpl.substr(i, 1));
      ++i;
    }
  }
}

}  // namespace

std::string render_template(std::string_view tmpl, const Bindings& bindings) {
  std::string out;
  out.reserve(tmpl.size());
  scan(
      tmpl, [&](std::string_view s) { out += s; },
      [&](std::string_view name) {
        auto it = bindings.find(std::string(name));
        if (it == bindings.end()) throw Error(ErrorKind::contract, "unbound: " + std::string(name));
        out += it->second;
      });
  return out;
}

std::vector<std::string> placeholders(std::string_view tmpl) {
  std::vector<std::string> names;
  scan(
      tmpl, [](std::string_view) {},
      [&](std::string_view name) {
        for (const auto& n : names)
          if (n == name) return;
        names.emplace_back(name);
      });
  return names;
}

const PromptRegistry& PromptRegistry::builtin() {
  static const PromptRegistry registry = [] {
    PromptRegistry r;
    for (const auto& [id, text] : detail::embedded_prompts()) r.add({std::string(id), 1, std::string(text)});
    return r;
  }();
  return registry;
}

void PromptRegistry::add(PromptTemplate tmpl) {
  auto id = tmpl.id;
  templates_[id] = std::move(tmpl);
}

bool PromptRegistry::contains(std::string_view id) const { return templates_.find(id) != templates_.end(); }

const PromptTemplate& PromptRegistry::get(std::string_view id) const {
  auto it = templates_.find(id);
  if (it == templates_.end()) throw Error(ErrorKind::contract, "unknown template: " + std::string(id));
  return it->second;
}

std::vector<std::string> PromptRegistry::ids() const {
  std::vector<std::string> out;
  for (const auto& [id, _] : templates_) out.push_back(id);
  return out;
}

void PromptRegistry::load_overrides(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw Error(ErrorKind::config, "prompt directory not found: " + dir.string());
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.path().extension() != ".txt") continue;
    std::ifstream in(entry.path(), std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    auto id = entry.path().stem().string();
    int version = contains(id) ? get(id).version + 1 : 1;
    add({id, version, ss.str()});
  }
}

std::string render_prompt(const PromptRegistry& registry, std::string_view template_id, const Bindings& bindings) {
  return render_template(registry.get(template_id).text, bindings);
}

std::string render_prompt(std::string_view template_id, const Bindings& bindings) {
  return render_prompt(PromptRegistry::builtin(), template_id, bindings);
}

}  // namespace deepreport::llm
