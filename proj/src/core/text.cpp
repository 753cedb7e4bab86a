#include "deepreport/text.hpp"

#include "deepreport/error.hpp"

#include <algorithm>
#include <cctype>

namespace deepreport {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::config: return "config";
    case ErrorKind::transport: return "transport";
    case ErrorKind::protocol: return "protocol";
    case ErrorKind::planning: return "planning";
    case ErrorKind::review: return "review";
    case ErrorKind::judging: return "judging";
    case ErrorKind::rendering_environment: return "rendering-environment";
    case ErrorKind::contract: return "contract";
    case ErrorKind::structural: return "structural";
    case ErrorKind::parse: return "parse";
    case ErrorKind::io: return "io";
    case ErrorKind::isolation: return "isolation";
    case ErrorKind::internal: return "internal";
  }
  return "unknown";
}

}  // namespace deepreport

namespace deepreport::text {

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }
bool is_alnum(char c) {
  // Bytes >= 0x80 belong to multi-byte UTF-8 sequences; treat them as word characters.
  return std::isalnum(static_cast<unsigned char>(c)) != 0 || static_cast<unsigned char>(c) >= 0x80;
}

const std::set<std::string, std::less<>>& stopwords() {
  static const std::set<std::string, std::less<>> words = {
      "a",     "about", "above", "after",  "all",   "also",  "an",    "and",   "any",
      "are",   "as",    "at",    "be",     "been",  "being", "both",  "but",   "by",
      "can",   "could", "did",   "do",     "does",  "each",  "for",   "from",  "had",
      "has",   "have",  "how",   "if",     "in",    "into",  "is",    "it",    "its",
      "may",   "more",  "most",  "much",   "must",  "not",   "of",    "on",    "or",
      "other", "our",   "over",  "should", "so",    "such",  "than",  "that",  "the",
      "their", "them",  "then",  "there",  "these", "they",  "this",  "those", "through",
      "to",    "under", "up",    "use",    "using", "very",  "was",   "we",    "were",
      "what",  "when",  "where", "which",  "while", "who",   "why",   "will",  "with",
      "within", "would", "you",  "your",   "per",   "between", "across", "including"};
  return words;
}

}  // namespace

std::string_view trim(std::string_view s) noexcept {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && is_space(s[b])) ++b;
  while (e > b && is_space(s[e - 1])) --e;
  return s.substr(b, e - b);
}

std::string to_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

bool contains_ci(std::string_view haystack, std::string_view needle) {
  return to_lower(haystack).find(to_lower(needle)) != std::string::npos;
}

bool starts_with(std::string_view s, std::string_view prefix) noexcept {
  return s.substr(0, prefix.size()) == prefix;
}

std::vector<std::string> split_lines(std::string_view s) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start <= s.size()) {
    auto nl = s.find('\n', start);
    if (nl == std::string_view::npos) {
      if (start < s.size()) lines.emplace_back(s.substr(start));
      break;
    }
    std::string_view line = s.substr(start, nl - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.emplace_back(line);
    start = nl + 1;
  }
  return lines;
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

std::string replace_all(std::string s, std::string_view from, std::string_view to) {
  if (from.empty()) return s;
  std::size_t pos = 0;
  while ((pos = s.find(from, pos)) != std::string::npos) {
    s.replace(pos, from.size(), to);
    pos += to.size();
  }
  return s;
}

std::vector<std::string> words(std::string_view s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (is_alnum(c)) {
      cur += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::set<std::string> content_words(std::string_view s, std::size_t min_len) {
  std::set<std::string> out;
  for (auto& w : words(s)) {
    if (w.size() < min_len) continue;
    if (std::all_of(w.begin(), w.end(), [](unsigned char c) { return std::isdigit(c); })) continue;
    if (stopwords().count(w)) continue;
    out.insert(std::move(w));
  }
  return out;
}

std::size_t proxy_token_count(std::string_view s) {
  constexpr std::size_t chunk = 6;
  std::size_t count = 0;
  std::size_t run = 0;
  auto flush = [&] {
    if (run) count += (run + chunk - 1) / chunk;
    run = 0;
  };
  for (char c : s) {
    if (is_alnum(c)) {
      ++run;
    } else {
      flush();
      if (!is_space(c)) ++count;
    }
  }
  flush();
  return count;
}

std::size_t utf8_length(std::string_view s) noexcept {
  std::size_t n = 0;
  for (char c : s)
    if ((static_cast<unsigned char>(c) & 0xC0) != 0x80) ++n;
  return n;
}

std::string strip_code_fences(std::string_view s) {
  std::string_view t = trim(s);
  if (!starts_with(t, "```")) return std::string(t);
  auto first_nl = t.find('\n');
  if (first_nl == std::string_view::npos) return std::string(t);
  std::string_view body = t.substr(first_nl + 1);
  auto close = body.rfind("```");
  if (close != std::string_view::npos) body = body.substr(0, close);
  return std::string(trim(body));
}

std::optional<std::string> extract_json_object(std::string_view s) {
  auto start = s.find('{');
  while (start != std::string_view::npos) {
    int depth = 0;
    bool in_string = false;
    bool escape = false;
    for (std::size_t i = start; i < s.size(); ++i) {
      char c = s[i];
      if (in_string) {
        if (escape) escape = false;
        else if (c == '\\') escape = true;
        else if (c == '"') in_string = false;
        continue;
      }
      if (c == '"') in_string = true;
      else if (c == '{') ++depth;
      else if (c == '}') {
        if (--depth == 0) return std::string(s.substr(start, i - start + 1));
      }
    }
    start = s.find('{', start + 1);
  }
  return std::nullopt;
}

std::string slugify(std::string_view s) {
  std::string out;
  bool dash = false;
  for (char c : s) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      if (dash && !out.empty()) out += '-';
      out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
      dash = false;
    } else {
      dash = true;
    }
  }
  if (out.size() > 48) out.resize(48);
  while (!out.empty() && out.back() == '-') out.pop_back();
  return out.empty() ? std::string("section") : out;
}

std::uint64_t fnv1a(std::string_view s) noexcept {
  std::uint64_t h = 14695981039346656037ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace deepreport::text
