#include "deepreport/retrieval.hpp"

#include "../core/http.hpp"
#include "deepreport/error.hpp"
#include "deepreport/text.hpp"

#include <algorithm>
#include <ctime>
#include <fstream>
#include <regex>
#include <set>

namespace deepreport::retrieval {

using nlohmann::json;

namespace {

std::string utf8_prefix(std::string_view s, std::size_t max_bytes) {
  if (s.size() <= max_bytes) return std::string(s);
  std::size_t cut = max_bytes;
  while (cut > 0 && (static_cast<unsigned char>(s[cut]) & 0xC0) == 0x80) --cut;
  return std::string(s.substr(0, cut));
}

// Crude HTML-to-text: drops script/style bodies and tags, collapses blanks.
std::string strip_html(const std::string& html) {
  if (html.find('<') == std::string::npos) return html;
  static const std::regex blocks(R"(<(script|style)[^>]*>[\s\S]*?</\1>)", std::regex::icase);
  static const std::regex tags(R"(<[^>]+>)");
  static const std::regex blanks(R"([ \t]+)");
  static const std::regex newlines(R"(\n\s*\n+)");
  std::string s = std::regex_replace(html, blocks, " ");
  s = std::regex_replace(s, tags, " ");
  s = std::regex_replace(s, blanks, " ");
  s = std::regex_replace(s, newlines, "\n\n");
  return std::string(text::trim(s));
}

bool is_year(std::string_view token) {
  if (token.size() != 4 || !std::all_of(token.begin(), token.end(), ::isdigit)) return false;
  int y = std::stoi(std::string(token));
  return y >= 1900 && y <= 2100;
}

bool sentence_break(std::string_view s, std::size_t i) {
  char c = s[i];
  if (c == '\n' || c == ';') return true;
  if (c == '.' || c == '!' || c == '?') return i + 1 >= s.size() || std::isspace(static_cast<unsigned char>(s[i + 1]));
  return false;
}

}  // namespace

std::string utc_timestamp() {
  std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::vector<NumericFact> extract_facts(std::string_view input) {
  static const std::regex number(R"((-?)(\d{1,3}(?:,\d{3})+|\d+)(\.\d+)?)");
  const std::string s(input);
  struct Hit {
    std::size_t begin, end;
    double value;
    bool year;
  };
  std::vector<Hit> hits;
  for (auto it = std::sregex_iterator(s.begin(), s.end(), number); it != std::sregex_iterator(); ++it) {
    const auto& m = *it;
    auto begin = static_cast<std::size_t>(m.position(0));
    auto end = begin + static_cast<std::size_t>(m.length(0));
    // Skip digits glued to letters (e.g. "CO2", "H100").
    if (begin > 0 && std::isalpha(static_cast<unsigned char>(s[begin - 1]))) continue;
    if (end < s.size() && std::isalpha(static_cast<unsigned char>(s[end])) && s[end] != 'k' && s[end] != 'm') continue;
    std::string digits = text::replace_all(m[2].str(), ",", "") + m[3].str();
    bool negative = !m[1].str().empty() && (begin == 0 || !std::isalnum(static_cast<unsigned char>(s[begin - 1])));
    double v = std::stod(digits);
    // "2,100" is a quantity; only a bare four-digit token can be a year.
    bool year = m[3].str().empty() && m[2].str().find(',') == std::string::npos && is_year(digits);
    hits.push_back({begin, end, negative ? -v : v, year});
  }

  std::vector<NumericFact> facts;
  for (std::size_t h = 0; h < hits.size(); ++h) {
    if (hits[h].year) continue;
    std::size_t sent_begin = hits[h].begin;
    while (sent_begin > 0 && !sentence_break(s, sent_begin - 1)) --sent_begin;
    std::size_t sent_end = hits[h].end;
    while (sent_end < s.size() && !sentence_break(s, sent_end)) ++sent_end;

    // Words since the previous non-year number, a couple after, and every
    // year mentioned in the sentence.
    std::size_t left = sent_begin;
    for (std::size_t k = h; k-- > 0;) {
      if (hits[k].end <= sent_begin) break;
      if (!hits[k].year) {
        left = hits[k].end;
        break;
      }
    }
    std::size_t right = sent_end;
    if (h + 1 < hits.size() && hits[h + 1].begin < sent_end) right = hits[h + 1].begin;

    std::vector<std::string> label;
    auto before = text::words(std::string_view(s).substr(left, hits[h].begin - left));
    std::size_t from = before.size() > 6 ? before.size() - 6 : 0;
    for (std::size_t i = from; i < before.size(); ++i)
      if (!is_year(before[i])) label.push_back(before[i]);
    auto after = text::words(std::string_view(s).substr(hits[h].end, right - hits[h].end));
    for (std::size_t i = 0; i < after.size() && i < 2; ++i) label.push_back(after[i]);
    for (const auto& hit : hits)
      if (hit.year && hit.begin >= sent_begin && hit.end <= sent_end)
        label.push_back(s.substr(hit.begin, hit.end - hit.begin));

    NumericFact fact{text::join(label, " "), hits[h].value};
    if (std::find(facts.begin(), facts.end(), fact) == facts.end()) facts.push_back(std::move(fact));
  }
  return facts;
}

std::vector<std::string> parse_query_lines(std::string_view reply, int count) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& raw : text::split_lines(text::strip_code_fences(reply))) {
    std::string line(text::trim(raw));
    std::size_t i = 0;
    while (i < line.size() && (line[i] == '-' || line[i] == '*' || line[i] == ' ')) ++i;
    std::size_t d = i;
    while (d < line.size() && std::isdigit(static_cast<unsigned char>(line[d]))) ++d;
    if (d > i && d < line.size() && (line[d] == '.' || line[d] == ')')) i = d + 1;
    line = std::string(text::trim(std::string_view(line).substr(i)));
    if (line.size() >= 2 && line.front() == '"' && line.back() == '"') line = line.substr(1, line.size() - 2);
    if (line.empty()) continue;
    if (!seen.insert(text::to_lower(line)).second) continue;
    out.push_back(line);
    if (static_cast<int>(out.size()) >= count) break;
  }
  return out;
}

// ---------------------------------------------------------------------------

MockSearchIndex::MockSearchIndex(std::vector<Document> documents) : documents_(std::move(documents)) {
  for (const auto& d : documents_)
    if (d.url.empty()) throw Error(ErrorKind::config, "mock search document without url");
}

std::shared_ptr<MockSearchIndex> MockSearchIndex::from_json(const json& fixture) {
  std::vector<Document> docs;
  for (const auto& d : fixture.at("documents")) {
    docs.push_back({d.at("url").get<std::string>(), d.value("title", std::string()),
                    d.value("snippet", std::string()), d.value("body", std::string()), d.value("status", 200)});
  }
  return std::make_shared<MockSearchIndex>(std::move(docs));
}

std::shared_ptr<MockSearchIndex> MockSearchIndex::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::config, "cannot read search index " + path.string());
  try {
    return from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::config, "bad search index " + path.string() + ": " + e.what());
  }
}

std::vector<SearchResult> MockSearchIndex::search(const std::string& query, int max_results) {
  auto q = text::content_words(query);
  std::vector<SearchResult> out;
  if (q.empty()) return out;
  for (const auto& d : documents_) {
    auto dw = text::content_words(d.title + " " + d.snippet);
    std::size_t hits = 0;
    for (const auto& w : q) hits += dw.count(w);
    if (hits == 0) continue;
    out.push_back({d.url, d.title, d.snippet, static_cast<double>(hits) / static_cast<double>(q.size())});
  }
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.score > b.score; });
  if (max_results >= 0 && out.size() > static_cast<std::size_t>(max_results)) out.resize(max_results);
  return out;
}

std::string MockFetcher::fetch(const std::string& url) {
  for (const auto& d : index_->documents()) {
    if (d.url != url) continue;
    if (d.status != 200 || d.body.empty())
      throw Error(ErrorKind::protocol, "GET " + url + " returned HTTP " + std::to_string(d.status == 200 ? 404 : d.status));
    return d.body;
  }
  throw Error(ErrorKind::protocol, "GET " + url + " returned HTTP 404");
}

TavilySearch::TavilySearch(std::string api_key, std::string endpoint, std::chrono::seconds timeout)
    : api_key_(std::move(api_key)), endpoint_(std::move(endpoint)), timeout_(timeout) {
  if (api_key_.empty()) throw Error(ErrorKind::config, "search API key is not configured");
}

std::vector<SearchResult> TavilySearch::search(const std::string& query, int max_results) {
  json body{{"api_key", api_key_}, {"query", query}, {"max_results", max_results}};
  auto res = detail::http_post(endpoint_, {}, body.dump(), "application/json", timeout_);
  if (res.status == 429 || res.status >= 500)
    throw Error(ErrorKind::transport, "search backend returned HTTP " + std::to_string(res.status));
  if (res.status != 200) throw Error(ErrorKind::protocol, "search backend returned HTTP " + std::to_string(res.status));
  std::vector<SearchResult> out;
  try {
    for (const auto& r : json::parse(res.body).value("results", json::array())) {
      SearchResult sr{r.value("url", std::string()), r.value("title", std::string()),
                      r.value("content", std::string()), r.value("score", 0.0)};
      if (!sr.url.empty()) out.push_back(std::move(sr));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::protocol, std::string("malformed search reply: ") + e.what());
  }
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.score > b.score; });
  return out;
}

std::string HttpFetcher::fetch(const std::string& url) {
  auto res = detail::http_get(url, {{"User-Agent", "deepreport/0.1 (report generator; polite single fetch)"}}, timeout_);
  if (res.status >= 500 || res.status == 429)
    throw Error(ErrorKind::transport, "GET " + url + " returned HTTP " + std::to_string(res.status));
  if (res.status != 200) throw Error(ErrorKind::protocol, "GET " + url + " returned HTTP " + std::to_string(res.status));
  return strip_html(res.body);
}

// ---------------------------------------------------------------------------

Retriever::Retriever(std::shared_ptr<SearchBackend> search, std::shared_ptr<PageFetcher> fetcher,
                     llm::Gateway& gateway, RetrievalConfig config)
    : search_(std::move(search)),
      fetcher_(std::move(fetcher)),
      gateway_(gateway),
      config_(std::move(config)),
      clock_(utc_timestamp) {
  if (!search_) throw Error(ErrorKind::config, "retriever has no search backend");
  if (config_.ingestion.results_per_query < 1) throw Error(ErrorKind::config, "results_per_query must be >= 1");
  if (config_.ingestion.mode == IngestionMode::full_summarized && !fetcher_)
    throw Error(ErrorKind::config, "full ingestion mode needs a page fetcher");
}

std::vector<std::string> Retriever::expand_queries(const std::string& topic, int count) {
  if (count < 1) throw Error(ErrorKind::contract, "query count must be >= 1");
  auto prompt = llm::render_prompt("retrieval.expand_queries", {{"topic", topic}, {"count", std::to_string(count)}});
  auto reply = gateway_.complete(llm::AgentRole::query_expansion, "retrieval", prompt);
  auto queries = parse_query_lines(reply.text, count);
  if (queries.empty()) queries.push_back(std::string(text::trim(topic)));
  return queries;
}

std::vector<SearchResult> Retriever::search(const std::string& query) {
  if (text::trim(query).empty()) throw Error(ErrorKind::contract, "search query is empty");
  return search_->search(query, config_.ingestion.results_per_query);
}

KnowledgeItem Retriever::ingest(const SearchResult& result, RefId ref_id) {
  KnowledgeItem item;
  item.ref_id = ref_id;
  item.url = result.url;
  item.title = result.title;
  item.retrieved_at = clock_();
  item.mode = IngestionMode::snippet;
  item.summary = result.snippet.empty() ? result.title : result.snippet;

  if (config_.ingestion.mode == IngestionMode::full_summarized) {
    std::string page;
    try {
      page = fetcher_->fetch(result.url);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::transport && e.kind() != ErrorKind::protocol) throw;
      item.fallback = true;
    }
    if (!item.fallback) {
      llm::ChatRequest req;
      req.messages.push_back(llm::Message::text(
          llm::Role::user, llm::render_prompt("retrieval.summarize", {{"title", result.title},
                                                                       {"url", result.url},
                                                                       {"page", utf8_prefix(page, 12000)}})));
      req.temperature = gateway_.models().temperature;
      req.model_name = config_.ingestion.summarizer_model.empty()
                           ? gateway_.models().model_for(llm::AgentRole::summarizer)
                           : config_.ingestion.summarizer_model;
      req.max_output = gateway_.models().max_output;
      req.phase = "retrieval";
      std::string summary(text::trim(gateway_.complete(req).text));
      if (text::starts_with(summary, "SUMMARY:")) summary = std::string(text::trim(summary.substr(8)));
      if (summary.empty()) {
        item.fallback = true;
      } else {
        item.summary = std::move(summary);
        item.excerpt = utf8_prefix(page, config_.excerpt_chars);
        item.mode = IngestionMode::full_summarized;
      }
    }
  }
  if (item.summary.empty()) item.summary = result.url;
  item.facts = extract_facts(item.summary + "\n" + item.excerpt);
  return item;
}

KnowledgeBase Retriever::build_global_tier(const Query& query) {
  std::vector<SearchResult> picked;
  std::set<std::string> urls;
  for (const auto& q : expand_queries(query.text, config_.global_queries)) {
    for (auto& r : search(q))
      if (urls.insert(r.url).second) picked.push_back(std::move(r));
  }
  std::vector<KnowledgeItem> items;
  RefIdAllocator ids;
  for (const auto& r : picked) items.push_back(ingest(r, ids.next()));
  return KnowledgeBase(std::move(items));
}

std::vector<KnowledgeItem> Retriever::collect_candidates(const SectionPlan& section, const KnowledgeBase& kb,
                                                         std::vector<std::string>* queries_out) {
  std::string topic = section.title;
  if (!section.goals.empty()) topic += ": " + text::join(section.goals, "; ");
  auto queries = expand_queries(topic, config_.section_queries);
  if (queries_out) *queries_out = queries;
  std::vector<KnowledgeItem> out;
  std::set<std::string> urls;
  for (const auto& q : queries) {
    for (const auto& r : search(q)) {
      if (kb.url_owner(r.url) || !urls.insert(r.url).second) continue;
      out.push_back(ingest(r, 0));
    }
  }
  return out;
}

std::size_t Retriever::commit_local(KnowledgeBase& kb, const SectionId& section_id,
                                    std::vector<KnowledgeItem> candidates, RefIdAllocator& ids) {
  std::size_t added = 0;
  for (auto& item : candidates) {
    if (kb.url_owner(item.url)) continue;
    item.ref_id = ids.next();
    kb.add_local(section_id, std::move(item));
    ++added;
  }
  return added;
}

std::size_t Retriever::retrieve_local(const SectionPlan& section, KnowledgeBase& kb, RefIdAllocator& ids) {
  return commit_local(kb, section.section_id, collect_candidates(section, kb), ids);
}

}  // namespace deepreport::retrieval
