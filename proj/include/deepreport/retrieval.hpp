#pragma once

// Search tool, page ingestion (snippet or fetch-and-summarize) and population
// of the two knowledge-base tiers.

#include "deepreport/core.hpp"
#include "deepreport/llm.hpp"

#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace deepreport::retrieval {

struct SearchResult {
  std::string url;
  std::string title;
  std::string snippet;
  double score = 0.0;
};

class SearchBackend {
 public:
  virtual ~SearchBackend() = default;
  /// Results ordered by score, best first. Empty is not an error.
  virtual std::vector<SearchResult> search(const std::string& query, int max_results) = 0;
};

class PageFetcher {
 public:
  virtual ~PageFetcher() = default;
  /// Page body as text. Throws Error(transport) or Error(protocol) on failure.
  virtual std::string fetch(const std::string& url) = 0;
};

/// Offline index: documents scored by content-word overlap with the query.
///
///   {"documents": [{"url": "...", "title": "...", "snippet": "...",
///                   "body": "...", "status": 200}]}
///
/// The same fixture backs MockFetcher; a document without a body or with a
/// non-200 status fails to fetch.
class MockSearchIndex final : public SearchBackend {
 public:
  struct Document {
    std::string url;
    std::string title;
    std::string snippet;
    std::string body;
    int status = 200;
  };

  explicit MockSearchIndex(std::vector<Document> documents);
  static std::shared_ptr<MockSearchIndex> from_json(const nlohmann::json& fixture);
  static std::shared_ptr<MockSearchIndex> load(const std::filesystem::path& path);

  std::vector<SearchResult> search(const std::string& query, int max_results) override;
  const std::vector<Document>& documents() const noexcept { return documents_; }

 private:
  std::vector<Document> documents_;
};

class MockFetcher final : public PageFetcher {
 public:
  explicit MockFetcher(std::shared_ptr<const MockSearchIndex> index) : index_(std::move(index)) {}
  std::string fetch(const std::string& url) override;

 private:
  std::shared_ptr<const MockSearchIndex> index_;
};

/// Tavily-compatible search API: POST {api_key, query, max_results}.
class TavilySearch final : public SearchBackend {
 public:
  TavilySearch(std::string api_key, std::string endpoint = "https://api.tavily.com/search",
               std::chrono::seconds timeout = std::chrono::seconds(30));
  std::vector<SearchResult> search(const std::string& query, int max_results) override;

 private:
  std::string api_key_;
  std::string endpoint_;
  std::chrono::seconds timeout_;
};

class HttpFetcher final : public PageFetcher {
 public:
  explicit HttpFetcher(std::chrono::seconds timeout = std::chrono::seconds(20)) : timeout_(timeout) {}
  std::string fetch(const std::string& url) override;

 private:
  std::chrono::seconds timeout_;
};

struct IngestionConfig {
  IngestionMode mode = IngestionMode::full_summarized;
  int results_per_query = 4;
  std::string summarizer_model;  // empty: the gateway's summarizer role model
};

struct RetrievalConfig {
  IngestionConfig ingestion;
  int global_queries = 3;
  int section_queries = 2;
  std::size_t excerpt_chars = 1200;
};

/// Numbers in text with the words around them, e.g. "solar capacity 2023 GW".
std::vector<NumericFact> extract_facts(std::string_view text);

/// Strips list bullets / numbering, trims, drops blanks and duplicates.
std::vector<std::string> parse_query_lines(std::string_view reply, int count);

class Retriever {
 public:
  using Clock = std::function<std::string()>;

  Retriever(std::shared_ptr<SearchBackend> search, std::shared_ptr<PageFetcher> fetcher, llm::Gateway& gateway,
            RetrievalConfig config);

  /// Between 1 and count distinct queries; falls back to the topic itself.
  std::vector<std::string> expand_queries(const std::string& topic, int count);
  std::vector<SearchResult> search(const std::string& query);

  /// Builds an item for the result. In full mode a failed fetch degrades to
  /// the snippet with fallback = true.
  KnowledgeItem ingest(const SearchResult& result, RefId ref_id);

  /// Breadth-first global tier: expanded queries, url-deduplicated, ids from 1001.
  KnowledgeBase build_global_tier(const Query& query);

  /// Section-targeted items not yet in kb (by url), without ref ids. Safe to
  /// call concurrently for different sections.
  std::vector<KnowledgeItem> collect_candidates(const SectionPlan& section, const KnowledgeBase& kb,
                                                std::vector<std::string>* queries_out = nullptr);

  /// Assigns ids and adds the candidates to the section's local tier,
  /// skipping urls owned by any tier. Returns the number added.
  static std::size_t commit_local(KnowledgeBase& kb, const SectionId& section_id,
                                  std::vector<KnowledgeItem> candidates, RefIdAllocator& ids);

  /// collect_candidates + commit_local.
  std::size_t retrieve_local(const SectionPlan& section, KnowledgeBase& kb, RefIdAllocator& ids);

  void set_clock(Clock clock) { clock_ = std::move(clock); }
  const RetrievalConfig& config() const noexcept { return config_; }

 private:
  std::shared_ptr<SearchBackend> search_;
  std::shared_ptr<PageFetcher> fetcher_;
  llm::Gateway& gateway_;
  RetrievalConfig config_;
  Clock clock_;
};

/// Current UTC time as ISO-8601.
std::string utc_timestamp();

}  // namespace deepreport::retrieval
