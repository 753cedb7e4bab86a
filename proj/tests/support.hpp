#pragma once

// Helpers shared by the unit tests and the acceptance binary.

#include "deepreport/llm.hpp"

#include <atomic>
#include <filesystem>
#include <fstream>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <unistd.h>

namespace drtest {

namespace fs = std::filesystem;

inline fs::path fixture(const std::string& rel) { return fs::path(DR_FIXTURES) / rel; }

inline std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "drtest") {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            (tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter.fetch_add(1)));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const noexcept { return path_; }
  fs::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  fs::path path_;
};

using Rule = deepreport::llm::ScriptedBackend::Rule;

inline Rule reply(std::string match, std::vector<std::string> responses) {
  Rule r;
  r.pattern = std::move(match);
  r.responses = std::move(responses);
  return r;
}

inline Rule generated(std::string match, deepreport::llm::ScriptedBackend::Generator g) {
  Rule r;
  r.pattern = std::move(match);
  r.generator = std::move(g);
  return r;
}

/// Gateway over scripted rules with backoff sleeps disabled.
inline std::unique_ptr<deepreport::llm::Gateway> scripted_gateway(std::vector<Rule> rules,
                                                                   std::string fallback = "NO_CHANGE") {
  auto backend = std::make_shared<deepreport::llm::ScriptedBackend>(std::move(rules), std::move(fallback));
  auto gw = std::make_unique<deepreport::llm::Gateway>(backend, deepreport::llm::ModelConfig{});
  gw->set_sleeper([](std::chrono::milliseconds) {});
  return gw;
}

/// Text between `key` and the end of its line, or empty.
inline std::string line_after(const std::string& text, const std::string& key) {
  auto p = text.find(key);
  if (p == std::string::npos) return {};
  p += key.size();
  auto e = text.find('\n', p);
  return text.substr(p, e == std::string::npos ? std::string::npos : e - p);
}

}  // namespace drtest
