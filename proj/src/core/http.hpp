#pragma once

// Minimal blocking HTTP(S) helper over cpp-httplib. Internal to the library.

#include <chrono>
#include <map>
#include <string>

namespace deepreport::detail {

struct HttpResult {
  int status = 0;
  std::string body;
};

/// Throws Error(transport) when the request could not be completed.
HttpResult http_post(const std::string& url, const std::map<std::string, std::string>& headers,
                     const std::string& body, const std::string& content_type, std::chrono::seconds timeout);

HttpResult http_get(const std::string& url, const std::map<std::string, std::string>& headers,
                    std::chrono::seconds timeout);

}  // namespace deepreport::detail
