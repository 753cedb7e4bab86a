#include "http.hpp"

#include "deepreport/error.hpp"

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

namespace deepreport::detail {

namespace {

struct SplitUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

SplitUrl split_url(const std::string& url) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw Error(ErrorKind::config, "malformed url: " + url);
  auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

httplib::Headers to_headers(const std::map<std::string, std::string>& headers) {
  httplib::Headers out;
  for (const auto& [k, v] : headers) out.emplace(k, v);
  return out;
}

void configure(httplib::Client& client, std::chrono::seconds timeout) {
  client.set_connection_timeout(timeout);
  client.set_read_timeout(timeout);
  client.set_write_timeout(timeout);
  client.set_follow_location(true);
}

}  // namespace

HttpResult http_post(const std::string& url, const std::map<std::string, std::string>& headers,
                     const std::string& body, const std::string& content_type, std::chrono::seconds timeout) {
  auto parts = split_url(url);
  httplib::Client client(parts.origin);
  configure(client, timeout);
  auto res = client.Post(parts.path, to_headers(headers), body, content_type);
  if (!res) throw Error(ErrorKind::transport, "POST " + url + " failed: " + httplib::to_string(res.error()));
  return {res->status, res->body};
}

HttpResult http_get(const std::string& url, const std::map<std::string, std::string>& headers,
                    std::chrono::seconds timeout) {
  auto parts = split_url(url);
  httplib::Client client(parts.origin);
  configure(client, timeout);
  auto res = client.Get(parts.path, to_headers(headers));
  if (!res) throw Error(ErrorKind::transport, "GET " + url + " failed: " + httplib::to_string(res.error()));
  return {res->status, res->body};
}

}  // namespace deepreport::detail
