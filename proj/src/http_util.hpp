#pragma once

#include <chrono>
#include <string>
#include <thread>

namespace cluster_route::detail {

struct UrlParts {
  std::string origin;  // scheme://host[:port]
  std::string path;    // path prefix without trailing slash, may be empty
};

inline UrlParts split_url(const std::string& url) {
  auto scheme_end = url.find("://");
  std::size_t host_start = scheme_end == std::string::npos ? 0 : scheme_end + 3;
  auto slash = url.find('/', host_start);
  UrlParts parts;
  if (slash == std::string::npos) {
    parts.origin = url;
  } else {
    parts.origin = url.substr(0, slash);
    parts.path = url.substr(slash);
    while (!parts.path.empty() && parts.path.back() == '/') parts.path.pop_back();
  }
  return parts;
}

inline bool retryable_status(int status) { return status == 429 || status >= 500; }

inline void backoff_sleep(int initial_ms, int attempt) {
  if (initial_ms <= 0) return;
  std::this_thread::sleep_for(std::chrono::milliseconds(static_cast<long long>(initial_ms) << attempt));
}

}  // namespace cluster_route::detail
