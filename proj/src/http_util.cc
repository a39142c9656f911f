#include "crskit/http_util.h"

#include <cctype>

#include "crskit/error.h"

namespace crskit {

UrlParts split_url(std::string_view url) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string_view::npos || scheme_end == 0) {
    fail(ErrorCode::kInvalidArgument, "URL needs a scheme: " + std::string(url));
  }
  auto path_start = url.find('/', scheme_end + 3);
  UrlParts parts;
  if (path_start == std::string_view::npos) {
    parts.origin = std::string(url);
  } else {
    parts.origin = std::string(url.substr(0, path_start));
    parts.path = std::string(url.substr(path_start));
  }
  while (!parts.path.empty() && parts.path.back() == '/') parts.path.pop_back();
  if (parts.origin.size() <= scheme_end + 3) {
    fail(ErrorCode::kInvalidArgument, "URL has no host: " + std::string(url));
  }
  return parts;
}

std::string encode_path(std::string_view path) {
  static constexpr char kHex[] = "0123456789ABCDEF";
  std::string out;
  for (char c : path) {
    auto u = static_cast<unsigned char>(c);
    if (std::isalnum(u) || c == '-' || c == '_' || c == '.' || c == '~' || c == '/') {
      out.push_back(c);
    } else {
      out.push_back('%');
      out.push_back(kHex[u >> 4]);
      out.push_back(kHex[u & 0xF]);
    }
  }
  return out;
}

}  // namespace crskit
