#pragma once

#include <string>
#include <string_view>

namespace crskit {

// "http://host:8080/hub/" -> origin "http://host:8080", path "/hub".
struct UrlParts {
  std::string origin;
  std::string path;
};

UrlParts split_url(std::string_view url);

// Percent-encodes every byte outside the unreserved set, keeping '/'.
std::string encode_path(std::string_view path);

}  // namespace crskit
