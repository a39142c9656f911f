#include "crskit/artifact.h"

#include <httplib.h>

#include <cctype>
#include <fstream>
#include <sstream>

#include "crskit/digest.h"
#include "crskit/error.h"
#include "crskit/http_util.h"

namespace crskit {
namespace fs = std::filesystem;

namespace {

constexpr std::string_view kFormat = "crskit-artifact/1";
constexpr std::string_view kDigestKey = "\"manifest_sha256\": \"";
const std::string kZeroDigest(64, '0');

std::string hub_path(const UrlParts& hub, const std::string& name, const std::string& relpath) {
  return hub.path + "/" + encode_path(name) + "/" + encode_path(relpath);
}

std::unique_ptr<httplib::Client> hub_client(const std::string& origin) {
  auto cli = std::make_unique<httplib::Client>(origin);
  cli->set_connection_timeout(5, 0);
  cli->set_read_timeout(30, 0);
  cli->set_write_timeout(30, 0);
  return cli;
}

class LocalSource : public ArtifactSource {
 public:
  explicit LocalSource(fs::path dir) : dir_(std::move(dir)) {}

  std::string describe() const override { return dir_.string(); }

  std::string read(const std::string& relpath) const override {
    auto path = dir_ / relpath;
    if (!fs::is_regular_file(path)) fail(ErrorCode::kNotFound, path.string());
    return read_file(path);
  }

  std::unique_ptr<ArtifactSource> child(const std::string& name) const override {
    if (!is_valid_artifact_name(name)) fail(ErrorCode::kManifestInvalid, "bad sub-artifact " + name);
    return std::make_unique<LocalSource>(dir_ / name);
  }

 private:
  fs::path dir_;
};

class HubSource : public ArtifactSource {
 public:
  HubSource(std::string hub_url, std::string name)
      : hub_url_(std::move(hub_url)), parts_(split_url(hub_url_)), name_(std::move(name)) {
    if (!is_valid_artifact_name(name_)) fail(ErrorCode::kNotFound, "invalid artifact name " + name_);
  }

  std::string describe() const override { return hub_url_ + "/" + name_; }

  std::string read(const std::string& relpath) const override {
    auto cli = hub_client(parts_.origin);
    auto res = cli->Get(hub_path(parts_, name_, relpath));
    if (!res) {
      fail(ErrorCode::kTransportError,
           "GET " + describe() + "/" + relpath + ": " + httplib::to_string(res.error()));
    }
    if (res->status == 404) fail(ErrorCode::kNotFound, describe() + "/" + relpath);
    if (res->status == 401 || res->status == 403) {
      fail(ErrorCode::kAuthError, "hub refused GET " + relpath);
    }
    if (res->status < 200 || res->status >= 300) {
      fail(ErrorCode::kTransportError, "GET " + relpath + " returned " + std::to_string(res->status));
    }
    return res->body;
  }

  std::unique_ptr<ArtifactSource> child(const std::string& name) const override {
    return std::make_unique<HubSource>(hub_url_, name);
  }

 private:
  std::string hub_url_;
  UrlParts parts_;
  std::string name_;
};

void put_file(httplib::Client& cli, const UrlParts& hub, const std::string& name,
              const std::string& relpath, const std::string& body) {
  auto res = cli.Put(hub_path(hub, name, relpath), body, "application/octet-stream");
  if (!res) {
    fail(ErrorCode::kTransportError, "PUT " + name + "/" + relpath + ": " +
                                         httplib::to_string(res.error()));
  }
  if (res->status == 401 || res->status == 403) {
    fail(ErrorCode::kAuthError, "hub rejected token (" + std::to_string(res->status) + ")");
  }
  if (res->status < 200 || res->status >= 300) {
    fail(ErrorCode::kTransportError,
         "PUT " + name + "/" + relpath + " returned " + std::to_string(res->status));
  }
}

}  // namespace

// ---------------------------------------------------------------------------

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIoError, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return std::move(ss).str();
}

void write_file(const fs::path& path, std::string_view bytes) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::kIoError, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorCode::kIoError, "short write to " + path.string());
}

bool is_safe_relative_path(std::string_view path) {
  if (path.empty() || path.front() == '/' || path.find('\\') != std::string_view::npos ||
      path.find(':') != std::string_view::npos) {
    return false;
  }
  std::size_t pos = 0;
  while (pos <= path.size()) {
    auto slash = path.find('/', pos);
    auto seg = path.substr(pos, slash == std::string_view::npos ? path.npos : slash - pos);
    if (seg.empty() || seg == "." || seg == "..") return false;
    if (slash == std::string_view::npos) break;
    pos = slash + 1;
  }
  return true;
}

bool is_valid_artifact_name(std::string_view name) {
  if (name.empty() || name == "." || name == "..") return false;
  for (char c : name) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '_' || c == '-')) {
      return false;
    }
  }
  return true;
}

std::string ArtifactManifest::render() const {
  Json files_json = Json::array();
  for (const auto& f : files) files_json.push_back({{"path", f.path}, {"sha256", f.sha256}});
  Json j = {
      {"format", kFormat},
      {"name", name},
      {"module_type", module_type},
      {"config", config.to_json()},
      {"files", files_json},
      {"requires", requires_artifacts},
      {"manifest_sha256", kZeroDigest},
  };
  std::string text = j.dump(2) + "\n";
  auto at = text.find(kDigestKey);
  text.replace(at + kDigestKey.size(), 64, sha256_hex(text));
  return text;
}

ArtifactManifest ArtifactManifest::parse_verified(std::string_view bytes) {
  auto at = bytes.find(kDigestKey);
  if (at == std::string_view::npos || bytes.size() < at + kDigestKey.size() + 64) {
    fail(ErrorCode::kDigestMismatch, "manifest.json has no self digest");
  }
  std::string stored(bytes.substr(at + kDigestKey.size(), 64));
  std::string zeroed(bytes);
  zeroed.replace(at + kDigestKey.size(), 64, kZeroDigest);
  if (sha256_hex(zeroed) != stored) fail(ErrorCode::kDigestMismatch, "manifest.json");

  ArtifactManifest m;
  try {
    auto j = Json::parse(bytes);
    if (j.value("format", std::string()) != kFormat) {
      fail(ErrorCode::kManifestInvalid, "unknown manifest format");
    }
    m.name = j.at("name").get<std::string>();
    m.module_type = j.at("module_type").get<std::string>();
    m.config = ModuleConfig::from_json(j.at("config"));
    for (const auto& f : j.at("files")) {
      m.files.push_back({f.at("path").get<std::string>(), f.at("sha256").get<std::string>()});
    }
    m.requires_artifacts = j.value("requires", std::vector<std::string>{});
  } catch (const Json::exception& e) {
    fail(ErrorCode::kManifestInvalid, std::string("manifest.json: ") + e.what());
  }
  if (!is_valid_artifact_name(m.name)) fail(ErrorCode::kManifestInvalid, "bad name " + m.name);
  for (const auto& f : m.files) {
    if (!is_safe_relative_path(f.path) || f.path == "manifest.json") {
      fail(ErrorCode::kManifestInvalid, "unsafe path in manifest: " + f.path);
    }
  }
  for (const auto& r : m.requires_artifacts) {
    if (!is_valid_artifact_name(r)) fail(ErrorCode::kManifestInvalid, "bad sub-artifact " + r);
  }
  return m;
}

const std::string* ArtifactBundle::file(const std::string& path) const {
  auto it = files.find(path);
  return it == files.end() ? nullptr : &it->second;
}

std::unique_ptr<ArtifactSource> local_source(fs::path dir) {
  return std::make_unique<LocalSource>(std::move(dir));
}

std::unique_ptr<ArtifactSource> hub_source(std::string hub_url, std::string name) {
  return std::make_unique<HubSource>(std::move(hub_url), std::move(name));
}

ArtifactManifest write_artifact(const fs::path& dir, const std::string& name,
                                const ModuleConfig& config,
                                const std::map<std::string, std::string>& files,
                                const std::vector<std::string>& requires_artifacts) {
  if (!is_valid_artifact_name(name)) fail(ErrorCode::kInvalidArgument, "bad artifact name " + name);
  ArtifactManifest m;
  m.name = name;
  m.module_type = config.module_type;
  m.config = config;
  m.requires_artifacts = requires_artifacts;

  std::map<std::string, std::string> all = files;
  all["config.json"] = config.to_json().dump(2) + "\n";
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorCode::kIoError, "cannot create " + dir.string() + ": " + ec.message());

  // config.json first, the rest in path order.
  m.files.push_back({"config.json", sha256_hex(all["config.json"])});
  write_file(dir / "config.json", all["config.json"]);
  for (const auto& [path, bytes] : all) {
    if (path == "config.json") continue;
    if (!is_safe_relative_path(path) || path == "manifest.json") {
      fail(ErrorCode::kInvalidArgument, "unsafe artifact path " + path);
    }
    write_file(dir / path, bytes);
    m.files.push_back({path, sha256_hex(bytes)});
  }
  write_file(dir / "manifest.json", m.render());
  return m;
}

ArtifactBundle read_artifact(const ArtifactSource& source) {
  ArtifactBundle bundle;
  try {
    bundle.manifest_bytes = source.read("manifest.json");
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kNotFound) {
      fail(ErrorCode::kNotFound, "no artifact at " + source.describe());
    }
    throw;
  }
  bundle.manifest = ArtifactManifest::parse_verified(bundle.manifest_bytes);
  for (const auto& f : bundle.manifest.files) {
    auto bytes = source.read(f.path);
    if (sha256_hex(bytes) != f.sha256) {
      fail(ErrorCode::kDigestMismatch, source.describe() + "/" + f.path);
    }
    bundle.files.emplace(f.path, std::move(bytes));
  }
  const auto* config_text = bundle.file("config.json");
  if (!config_text) fail(ErrorCode::kManifestInvalid, "artifact lacks config.json");
  ModuleConfig on_disk;
  try {
    on_disk = ModuleConfig::from_json(Json::parse(*config_text));
  } catch (const Json::exception& e) {
    fail(ErrorCode::kManifestInvalid, std::string("config.json: ") + e.what());
  }
  if (!(on_disk == bundle.manifest.config)) {
    fail(ErrorCode::kManifestInvalid, "config.json disagrees with manifest");
  }
  return bundle;
}

std::string push_to_hub(const fs::path& dir, const std::string& hub_url,
                        const std::string& token) {
  if (!fs::is_regular_file(dir / "manifest.json")) {
    fail(ErrorCode::kManifestInvalid, dir.string() + " has no manifest.json; save it first");
  }
  auto local = local_source(dir);
  auto bundle = read_artifact(*local);
  for (const auto& sub : bundle.manifest.requires_artifacts) {
    push_to_hub(dir / sub, hub_url, token);
  }

  auto parts = split_url(hub_url);
  auto cli = hub_client(parts.origin);
  cli->set_bearer_token_auth(token);
  const auto& name = bundle.manifest.name;
  for (const auto& f : bundle.manifest.files) {
    put_file(*cli, parts, name, f.path, bundle.files.at(f.path));
  }
  put_file(*cli, parts, name, "manifest.json", bundle.manifest_bytes);
  return name;
}

void pull_from_hub(const std::string& name, const std::string& hub_url, const fs::path& dir) {
  auto source = hub_source(hub_url, name);
  auto bundle = read_artifact(*source);
  for (const auto& sub : bundle.manifest.requires_artifacts) {
    pull_from_hub(sub, hub_url, dir / sub);
  }
  for (const auto& [path, bytes] : bundle.files) write_file(dir / path, bytes);
  write_file(dir / "manifest.json", bundle.manifest_bytes);
}

}  // namespace crskit
