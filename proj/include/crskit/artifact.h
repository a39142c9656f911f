#pragma once

// Portable artifact directories and the plain-HTTP hub.
//
//   <dir>/manifest.json   name, module_type, config, file digests, required
//                         sub-artifacts and a self digest (manifest_sha256)
//   <dir>/config.json     ModuleConfig
//   <dir>/weights.bin     optional, see weights.h
//   <dir>/tokenizer/...   tokenizer assets
//   <dir>/<sub>/...       sub-artifacts named in "requires" (pipelines)
//
// Hub layout: GET/PUT {hub_url}/{name}/{relpath}, PUT guarded by a bearer token.

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "crskit/module.h"

namespace crskit {

struct FileDigest {
  std::string path;
  std::string sha256;
  bool operator==(const FileDigest&) const = default;
};

struct ArtifactManifest {
  std::string name;
  std::string module_type;
  ModuleConfig config;
  std::vector<FileDigest> files;
  std::vector<std::string> requires_artifacts;

  // Canonical bytes of manifest.json, self digest filled in.
  std::string render() const;
  // Verifies the self digest (kDigestMismatch) and path rules (kManifestInvalid).
  static ArtifactManifest parse_verified(std::string_view bytes);

  bool operator==(const ArtifactManifest&) const = default;
};

// Relative path without "..", leading '/', backslashes or empty segments.
bool is_safe_relative_path(std::string_view path);
// Artifact names: [A-Za-z0-9._-]+, not "." or "..".
bool is_valid_artifact_name(std::string_view name);

struct ArtifactBundle {
  ArtifactManifest manifest;
  std::string manifest_bytes;
  std::map<std::string, std::string> files;  // digest-verified contents

  const std::string* file(const std::string& path) const;
};

class ArtifactSource {
 public:
  virtual ~ArtifactSource() = default;
  virtual std::string describe() const = 0;
  // Throws kNotFound when absent, kTransportError / kIoError otherwise.
  virtual std::string read(const std::string& relpath) const = 0;
  // Source for a sub-artifact referenced by name.
  virtual std::unique_ptr<ArtifactSource> child(const std::string& name) const = 0;
};

std::unique_ptr<ArtifactSource> local_source(std::filesystem::path dir);
std::unique_ptr<ArtifactSource> hub_source(std::string hub_url, std::string name);

// Writes config.json plus `files`, then manifest.json. Returns the manifest.
ArtifactManifest write_artifact(const std::filesystem::path& dir, const std::string& name,
                                const ModuleConfig& config,
                                const std::map<std::string, std::string>& files,
                                const std::vector<std::string>& requires_artifacts = {});

// Reads and verifies every file listed in the manifest.
ArtifactBundle read_artifact(const ArtifactSource& source);

// Uploads required sub-artifacts first, then the artifact's files, then its
// manifest. Returns the remote ref (artifact name).
std::string push_to_hub(const std::filesystem::path& dir, const std::string& hub_url,
                        const std::string& token);

// Downloads a verified artifact (and its sub-artifacts) into `dir`, byte-exact.
void pull_from_hub(const std::string& name, const std::string& hub_url,
                   const std::filesystem::path& dir);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

}  // namespace crskit
