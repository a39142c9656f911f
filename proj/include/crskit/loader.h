#pragma once

// Module registry plus save/load of modules and pipelines as artifacts.

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <variant>
#include <vector>

#include "crskit/artifact.h"
#include "crskit/module.h"
#include "crskit/pipeline.h"

namespace crskit {

struct LoadOptions {
  std::string hub_url;   // consulted when a ref is not a local directory
  bool offline = false;  // generators fall back to the template generator
};

using ModuleFactory =
    std::function<std::shared_ptr<Module>(const ArtifactBundle&, const LoadOptions&)>;

// module_type -> factory. The global registry starts with "redial-rec",
// "entity-linker" and "chatgpt-gen".
class ModuleRegistry {
 public:
  static ModuleRegistry& global();

  void register_type(const std::string& module_type, ModuleFactory factory);
  // Throws kUnknownModuleType.
  std::shared_ptr<Module> create(const ArtifactBundle& bundle, const LoadOptions& opts) const;
  std::vector<std::string> types() const;

 private:
  mutable std::mutex mu_;
  std::map<std::string, ModuleFactory> factories_;
};

// Writes manifest, config, weights.bin (only when the module has weights)
// and tokenizer assets.
ArtifactManifest save_pretrained(const Module& module, const std::filesystem::path& dir);
// Each module goes to dir/<module name>; the pipeline manifest requires them.
ArtifactManifest save_pretrained(const Pipeline& pipeline, const std::filesystem::path& dir);

using Loaded = std::variant<std::shared_ptr<Module>, std::shared_ptr<Pipeline>>;

// `ref` is a local artifact directory or, when opts.hub_url is set, an
// artifact name on the hub.
Loaded from_pretrained(const std::string& ref, const LoadOptions& opts = {});
Loaded load_from(const ArtifactSource& source, const LoadOptions& opts = {});

std::shared_ptr<Module> load_module(const std::string& ref, const LoadOptions& opts = {});
std::shared_ptr<Pipeline> load_pipeline(const std::string& ref, const LoadOptions& opts = {});

}  // namespace crskit
