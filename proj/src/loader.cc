#include "crskit/loader.h"

#include <algorithm>

#include "crskit/entity_linker.h"
#include "crskit/error.h"
#include "crskit/generator.h"
#include "crskit/redial_rec.h"
#include "crskit/weights.h"

namespace crskit {
namespace fs = std::filesystem;

namespace {

const std::string& required_file(const ArtifactBundle& b, const std::string& path) {
  const auto* f = b.file(path);
  if (!f) fail(ErrorCode::kManifestInvalid, b.manifest.name + " lacks " + path);
  return *f;
}

std::shared_ptr<Module> make_redial_rec(const ArtifactBundle& b, const LoadOptions&) {
  auto tokenizer = CompositeTokenizer::from_files(b.files);
  auto lexicon = SentimentLexicon::from_json(required_file(b, "tokenizer/sentiment.json"));
  auto params = AutoRecParams::from_weights(deserialize_weights(required_file(b, "weights.bin")));
  auto cfg = RedialRecConfig::from_json(b.manifest.config.params);
  if (cfg.hidden_size != params.hidden()) {
    fail(ErrorCode::kShapeMismatch, "config hidden_size " + std::to_string(cfg.hidden_size) +
                                        " vs weights " + std::to_string(params.hidden()));
  }
  return std::make_shared<RedialRec>(b.manifest.name, std::move(tokenizer), std::move(lexicon),
                                     std::move(params), cfg);
}

std::shared_ptr<Module> make_entity_linker(const ArtifactBundle& b, const LoadOptions&) {
  return std::make_shared<EntityLinker>(b.manifest.name, CompositeTokenizer::from_files(b.files),
                                        LinkerConfig::from_json(b.manifest.config.params));
}

std::shared_ptr<Module> make_llm_generator(const ArtifactBundle& b, const LoadOptions& opts) {
  return std::make_shared<LlmGenerator>(
      b.manifest.name, LlmGeneratorConfig::from_json(b.manifest.config.params), opts.offline);
}

std::shared_ptr<Pipeline> make_pipeline(const ArtifactSource& source, const ArtifactBundle& b,
                                        const LoadOptions& opts) {
  const auto& params = b.manifest.config.params;
  auto cfg = PipelineConfig::from_json(params);
  Json modules = params.value("modules", Json::object());
  auto sub = [&](const char* role) -> std::shared_ptr<const Module> {
    if (!modules.contains(role)) return nullptr;
    auto name = modules[role].get<std::string>();
    const auto& req = b.manifest.requires_artifacts;
    if (std::find(req.begin(), req.end(), name) == req.end()) {
      fail(ErrorCode::kManifestInvalid, "module " + name + " not listed in requires");
    }
    auto child = source.child(name);
    auto loaded = load_from(*child, opts);
    if (!std::holds_alternative<std::shared_ptr<Module>>(loaded)) {
      fail(ErrorCode::kManifestInvalid, name + " is a pipeline, expected a module");
    }
    return std::get<std::shared_ptr<Module>>(loaded);
  };
  try {
    return std::make_shared<Pipeline>(b.manifest.name, cfg, sub("rec"), sub("gen"), sub("proc"));
  } catch (const Json::exception& e) {
    fail(ErrorCode::kManifestInvalid, std::string("pipeline modules: ") + e.what());
  }
}

}  // namespace

ModuleRegistry& ModuleRegistry::global() {
  static ModuleRegistry* registry = [] {
    auto* r = new ModuleRegistry;
    r->register_type(std::string(kRedialRecType), make_redial_rec);
    r->register_type(std::string(kEntityLinkerType), make_entity_linker);
    r->register_type(std::string(kLlmGeneratorType), make_llm_generator);
    return r;
  }();
  return *registry;
}

void ModuleRegistry::register_type(const std::string& module_type, ModuleFactory factory) {
  if (module_type == kPipelineType) {
    fail(ErrorCode::kInvalidArgument, "\"pipeline\" is reserved");
  }
  std::lock_guard lock(mu_);
  factories_[module_type] = std::move(factory);
}

std::shared_ptr<Module> ModuleRegistry::create(const ArtifactBundle& bundle,
                                               const LoadOptions& opts) const {
  ModuleFactory factory;
  {
    std::lock_guard lock(mu_);
    auto it = factories_.find(bundle.manifest.module_type);
    if (it == factories_.end()) {
      fail(ErrorCode::kUnknownModuleType, "no factory for module type \"" +
                                              bundle.manifest.module_type + "\"");
    }
    factory = it->second;
  }
  return factory(bundle, opts);
}

std::vector<std::string> ModuleRegistry::types() const {
  std::lock_guard lock(mu_);
  std::vector<std::string> out;
  for (const auto& [t, f] : factories_) out.push_back(t);
  return out;
}

ArtifactManifest save_pretrained(const Module& module, const fs::path& dir) {
  auto files = module.asset_files();
  auto weights = module.weights();
  if (!weights.tensors.empty()) files["weights.bin"] = serialize_weights(weights);
  return write_artifact(dir, module.name(), module.config(), files);
}

ArtifactManifest save_pretrained(const Pipeline& pipeline, const fs::path& dir) {
  Json params = pipeline.config().to_json();
  Json modules = Json::object();
  std::vector<std::string> requires_artifacts;
  auto add = [&](const char* role, const Module* m) {
    if (!m) return;
    if (std::find(requires_artifacts.begin(), requires_artifacts.end(), m->name()) !=
        requires_artifacts.end()) {
      fail(ErrorCode::kInvalidArgument, "two pipeline modules share the name " + m->name());
    }
    save_pretrained(*m, dir / m->name());
    modules[role] = m->name();
    requires_artifacts.push_back(m->name());
  };
  add("rec", &pipeline.rec());
  add("gen", &pipeline.gen());
  add("proc", pipeline.proc());
  params["modules"] = modules;
  ModuleConfig config{std::string(kPipelineType), "1", params};
  return write_artifact(dir, pipeline.name(), config, {}, requires_artifacts);
}

Loaded load_from(const ArtifactSource& source, const LoadOptions& opts) {
  auto bundle = read_artifact(source);
  if (bundle.manifest.module_type == kPipelineType) return make_pipeline(source, bundle, opts);
  return ModuleRegistry::global().create(bundle, opts);
}

Loaded from_pretrained(const std::string& ref, const LoadOptions& opts) {
  std::error_code ec;
  if (fs::is_directory(ref, ec)) return load_from(*local_source(ref), opts);
  if (!opts.hub_url.empty() && is_valid_artifact_name(ref)) {
    return load_from(*hub_source(opts.hub_url, ref), opts);
  }
  fail(ErrorCode::kNotFound, "no local artifact at " + ref +
                                 (opts.hub_url.empty() ? " and no hub configured" : ""));
}

std::shared_ptr<Module> load_module(const std::string& ref, const LoadOptions& opts) {
  auto loaded = from_pretrained(ref, opts);
  if (auto* m = std::get_if<std::shared_ptr<Module>>(&loaded)) return *m;
  fail(ErrorCode::kInvalidArgument, ref + " is a pipeline, not a module");
}

std::shared_ptr<Pipeline> load_pipeline(const std::string& ref, const LoadOptions& opts) {
  auto loaded = from_pretrained(ref, opts);
  if (auto* p = std::get_if<std::shared_ptr<Pipeline>>(&loaded)) return *p;
  fail(ErrorCode::kInvalidArgument, ref + " is a module, not a pipeline");
}

}  // namespace crskit
