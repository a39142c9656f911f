#pragma once

#include <memory>
#include <string>
#include <string_view>

#include "crskit/module.h"
#include "crskit/monitor.h"

namespace crskit {

enum class PipelineKind { kExpansion, kFillblank };

std::string_view to_string(PipelineKind kind);
PipelineKind parse_pipeline_kind(std::string_view s);  // kInvalidConfig

struct PipelineConfig {
  PipelineKind kind = PipelineKind::kExpansion;
  std::size_t top_k = 3;
  std::string placeholder = "<item>";
  bool auto_link = true;

  void validate() const;
  Json to_json() const;
  static PipelineConfig from_json(const Json& j);
};

struct PipelineOutput {
  std::string text;  // utterance body with entity markup
  RecList recommendations;
  std::string trace_id;
};

// Wraps every verbatim occurrence of a name (case-sensitive, whole words) in
// entity tags. Text that already carries markup keeps it; reserved tokens in
// unparseable text are stripped first. Returns the rendered body.
std::string tag_names(std::string_view text, const RecList& items);

// Kwargs may carry per-module objects under "rec", "gen" and "proc"; other
// top-level keys are ignored.
//
// Streaming: expansion forwards generator chunks as they arrive; fill-blank
// emits the substituted text as a single chunk. Both end with a final
// (is_final) chunk.
PipelineOutput expansion_respond(const Dialog& d, const Module& rec, const Module& gen,
                                 const Module* proc, const PipelineConfig& cfg,
                                 const Json& kwargs = Json::object(),
                                 const CallContext& ctx = {});
PipelineOutput fillblank_respond(const Dialog& d, const Module& rec, const Module& gen,
                                 const Module* proc, const PipelineConfig& cfg,
                                 const Json& kwargs = Json::object(),
                                 const CallContext& ctx = {});

inline constexpr std::string_view kPipelineType = "pipeline";

class Pipeline {
 public:
  Pipeline(std::string name, PipelineConfig cfg, std::shared_ptr<const Module> rec,
           std::shared_ptr<const Module> gen, std::shared_ptr<const Module> proc = nullptr);

  // The call is recorded as a trace rooted at "pipeline.respond" in
  // `collector` (nested instead when a trace is already active).
  PipelineOutput respond(const Dialog& d, const Json& kwargs = Json::object(),
                         const CallContext& ctx = {},
                         monitor::Collector& collector = monitor::Collector::global()) const;
  PipelineOutput respond(std::string_view wire, const Json& kwargs = Json::object(),
                         const CallContext& ctx = {},
                         monitor::Collector& collector = monitor::Collector::global()) const;

  const std::string& name() const { return name_; }
  const PipelineConfig& config() const { return cfg_; }
  const Module& rec() const { return *rec_; }
  const Module& gen() const { return *gen_; }
  const Module* proc() const { return proc_.get(); }

 private:
  std::string name_;
  PipelineConfig cfg_;
  std::shared_ptr<const Module> rec_;
  std::shared_ptr<const Module> gen_;
  std::shared_ptr<const Module> proc_;
};

}  // namespace crskit
