#pragma once

#include <json.hpp>

#include <atomic>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "crskit/protocol.h"
#include "crskit/tokenization.h"
#include "crskit/weights.h"

namespace crskit {

using Json = nlohmann::json;

struct ModuleConfig {
  std::string module_type;
  std::string version = "1";
  Json params = Json::object();

  Json to_json() const;
  static ModuleConfig from_json(const Json& j);
  bool operator==(const ModuleConfig&) const = default;
};

enum class ModuleKind { kRecommender, kGenerator, kProcessor };

// Span prefix used for a module of this kind: "rec", "gen" or "proc".
std::string_view role_of(ModuleKind kind);

struct RecItem {
  std::int64_t item_id = 0;
  std::string name;
  double score = 0.0;

  bool operator==(const RecItem&) const = default;
};

using RecList = std::vector<RecItem>;

class ModuleOutput {
 public:
  explicit ModuleOutput(std::string text) : value_(std::move(text)) {}
  explicit ModuleOutput(RecList recs) : value_(std::move(recs)) {}

  bool is_text() const { return std::holds_alternative<std::string>(value_); }
  // Throw kInvalidArgument when the other variant is populated.
  const std::string& text() const;
  const RecList& recommendations() const;

  bool operator==(const ModuleOutput&) const = default;

 private:
  std::variant<std::string, RecList> value_;
};

class CancelToken {
 public:
  void cancel() { cancelled_.store(true); }
  bool cancelled() const { return cancelled_.load(); }

 private:
  std::atomic<bool> cancelled_{false};
};

struct GenChunk {
  std::string text;
  bool is_final = false;
};

using ChunkSink = std::function<void(const GenChunk&)>;

// Per-call plumbing handed down from the pipeline: a streaming sink and a
// cooperative cancellation flag. Both optional.
struct CallContext {
  ChunkSink on_chunk;
  std::shared_ptr<const CancelToken> cancel;

  bool cancelled() const { return cancel && cancel->cancelled(); }
  void emit(const GenChunk& chunk) const {
    if (on_chunk) on_chunk(chunk);
  }
};

using TensorMap = std::map<std::string, Tensor>;

// Base of recommender, generator and processor modules. `forward` is the
// tensor-level computation; `response` is the text-level entry point that
// pipelines call, built from encode + forward + decode.
class Module {
 public:
  virtual ~Module() = default;

  virtual ModuleKind kind() const = 0;
  const std::string& name() const { return name_; }
  const ModuleConfig& config() const { return config_; }

  virtual const CompositeTokenizer* tokenizer() const { return nullptr; }

  // Default throws kInvalidArgument: text-only modules have no tensor path.
  virtual TensorMap forward(const TensorMap& inputs, const TensorMap* labels = nullptr) const;

  virtual ModuleOutput response(const Dialog& dialog, const Json& kwargs,
                                const CallContext& ctx) const = 0;
  ModuleOutput response(const Dialog& dialog, const Json& kwargs = Json::object()) const {
    return response(dialog, kwargs, CallContext{});
  }

  // Artifact payload: weights (may be empty) and extra files keyed by
  // artifact-relative path (tokenizer assets).
  virtual WeightsFile weights() const { return {}; }
  virtual std::map<std::string, std::string> asset_files() const;

 protected:
  Module(std::string name, ModuleConfig config)
      : name_(std::move(name)), config_(std::move(config)) {}

 private:
  std::string name_;
  ModuleConfig config_;
};

// kwargs helpers: value of `key` if present and of the right type.
std::optional<std::int64_t> kwarg_int(const Json& kwargs, const char* key);
std::optional<double> kwarg_double(const Json& kwargs, const char* key);
std::optional<std::string> kwarg_string(const Json& kwargs, const char* key);

}  // namespace crskit
