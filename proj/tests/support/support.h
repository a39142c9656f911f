#pragma once

// Shared test fixtures: temp dirs, random generators, independent oracles,
// a scripted chat-completion stub and an event-stream client.

#include <atomic>
#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <random>
#include <string>
#include <vector>

#include "crskit/artifact.h"
#include "crskit/autorec.h"
#include "crskit/module.h"
#include "crskit/protocol.h"

namespace testsupport {

using crskit::Json;

class TempDir {
 public:
  TempDir();
  ~TempDir();
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& p) const { return path_ / p; }

 private:
  std::filesystem::path path_;
};

// The three-turn dialog from the toolkit walkthrough.
extern const char* const kWalkthroughContext;

// ---- random generators ------------------------------------------------------

// Plain text without reserved tokens: ASCII words, punctuation, stray '<' and
// '>', multi-byte UTF-8.
std::string random_text(std::mt19937_64& rng, std::size_t max_words);
crskit::Utterance random_utterance(std::mt19937_64& rng);
crskit::Dialog random_dialog(std::mt19937_64& rng, std::size_t max_turns = 6);

std::vector<std::string> random_catalog_names(std::mt19937_64& rng, std::size_t n);
// Text mixing catalog names (random case), fragments of names and filler.
std::string random_linker_text(std::mt19937_64& rng, const std::vector<std::string>& names);

crskit::AutoRecParams random_params(std::mt19937_64& rng, std::size_t n, std::size_t d,
                                    double scale = 0.5);
crskit::RatingVector random_ratings(std::mt19937_64& rng, std::size_t n, double density = 0.4);

// ---- oracles ---------------------------------------------------------------

// Enumerates every (start, name) match, then keeps the leftmost-longest
// non-overlapping ones. Independent of the trie matcher.
std::vector<crskit::EntitySpan> brute_force_link(std::string_view text,
                                                 const std::vector<std::string>& names,
                                                 bool case_sensitive, bool word_boundary);

// Element-by-element loops, no Eigen products.
std::vector<double> naive_forward(const crskit::AutoRecParams& p, const std::vector<double>& r);

// Central differences of autorec_loss over every parameter entry.
crskit::AutoRecParams numeric_gradient(const crskit::AutoRecParams& p,
                                       const std::vector<crskit::RatingVector>& batch,
                                       double lambda, double eps);

// max over blocks of |a - n| / max(|a|, |n|) (Frobenius norms).
double gradient_relative_error(const crskit::AutoRecParams& analytic,
                               const crskit::AutoRecParams& numeric);

// ---- modules ---------------------------------------------------------------

// Recommender returning a fixed ranking, truncated to top_k.
class FixedRec : public crskit::Module {
 public:
  FixedRec(std::string name, crskit::RecList ranking);
  crskit::ModuleKind kind() const override { return crskit::ModuleKind::kRecommender; }
  crskit::ModuleOutput response(const crskit::Dialog& d, const Json& kwargs,
                                const crskit::CallContext& ctx) const override;
  using Module::response;
  mutable std::atomic<int> calls{0};

 private:
  crskit::RecList ranking_;
};

// Generator returning fixed text, optionally chunked with a delay.
class FixedGen : public crskit::Module {
 public:
  FixedGen(std::string name, std::string text, std::chrono::milliseconds delay = {});
  crskit::ModuleKind kind() const override { return crskit::ModuleKind::kGenerator; }
  crskit::ModuleOutput response(const crskit::Dialog& d, const Json& kwargs,
                                const crskit::CallContext& ctx) const override;
  using Module::response;
  mutable std::mutex mu;
  mutable Json last_kwargs;

 private:
  std::string text_;
  std::chrono::milliseconds delay_;
};

// ---- chat-completion stub --------------------------------------------------

struct StubScript {
  std::vector<std::string> chunks = {"a", "b", "c"};
  int fail_first = 0;        // requests answered with fail_status first
  int fail_status = 500;
  std::string fail_body = "{\"error\":\"injected\"}";
  int chunk_delay_ms = 0;
  bool echo_prompt = false;  // stream the prompt back in 5-byte chunks
  bool plain_json = false;   // ignore stream=true, answer with one JSON body
};

class StubLlm {
 public:
  explicit StubLlm(StubScript script = {});
  ~StubLlm();

  std::string base_url() const;  // "http://127.0.0.1:<port>/v1"
  int requests() const { return requests_.load(); }
  Json last_body() const;
  std::string last_authorization() const;
  // Chunks actually written to a client (across requests).
  int chunks_sent() const { return chunks_sent_.load(); }
  void set_script(StubScript s);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  std::atomic<int> requests_{0};
  std::atomic<int> chunks_sent_{0};
};

// Sets an environment variable for the scope.
class ScopedEnv {
 public:
  ScopedEnv(std::string name, const char* value);
  ~ScopedEnv();

 private:
  std::string name_;
  std::string old_;
  bool had_old_ = false;
};

// ---- artifacts --------------------------------------------------------------

// Every regular file under root keyed by its relative generic path.
std::map<std::string, std::string> read_tree(const std::filesystem::path& root);

// Artifact source over in-memory files; sub-artifacts live under "<name>/".
class MemorySource : public crskit::ArtifactSource {
 public:
  explicit MemorySource(std::map<std::string, std::string> files) : files_(std::move(files)) {}
  std::string describe() const override { return "memory"; }
  std::string read(const std::string& relpath) const override;
  std::unique_ptr<crskit::ArtifactSource> child(const std::string& name) const override;
  std::map<std::string, std::string>& files() { return files_; }

 private:
  std::map<std::string, std::string> files_;
};

// ---- event-stream client ---------------------------------------------------

struct SseEvent {
  std::string event;
  Json data;
};

struct SseResult {
  int status = 0;
  std::string body;  // raw body for non-stream replies
  std::vector<SseEvent> events;
};

// POSTs body and collects events; on_event may return false to disconnect.
SseResult post_sse(const std::string& base_url, const std::string& path, const Json& body,
                   const std::function<bool(const SseEvent&)>& on_event = nullptr);

struct HttpResult {
  int status = 0;
  Json json;
  std::string body;
  std::string content_disposition;
};

HttpResult http_get(const std::string& base_url, const std::string& path);
HttpResult http_post(const std::string& base_url, const std::string& path, const Json& body);
HttpResult http_delete(const std::string& base_url, const std::string& path);

}  // namespace testsupport
