#include "support.h"

#include <httplib.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <set>
#include <thread>

#include "crskit/error.h"
#include "crskit/tokenization.h"

namespace testsupport {
namespace fs = std::filesystem;
using namespace crskit;

TempDir::TempDir() {
  static std::atomic<int> counter{0};
  std::random_device rd;
  path_ = fs::temp_directory_path() /
          ("crskit-test-" + std::to_string(rd()) + "-" + std::to_string(counter++));
  fs::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

const char* const kWalkthroughContext =
    "User: Hello!<sep>"
    "System: Hello, I have some movie ideas for you. Have you watched the movie "
    "<entity>Forever My Girl (2018)</entity> ?<sep>"
    "User: Looking for movies in the comedy category. I like Adam Sandler movies like "
    "<entity>Billy Madison (1995)</entity> Oh no is that good?";

// ---------------------------------------------------------------------------

namespace {

template <typename T>
const T& pick(std::mt19937_64& rng, const std::vector<T>& v) {
  return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)];
}

bool coin(std::mt19937_64& rng, double p) {
  return std::bernoulli_distribution(p)(rng);
}

const std::vector<std::string> kWords = {
    "i",  "like", "the", "movie", "sep", "entity", "e", "<", ">", "</", "<se", "sep>",
    "/",  "é",    "中文", "🎬",    "ok",  "User:", "System:", "!", "?", ",", "\t", "a"};

}  // namespace

std::string random_text(std::mt19937_64& rng, std::size_t max_words) {
  std::size_t n = std::uniform_int_distribution<std::size_t>(0, max_words)(rng);
  std::string out;
  for (std::size_t i = 0; i < n; ++i) {
    if (i && coin(rng, 0.7)) out += ' ';
    out += pick(rng, kWords);
  }
  // "<" followed by "sep>" spells a reserved token.
  while (contains_reserved_token(out)) out = strip_reserved_tokens(out);
  return out;
}

Utterance random_utterance(std::mt19937_64& rng) {
  Utterance u;
  u.role = coin(rng, 0.5) ? Role::kUser : Role::kSystem;
  int pieces = std::uniform_int_distribution<int>(1, 5)(rng);
  for (int i = 0; i < pieces; ++i) {
    if (coin(rng, 0.35)) {
      std::string surface;
      while (surface.empty()) surface = random_text(rng, 3);
      EntitySpan span{surface, u.text.size(), u.text.size() + surface.size(), std::nullopt};
      u.text += surface;
      u.spans.push_back(std::move(span));
    } else {
      u.text += random_text(rng, 6);
    }
  }
  // Joining pieces can create a reserved token across a boundary; retry.
  if (contains_reserved_token(u.text)) return random_utterance(rng);
  return u;
}

Dialog random_dialog(std::mt19937_64& rng, std::size_t max_turns) {
  Dialog d;
  std::size_t n = std::uniform_int_distribution<std::size_t>(1, max_turns)(rng);
  for (std::size_t i = 0; i < n; ++i) d.utterances.push_back(random_utterance(rng));
  return d;
}

std::vector<std::string> random_catalog_names(std::mt19937_64& rng, std::size_t n) {
  static const std::vector<std::string> words = {
      "the", "big", "daddy", "love", "you", "ride", "long", "night", "blue", "star",
      "a",   "go",  "home",  "x",    "war", "girl", "my",   "day",   "ones", "up"};
  std::set<std::string> seen;
  std::vector<std::string> names;
  while (names.size() < n) {
    int len = std::uniform_int_distribution<int>(1, 3)(rng);
    std::string name;
    for (int i = 0; i < len; ++i) {
      if (i) name += ' ';
      std::string w = pick(rng, words);
      if (coin(rng, 0.5)) w[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(w[0])));
      name += w;
    }
    if (coin(rng, 0.3)) name += " (" + std::to_string(1980 + rng() % 40) + ")";
    if (seen.insert(name).second) names.push_back(name);
  }
  return names;
}

std::string random_linker_text(std::mt19937_64& rng, const std::vector<std::string>& names) {
  static const std::vector<std::string> filler = {"i", "liked", "and", "or", "the", "é", "x1",
                                                  "(", ")", ",", ".", "big", "_", "-"};
  static const std::vector<std::string> seps = {" ", " ", " ", "", ", ", "é", "\n"};
  int n = std::uniform_int_distribution<int>(0, 12)(rng);
  std::string out;
  for (int i = 0; i < n; ++i) {
    if (i) out += pick(rng, seps);
    double r = std::uniform_real_distribution<double>(0, 1)(rng);
    if (r < 0.45) {
      std::string name = pick(rng, names);
      for (auto& c : name) {
        if (coin(rng, 0.2)) {
          c = static_cast<char>(coin(rng, 0.5) ? std::toupper(static_cast<unsigned char>(c))
                                               : std::tolower(static_cast<unsigned char>(c)));
        }
      }
      out += name;
    } else if (r < 0.6) {
      const auto& name = pick(rng, names);
      out += name.substr(0, std::uniform_int_distribution<std::size_t>(1, name.size())(rng));
    } else {
      out += pick(rng, filler);
    }
  }
  return out;
}

AutoRecParams random_params(std::mt19937_64& rng, std::size_t n, std::size_t d, double scale) {
  std::normal_distribution<double> normal(0.0, scale);
  auto p = AutoRecParams::zeros(n, d);
  for (Eigen::Index i = 0; i < p.W1.size(); ++i) p.W1.data()[i] = normal(rng);
  for (Eigen::Index i = 0; i < p.b1.size(); ++i) p.b1.data()[i] = normal(rng);
  for (Eigen::Index i = 0; i < p.W2.size(); ++i) p.W2.data()[i] = normal(rng);
  for (Eigen::Index i = 0; i < p.b2.size(); ++i) p.b2.data()[i] = normal(rng);
  return p;
}

RatingVector random_ratings(std::mt19937_64& rng, std::size_t n, double density) {
  RatingVector r{n, {}};
  for (std::size_t i = 0; i < n; ++i) {
    if (coin(rng, density)) r.ratings[static_cast<std::int64_t>(i)] = coin(rng, 0.5) ? 1 : -1;
  }
  return r;
}

// ---------------------------------------------------------------------------

std::vector<EntitySpan> brute_force_link(std::string_view text,
                                         const std::vector<std::string>& names,
                                         bool case_sensitive, bool word_boundary) {
  auto norm = [&](std::string_view s) {
    std::string out(s);
    if (!case_sensitive) {
      for (auto& c : out) {
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
      }
    }
    return out;
  };
  auto word = [](char c) {
    auto u = static_cast<unsigned char>(c);
    return u >= 0x80 || (u >= '0' && u <= '9') || (u >= 'a' && u <= 'z') || (u >= 'A' && u <= 'Z');
  };

  struct Candidate {
    std::size_t start, end;
    std::int64_t id;
  };
  std::vector<Candidate> all;
  for (std::size_t start = 0; start < text.size(); ++start) {
    for (std::size_t id = 0; id < names.size(); ++id) {
      const auto& name = names[id];
      if (name.empty() || start + name.size() > text.size()) continue;
      if (norm(text.substr(start, name.size())) != norm(name)) continue;
      std::size_t end = start + name.size();
      if (word_boundary) {
        if (start > 0 && word(text[start - 1])) continue;
        if (end < text.size() && word(text[end])) continue;
      }
      all.push_back({start, end, static_cast<std::int64_t>(id)});
    }
  }
  // Filter: leftmost first, then longest, then lowest id.
  std::sort(all.begin(), all.end(), [](const Candidate& a, const Candidate& b) {
    if (a.start != b.start) return a.start < b.start;
    if (a.end != b.end) return a.end > b.end;
    return a.id < b.id;
  });
  std::vector<EntitySpan> out;
  std::size_t covered = 0;
  for (const auto& c : all) {
    if (c.start < covered) continue;
    out.push_back({std::string(text.substr(c.start, c.end - c.start)), c.start, c.end, c.id});
    covered = c.end;
  }
  return out;
}

std::vector<double> naive_forward(const AutoRecParams& p, const std::vector<double>& r) {
  const auto d = static_cast<std::size_t>(p.W1.rows());
  const auto n = static_cast<std::size_t>(p.W1.cols());
  std::vector<double> h(d), s(n);
  for (std::size_t j = 0; j < d; ++j) {
    double a = p.b1(j);
    for (std::size_t i = 0; i < n; ++i) a += p.W1(j, i) * r[i];
    h[j] = 1.0 / (1.0 + std::exp(-a));
  }
  for (std::size_t i = 0; i < n; ++i) {
    double v = p.b2(i);
    for (std::size_t j = 0; j < d; ++j) v += p.W2(i, j) * h[j];
    s[i] = v;
  }
  return s;
}

AutoRecParams numeric_gradient(const AutoRecParams& p, const std::vector<RatingVector>& batch,
                               double lambda, double eps) {
  auto g = AutoRecParams::zeros(p.num_items(), p.hidden());
  auto q = p;
  auto visit = [&](double* dst, double* param, Eigen::Index size) {
    for (Eigen::Index i = 0; i < size; ++i) {
      double keep = param[i];
      param[i] = keep + eps;
      double up = autorec_loss(q, batch, lambda);
      param[i] = keep - eps;
      double down = autorec_loss(q, batch, lambda);
      param[i] = keep;
      dst[i] = (up - down) / (2 * eps);
    }
  };
  visit(g.W1.data(), q.W1.data(), q.W1.size());
  visit(g.b1.data(), q.b1.data(), q.b1.size());
  visit(g.W2.data(), q.W2.data(), q.W2.size());
  visit(g.b2.data(), q.b2.data(), q.b2.size());
  return g;
}

double gradient_relative_error(const AutoRecParams& a, const AutoRecParams& n) {
  auto block = [](const auto& x, const auto& y) {
    double denom = std::max(x.norm(), y.norm());
    return denom == 0.0 ? 0.0 : (x - y).norm() / denom;
  };
  return std::max({block(a.W1, n.W1), block(a.b1, n.b1), block(a.W2, n.W2), block(a.b2, n.b2)});
}

// ---------------------------------------------------------------------------

FixedRec::FixedRec(std::string name, RecList ranking)
    : Module(std::move(name), ModuleConfig{"fixed-rec", "1", Json::object()}),
      ranking_(std::move(ranking)) {}

ModuleOutput FixedRec::response(const Dialog&, const Json& kwargs, const CallContext&) const {
  ++calls;
  auto k = kwarg_int(kwargs, "top_k");
  RecList out = ranking_;
  if (k && static_cast<std::size_t>(*k) < out.size()) out.resize(static_cast<std::size_t>(*k));
  return ModuleOutput(std::move(out));
}

FixedGen::FixedGen(std::string name, std::string text, std::chrono::milliseconds delay)
    : Module(std::move(name), ModuleConfig{"fixed-gen", "1", Json::object()}),
      text_(std::move(text)),
      delay_(delay) {}

ModuleOutput FixedGen::response(const Dialog&, const Json& kwargs,
                                const CallContext& ctx) const {
  {
    std::lock_guard lock(mu);
    last_kwargs = kwargs;
  }
  std::size_t start = 0;
  while (start < text_.size()) {
    if (delay_.count()) std::this_thread::sleep_for(delay_);
    if (ctx.cancelled()) fail(ErrorCode::kCancelled, "cancelled");
    auto sp = text_.find(' ', start);
    auto end = sp == std::string::npos ? text_.size() : sp + 1;
    ctx.emit({text_.substr(start, end - start), false});
    start = end;
  }
  ctx.emit({"", true});
  return ModuleOutput(text_);
}

// ---------------------------------------------------------------------------

struct StubLlm::Impl {
  httplib::Server server;
  std::thread thread;
  int port = 0;
  mutable std::mutex mu;
  StubScript script;
  Json last_body;
  std::string last_auth;
};

namespace {

std::vector<std::string> utf8_pieces(const std::string& s, std::size_t size) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < s.size()) {
    std::size_t j = std::min(i + size, s.size());
    while (j < s.size() && (static_cast<unsigned char>(s[j]) & 0xC0) == 0x80) ++j;
    out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

}  // namespace

StubLlm::StubLlm(StubScript script) : impl_(std::make_unique<Impl>()) {
  impl_->script = std::move(script);
  impl_->server.Post("/v1/chat/completions", [this](const httplib::Request& req,
                                                    httplib::Response& res) {
    int n = ++requests_;
    StubScript script;
    Json body = Json::parse(req.body, nullptr, false);
    {
      std::lock_guard lock(impl_->mu);
      impl_->last_body = body;
      impl_->last_auth = req.get_header_value("Authorization");
      script = impl_->script;
    }
    if (n <= script.fail_first) {
      res.status = script.fail_status;
      res.set_content(script.fail_body, "application/json");
      return;
    }
    std::vector<std::string> chunks = script.chunks;
    if (script.echo_prompt && body.is_object()) {
      chunks = utf8_pieces(body["messages"][0]["content"].get<std::string>(), 5);
    }
    if (script.plain_json) {
      std::string text;
      for (const auto& c : chunks) text += c;
      Json reply = {{"choices", {{{"message", {{"role", "assistant"}, {"content", text}}}}}}};
      res.set_content(reply.dump(), "application/json");
      return;
    }
    int delay = script.chunk_delay_ms;
    res.set_chunked_content_provider(
        "text/event-stream", [this, chunks, delay](std::size_t, httplib::DataSink& sink) {
          for (const auto& c : chunks) {
            if (delay) std::this_thread::sleep_for(std::chrono::milliseconds(delay));
            Json event = {{"choices", {{{"index", 0}, {"delta", {{"content", c}}}}}}};
            std::string line = "data: " + event.dump() + "\n\n";
            if (!sink.write(line.data(), line.size())) return false;
            ++chunks_sent_;
          }
          std::string done = "data: [DONE]\n\n";
          sink.write(done.data(), done.size());
          sink.done();
          return true;
        });
  });
  impl_->port = impl_->server.bind_to_any_port("127.0.0.1");
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
}

StubLlm::~StubLlm() {
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

std::string StubLlm::base_url() const {
  return "http://127.0.0.1:" + std::to_string(impl_->port) + "/v1";
}

Json StubLlm::last_body() const {
  std::lock_guard lock(impl_->mu);
  return impl_->last_body;
}

std::string StubLlm::last_authorization() const {
  std::lock_guard lock(impl_->mu);
  return impl_->last_auth;
}

void StubLlm::set_script(StubScript s) {
  std::lock_guard lock(impl_->mu);
  impl_->script = std::move(s);
}

ScopedEnv::ScopedEnv(std::string name, const char* value) : name_(std::move(name)) {
  if (const char* old = std::getenv(name_.c_str())) {
    had_old_ = true;
    old_ = old;
  }
  if (value) {
    ::setenv(name_.c_str(), value, 1);
  } else {
    ::unsetenv(name_.c_str());
  }
}

ScopedEnv::~ScopedEnv() {
  if (had_old_) {
    ::setenv(name_.c_str(), old_.c_str(), 1);
  } else {
    ::unsetenv(name_.c_str());
  }
}

// ---------------------------------------------------------------------------

SseResult post_sse(const std::string& base_url, const std::string& path, const Json& body,
                   const std::function<bool(const SseEvent&)>& on_event) {
  httplib::Client cli(base_url);
  cli.set_read_timeout(30, 0);
  httplib::Request req;
  req.method = "POST";
  req.path = path;
  req.body = body.dump();
  req.set_header("Content-Type", "application/json");

  SseResult result;
  std::string buffer;
  SseEvent current;
  bool keep_going = true;
  req.response_handler = [&](const httplib::Response& r) {
    result.status = r.status;
    return true;
  };
  req.content_receiver = [&](const char* data, std::size_t n, std::uint64_t, std::uint64_t) {
    if (result.status != 200) {
      result.body.append(data, n);
      return true;
    }
    buffer.append(data, n);
    std::size_t nl;
    while ((nl = buffer.find('\n')) != std::string::npos) {
      std::string line = buffer.substr(0, nl);
      buffer.erase(0, nl + 1);
      if (line.rfind("event: ", 0) == 0) {
        current.event = line.substr(7);
      } else if (line.rfind("data: ", 0) == 0) {
        current.data = Json::parse(line.substr(6), nullptr, false);
      } else if (line.empty() && !current.event.empty()) {
        result.events.push_back(current);
        if (on_event && !on_event(current)) keep_going = false;
        current = {};
      }
    }
    return keep_going;
  };
  httplib::Response res;
  httplib::Error err;
  cli.send(req, res, err);
  if (result.status == 0) result.status = res.status;
  return result;
}

namespace {

HttpResult finish(const httplib::Result& res) {
  HttpResult out;
  if (!res) return out;
  out.status = res->status;
  out.body = res->body;
  out.json = Json::parse(res->body, nullptr, false);
  out.content_disposition = res->get_header_value("Content-Disposition");
  return out;
}

}  // namespace

HttpResult http_get(const std::string& base_url, const std::string& path) {
  httplib::Client cli(base_url);
  return finish(cli.Get(path));
}

HttpResult http_post(const std::string& base_url, const std::string& path, const Json& body) {
  httplib::Client cli(base_url);
  return finish(cli.Post(path, body.dump(), "application/json"));
}

HttpResult http_delete(const std::string& base_url, const std::string& path) {
  httplib::Client cli(base_url);
  return finish(cli.Delete(path));
}

std::map<std::string, std::string> read_tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    out[fs::relative(e.path(), root).generic_string()] = crskit::read_file(e.path());
  }
  return out;
}

std::string MemorySource::read(const std::string& relpath) const {
  auto it = files_.find(relpath);
  if (it == files_.end()) crskit::fail(crskit::ErrorCode::kNotFound, relpath);
  return it->second;
}

std::unique_ptr<crskit::ArtifactSource> MemorySource::child(const std::string& name) const {
  std::map<std::string, std::string> sub;
  const std::string prefix = name + "/";
  for (const auto& [k, v] : files_) {
    if (k.rfind(prefix, 0) == 0) sub[k.substr(prefix.size())] = v;
  }
  return std::make_unique<MemorySource>(std::move(sub));
}

}  // namespace testsupport
