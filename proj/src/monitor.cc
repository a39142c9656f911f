#include "crskit/monitor.h"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <fstream>
#include <functional>
#include <random>

#include "crskit/error.h"

namespace crskit::monitor {

struct ActiveTrace {
  Collector* collector = nullptr;
  Trace trace;
  std::vector<int> open;  // indices into trace.spans, innermost last
};

namespace {

thread_local std::shared_ptr<ActiveTrace> tl_active;
std::atomic<std::uint64_t> g_next_span_id{1};

std::int64_t now_ns() {
  return std::chrono::duration_cast<std::chrono::nanoseconds>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

std::string new_trace_id() {
  static std::atomic<std::uint64_t> counter{0};
  thread_local std::mt19937_64 rng(std::random_device{}() ^
                                   (counter.fetch_add(1) * 0x9E3779B97F4A7C15ull));
  static constexpr char kHex[] = "0123456789abcdef";
  std::uint64_t v = rng();
  std::string id(16, '0');
  for (int i = 15; i >= 0; --i) {
    id[i] = kHex[v & 0xF];
    v >>= 4;
  }
  return id;
}

const std::string kEmpty;

}  // namespace

std::string summarize(std::string_view text) {
  if (text.size() <= kMaxDigestChars) return std::string(text);
  static constexpr std::string_view kEllipsis = "...";
  std::size_t cut = kMaxDigestChars - kEllipsis.size();
  while (cut > 0 && (static_cast<unsigned char>(text[cut]) & 0xC0) == 0x80) --cut;
  std::string out(text.substr(0, cut));
  out += kEllipsis;
  return out;
}

std::string_view module_of(std::string_view span_name) {
  return span_name.substr(0, span_name.find('.'));
}

// ---------------------------------------------------------------------------
// Collector

Collector::Collector(std::size_t capacity) : capacity_(std::max<std::size_t>(1, capacity)) {}

Collector& Collector::global() {
  static Collector instance;
  return instance;
}

void Collector::commit(Trace trace) {
  auto shared = std::make_shared<const Trace>(std::move(trace));
  std::string export_path;
  {
    std::lock_guard lock(mu_);
    ring_.push_back(shared);
    by_id_[shared->trace_id] = shared;
    while (ring_.size() > capacity_) {
      by_id_.erase(ring_.front()->trace_id);
      ring_.pop_front();
    }
    export_path = export_path_;
  }
  if (!export_path.empty()) {
    std::lock_guard lock(mu_);
    std::ofstream out(export_path, std::ios::app);
    if (out) write_jsonl(*shared, out);
  }
}

std::shared_ptr<const Trace> Collector::find(const std::string& trace_id) const {
  std::lock_guard lock(mu_);
  auto it = by_id_.find(trace_id);
  return it == by_id_.end() ? nullptr : it->second;
}

std::size_t Collector::size() const {
  std::lock_guard lock(mu_);
  return ring_.size();
}

void Collector::set_export_path(std::string path) {
  std::lock_guard lock(mu_);
  export_path_ = std::move(path);
}

// ---------------------------------------------------------------------------
// ScopedSpan

ScopedSpan::ScopedSpan(std::string name, std::string_view input) {
  if (tl_active) {
    trace_ = tl_active;
    open(std::move(name), input);
  }
}

ScopedSpan ScopedSpan::root(std::string name, std::string_view input, Collector& collector) {
  ScopedSpan span;
  if (tl_active) {
    span.trace_ = tl_active;
  } else {
    auto active = std::make_shared<ActiveTrace>();
    active->collector = &collector;
    active->trace.trace_id = new_trace_id();
    tl_active = active;
    span.trace_ = std::move(active);
    span.owns_trace_ = true;
  }
  span.open(std::move(name), input);
  return span;
}

void ScopedSpan::open(std::string name, std::string_view input) {
  try {
    Span s;
    s.span_id = g_next_span_id.fetch_add(1);
    s.trace_id = trace_->trace.trace_id;
    if (!trace_->open.empty()) s.parent_id = trace_->trace.spans[trace_->open.back()].span_id;
    s.name = std::move(name);
    s.input_digest = summarize(input);
    s.start_ns = now_ns();
    index_ = static_cast<int>(trace_->trace.spans.size());
    trace_->trace.spans.push_back(std::move(s));
    trace_->open.push_back(index_);
  } catch (...) {
    index_ = -1;
  }
}

ScopedSpan::ScopedSpan(ScopedSpan&& other) noexcept
    : trace_(std::move(other.trace_)), index_(other.index_), owns_trace_(other.owns_trace_) {
  other.index_ = -1;
  other.owns_trace_ = false;
}

ScopedSpan::~ScopedSpan() {
  if (!trace_ || index_ < 0) return;
  try {
    trace_->trace.spans[index_].end_ns = now_ns();
    auto& open = trace_->open;
    auto it = std::find(open.begin(), open.end(), index_);
    if (it != open.end()) open.erase(it);
    if (owns_trace_) {
      if (tl_active == trace_) tl_active.reset();
      trace_->collector->commit(std::move(trace_->trace));
    }
  } catch (...) {
    // Monitoring must never fail the monitored call.
  }
}

void ScopedSpan::set_output(std::string_view output) {
  if (index_ >= 0) trace_->trace.spans[index_].output_digest = summarize(output);
}

void ScopedSpan::set_error(std::string_view message) {
  if (index_ >= 0) {
    trace_->trace.spans[index_].output_digest = summarize("error: " + std::string(message));
  }
}

const std::string& ScopedSpan::trace_id() const {
  return trace_ ? trace_->trace.trace_id : kEmpty;
}

std::string current_trace_id() {
  return tl_active ? tl_active->trace.trace_id : std::string();
}

// ---------------------------------------------------------------------------
// Views

namespace {

// Depth of every span (by index), validating parentage.
std::vector<int> span_depths(const Trace& trace) {
  if (trace.spans.empty()) fail(ErrorCode::kMalformedTrace, "trace has no spans");
  std::unordered_map<std::uint64_t, std::size_t> index;
  for (std::size_t i = 0; i < trace.spans.size(); ++i) {
    const auto& s = trace.spans[i];
    if (s.trace_id != trace.trace_id) {
      fail(ErrorCode::kMalformedTrace, "span " + std::to_string(s.span_id) + " from another trace");
    }
    if (!index.emplace(s.span_id, i).second) {
      fail(ErrorCode::kMalformedTrace, "duplicate span id " + std::to_string(s.span_id));
    }
  }
  std::size_t roots = 0;
  for (const auto& s : trace.spans) {
    if (!s.parent_id) {
      ++roots;
    } else if (!index.count(*s.parent_id)) {
      fail(ErrorCode::kMalformedTrace, "orphan span " + std::to_string(s.span_id));
    }
  }
  if (roots != 1) fail(ErrorCode::kMalformedTrace, "trace must have exactly one root");

  std::vector<int> depth(trace.spans.size(), -1);
  std::function<int(std::size_t, std::size_t)> resolve = [&](std::size_t i, std::size_t hops) {
    if (depth[i] >= 0) return depth[i];
    if (hops > trace.spans.size()) fail(ErrorCode::kMalformedTrace, "cycle in span parents");
    const auto& s = trace.spans[i];
    depth[i] = s.parent_id ? resolve(index.at(*s.parent_id), hops + 1) + 1 : 0;
    return depth[i];
  };
  for (std::size_t i = 0; i < trace.spans.size(); ++i) resolve(i, 0);
  return depth;
}

}  // namespace

std::vector<TimelineRow> assemble_timeline(const Trace& trace) {
  auto depth = span_depths(trace);
  std::vector<TimelineRow> rows;
  rows.reserve(trace.spans.size());
  for (std::size_t i = 0; i < trace.spans.size(); ++i) {
    const auto& s = trace.spans[i];
    rows.push_back({s.span_id, s.name, depth[i], s.start_ns, s.end_ns});
  }
  std::sort(rows.begin(), rows.end(), [](const TimelineRow& a, const TimelineRow& b) {
    if (a.start_ns != b.start_ns) return a.start_ns < b.start_ns;
    if (a.depth != b.depth) return a.depth < b.depth;
    return a.span_id < b.span_id;
  });
  return rows;
}

CallGraph assemble_graph(const Trace& trace) {
  auto rows = assemble_timeline(trace);
  std::unordered_map<std::uint64_t, const Span*> by_id;
  for (const auto& s : trace.spans) by_id[s.span_id] = &s;

  CallGraph graph;
  auto add_node = [&](std::string_view name) {
    if (std::find(graph.nodes.begin(), graph.nodes.end(), name) == graph.nodes.end()) {
      graph.nodes.emplace_back(name);
    }
  };
  for (const auto& row : rows) {
    const Span& s = *by_id.at(row.span_id);
    auto callee = module_of(s.name);
    add_node(callee);
    if (!s.parent_id) continue;
    auto caller = module_of(by_id.at(*s.parent_id)->name);
    if (caller == callee) continue;
    auto it = std::find_if(graph.edges.begin(), graph.edges.end(), [&](const GraphEdge& e) {
      return e.caller == caller && e.callee == callee;
    });
    if (it == graph.edges.end()) {
      graph.edges.push_back({std::string(caller), std::string(callee), 1});
    } else {
      ++it->count;
    }
  }
  return graph;
}

void write_jsonl(const Trace& trace, std::ostream& out) {
  for (const auto& s : trace.spans) {
    nlohmann::json j = {
        {"span_id", s.span_id},
        {"parent_id", s.parent_id ? nlohmann::json(*s.parent_id) : nlohmann::json(nullptr)},
        {"trace_id", s.trace_id},
        {"name", s.name},
        {"start_ns", s.start_ns},
        {"end_ns", s.end_ns},
        {"input_digest", s.input_digest},
        {"output_digest", s.output_digest},
    };
    out << j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace) << '\n';
  }
}

}  // namespace crskit::monitor
