#pragma once

// Execution monitoring. A pipeline call opens a root span; every monitored
// operation running on the same thread underneath it records a child span.
// Finished traces land in a bounded in-memory ring owned by a Collector.

#include <cstdint>
#include <deque>
#include <iosfwd>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace crskit::monitor {

inline constexpr std::size_t kMaxDigestChars = 2048;
inline constexpr std::size_t kDefaultTraceCapacity = 256;

struct Span {
  std::uint64_t span_id = 0;
  std::optional<std::uint64_t> parent_id;
  std::string trace_id;
  std::string name;  // "<module>.<operation>"
  std::int64_t start_ns = 0;
  std::int64_t end_ns = 0;
  std::string input_digest;
  std::string output_digest;  // "error: ..." when the operation threw

  bool operator==(const Span&) const = default;
};

struct Trace {
  std::string trace_id;
  std::vector<Span> spans;
};

// Truncates to at most kMaxDigestChars bytes without splitting a UTF-8 sequence.
std::string summarize(std::string_view text);

// Module prefix of a span name: "rec.respond" -> "rec".
std::string_view module_of(std::string_view span_name);

class Collector {
 public:
  explicit Collector(std::size_t capacity = kDefaultTraceCapacity);

  static Collector& global();

  void commit(Trace trace);
  std::shared_ptr<const Trace> find(const std::string& trace_id) const;
  std::size_t size() const;
  std::size_t capacity() const { return capacity_; }

  // Appends every committed span as one JSON object per line. Empty disables.
  void set_export_path(std::string path);

 private:
  std::size_t capacity_;
  mutable std::mutex mu_;
  std::deque<std::shared_ptr<const Trace>> ring_;
  std::unordered_map<std::string, std::shared_ptr<const Trace>> by_id_;
  std::string export_path_;
};

struct ActiveTrace;

// RAII span. Opening one outside any active trace starts a new trace when
// constructed via root(); plain construction outside a trace records nothing.
class ScopedSpan {
 public:
  ScopedSpan(std::string name, std::string_view input);
  static ScopedSpan root(std::string name, std::string_view input,
                         Collector& collector = Collector::global());
  ~ScopedSpan();

  ScopedSpan(ScopedSpan&& other) noexcept;
  ScopedSpan(const ScopedSpan&) = delete;
  ScopedSpan& operator=(const ScopedSpan&) = delete;
  ScopedSpan& operator=(ScopedSpan&&) = delete;

  void set_output(std::string_view output);
  void set_error(std::string_view message);

  // Empty when recording is inactive.
  const std::string& trace_id() const;
  bool active() const { return index_ >= 0; }

 private:
  ScopedSpan() = default;
  void open(std::string name, std::string_view input);

  std::shared_ptr<ActiveTrace> trace_;
  int index_ = -1;
  bool owns_trace_ = false;
};

// Trace id of the thread's active trace, or empty.
std::string current_trace_id();

// Runs fn under a span; `describe` renders the result for the output digest.
template <typename Fn, typename Describe>
auto monitored(std::string name, std::string_view input, Fn&& fn, Describe&& describe) {
  ScopedSpan span(std::move(name), input);
  try {
    auto result = fn();
    if (span.active()) span.set_output(describe(result));
    return result;
  } catch (const std::exception& e) {
    span.set_error(e.what());
    throw;
  } catch (...) {
    span.set_error("unknown exception");
    throw;
  }
}

struct TimelineRow {
  std::uint64_t span_id = 0;
  std::string name;
  int depth = 0;
  std::int64_t start_ns = 0;
  std::int64_t end_ns = 0;
};

// Rows sorted by start_ns (ties by depth, then span id). Throws kMalformedTrace
// on an empty trace, orphan parent, foreign trace id or multiple roots.
std::vector<TimelineRow> assemble_timeline(const Trace& trace);

struct GraphEdge {
  std::string caller;
  std::string callee;
  std::size_t count = 0;
};

struct CallGraph {
  std::vector<std::string> nodes;  // first-appearance order
  std::vector<GraphEdge> edges;
};

// One node per module prefix; edges count parent->child span pairs whose
// modules differ.
CallGraph assemble_graph(const Trace& trace);

void write_jsonl(const Trace& trace, std::ostream& out);

}  // namespace crskit::monitor
