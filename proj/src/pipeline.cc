#include "crskit/pipeline.h"

#include <algorithm>

#include "crskit/entity_linker.h"
#include "crskit/error.h"

namespace crskit {
namespace {

Json route(const Json& kwargs, const char* key) {
  if (!kwargs.is_object() || !kwargs.contains(key)) return Json::object();
  const auto& v = kwargs[key];
  if (v.is_null()) return Json::object();
  if (!v.is_object()) {
    fail(ErrorCode::kInvalidArgument, std::string("kwargs.") + key + " must be an object");
  }
  return v;
}

std::string describe_output(const ModuleOutput& out) {
  if (out.is_text()) return out.text();
  std::string s;
  for (const auto& r : out.recommendations()) {
    if (!s.empty()) s += "; ";
    s += r.name;
  }
  return s;
}

// Calls m.response under a "<role>.respond" span and tags escaping errors
// with the module name.
ModuleOutput call_module(const Module& m, const Dialog& d, const Json& kwargs,
                         const CallContext& ctx) {
  try {
    return monitor::monitored(
        std::string(role_of(m.kind())) + ".respond", kwargs.dump(),
        [&] { return m.response(d, kwargs, ctx); }, describe_output);
  } catch (Error& e) {
    if (e.module().empty()) e.set_module(m.name());
    throw;
  }
}

Dialog maybe_link(const Dialog& d, const Module* proc, const PipelineConfig& cfg,
                  const Json& kwargs) {
  if (!cfg.auto_link || proc == nullptr || d.utterances.empty()) return d;
  const auto& last = d.utterances.back();
  if (last.role != Role::kUser || !last.spans.empty()) return d;
  auto out = call_module(*proc, d, route(kwargs, "proc"), {});
  Dialog linked;
  try {
    linked = parse_dialog(out.text());
  } catch (Error& e) {
    e.set_module(proc->name());
    throw;
  }
  if (linked.utterances.size() != 1 || linked.utterances[0].role != Role::kUser ||
      linked.utterances[0].text != last.text) {
    Error e(ErrorCode::kInvalidArgument, "processor changed the user turn text");
    e.set_module(proc->name());
    throw e;
  }
  Dialog result = d;
  result.utterances.back() = std::move(linked.utterances[0]);
  return result;
}

// Generator text as a System utterance. Markup that parses is kept; anything
// else loses its reserved tokens and becomes plain text.
Utterance sanitize(std::string_view text) {
  try {
    return parse_body(Role::kSystem, text);
  } catch (const Error&) {
  }
  std::string clean(text);
  while (contains_reserved_token(clean)) clean = strip_reserved_tokens(clean);
  return Utterance{Role::kSystem, std::move(clean), {}};
}

bool overlaps(const EntitySpan& a, std::size_t start, std::size_t end) {
  return start < a.end && a.start < end;
}

std::vector<std::string> names_of(const RecList& recs) {
  std::vector<std::string> names;
  for (const auto& r : recs) names.push_back(r.name);
  return names;
}

// Forwards non-final generator chunks; the pipeline emits its own final one.
CallContext forwarding(const CallContext& ctx) {
  CallContext inner;
  inner.cancel = ctx.cancel;
  if (ctx.on_chunk) {
    inner.on_chunk = [&ctx](const GenChunk& c) {
      if (!c.is_final && !c.text.empty()) ctx.emit(c);
    };
  }
  return inner;
}

void check_cancel(const CallContext& ctx) {
  if (ctx.cancelled()) fail(ErrorCode::kCancelled, "generation cancelled");
}

}  // namespace

std::string_view to_string(PipelineKind kind) {
  return kind == PipelineKind::kExpansion ? "expansion" : "fillblank";
}

PipelineKind parse_pipeline_kind(std::string_view s) {
  if (s == "expansion") return PipelineKind::kExpansion;
  if (s == "fillblank") return PipelineKind::kFillblank;
  fail(ErrorCode::kInvalidConfig, "unknown pipeline kind \"" + std::string(s) + "\"");
}

void PipelineConfig::validate() const {
  if (placeholder.empty()) fail(ErrorCode::kInvalidConfig, "placeholder is empty");
  if (contains_reserved_token(placeholder)) {
    fail(ErrorCode::kInvalidConfig, "placeholder contains a reserved token");
  }
}

Json PipelineConfig::to_json() const {
  return Json{{"kind", std::string(to_string(kind))},
              {"top_k", top_k},
              {"placeholder", placeholder},
              {"auto_link", auto_link}};
}

PipelineConfig PipelineConfig::from_json(const Json& j) {
  PipelineConfig c;
  try {
    c.kind = parse_pipeline_kind(j.at("kind").get<std::string>());
    auto k = j.value("top_k", std::int64_t{3});
    if (k < 0) fail(ErrorCode::kInvalidConfig, "top_k must be non-negative");
    c.top_k = static_cast<std::size_t>(k);
    c.placeholder = j.value("placeholder", c.placeholder);
    c.auto_link = j.value("auto_link", c.auto_link);
  } catch (const Json::exception& e) {
    fail(ErrorCode::kInvalidConfig, std::string("pipeline config: ") + e.what());
  }
  c.validate();
  return c;
}

std::string tag_names(std::string_view text, const RecList& items) {
  Utterance u = sanitize(text);
  if (items.empty()) return render_body(u);

  std::vector<std::string> names;
  std::vector<std::int64_t> ids;
  for (const auto& r : items) {
    if (r.name.empty() || contains_reserved_token(r.name)) continue;
    if (std::find(names.begin(), names.end(), r.name) != names.end()) continue;
    names.push_back(r.name);
    ids.push_back(r.item_id);
  }
  EntityCatalog local(names);
  EntityMatcher matcher(local, LinkerConfig{true, true});
  for (auto span : matcher.match(u.text)) {
    bool clash = std::any_of(u.spans.begin(), u.spans.end(), [&](const EntitySpan& s) {
      return overlaps(s, span.start, span.end);
    });
    if (clash) continue;
    span.entity_id = ids[static_cast<std::size_t>(*span.entity_id)];
    u.spans.push_back(std::move(span));
  }
  std::sort(u.spans.begin(), u.spans.end(),
            [](const EntitySpan& a, const EntitySpan& b) { return a.start < b.start; });
  return render_body(u);
}

PipelineOutput expansion_respond(const Dialog& dialog, const Module& rec, const Module& gen,
                                 const Module* proc, const PipelineConfig& cfg,
                                 const Json& kwargs, const CallContext& ctx) {
  Dialog d = maybe_link(dialog, proc, cfg, kwargs);
  check_cancel(ctx);

  Json rec_kwargs = route(kwargs, "rec");
  if (!rec_kwargs.contains("top_k") && !rec_kwargs.contains("k")) rec_kwargs["top_k"] = cfg.top_k;
  RecList recs = call_module(rec, d, rec_kwargs, {}).recommendations();
  check_cancel(ctx);

  Json gen_kwargs = route(kwargs, "gen");
  gen_kwargs["items"] = names_of(recs);
  auto inner = forwarding(ctx);
  std::string text = call_module(gen, d, gen_kwargs, inner).text();
  check_cancel(ctx);

  PipelineOutput out;
  out.text = tag_names(text, recs);
  out.recommendations = std::move(recs);
  ctx.emit({"", true});
  return out;
}

PipelineOutput fillblank_respond(const Dialog& dialog, const Module& rec, const Module& gen,
                                 const Module* proc, const PipelineConfig& cfg,
                                 const Json& kwargs, const CallContext& ctx) {
  Dialog d = maybe_link(dialog, proc, cfg, kwargs);
  check_cancel(ctx);

  Json gen_kwargs = route(kwargs, "gen");
  if (!gen_kwargs.contains("slots")) gen_kwargs["slots"] = cfg.top_k;
  if (!gen_kwargs.contains("placeholder")) gen_kwargs["placeholder"] = cfg.placeholder;
  CallContext quiet;
  quiet.cancel = ctx.cancel;
  Utterance u = sanitize(call_module(gen, d, gen_kwargs, quiet).text());
  check_cancel(ctx);

  // Placeholder occurrences outside existing entity spans, left to right.
  std::vector<std::size_t> holes;
  const auto& ph = cfg.placeholder;
  for (std::size_t at = u.text.find(ph); at != std::string::npos;) {
    bool inside = std::any_of(u.spans.begin(), u.spans.end(), [&](const EntitySpan& s) {
      return overlaps(s, at, at + ph.size());
    });
    if (inside) {
      at = u.text.find(ph, at + 1);
      continue;
    }
    holes.push_back(at);
    at = u.text.find(ph, at + ph.size());
  }

  PipelineOutput out;
  if (!holes.empty()) {
    Json rec_kwargs = route(kwargs, "rec");
    rec_kwargs.erase("k");
    rec_kwargs["top_k"] = holes.size();
    out.recommendations = call_module(rec, d, rec_kwargs, {}).recommendations();
    if (out.recommendations.size() < holes.size()) {
      Error e(ErrorCode::kInsufficientRecommendations,
              std::to_string(holes.size()) + " placeholders but only " +
                  std::to_string(out.recommendations.size()) + " recommendations");
      e.set_module(rec.name());
      throw e;
    }
    check_cancel(ctx);

    Utterance filled{Role::kSystem, {}, {}};
    std::size_t pos = 0;
    std::size_t next_span = 0;
    auto copy_until = [&](std::size_t limit) {
      while (next_span < u.spans.size() && u.spans[next_span].start < limit) {
        const auto& s = u.spans[next_span++];
        filled.text.append(u.text, pos, s.start - pos);
        EntitySpan moved = s;
        moved.start = filled.text.size();
        filled.text += s.surface;
        moved.end = filled.text.size();
        filled.spans.push_back(std::move(moved));
        pos = s.end;
      }
      filled.text.append(u.text, pos, limit - pos);
      pos = limit;
    };
    for (std::size_t i = 0; i < holes.size(); ++i) {
      copy_until(holes[i]);
      const auto& item = out.recommendations[i];
      EntitySpan span{item.name, filled.text.size(), filled.text.size() + item.name.size(),
                      item.item_id};
      filled.text += item.name;
      filled.spans.push_back(std::move(span));
      pos += ph.size();
    }
    copy_until(u.text.size());
    u = std::move(filled);
  }
  out.text = render_body(u);
  ctx.emit({out.text, false});
  ctx.emit({"", true});
  return out;
}

Pipeline::Pipeline(std::string name, PipelineConfig cfg, std::shared_ptr<const Module> rec,
                   std::shared_ptr<const Module> gen, std::shared_ptr<const Module> proc)
    : name_(std::move(name)),
      cfg_(std::move(cfg)),
      rec_(std::move(rec)),
      gen_(std::move(gen)),
      proc_(std::move(proc)) {
  cfg_.validate();
  if (!rec_ || rec_->kind() != ModuleKind::kRecommender) {
    fail(ErrorCode::kInvalidConfig, "pipeline " + name_ + " needs a recommender module");
  }
  if (!gen_ || gen_->kind() != ModuleKind::kGenerator) {
    fail(ErrorCode::kInvalidConfig, "pipeline " + name_ + " needs a generator module");
  }
  if (proc_ && proc_->kind() != ModuleKind::kProcessor) {
    fail(ErrorCode::kInvalidConfig, "pipeline " + name_ + ": proc is not a processor module");
  }
}

PipelineOutput Pipeline::respond(const Dialog& d, const Json& kwargs, const CallContext& ctx,
                                 monitor::Collector& collector) const {
  auto root = monitor::ScopedSpan::root("pipeline.respond", render_dialog(d), collector);
  try {
    PipelineOutput out =
        cfg_.kind == PipelineKind::kExpansion
            ? expansion_respond(d, *rec_, *gen_, proc_.get(), cfg_, kwargs, ctx)
            : fillblank_respond(d, *rec_, *gen_, proc_.get(), cfg_, kwargs, ctx);
    out.trace_id = root.trace_id();
    root.set_output(out.text);
    return out;
  } catch (const std::exception& e) {
    root.set_error(e.what());
    throw;
  }
}

PipelineOutput Pipeline::respond(std::string_view wire, const Json& kwargs,
                                 const CallContext& ctx, monitor::Collector& collector) const {
  return respond(parse_dialog(wire), kwargs, ctx, collector);
}

}  // namespace crskit
