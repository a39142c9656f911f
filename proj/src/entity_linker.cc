#include "crskit/entity_linker.h"

#include <algorithm>
#include <cctype>

#include "crskit/error.h"
#include "crskit/monitor.h"

namespace crskit {
namespace {

bool is_word_byte(char c) {
  auto u = static_cast<unsigned char>(c);
  return u >= 0x80 || std::isalnum(u);
}

unsigned char fold(char c, bool case_sensitive) {
  auto u = static_cast<unsigned char>(c);
  if (!case_sensitive && u >= 'A' && u <= 'Z') return static_cast<unsigned char>(u - 'A' + 'a');
  return u;
}

}  // namespace

Json LinkerConfig::to_json() const {
  return Json{{"case_sensitive", case_sensitive}, {"word_boundary", word_boundary}};
}

LinkerConfig LinkerConfig::from_json(const Json& params) {
  LinkerConfig cfg;
  cfg.case_sensitive = params.value("case_sensitive", cfg.case_sensitive);
  cfg.word_boundary = params.value("word_boundary", cfg.word_boundary);
  return cfg;
}

EntityMatcher::EntityMatcher(const EntityCatalog& catalog, LinkerConfig cfg) : cfg_(cfg) {
  nodes_.emplace_back();
  const auto& names = catalog.names();
  for (std::size_t id = 0; id < names.size(); ++id) {
    int node = 0;
    for (char c : names[id]) {
      auto key = fold(c, cfg_.case_sensitive);
      int next = child(node, key);
      if (next < 0) {
        next = static_cast<int>(nodes_.size());
        auto& edges = nodes_[node].next;
        edges.insert(std::lower_bound(edges.begin(), edges.end(), std::make_pair(key, 0)),
                     {key, next});
        nodes_.emplace_back();
      }
      node = next;
    }
    // Folded duplicates keep the lowest id.
    if (nodes_[node].entity < 0) nodes_[node].entity = static_cast<std::int64_t>(id);
  }
}

int EntityMatcher::child(int node, unsigned char c) const {
  const auto& edges = nodes_[node].next;
  auto it = std::lower_bound(edges.begin(), edges.end(), std::make_pair(c, 0));
  return (it != edges.end() && it->first == c) ? it->second : -1;
}

std::vector<EntitySpan> EntityMatcher::match(std::string_view text) const {
  std::vector<EntitySpan> spans;
  std::size_t i = 0;
  while (i < text.size()) {
    if (cfg_.word_boundary && i > 0 && is_word_byte(text[i - 1])) {
      ++i;
      continue;
    }
    std::size_t best_end = 0;
    std::int64_t best_id = -1;
    int node = 0;
    for (std::size_t j = i; j < text.size(); ++j) {
      node = child(node, fold(text[j], cfg_.case_sensitive));
      if (node < 0) break;
      if (nodes_[node].entity < 0) continue;
      std::size_t end = j + 1;
      if (cfg_.word_boundary && end < text.size() && is_word_byte(text[end])) continue;
      best_end = end;
      best_id = nodes_[node].entity;
    }
    if (best_id < 0) {
      ++i;
      continue;
    }
    spans.push_back({std::string(text.substr(i, best_end - i)), i, best_end, best_id});
    i = best_end;
  }
  return spans;
}

std::vector<EntitySpan> link_entities(std::string_view text, const EntityCatalog& catalog,
                                      const LinkerConfig& cfg) {
  return EntityMatcher(catalog, cfg).match(text);
}

Utterance link_utterance(const Utterance& u, const EntityMatcher& matcher) {
  if (!u.spans.empty()) return u;
  Utterance out = u;
  out.spans = matcher.match(u.text);
  return out;
}

EntityLinker::EntityLinker(std::string name, CompositeTokenizer tokenizer, LinkerConfig cfg)
    : Module(std::move(name), ModuleConfig{std::string(kEntityLinkerType), "1", cfg.to_json()}),
      tokenizer_(std::move(tokenizer)),
      matcher_(tokenizer_.catalog(), cfg) {}

ModuleOutput EntityLinker::response(const Dialog& dialog, const Json&,
                                    const CallContext&) const {
  if (dialog.utterances.empty() || dialog.utterances.back().role != Role::kUser) {
    fail(ErrorCode::kNoUserTurn, "dialog does not end with a User turn");
  }
  const auto& last = dialog.utterances.back();
  auto linked = monitor::monitored(
      "proc.link_entities", last.text, [&] { return link(last); },
      [](const Utterance& u) { return render_body(u); });
  return ModuleOutput(render_utterance(linked));
}

}  // namespace crskit
