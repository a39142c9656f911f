#pragma once

#include <memory>
#include <string_view>
#include <vector>

#include "crskit/module.h"

namespace crskit {

struct LinkerConfig {
  bool case_sensitive = false;
  bool word_boundary = true;

  Json to_json() const;
  static LinkerConfig from_json(const Json& params);
};

// Dictionary matcher over catalog names. Matching is greedy leftmost-longest
// and non-overlapping; with word_boundary on, a match may not be preceded or
// followed by an alphanumeric (or non-ASCII) byte.
class EntityMatcher {
 public:
  EntityMatcher(const EntityCatalog& catalog, LinkerConfig cfg);

  std::vector<EntitySpan> match(std::string_view text) const;

 private:
  struct Node {
    std::vector<std::pair<unsigned char, int>> next;  // sorted by byte
    std::int64_t entity = -1;
  };
  int child(int node, unsigned char c) const;

  LinkerConfig cfg_;
  std::vector<Node> nodes_;
};

std::vector<EntitySpan> link_entities(std::string_view text, const EntityCatalog& catalog,
                                      const LinkerConfig& cfg = {});

// Links the utterance unless it already carries spans.
Utterance link_utterance(const Utterance& u, const EntityMatcher& matcher);

inline constexpr std::string_view kEntityLinkerType = "entity-linker";

class EntityLinker : public Module {
 public:
  EntityLinker(std::string name, CompositeTokenizer tokenizer, LinkerConfig cfg = {});

  ModuleKind kind() const override { return ModuleKind::kProcessor; }
  const CompositeTokenizer* tokenizer() const override { return &tokenizer_; }

  // Final User turn re-rendered ("User: ...") with entity markup. Throws
  // kNoUserTurn when the dialog ends on a System turn.
  ModuleOutput response(const Dialog& dialog, const Json& kwargs,
                        const CallContext& ctx) const override;
  using Module::response;

  Utterance link(const Utterance& u) const { return link_utterance(u, matcher_); }

 private:
  CompositeTokenizer tokenizer_;
  EntityMatcher matcher_;
};

}  // namespace crskit
