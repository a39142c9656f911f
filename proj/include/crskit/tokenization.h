#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "crskit/protocol.h"

namespace crskit {

// Lowercases ASCII, splits on Unicode whitespace and peels leading/trailing
// ASCII punctuation of every chunk into single-character tokens.
//   "Hello, world!" -> ["hello", ",", "world", "!"]
std::vector<std::string> word_tokenize(std::string_view text);

// One token per code point, lowercased, whitespace dropped.
std::vector<std::string> char_tokenize(std::string_view text);

bool is_punctuation_token(std::string_view token);

class Vocab {
 public:
  static constexpr std::int32_t kPad = 0;
  static constexpr std::int32_t kUnk = 1;
  static constexpr std::int32_t kBos = 2;
  static constexpr std::int32_t kEos = 3;
  static constexpr std::int32_t kNumReserved = 4;

  // Reserved literals only.
  Vocab();

  // Tokens are assigned ids in order of first appearance.
  static Vocab build(const std::vector<std::vector<std::string>>& corpus,
                     std::size_t min_frequency = 1);

  // Parses vocab.txt: one token per line, line number = id, first four lines
  // must be the reserved literals.
  static Vocab from_text(std::string_view text);
  std::string to_text() const;

  std::int32_t id(const std::string& token) const;  // kUnk when absent
  const std::string& token(std::int32_t id) const;  // throws kIdOutOfRange
  std::size_t size() const { return tokens_.size(); }
  bool contains(const std::string& token) const { return ids_.count(token) > 0; }

  bool operator==(const Vocab& other) const { return tokens_ == other.tokens_; }

 private:
  void add(const std::string& token);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::int32_t> ids_;
};

// entity2id / id2entity bijection over ids [0, N).
class EntityCatalog {
 public:
  EntityCatalog() = default;
  explicit EntityCatalog(std::vector<std::string> names);

  // entity2id.json: {"name": id, ...}
  static EntityCatalog from_json(std::string_view json_text);
  std::string to_json() const;

  std::optional<std::int64_t> find(std::string_view name) const;
  // ASCII case-insensitive lookup; lowest id wins on folded collisions.
  std::optional<std::int64_t> find_folded(std::string_view name) const;
  // Span id when valid, else exact surface, else case-folded surface.
  std::optional<std::int64_t> resolve(const EntitySpan& span) const;

  const std::string& name(std::int64_t id) const;
  const std::vector<std::string>& names() const { return names_; }
  std::size_t size() const { return names_.size(); }

  bool operator==(const EntityCatalog& other) const { return names_ == other.names_; }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, std::int64_t> ids_;
  std::unordered_map<std::string, std::int64_t> folded_ids_;
};

std::string ascii_lower(std::string_view s);

enum class SubTokenizerKind { kWord, kChar };

struct SubTokenizer {
  std::string name;
  SubTokenizerKind kind = SubTokenizerKind::kWord;
  Vocab vocab;

  std::vector<std::string> tokenize(std::string_view text) const;
  bool operator==(const SubTokenizer&) const = default;
};

struct EncodedInputs {
  // Sub-tokenizer name -> ids of all utterances in dialog order, each
  // utterance terminated by Vocab::kEos.
  std::map<std::string, std::vector<std::int32_t>> token_ids;
  std::vector<std::int64_t> entity_ids;
  std::vector<std::string> unknown_entities;

  bool operator==(const EncodedInputs&) const = default;
};

// Dispatches clean utterance text to every named sub-tokenizer and resolves
// entity mentions through the catalog.
class CompositeTokenizer {
 public:
  CompositeTokenizer(std::vector<SubTokenizer> subs, EntityCatalog catalog);

  // Builds one word-level sub-tokenizer named "word" from the given texts.
  static CompositeTokenizer with_word_vocab(const std::vector<std::string>& corpus,
                                            EntityCatalog catalog);

  EncodedInputs encode(const Dialog& d) const;
  std::vector<std::int32_t> encode_text(const std::string& sub,
                                        std::string_view text) const;
  std::string decode(const std::string& sub,
                     const std::vector<std::int32_t>& ids) const;

  const SubTokenizer& sub_tokenizer(const std::string& name) const;
  const std::vector<SubTokenizer>& sub_tokenizers() const { return subs_; }
  const EntityCatalog& catalog() const { return catalog_; }

  // Asset files relative to the artifact root: tokenizer/tokenizer_config.json,
  // tokenizer/vocab.txt (first sub-tokenizer), tokenizer/vocab.<name>.txt (others),
  // tokenizer/entity2id.json.
  std::map<std::string, std::string> to_files() const;
  static CompositeTokenizer from_files(const std::map<std::string, std::string>& files);

  bool operator==(const CompositeTokenizer& other) const {
    return subs_ == other.subs_ && catalog_ == other.catalog_;
  }

 private:
  std::vector<SubTokenizer> subs_;
  EntityCatalog catalog_;
};

}  // namespace crskit
