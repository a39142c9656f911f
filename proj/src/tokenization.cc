#include "crskit/tokenization.h"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <sstream>

#include "crskit/error.h"

namespace crskit {
namespace {

using nlohmann::json;

// Decodes one UTF-8 code point starting at text[i]; advances i. Invalid bytes
// decode as themselves so the scan always makes progress.
char32_t next_code_point(std::string_view text, std::size_t& i) {
  auto b0 = static_cast<unsigned char>(text[i]);
  int len = b0 < 0x80 ? 1 : (b0 >> 5) == 0x6 ? 2 : (b0 >> 4) == 0xE ? 3
                      : (b0 >> 3) == 0x1E ? 4 : 1;
  if (i + len > text.size()) len = 1;
  char32_t cp = len == 1 ? b0 : len == 2 ? (b0 & 0x1F) : len == 3 ? (b0 & 0x0F) : (b0 & 0x07);
  for (int k = 1; k < len; ++k) {
    auto b = static_cast<unsigned char>(text[i + k]);
    if ((b & 0xC0) != 0x80) {
      len = 1;
      cp = b0;
      break;
    }
    cp = (cp << 6) | (b & 0x3F);
  }
  i += len;
  return cp;
}

bool is_unicode_space(char32_t cp) {
  return (cp >= 0x09 && cp <= 0x0D) || cp == 0x20 || cp == 0x85 || cp == 0xA0 ||
         cp == 0x1680 || (cp >= 0x2000 && cp <= 0x200A) || cp == 0x2028 ||
         cp == 0x2029 || cp == 0x202F || cp == 0x205F || cp == 0x3000;
}

bool is_ascii_punct(char c) {
  auto u = static_cast<unsigned char>(c);
  return u < 0x80 && std::ispunct(u);
}

// Splits on Unicode whitespace, returning byte ranges of the chunks.
std::vector<std::string_view> whitespace_chunks(std::string_view text) {
  std::vector<std::string_view> chunks;
  std::size_t i = 0;
  std::size_t chunk_start = std::string_view::npos;
  while (i < text.size()) {
    std::size_t at = i;
    char32_t cp = next_code_point(text, i);
    if (is_unicode_space(cp)) {
      if (chunk_start != std::string_view::npos) {
        chunks.push_back(text.substr(chunk_start, at - chunk_start));
        chunk_start = std::string_view::npos;
      }
    } else if (chunk_start == std::string_view::npos) {
      chunk_start = at;
    }
  }
  if (chunk_start != std::string_view::npos) chunks.push_back(text.substr(chunk_start));
  return chunks;
}

const std::string* find_file(const std::map<std::string, std::string>& files,
                             const std::string& path) {
  auto it = files.find(path);
  return it == files.end() ? nullptr : &it->second;
}

std::string_view kind_name(SubTokenizerKind kind) {
  return kind == SubTokenizerKind::kWord ? "word" : "char";
}

}  // namespace

std::string ascii_lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

bool is_punctuation_token(std::string_view token) {
  return !token.empty() && std::all_of(token.begin(), token.end(), is_ascii_punct);
}

std::vector<std::string> word_tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string lowered = ascii_lower(text);
  for (auto chunk : whitespace_chunks(lowered)) {
    std::size_t lead = 0;
    while (lead < chunk.size() && is_ascii_punct(chunk[lead])) ++lead;
    std::size_t trail = chunk.size();
    while (trail > lead && is_ascii_punct(chunk[trail - 1])) --trail;

    for (std::size_t k = 0; k < lead; ++k) tokens.emplace_back(1, chunk[k]);
    if (trail > lead) tokens.emplace_back(chunk.substr(lead, trail - lead));
    for (std::size_t k = trail; k < chunk.size(); ++k) tokens.emplace_back(1, chunk[k]);
  }
  return tokens;
}

std::vector<std::string> char_tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string lowered = ascii_lower(text);
  std::string_view view(lowered);
  std::size_t i = 0;
  while (i < view.size()) {
    std::size_t at = i;
    char32_t cp = next_code_point(view, i);
    if (!is_unicode_space(cp)) tokens.emplace_back(view.substr(at, i - at));
  }
  return tokens;
}

// ---------------------------------------------------------------------------
// Vocab

Vocab::Vocab() {
  for (const char* literal : {"<pad>", "<unk>", "<bos>", "<eos>"}) add(literal);
}

void Vocab::add(const std::string& token) {
  if (ids_.count(token)) return;
  ids_.emplace(token, static_cast<std::int32_t>(tokens_.size()));
  tokens_.push_back(token);
}

Vocab Vocab::build(const std::vector<std::vector<std::string>>& corpus,
                   std::size_t min_frequency) {
  std::unordered_map<std::string, std::size_t> counts;
  std::vector<std::string> order;
  for (const auto& doc : corpus) {
    for (const auto& tok : doc) {
      if (counts[tok]++ == 0) order.push_back(tok);
    }
  }
  Vocab v;
  for (const auto& tok : order) {
    if (counts[tok] >= min_frequency) v.add(tok);
  }
  return v;
}

Vocab Vocab::from_text(std::string_view text) {
  std::vector<std::string> lines;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    lines.emplace_back(text.substr(pos, nl - pos));
    pos = nl + 1;
  }
  Vocab reserved;
  if (lines.size() < kNumReserved) {
    fail(ErrorCode::kManifestInvalid, "vocab.txt lacks reserved tokens");
  }
  for (std::int32_t i = 0; i < kNumReserved; ++i) {
    if (lines[i] != reserved.tokens_[i]) {
      fail(ErrorCode::kManifestInvalid, "vocab.txt line " + std::to_string(i) +
                                            " must be " + reserved.tokens_[i]);
    }
  }
  Vocab v;
  for (std::size_t i = kNumReserved; i < lines.size(); ++i) {
    if (v.ids_.count(lines[i])) {
      fail(ErrorCode::kManifestInvalid, "duplicate vocab token: " + lines[i]);
    }
    v.add(lines[i]);
  }
  return v;
}

std::string Vocab::to_text() const {
  std::string out;
  for (const auto& tok : tokens_) {
    out += tok;
    out += '\n';
  }
  return out;
}

std::int32_t Vocab::id(const std::string& token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? kUnk : it->second;
}

const std::string& Vocab::token(std::int32_t id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    fail(ErrorCode::kIdOutOfRange, "token id " + std::to_string(id) + " outside vocab of " +
                                       std::to_string(tokens_.size()));
  }
  return tokens_[id];
}

// ---------------------------------------------------------------------------
// EntityCatalog

EntityCatalog::EntityCatalog(std::vector<std::string> names) : names_(std::move(names)) {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    const auto& n = names_[i];
    if (n.empty() || contains_reserved_token(n)) {
      fail(ErrorCode::kInvalidArgument, "invalid entity name: \"" + n + "\"");
    }
    if (!ids_.emplace(n, static_cast<std::int64_t>(i)).second) {
      fail(ErrorCode::kInvalidArgument, "duplicate entity name: " + n);
    }
    folded_ids_.emplace(ascii_lower(n), static_cast<std::int64_t>(i));
  }
}

EntityCatalog EntityCatalog::from_json(std::string_view json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    fail(ErrorCode::kManifestInvalid, std::string("entity2id.json: ") + e.what());
  }
  if (!j.is_object()) fail(ErrorCode::kManifestInvalid, "entity2id.json must be an object");
  std::vector<std::string> names(j.size());
  std::vector<bool> seen(j.size(), false);
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!it->is_number_integer()) {
      fail(ErrorCode::kManifestInvalid, "entity id for " + it.key() + " is not an integer");
    }
    auto id = it->get<std::int64_t>();
    if (id < 0 || static_cast<std::size_t>(id) >= names.size() || seen[id]) {
      fail(ErrorCode::kManifestInvalid, "entity ids must be a bijection onto [0, N)");
    }
    seen[id] = true;
    names[id] = it.key();
  }
  return EntityCatalog(std::move(names));
}

std::string EntityCatalog::to_json() const {
  json j = json::object();
  for (std::size_t i = 0; i < names_.size(); ++i) j[names_[i]] = i;
  return j.dump(2) + "\n";
}

std::optional<std::int64_t> EntityCatalog::find(std::string_view name) const {
  auto it = ids_.find(std::string(name));
  if (it == ids_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::int64_t> EntityCatalog::find_folded(std::string_view name) const {
  auto it = folded_ids_.find(ascii_lower(name));
  if (it == folded_ids_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::int64_t> EntityCatalog::resolve(const EntitySpan& span) const {
  if (span.entity_id && *span.entity_id >= 0 &&
      static_cast<std::size_t>(*span.entity_id) < names_.size()) {
    return span.entity_id;
  }
  if (auto id = find(span.surface)) return id;
  return find_folded(span.surface);
}

const std::string& EntityCatalog::name(std::int64_t id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= names_.size()) {
    fail(ErrorCode::kIdOutOfRange, "entity id " + std::to_string(id));
  }
  return names_[id];
}

// ---------------------------------------------------------------------------
// CompositeTokenizer

std::vector<std::string> SubTokenizer::tokenize(std::string_view text) const {
  return kind == SubTokenizerKind::kWord ? word_tokenize(text) : char_tokenize(text);
}

CompositeTokenizer::CompositeTokenizer(std::vector<SubTokenizer> subs, EntityCatalog catalog)
    : subs_(std::move(subs)), catalog_(std::move(catalog)) {
  if (subs_.empty()) fail(ErrorCode::kInvalidConfig, "tokenizer needs a sub-tokenizer");
  for (std::size_t i = 0; i < subs_.size(); ++i) {
    if (subs_[i].name.empty()) fail(ErrorCode::kInvalidConfig, "sub-tokenizer without name");
    for (std::size_t j = 0; j < i; ++j) {
      if (subs_[i].name == subs_[j].name) {
        fail(ErrorCode::kInvalidConfig, "duplicate sub-tokenizer: " + subs_[i].name);
      }
    }
  }
}

CompositeTokenizer CompositeTokenizer::with_word_vocab(const std::vector<std::string>& corpus,
                                                       EntityCatalog catalog) {
  std::vector<std::vector<std::string>> docs;
  docs.reserve(corpus.size());
  for (const auto& text : corpus) docs.push_back(word_tokenize(text));
  SubTokenizer word{"word", SubTokenizerKind::kWord, Vocab::build(docs)};
  return CompositeTokenizer({std::move(word)}, std::move(catalog));
}

const SubTokenizer& CompositeTokenizer::sub_tokenizer(const std::string& name) const {
  for (const auto& s : subs_) {
    if (s.name == name) return s;
  }
  fail(ErrorCode::kUnknownSubTokenizer, name);
}

std::vector<std::int32_t> CompositeTokenizer::encode_text(const std::string& sub,
                                                          std::string_view text) const {
  const auto& st = sub_tokenizer(sub);
  std::vector<std::int32_t> ids;
  for (const auto& tok : st.tokenize(text)) ids.push_back(st.vocab.id(tok));
  return ids;
}

EncodedInputs CompositeTokenizer::encode(const Dialog& d) const {
  EncodedInputs out;
  for (const auto& st : subs_) {
    auto& ids = out.token_ids[st.name];
    for (const auto& u : d.utterances) {
      for (const auto& tok : st.tokenize(u.text)) ids.push_back(st.vocab.id(tok));
      ids.push_back(Vocab::kEos);
    }
  }
  for (const auto& u : d.utterances) {
    for (const auto& span : u.spans) {
      if (auto id = catalog_.resolve(span)) {
        out.entity_ids.push_back(*id);
      } else {
        out.unknown_entities.push_back(span.surface);
      }
    }
  }
  return out;
}

std::string CompositeTokenizer::decode(const std::string& sub,
                                       const std::vector<std::int32_t>& ids) const {
  const auto& st = sub_tokenizer(sub);
  std::string out;
  for (auto id : ids) {
    const auto& tok = st.vocab.token(id);
    if (id < Vocab::kNumReserved) continue;
    if (!out.empty()) out += ' ';
    out += tok;
  }
  return out;
}

std::map<std::string, std::string> CompositeTokenizer::to_files() const {
  std::map<std::string, std::string> files;
  json subs = json::array();
  for (std::size_t i = 0; i < subs_.size(); ++i) {
    const auto& st = subs_[i];
    std::string vocab_file = i == 0 ? "vocab.txt" : "vocab." + st.name + ".txt";
    subs.push_back({{"name", st.name}, {"kind", kind_name(st.kind)}, {"vocab", vocab_file}});
    files["tokenizer/" + vocab_file] = st.vocab.to_text();
  }
  files["tokenizer/tokenizer_config.json"] = json{{"sub_tokenizers", subs}}.dump(2) + "\n";
  files["tokenizer/entity2id.json"] = catalog_.to_json();
  return files;
}

CompositeTokenizer CompositeTokenizer::from_files(
    const std::map<std::string, std::string>& files) {
  const auto* catalog_text = find_file(files, "tokenizer/entity2id.json");
  if (!catalog_text) fail(ErrorCode::kManifestInvalid, "missing tokenizer/entity2id.json");

  std::vector<SubTokenizer> subs;
  const auto* config_text = find_file(files, "tokenizer/tokenizer_config.json");
  if (!config_text) {
    // Bare layout: a single word-level vocab.
    const auto* vocab = find_file(files, "tokenizer/vocab.txt");
    if (!vocab) fail(ErrorCode::kManifestInvalid, "missing tokenizer/vocab.txt");
    subs.push_back({"word", SubTokenizerKind::kWord, Vocab::from_text(*vocab)});
  } else {
    try {
      auto cfg = json::parse(*config_text);
      for (const auto& entry : cfg.at("sub_tokenizers")) {
        auto kind = entry.at("kind").get<std::string>();
        if (kind != "word" && kind != "char") {
          fail(ErrorCode::kInvalidConfig, "unknown sub-tokenizer kind: " + kind);
        }
        const auto* vocab = find_file(files, "tokenizer/" + entry.at("vocab").get<std::string>());
        if (!vocab) fail(ErrorCode::kManifestInvalid, "missing vocab for sub-tokenizer");
        subs.push_back({entry.at("name").get<std::string>(),
                        kind == "word" ? SubTokenizerKind::kWord : SubTokenizerKind::kChar,
                        Vocab::from_text(*vocab)});
      }
    } catch (const json::exception& e) {
      fail(ErrorCode::kManifestInvalid, std::string("tokenizer_config.json: ") + e.what());
    }
  }
  return CompositeTokenizer(std::move(subs), EntityCatalog::from_json(*catalog_text));
}

}  // namespace crskit
