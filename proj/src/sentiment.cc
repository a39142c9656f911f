#include "crskit/sentiment.h"

#include <json.hpp>

#include "crskit/error.h"

namespace crskit {
namespace {

std::vector<std::string> word_tokens(std::string_view text) {
  std::vector<std::string> out;
  for (auto& tok : word_tokenize(text)) {
    if (!is_punctuation_token(tok)) out.push_back(std::move(tok));
  }
  return out;
}

}  // namespace

SentimentLexicon::SentimentLexicon(std::map<std::string, int> polarity)
    : polarity_(std::move(polarity)) {
  for (const auto& [word, p] : polarity_) {
    if (word.empty() || word != ascii_lower(word)) {
      fail(ErrorCode::kInvalidArgument, "lexicon words must be lowercase: " + word);
    }
    if (p != 1 && p != -1) {
      fail(ErrorCode::kInvalidArgument, "polarity of " + word + " must be +1 or -1");
    }
  }
}

SentimentLexicon SentimentLexicon::from_json(std::string_view json_text) {
  std::map<std::string, int> polarity;
  try {
    auto j = nlohmann::json::parse(json_text);
    for (auto it = j.begin(); it != j.end(); ++it) polarity[it.key()] = it->get<int>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kManifestInvalid, std::string("sentiment.json: ") + e.what());
  }
  return SentimentLexicon(std::move(polarity));
}

std::string SentimentLexicon::to_json() const {
  nlohmann::json j(polarity_);
  return j.dump(2) + "\n";
}

int SentimentLexicon::polarity(const std::string& word) const {
  auto it = polarity_.find(word);
  return it == polarity_.end() ? 0 : it->second;
}

int mention_sentiment(const Utterance& u, const EntitySpan& span, const SentimentLexicon& lexicon,
                      int window) {
  std::string_view text(u.text);
  auto before = word_tokens(text.substr(0, span.start));
  auto after = word_tokens(text.substr(std::min(span.end, text.size())));

  int sum = 0;
  auto w = static_cast<std::size_t>(std::max(window, 0));
  for (std::size_t k = before.size() > w ? before.size() - w : 0; k < before.size(); ++k) {
    sum += lexicon.polarity(before[k]);
  }
  for (std::size_t k = 0; k < std::min(w, after.size()); ++k) sum += lexicon.polarity(after[k]);
  return sum < 0 ? -1 : 1;
}

RatingVector extract_ratings(const Dialog& d, const EntityCatalog& catalog,
                             const SentimentLexicon& lexicon, int window) {
  RatingVector r;
  r.num_items = catalog.size();
  for (const auto& u : d.utterances) {
    if (u.role != Role::kUser) continue;
    for (const auto& span : u.spans) {
      auto id = catalog.resolve(span);
      if (!id) continue;
      r.ratings[*id] = mention_sentiment(u, span, lexicon, window);
    }
  }
  return r;
}

}  // namespace crskit
