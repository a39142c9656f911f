#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>

#include "crskit/protocol.h"
#include "crskit/tokenization.h"

namespace crskit {

inline constexpr int kDefaultSentimentWindow = 5;

class SentimentLexicon {
 public:
  SentimentLexicon() = default;
  // Words must be lowercase; polarities must be -1 or +1.
  explicit SentimentLexicon(std::map<std::string, int> polarity);

  // sentiment.json: {"word": 1 | -1, ...}
  static SentimentLexicon from_json(std::string_view json_text);
  std::string to_json() const;

  int polarity(const std::string& word) const;  // 0 when absent
  std::size_t size() const { return polarity_.size(); }
  bool operator==(const SentimentLexicon&) const = default;

 private:
  std::map<std::string, int> polarity_;
};

// Sparse item ratings in {-1, +1} over a catalog of num_items.
struct RatingVector {
  std::size_t num_items = 0;
  std::map<std::int64_t, int> ratings;

  bool operator==(const RatingVector&) const = default;
};

// Sign of the summed polarities of the `window` nearest word tokens on each
// side of the span (punctuation excluded); a zero sum counts as +1.
int mention_sentiment(const Utterance& u, const EntitySpan& span, const SentimentLexicon& lexicon,
                      int window = kDefaultSentimentWindow);

// User-turn mentions only; the last mention of an item decides its rating.
// Mentions outside the catalog are skipped.
RatingVector extract_ratings(const Dialog& d, const EntityCatalog& catalog,
                             const SentimentLexicon& lexicon,
                             int window = kDefaultSentimentWindow);

}  // namespace crskit
