#pragma once

#include <set>

#include "crskit/autorec.h"
#include "crskit/module.h"
#include "crskit/sentiment.h"

namespace crskit {

inline constexpr std::string_view kRedialRecType = "redial-rec";

struct RedialRecConfig {
  std::size_t hidden_size = 32;
  double lambda = kDefaultL2;
  int sentiment_window = kDefaultSentimentWindow;
  std::size_t top_k = 3;

  Json to_json() const;
  static RedialRecConfig from_json(const Json& params);
};

// Scores sorted descending, ties by ascending item id; items in `excluded`
// skipped; at most k entries.
RecList rank_items(const Eigen::VectorXd& scores, std::size_t k,
                   const std::set<std::int64_t>& excluded, const EntityCatalog& catalog);

// Every catalog item mentioned anywhere in the dialog.
std::set<std::int64_t> mentioned_items(const Dialog& d, const EntityCatalog& catalog);

// Sentiment-derived ratings from the dialog feed an AutoRec that scores the
// whole catalog; the top-k unmentioned items are returned.
//
// forward inputs:  "ratings" [N] dense {-1, 0, +1}
// forward labels:  "ratings" [N] (optional; non-zero entries are observed)
// forward outputs: "scores" [N], "hidden" [d], "loss" [1] when labels given
//
// response kwargs: "top_k" (or "k"), "exclude_mentioned" (default true)
class RedialRec : public Module {
 public:
  RedialRec(std::string name, CompositeTokenizer tokenizer, SentimentLexicon lexicon,
            AutoRecParams params, RedialRecConfig cfg = {});

  ModuleKind kind() const override { return ModuleKind::kRecommender; }
  const CompositeTokenizer* tokenizer() const override { return &tokenizer_; }

  TensorMap forward(const TensorMap& inputs, const TensorMap* labels = nullptr) const override;
  ModuleOutput response(const Dialog& dialog, const Json& kwargs,
                        const CallContext& ctx) const override;
  using Module::response;

  WeightsFile weights() const override { return params_.to_weights(); }
  std::map<std::string, std::string> asset_files() const override;

  const AutoRecParams& params() const { return params_; }
  const SentimentLexicon& lexicon() const { return lexicon_; }
  const RedialRecConfig& rec_config() const { return cfg_; }

 private:
  CompositeTokenizer tokenizer_;
  SentimentLexicon lexicon_;
  AutoRecParams params_;
  RedialRecConfig cfg_;
};

}  // namespace crskit
