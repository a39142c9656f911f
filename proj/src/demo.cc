#include "crskit/demo.h"

#include <algorithm>
#include <numeric>
#include <random>

#include "crskit/artifact.h"
#include "crskit/loader.h"
#include "crskit/pipeline.h"

namespace crskit {
namespace fs = std::filesystem;

EntityCatalog demo_catalog() {
  return EntityCatalog({
      "Billy Madison (1995)",   "50 First Dates (2004)",   "Big Daddy (1999)",
      "Happy Gilmore (1996)",   "The Waterboy (1998)",     "Grown Ups (2010)",
      "Anger Management (2003)", "Click (2006)",           "The Wedding Singer (1998)",
      "Mr. Deeds (2002)",       "Forever My Girl (2018)",  "The Notebook (2004)",
      "A Walk to Remember (2002)", "Dear John (2010)",     "The Vow (2012)",
      "Safe Haven (2013)",      "The Longest Ride (2015)", "Me Before You (2016)",
      "P.S. I Love You (2007)", "Titanic (1997)",
  });
}

SentimentLexicon demo_lexicon() {
  std::map<std::string, int> words;
  for (const char* w : {"like", "liked", "love", "loved", "enjoy", "enjoyed", "great", "good",
                        "awesome", "amazing", "favorite", "fun", "funny", "best", "fan"}) {
    words[w] = 1;
  }
  for (const char* w : {"hate", "hated", "dislike", "disliked", "boring", "bad", "awful",
                        "terrible", "worst", "meh"}) {
    words[w] = -1;
  }
  return SentimentLexicon(std::move(words));
}

ClusterDataset two_cluster_dataset(std::uint64_t seed, std::size_t items_per_cluster,
                                   std::size_t users_per_cluster, std::size_t dislikes) {
  std::mt19937_64 rng(seed);
  ClusterDataset data;
  data.num_items = 2 * items_per_cluster;
  for (std::size_t c = 0; c < 2; ++c) {
    for (std::size_t u = 0; u < users_per_cluster; ++u) {
      std::vector<std::int64_t> own(items_per_cluster), other(items_per_cluster);
      std::iota(own.begin(), own.end(), static_cast<std::int64_t>(c * items_per_cluster));
      std::iota(other.begin(), other.end(),
                static_cast<std::int64_t>((1 - c) * items_per_cluster));
      std::uniform_int_distribution<std::size_t> pick(0, items_per_cluster - 1);
      auto held = own[pick(rng)];
      std::shuffle(other.begin(), other.end(), rng);

      RatingVector r{data.num_items, {}};
      for (auto id : own) {
        if (id != held) r.ratings[id] = 1;
      }
      for (std::size_t k = 0; k < std::min(dislikes, other.size()); ++k) r.ratings[other[k]] = -1;
      data.train.push_back(std::move(r));
      data.held_out.push_back(held);
    }
  }
  return data;
}

double recall_at_1(const AutoRecParams& p, const ClusterDataset& data) {
  if (data.train.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t u = 0; u < data.train.size(); ++u) {
    Eigen::VectorXd scores = autorec_forward(p, data.train[u]);
    std::int64_t best = -1;
    for (Eigen::Index i = 0; i < scores.size(); ++i) {
      if (data.train[u].ratings.count(i)) continue;
      if (best < 0 || scores(i) > scores(best)) best = i;
    }
    if (best == data.held_out[u]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(data.train.size());
}

DemoTraining train_demo_autorec(std::uint64_t seed, std::size_t hidden) {
  auto data = two_cluster_dataset(seed);
  std::mt19937_64 rng(seed);
  auto init = AutoRecParams::random(data.num_items, hidden, rng);
  auto result = train_autorec(std::move(init), data.train, TrainOptions{});
  DemoTraining out;
  out.params = result.params.rounded_to_f32();
  out.initial_loss = result.epoch_losses.front();
  out.final_loss = result.final_loss;
  out.recall = recall_at_1(out.params, data);
  return out;
}

DemoModules build_demo_modules(std::uint64_t seed, bool offline) {
  auto catalog = demo_catalog();
  std::vector<std::string> corpus = catalog.names();
  for (const char* s : {"Hello! I am looking for a movie to watch tonight.",
                        "I like comedies and I loved the last one I saw.",
                        "Have you watched this movie? It is great and funny.",
                        "I hated that one, it was boring.",
                        "You might enjoy these. I recommend them.",
                        "Tell me more about what you like."}) {
    corpus.push_back(s);
  }
  auto tokenizer = CompositeTokenizer::with_word_vocab(corpus, catalog);

  DemoModules m;
  auto trained = train_demo_autorec(seed);
  m.rec = std::make_shared<RedialRec>("redial-rec", tokenizer, demo_lexicon(), trained.params);
  m.linker = std::make_shared<EntityLinker>("entity-linker", tokenizer);

  LlmGeneratorConfig exp;
  exp.style = GenStyle::kExpansion;
  exp.offline = offline;
  m.expansion_gen = std::make_shared<LlmGenerator>("chatgpt-expansion", exp);
  LlmGeneratorConfig fb;
  fb.style = GenStyle::kFillblank;
  fb.offline = offline;
  m.fillblank_gen = std::make_shared<LlmGenerator>("chatgpt-fillblank", fb);
  return m;
}

fs::path write_demo_artifacts(const fs::path& dir, bool offline, std::uint64_t seed) {
  auto m = build_demo_modules(seed, offline);
  PipelineConfig exp_cfg;
  exp_cfg.kind = PipelineKind::kExpansion;
  Pipeline expansion("expansion", exp_cfg, m.rec, m.expansion_gen, m.linker);
  PipelineConfig fb_cfg;
  fb_cfg.kind = PipelineKind::kFillblank;
  Pipeline fillblank("fillblank", fb_cfg, m.rec, m.fillblank_gen, m.linker);

  save_pretrained(expansion, dir / "expansion");
  save_pretrained(fillblank, dir / "fillblank");

  Json serve = {{"hub_url", ""},
                {"session_ttl_s", 3600},
                {"pipelines",
                 {{{"id", "expansion"}, {"ref", "expansion"}, {"kwargs", Json::object()}},
                  {{"id", "fillblank"}, {"ref", "fillblank"}, {"kwargs", Json::object()}}}}};
  auto path = dir / "serve.json";
  write_file(path, serve.dump(2) + "\n");
  return path;
}

}  // namespace crskit
