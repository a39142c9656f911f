#pragma once

// Small movie catalog, sentiment lexicon and a synthetic two-cluster rating
// dataset, enough to train a recommender and assemble working pipelines
// without external data.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <vector>

#include "crskit/autorec.h"
#include "crskit/entity_linker.h"
#include "crskit/generator.h"
#include "crskit/redial_rec.h"

namespace crskit {

// 20 titles: ids 0-9 comedies, 10-19 romantic dramas.
EntityCatalog demo_catalog();
SentimentLexicon demo_lexicon();

struct ClusterDataset {
  std::size_t num_items = 0;
  std::vector<RatingVector> train;     // one vector per user
  std::vector<std::int64_t> held_out;  // one liked item per user, absent from train
};

// Users of cluster c like every item of cluster c. Each user's vector keeps
// all but one random liked item (+1) and `dislikes` random items of the
// other cluster (-1).
ClusterDataset two_cluster_dataset(std::uint64_t seed, std::size_t items_per_cluster = 10,
                                   std::size_t users_per_cluster = 20,
                                   std::size_t dislikes = 3);

// Fraction of users whose top-ranked item, excluding items in their training
// vector, is the held-out item.
double recall_at_1(const AutoRecParams& p, const ClusterDataset& data);

struct DemoTraining {
  AutoRecParams params;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  double recall = 0.0;
};

DemoTraining train_demo_autorec(std::uint64_t seed = 7, std::size_t hidden = 32);

struct DemoModules {
  std::shared_ptr<RedialRec> rec;
  std::shared_ptr<EntityLinker> linker;
  std::shared_ptr<LlmGenerator> expansion_gen;
  std::shared_ptr<LlmGenerator> fillblank_gen;
};

// offline sets the generators' persisted offline flag.
DemoModules build_demo_modules(std::uint64_t seed = 7, bool offline = false);

// Saves the "expansion" and "fillblank" pipelines under dir and writes
// dir/serve.json pointing at both. Returns the serve.json path.
std::filesystem::path write_demo_artifacts(const std::filesystem::path& dir,
                                           bool offline = false, std::uint64_t seed = 7);

}  // namespace crskit
