#include "crskit/redial_rec.h"

#include <algorithm>
#include <numeric>
#include <sstream>

#include "crskit/error.h"
#include "crskit/monitor.h"

namespace crskit {
namespace {

Tensor vector_tensor(std::string name, const Eigen::VectorXd& v) {
  Tensor t{std::move(name), {static_cast<std::uint64_t>(v.size())}, {}};
  t.data.reserve(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) t.data.push_back(static_cast<float>(v(i)));
  return t;
}

Eigen::VectorXd tensor_vector(const Tensor& t, std::size_t expected) {
  if (t.shape.size() != 1 || t.shape[0] != expected) {
    fail(ErrorCode::kShapeMismatch, "tensor " + t.name + " must have shape [" +
                                        std::to_string(expected) + "]");
  }
  Eigen::VectorXd v(static_cast<Eigen::Index>(expected));
  for (std::size_t i = 0; i < expected; ++i) v(static_cast<Eigen::Index>(i)) = t.data[i];
  return v;
}

std::string describe_ratings(const RatingVector& r, const EntityCatalog& catalog) {
  std::ostringstream out;
  out << "{";
  bool first = true;
  for (const auto& [id, rating] : r.ratings) {
    out << (first ? "" : ", ") << catalog.name(id) << ": " << (rating > 0 ? "+1" : "-1");
    first = false;
  }
  out << "}";
  return out.str();
}

std::string describe_recs(const RecList& recs) {
  std::ostringstream out;
  for (std::size_t i = 0; i < recs.size(); ++i) {
    out << (i ? "; " : "") << recs[i].name << " (" << recs[i].score << ")";
  }
  return out.str();
}

ModuleConfig make_config(RedialRecConfig cfg, const AutoRecParams& params) {
  cfg.hidden_size = params.hidden();
  return ModuleConfig{std::string(kRedialRecType), "1", cfg.to_json()};
}

}  // namespace

Json RedialRecConfig::to_json() const {
  return Json{{"hidden_size", hidden_size},
              {"lambda", lambda},
              {"sentiment_window", sentiment_window},
              {"top_k", top_k}};
}

RedialRecConfig RedialRecConfig::from_json(const Json& params) {
  RedialRecConfig c;
  try {
    c.hidden_size = params.value("hidden_size", c.hidden_size);
    c.lambda = params.value("lambda", c.lambda);
    c.sentiment_window = params.value("sentiment_window", c.sentiment_window);
    c.top_k = params.value("top_k", c.top_k);
  } catch (const Json::exception& e) {
    fail(ErrorCode::kInvalidConfig, std::string("redial-rec params: ") + e.what());
  }
  return c;
}

RecList rank_items(const Eigen::VectorXd& scores, std::size_t k,
                   const std::set<std::int64_t>& excluded, const EntityCatalog& catalog) {
  std::vector<std::int64_t> order(static_cast<std::size_t>(scores.size()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::int64_t a, std::int64_t b) {
    return scores(a) > scores(b);
  });
  RecList out;
  for (auto id : order) {
    if (out.size() >= k) break;
    if (excluded.count(id)) continue;
    out.push_back({id, catalog.name(id), scores(id)});
  }
  return out;
}

std::set<std::int64_t> mentioned_items(const Dialog& d, const EntityCatalog& catalog) {
  std::set<std::int64_t> ids;
  for (const auto& u : d.utterances) {
    for (const auto& span : u.spans) {
      if (auto id = catalog.resolve(span)) ids.insert(*id);
    }
  }
  return ids;
}

RedialRec::RedialRec(std::string name, CompositeTokenizer tokenizer, SentimentLexicon lexicon,
                     AutoRecParams params, RedialRecConfig cfg)
    : Module(std::move(name), make_config(cfg, params)),
      tokenizer_(std::move(tokenizer)),
      lexicon_(std::move(lexicon)),
      params_(params.rounded_to_f32()),
      cfg_(cfg) {
  params_.validate();
  if (params_.num_items() != tokenizer_.catalog().size()) {
    fail(ErrorCode::kShapeMismatch, "AutoRec covers " + std::to_string(params_.num_items()) +
                                        " items but the catalog has " +
                                        std::to_string(tokenizer_.catalog().size()));
  }
  cfg_.hidden_size = params_.hidden();
}

TensorMap RedialRec::forward(const TensorMap& inputs, const TensorMap* labels) const {
  auto it = inputs.find("ratings");
  if (it == inputs.end()) fail(ErrorCode::kInvalidArgument, "forward needs a \"ratings\" tensor");
  const auto n = params_.num_items();
  Eigen::VectorXd x = tensor_vector(it->second, n);

  Eigen::VectorXd h = (params_.W1 * x + params_.b1).unaryExpr([](double a) {
    return 1.0 / (1.0 + std::exp(-a));
  });
  Eigen::VectorXd scores = params_.W2 * h + params_.b2;

  TensorMap out;
  out["scores"] = vector_tensor("scores", scores);
  out["hidden"] = vector_tensor("hidden", h);
  if (labels) {
    auto lt = labels->find("ratings");
    if (lt == labels->end()) fail(ErrorCode::kInvalidArgument, "labels need a \"ratings\" tensor");
    Eigen::VectorXd y = tensor_vector(lt->second, n);
    double sum = 0.0;
    std::size_t observed = 0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      if (y(i) == 0.0) continue;
      sum += (scores(i) - y(i)) * (scores(i) - y(i));
      ++observed;
    }
    double loss = (observed ? sum / static_cast<double>(observed) : 0.0) +
                  cfg_.lambda * (params_.W1.squaredNorm() + params_.W2.squaredNorm());
    out["loss"] = Tensor{"loss", {1}, {static_cast<float>(loss)}};
  }
  return out;
}

ModuleOutput RedialRec::response(const Dialog& dialog, const Json& kwargs,
                                 const CallContext&) const {
  auto k = kwarg_int(kwargs, "top_k");
  if (!k) k = kwarg_int(kwargs, "k");
  std::size_t top_k = k ? static_cast<std::size_t>(std::max<std::int64_t>(*k, 0)) : cfg_.top_k;
  bool exclude = kwargs.is_object() ? kwargs.value("exclude_mentioned", true) : true;

  const auto& catalog = tokenizer_.catalog();
  auto ratings = monitor::monitored(
      "rec.extract_ratings", render_dialog(dialog),
      [&] { return extract_ratings(dialog, catalog, lexicon_, cfg_.sentiment_window); },
      [&](const RatingVector& r) { return describe_ratings(r, catalog); });

  TensorMap inputs;
  inputs["ratings"] = vector_tensor("ratings", dense_ratings(ratings));
  auto outputs = monitor::monitored(
      "rec.forward", describe_ratings(ratings, catalog), [&] { return forward(inputs); },
      [](const TensorMap& o) {
        return "scores[" + std::to_string(o.at("scores").data.size()) + "]";
      });

  Eigen::VectorXd scores = tensor_vector(outputs.at("scores"), params_.num_items());
  std::set<std::int64_t> excluded;
  if (exclude) excluded = mentioned_items(dialog, catalog);
  auto recs = monitor::monitored(
      "rec.rank", "k=" + std::to_string(top_k),
      [&] { return rank_items(scores, top_k, excluded, catalog); }, describe_recs);
  return ModuleOutput(std::move(recs));
}

std::map<std::string, std::string> RedialRec::asset_files() const {
  auto files = tokenizer_.to_files();
  files["tokenizer/sentiment.json"] = lexicon_.to_json();
  return files;
}

}  // namespace crskit
