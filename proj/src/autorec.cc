#include "crskit/autorec.h"

#include <cmath>

#include "crskit/error.h"

namespace crskit {
namespace {

Eigen::VectorXd sigmoid(const Eigen::VectorXd& a) {
  return a.unaryExpr([](double x) { return 1.0 / (1.0 + std::exp(-x)); });
}

Tensor matrix_tensor(const std::string& name, const Eigen::MatrixXd& m) {
  Tensor t{name, {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())}, {}};
  t.data.reserve(m.size());
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) t.data.push_back(static_cast<float>(m(i, j)));
  }
  return t;
}

Tensor vector_tensor(const std::string& name, const Eigen::VectorXd& v) {
  Tensor t{name, {static_cast<std::uint64_t>(v.size())}, {}};
  for (Eigen::Index i = 0; i < v.size(); ++i) t.data.push_back(static_cast<float>(v(i)));
  return t;
}

Eigen::MatrixXd tensor_matrix(const Tensor& t) {
  if (t.shape.size() != 2) fail(ErrorCode::kShapeMismatch, t.name + " must be rank 2");
  Eigen::MatrixXd m(t.shape[0], t.shape[1]);
  std::size_t k = 0;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = t.data[k++];
  }
  return m;
}

Eigen::VectorXd tensor_vector(const Tensor& t) {
  if (t.shape.size() != 1) fail(ErrorCode::kShapeMismatch, t.name + " must be rank 1");
  Eigen::VectorXd v(t.shape[0]);
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = t.data[i];
  return v;
}

bool all_finite(const AutoRecParams& p) {
  return p.W1.allFinite() && p.b1.allFinite() && p.W2.allFinite() && p.b2.allFinite();
}

}  // namespace

AutoRecParams AutoRecParams::zeros(std::size_t num_items, std::size_t hidden) {
  auto n = static_cast<Eigen::Index>(num_items);
  auto d = static_cast<Eigen::Index>(hidden);
  return {Eigen::MatrixXd::Zero(d, n), Eigen::VectorXd::Zero(d), Eigen::MatrixXd::Zero(n, d),
          Eigen::VectorXd::Zero(n)};
}

AutoRecParams AutoRecParams::random(std::size_t num_items, std::size_t hidden,
                                    std::mt19937_64& rng, double scale) {
  std::normal_distribution<double> normal(0.0, scale);
  auto p = zeros(num_items, hidden);
  for (Eigen::Index i = 0; i < p.W1.size(); ++i) p.W1.data()[i] = normal(rng);
  for (Eigen::Index i = 0; i < p.W2.size(); ++i) p.W2.data()[i] = normal(rng);
  return p;
}

void AutoRecParams::validate() const {
  auto d = W1.rows();
  auto n = W1.cols();
  if (b1.size() != d || W2.rows() != n || W2.cols() != d || b2.size() != n) {
    fail(ErrorCode::kShapeMismatch, "inconsistent AutoRec parameter shapes");
  }
  if (!all_finite(*this)) fail(ErrorCode::kInvalidArgument, "AutoRec parameters not finite");
}

AutoRecParams AutoRecParams::rounded_to_f32() const {
  auto round = [](double x) { return static_cast<double>(static_cast<float>(x)); };
  return {W1.unaryExpr(round), b1.unaryExpr(round), W2.unaryExpr(round), b2.unaryExpr(round)};
}

WeightsFile AutoRecParams::to_weights() const {
  return WeightsFile{{matrix_tensor("W1", W1), vector_tensor("b1", b1), matrix_tensor("W2", W2),
                      vector_tensor("b2", b2)}};
}

AutoRecParams AutoRecParams::from_weights(const WeightsFile& w) {
  AutoRecParams p{tensor_matrix(w.at("W1")), tensor_vector(w.at("b1")), tensor_matrix(w.at("W2")),
                  tensor_vector(w.at("b2"))};
  p.validate();
  return p;
}

Eigen::VectorXd dense_ratings(const RatingVector& r) {
  Eigen::VectorXd x = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(r.num_items));
  for (const auto& [id, rating] : r.ratings) {
    if (id < 0 || static_cast<std::size_t>(id) >= r.num_items) {
      fail(ErrorCode::kShapeMismatch, "rating for item " + std::to_string(id) + " outside catalog");
    }
    x(id) = rating;
  }
  return x;
}

Eigen::VectorXd autorec_forward_dense(const AutoRecParams& p, const Eigen::VectorXd& r) {
  if (r.size() != p.W1.cols() || p.b1.size() != p.W1.rows() || p.W2.cols() != p.W1.rows() ||
      p.b2.size() != p.W2.rows()) {
    fail(ErrorCode::kShapeMismatch, "rating vector of size " + std::to_string(r.size()) +
                                        " vs catalog of " + std::to_string(p.W1.cols()));
  }
  Eigen::VectorXd h = sigmoid(p.W1 * r + p.b1);
  return p.W2 * h + p.b2;
}

Eigen::VectorXd autorec_forward(const AutoRecParams& p, const RatingVector& r) {
  if (r.num_items != static_cast<std::size_t>(p.W1.cols())) {
    fail(ErrorCode::kShapeMismatch, "rating vector over " + std::to_string(r.num_items) +
                                        " items vs catalog of " + std::to_string(p.W1.cols()));
  }
  return autorec_forward_dense(p, dense_ratings(r));
}

LossAndGrad autorec_loss_grad(const AutoRecParams& p, std::span<const RatingVector> batch,
                              double lambda) {
  if (batch.empty()) fail(ErrorCode::kEmptyBatch, "no rating vectors");
  p.validate();

  std::size_t observed = 0;
  for (const auto& r : batch) observed += r.ratings.size();

  LossAndGrad out{0.0, AutoRecParams::zeros(p.num_items(), p.hidden())};
  auto& g = out.grad;
  double data_loss = 0.0;
  if (observed > 0) {
    const double scale = 1.0 / static_cast<double>(observed);
    for (const auto& r : batch) {
      if (r.ratings.empty()) continue;
      Eigen::VectorXd x = dense_ratings(r);
      if (x.size() != p.W1.cols()) fail(ErrorCode::kShapeMismatch, "rating vector size");
      Eigen::VectorXd h = sigmoid(p.W1 * x + p.b1);
      Eigen::VectorXd s = p.W2 * h + p.b2;

      Eigen::VectorXd ds = Eigen::VectorXd::Zero(s.size());
      for (const auto& [id, rating] : r.ratings) {
        double err = s(id) - rating;
        data_loss += err * err * scale;
        ds(id) = 2.0 * err * scale;
      }
      g.W2.noalias() += ds * h.transpose();
      g.b2 += ds;
      Eigen::VectorXd da = (p.W2.transpose() * ds).cwiseProduct(h.cwiseProduct(
                               (Eigen::VectorXd::Ones(h.size()) - h)));
      g.W1.noalias() += da * x.transpose();
      g.b1 += da;
    }
  }
  out.loss = data_loss + lambda * (p.W1.squaredNorm() + p.W2.squaredNorm());
  g.W1 += 2.0 * lambda * p.W1;
  g.W2 += 2.0 * lambda * p.W2;
  return out;
}

double autorec_loss(const AutoRecParams& p, std::span<const RatingVector> batch, double lambda) {
  return autorec_loss_grad(p, batch, lambda).loss;
}

TrainResult train_autorec(AutoRecParams init, std::span<const RatingVector> data,
                          const TrainOptions& opts,
                          const std::function<void(int, double)>& on_epoch) {
  if (!(opts.learning_rate >= 0.0)) {
    fail(ErrorCode::kInvalidArgument, "learning rate must be non-negative");
  }
  TrainResult result{std::move(init), {}, 0.0};
  auto& p = result.params;
  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    auto lg = autorec_loss_grad(p, data, opts.lambda);
    if (!std::isfinite(lg.loss)) {
      fail(ErrorCode::kDivergenceDetected, "loss is not finite at epoch " + std::to_string(epoch));
    }
    result.epoch_losses.push_back(lg.loss);
    if (on_epoch) on_epoch(epoch, lg.loss);
    if (opts.learning_rate == 0.0) continue;
    p.W1 -= opts.learning_rate * lg.grad.W1;
    p.b1 -= opts.learning_rate * lg.grad.b1;
    p.W2 -= opts.learning_rate * lg.grad.W2;
    p.b2 -= opts.learning_rate * lg.grad.b2;
    if (!all_finite(p)) {
      fail(ErrorCode::kDivergenceDetected, "parameters not finite after epoch " +
                                               std::to_string(epoch));
    }
  }
  result.final_loss = autorec_loss(p, data, opts.lambda);
  if (!std::isfinite(result.final_loss)) {
    fail(ErrorCode::kDivergenceDetected, "final loss is not finite");
  }
  return result;
}

}  // namespace crskit
