#pragma once

// Item-space autoencoder over a sparse rating vector r in {-1, 0, +1}^N:
//
//   h      = sigmoid(W1 r + b1)      W1: d x N, b1: d
//   scores = W2 h + b2               W2: N x d, b2: N
//
// trained on the masked squared error of observed entries plus an L2 penalty
// on W1 and W2.

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "crskit/sentiment.h"
#include "crskit/weights.h"

namespace crskit {

struct AutoRecParams {
  Eigen::MatrixXd W1;
  Eigen::VectorXd b1;
  Eigen::MatrixXd W2;
  Eigen::VectorXd b2;

  static AutoRecParams zeros(std::size_t num_items, std::size_t hidden);
  // Weights ~ N(0, scale^2), biases zero.
  static AutoRecParams random(std::size_t num_items, std::size_t hidden, std::mt19937_64& rng,
                              double scale = 0.1);

  std::size_t num_items() const { return static_cast<std::size_t>(W2.rows()); }
  std::size_t hidden() const { return static_cast<std::size_t>(W1.rows()); }

  // Throws kShapeMismatch / kInvalidArgument (non-finite entries).
  void validate() const;
  // Every entry rounded through float, matching what weights.bin can hold.
  AutoRecParams rounded_to_f32() const;

  // Tensors "W1", "b1", "W2", "b2", row-major.
  WeightsFile to_weights() const;
  static AutoRecParams from_weights(const WeightsFile& w);

  bool operator==(const AutoRecParams& o) const {
    return W1 == o.W1 && b1 == o.b1 && W2 == o.W2 && b2 == o.b2;
  }
};

Eigen::VectorXd dense_ratings(const RatingVector& r);

// Throws kShapeMismatch when r.num_items differs from the parameter shapes.
Eigen::VectorXd autorec_forward(const AutoRecParams& p, const RatingVector& r);
Eigen::VectorXd autorec_forward_dense(const AutoRecParams& p, const Eigen::VectorXd& r);

struct LossAndGrad {
  double loss = 0.0;
  AutoRecParams grad;
};

inline constexpr double kDefaultL2 = 1e-4;

// loss = mean over all observed entries in the batch of (score_i - r_i)^2
//        + lambda * (|W1|^2 + |W2|^2)
// Throws kEmptyBatch on an empty batch.
LossAndGrad autorec_loss_grad(const AutoRecParams& p, std::span<const RatingVector> batch,
                              double lambda = kDefaultL2);
double autorec_loss(const AutoRecParams& p, std::span<const RatingVector> batch,
                    double lambda = kDefaultL2);

struct TrainOptions {
  int epochs = 200;
  double learning_rate = 0.05;
  double lambda = kDefaultL2;
};

struct TrainResult {
  AutoRecParams params;
  std::vector<double> epoch_losses;  // loss before each epoch's update
  double final_loss = 0.0;           // loss of the returned params
};

// Full-batch gradient descent. learning_rate == 0 leaves params unchanged;
// negative rates are rejected. Throws kDivergenceDetected on a non-finite loss.
TrainResult train_autorec(AutoRecParams init, std::span<const RatingVector> data,
                          const TrainOptions& opts,
                          const std::function<void(int epoch, double loss)>& on_epoch = {});

}  // namespace crskit
