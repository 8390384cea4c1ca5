#pragma once

#include <cstdint>
#include <vector>

#include "mdmf/embeddings.hpp"
#include "mdmf/objective.hpp"
#include "mdmf/pfs.hpp"

namespace mdmf {

// Defaults are the reference AdamW recipe (lr 1e-4, betas 0.9/0.99, weight
// decay 0.01, batch 256, 25 epochs).
struct TrainConfig {
  int epochs = 25;
  std::size_t batch_size = 256;
  double learning_rate = 1e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.99;
  double weight_decay = 0.01;
  double lambda = mmd::kDefaultLambda;
  std::uint64_t seed = 0;
  bool dropout_enabled = true;

  void validate() const;
};

struct TrainStep {
  long step = 0;
  int epoch = 0;
  double j = 0.0;
  double mmd2 = 0.0;
  double variance = 0.0;
  double gamma = 0.0;

  bool operator==(const TrainStep&) const = default;
};

struct TrainHistory {
  std::vector<TrainStep> steps;

  // Mean J over the steps of one epoch.
  double epoch_mean_j(int epoch) const;
  bool operator==(const TrainHistory&) const = default;
};

struct TrainResult {
  PFSParams params;
  TrainHistory history;
};

// Maximizes the test-power criterion over the projection weights and
// log(gamma) starting from `init`. Each epoch draws disjoint mini-batches of
// B real and B fake records from permutations keyed by (seed, epoch);
// min(|real|, |fake|) / B steps per epoch.
TrainResult train(const EmbeddingDataset& real, const EmbeddingDataset& fake, const TrainConfig& cfg,
                  PFSParams init);

// Seeded Fisher-Yates permutation of [0, n).
std::vector<std::size_t> keyed_permutation(std::size_t n, rng::Key key, std::uint32_t a, std::uint32_t b);

}  // namespace mdmf
