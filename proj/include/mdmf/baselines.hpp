#pragma once

#include <span>
#include <vector>

#include "mdmf/embeddings.hpp"
#include "mdmf/train.hpp"

namespace mdmf::baselines {

// Linear head applied to each patch embedding independently.
struct PatchClassifier {
  std::vector<double> weight;  // length D
  double bias = 0.0;

  double logit(std::span<const double> patch) const;
  std::vector<double> logits(const PatchEmbeddingField& field) const;
};

// Mean per-patch binary cross-entropy over a batch of images; every patch
// carries its image label. Gradient is written to grad_w / grad_b.
double bce_loss(const PatchClassifier& clf, std::span<const PatchEmbeddingField* const> fields,
                std::span<const Label> labels, std::vector<double>* grad_w = nullptr, double* grad_b = nullptr);

// Mean loss over a whole real/fake pair of datasets.
double dataset_bce_loss(const PatchClassifier& clf, const EmbeddingDataset& real, const EmbeddingDataset& fake);

// Logistic regression from zero weights with AdamW. Images from both sets
// are shuffled together each epoch; the last batch of an epoch may be short.
// `lambda` and `dropout_enabled` are ignored.
PatchClassifier train_patch_classifier(const EmbeddingDataset& real, const EmbeddingDataset& fake,
                                       const TrainConfig& cfg);

// Fraction of patches with sigmoid(logit) > theta_patch.
double voting_score(const PatchEmbeddingField& field, const PatchClassifier& clf, double theta_patch);

enum class Pooling { mean, max, topk };

// Mean, max or mean of the t largest per-patch logits. t is used by topk
// only and must lie in [1, K].
double pooled_score(const PatchEmbeddingField& field, const PatchClassifier& clf, Pooling mode, std::size_t t = 5);

// Voting thresholds swept for the baseline comparison.
inline constexpr double kVotingThetas[] = {0.03, 0.05, 0.08, 0.10, 0.15, 0.20, 0.25, 0.30};

// 0.01, 0.02, ..., 0.99.
std::vector<double> dense_theta_grid();

}  // namespace mdmf::baselines
