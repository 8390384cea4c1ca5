#pragma once

#include <span>

#include "mdmf/embeddings.hpp"

// Evaluation metrics. Label::generated is the positive class throughout.
namespace mdmf::metrics {

// Mann-Whitney statistic; tied positive/negative pairs count 1/2.
// Requires at least one sample of each class.
double auroc(std::span<const double> scores, std::span<const Label> labels);

// Step-wise average precision. Equal scores form one threshold group.
// Requires at least one positive.
double average_precision(std::span<const double> scores, std::span<const Label> labels);

struct BestAccuracy {
  double accuracy = 0.0;
  // Predict generated iff score > tau. May be +-infinity.
  double tau = 0.0;
};

// Maximum accuracy over the midpoints between adjacent distinct scores and
// the two infinite sentinels. Ties pick the smallest tau.
BestAccuracy best_accuracy(std::span<const double> scores, std::span<const Label> labels);

}  // namespace mdmf::metrics
