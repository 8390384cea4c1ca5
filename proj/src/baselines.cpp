#include "mdmf/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>

#include "mdmf/adam.hpp"
#include "mdmf/matrix.hpp"

namespace mdmf::baselines {

namespace {

// log(1 + exp(x)) without overflow.
double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

double PatchClassifier::logit(std::span<const double> patch) const {
  if (patch.size() != weight.size()) throw std::invalid_argument("PatchClassifier: patch dimension mismatch");
  return dot(patch, weight) + bias;
}

std::vector<double> PatchClassifier::logits(const PatchEmbeddingField& field) const {
  std::vector<double> out(field.patch_count());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = logit(field.patch(k));
  return out;
}

double bce_loss(const PatchClassifier& clf, std::span<const PatchEmbeddingField* const> fields,
                std::span<const Label> labels, std::vector<double>* grad_w, double* grad_b) {
  if (fields.size() != labels.size()) throw std::invalid_argument("bce_loss: fields and labels differ in length");
  if (fields.empty()) throw std::invalid_argument("bce_loss: empty batch");
  const std::size_t dim = clf.weight.size();
  if (grad_w) grad_w->assign(dim, 0.0);
  double gb = 0.0;
  double loss = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    const double y = labels[i] == Label::generated ? 1.0 : 0.0;
    for (std::size_t k = 0; k < fields[i]->patch_count(); ++k) {
      const auto patch = fields[i]->patch(k);
      const double z = clf.logit(patch);
      // -[y log s(z) + (1 - y) log(1 - s(z))]
      loss += softplus(z) - y * z;
      const double r = sigmoid(z) - y;
      if (grad_w) {
        for (std::size_t c = 0; c < dim; ++c) (*grad_w)[c] += r * patch[c];
      }
      gb += r;
      ++count;
    }
  }
  const double inv = 1.0 / static_cast<double>(count);
  if (grad_w) {
    for (auto& g : *grad_w) g *= inv;
  }
  if (grad_b) *grad_b = gb * inv;
  return loss * inv;
}

double dataset_bce_loss(const PatchClassifier& clf, const EmbeddingDataset& real, const EmbeddingDataset& fake) {
  std::vector<const PatchEmbeddingField*> fields;
  std::vector<Label> labels;
  for (const auto& r : real.records()) {
    fields.push_back(&r.field);
    labels.push_back(Label::real);
  }
  for (const auto& r : fake.records()) {
    fields.push_back(&r.field);
    labels.push_back(Label::generated);
  }
  return bce_loss(clf, fields, labels);
}

PatchClassifier train_patch_classifier(const EmbeddingDataset& real, const EmbeddingDataset& fake,
                                       const TrainConfig& cfg) {
  if (cfg.epochs < 1) throw std::invalid_argument("train_patch_classifier: epochs must be >= 1");
  if (cfg.batch_size < 1) throw std::invalid_argument("train_patch_classifier: batch size must be >= 1");
  if (real.patch_count() != fake.patch_count() || real.dim() != fake.dim()) {
    throw std::invalid_argument("train_patch_classifier: real and fake datasets have different (K, D)");
  }
  if (real.empty() || fake.empty()) throw std::invalid_argument("train_patch_classifier: empty dataset");

  const std::size_t n = real.size() + fake.size();
  auto field_at = [&](std::size_t i) -> const PatchEmbeddingField& {
    return i < real.size() ? real[i].field : fake[i - real.size()].field;
  };

  PatchClassifier clf{std::vector<double>(real.dim(), 0.0), 0.0};
  AdamW opt({cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, 1e-8, cfg.weight_decay});
  const auto shuffle_key = rng::derive(rng::Key(cfg.seed), rng::Tag::shuffle);
  std::vector<const PatchEmbeddingField*> batch;
  std::vector<Label> labels;
  std::vector<double> gw;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    // Stream b = 2 keeps this shuffle apart from the PFS trainer's (0, 1).
    const auto perm = keyed_permutation(n, shuffle_key, static_cast<std::uint32_t>(epoch), 2);
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t stop = std::min(n, start + cfg.batch_size);
      batch.clear();
      labels.clear();
      for (std::size_t i = start; i < stop; ++i) {
        batch.push_back(&field_at(perm[i]));
        labels.push_back(perm[i] < real.size() ? Label::real : Label::generated);
      }
      double gb = 0.0;
      bce_loss(clf, batch, labels, &gw, &gb);
      opt.begin_step();
      opt.update(0, clf.weight, gw, true);
      opt.update(1, std::span(&clf.bias, 1), std::span<const double>(&gb, 1), true);
    }
  }
  return clf;
}

double voting_score(const PatchEmbeddingField& field, const PatchClassifier& clf, double theta_patch) {
  if (!(theta_patch >= 0.0 && theta_patch <= 1.0)) throw std::invalid_argument("voting_score: theta must lie in [0, 1]");
  // sigmoid(z) > theta  <=>  z > logit(theta); exact at the endpoints.
  const double cut = theta_patch == 0.0   ? -std::numeric_limits<double>::infinity()
                     : theta_patch == 1.0 ? std::numeric_limits<double>::infinity()
                                          : std::log(theta_patch) - std::log1p(-theta_patch);
  std::size_t votes = 0;
  for (double z : clf.logits(field)) {
    if (z > cut) ++votes;
  }
  return static_cast<double>(votes) / static_cast<double>(field.patch_count());
}

double pooled_score(const PatchEmbeddingField& field, const PatchClassifier& clf, Pooling mode, std::size_t t) {
  auto z = clf.logits(field);
  switch (mode) {
    case Pooling::max:
      return *std::max_element(z.begin(), z.end());
    case Pooling::topk: {
      if (t < 1 || t > z.size()) throw std::invalid_argument("pooled_score: top-k size must lie in [1, K]");
      std::sort(z.begin(), z.end(), std::greater<>());
      z.resize(t);
      break;
    }
    case Pooling::mean:
      break;
  }
  double acc = 0.0;
  for (double v : z) acc += v;
  return acc / static_cast<double>(z.size());
}

std::vector<double> dense_theta_grid() {
  std::vector<double> out;
  for (int i = 1; i <= 99; ++i) out.push_back(i / 100.0);
  return out;
}

}  // namespace mdmf::baselines
