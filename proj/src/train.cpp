#include "mdmf/train.hpp"

#include <numeric>
#include <stdexcept>
#include <string>

#include "mdmf/adam.hpp"

namespace mdmf {

void TrainConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("TrainConfig: epochs must be >= 1");
  if (batch_size < 2) throw std::invalid_argument("TrainConfig: batch size must be >= 2");
  if (!(learning_rate >= 0.0)) throw std::invalid_argument("TrainConfig: learning rate must be >= 0");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw std::invalid_argument("TrainConfig: Adam betas must lie in [0, 1)");
  }
  if (!(weight_decay >= 0.0)) throw std::invalid_argument("TrainConfig: weight decay must be >= 0");
  if (!(lambda > 0.0)) throw std::invalid_argument("TrainConfig: lambda must be > 0");
}

double TrainHistory::epoch_mean_j(int epoch) const {
  double acc = 0.0;
  std::size_t count = 0;
  for (const auto& s : steps) {
    if (s.epoch == epoch) {
      acc += s.j;
      ++count;
    }
  }
  if (count == 0) throw std::out_of_range("TrainHistory: no steps in epoch " + std::to_string(epoch));
  return acc / static_cast<double>(count);
}

std::vector<std::size_t> keyed_permutation(std::size_t n, rng::Key key, std::uint32_t a, std::uint32_t b) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  rng::Stream s(key, a, b);
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(s.below(i));
    std::swap(perm[i - 1], perm[j]);
  }
  return perm;
}

TrainResult train(const EmbeddingDataset& real, const EmbeddingDataset& fake, const TrainConfig& cfg,
                  PFSParams init) {
  cfg.validate();
  init.validate();
  if (real.patch_count() != fake.patch_count() || real.dim() != fake.dim()) {
    throw std::invalid_argument("train: real and fake datasets have different (K, D)");
  }
  if (real.dim() != init.input_dim) throw std::invalid_argument("train: dataset D does not match projection input");
  if (real.size() < cfg.batch_size || fake.size() < cfg.batch_size) {
    throw std::invalid_argument("train: each dataset needs at least batch_size = " + std::to_string(cfg.batch_size) +
                                " records");
  }

  AdamW opt({cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, 1e-8, cfg.weight_decay});
  const auto shuffle_key = rng::derive(rng::Key(cfg.seed), rng::Tag::shuffle);
  const auto dropout_key = rng::derive(rng::Key(cfg.seed), rng::Tag::dropout);
  const Mode mode = cfg.dropout_enabled ? Mode::train : Mode::eval;
  const std::size_t steps_per_epoch = std::min(real.size(), fake.size()) / cfg.batch_size;

  TrainResult result{std::move(init), {}};
  auto& params = result.params;
  std::vector<const PatchEmbeddingField*> bx(cfg.batch_size);
  std::vector<const PatchEmbeddingField*> by(cfg.batch_size);
  long step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto perm_real = keyed_permutation(real.size(), shuffle_key, static_cast<std::uint32_t>(epoch), 0);
    const auto perm_fake = keyed_permutation(fake.size(), shuffle_key, static_cast<std::uint32_t>(epoch), 1);
    for (std::size_t b = 0; b < steps_per_epoch; ++b, ++step) {
      for (std::size_t i = 0; i < cfg.batch_size; ++i) {
        bx[i] = &real[perm_real[b * cfg.batch_size + i]].field;
        by[i] = &fake[perm_fake[b * cfg.batch_size + i]].field;
      }
      auto eval = mmd::evaluate_objective(mmd::FieldRefs(bx), mmd::FieldRefs(by), params, cfg.lambda, mode, dropout_key, static_cast<std::uint32_t>(step));
      result.history.steps.push_back(
          {step, epoch, eval.terms.j, eval.terms.mmd2, eval.terms.variance, params.gamma()});

      // Ascent on J is descent on -J.
      auto& g = eval.grad;
      g.for_each_block([](std::vector<double>& block) {
        for (auto& v : block) v = -v;
      });
      const double neg_lg = -g.log_gamma;

      opt.begin_step();
      opt.update(0, params.weights.w1, g.w1, true);
      opt.update(1, params.weights.b1, g.b1, true);
      opt.update(2, params.weights.w2, g.w2, true);
      opt.update(3, params.weights.b2, g.b2, true);
      opt.update(4, std::span(&params.weights.log_gamma, 1), std::span(&neg_lg, 1), false);
    }
  }
  return result;
}

}  // namespace mdmf
