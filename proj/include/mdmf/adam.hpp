#pragma once

#include <span>
#include <vector>

namespace mdmf {

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double epsilon = 1e-8;
  double weight_decay = 0.01;
};

// Adam with decoupled (AdamW-style) weight decay. Parameter blocks are
// identified by slot index; moment buffers are created on first use.
class AdamW {
 public:
  explicit AdamW(AdamConfig cfg) : cfg_(cfg) {}

  // Advances the shared step counter; call once before the updates of a step.
  void begin_step() { ++t_; }

  // Descends `grad` for one block. `decay` applies weight decay to it.
  void update(std::size_t slot, std::span<double> param, std::span<const double> grad, bool decay);

  long step_count() const noexcept { return t_; }
  const AdamConfig& config() const noexcept { return cfg_; }

 private:
  struct Moments {
    std::vector<double> m;
    std::vector<double> v;
  };

  AdamConfig cfg_;
  long t_ = 0;
  std::vector<Moments> slots_;
};

}  // namespace mdmf
