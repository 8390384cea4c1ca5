#include "mdmf/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace mdmf {

void AdamW::update(std::size_t slot, std::span<double> param, std::span<const double> grad, bool decay) {
  if (t_ == 0) throw std::logic_error("AdamW::update called before begin_step");
  if (param.size() != grad.size()) throw std::invalid_argument("AdamW: parameter/gradient size mismatch");
  if (slot >= slots_.size()) slots_.resize(slot + 1);
  auto& mom = slots_[slot];
  if (mom.m.empty()) {
    mom.m.assign(param.size(), 0.0);
    mom.v.assign(param.size(), 0.0);
  }
  if (mom.m.size() != param.size()) throw std::invalid_argument("AdamW: block size changed between steps");

  const double lr = cfg_.learning_rate;
  const double bias1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bias2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  const double shrink = decay ? 1.0 - lr * cfg_.weight_decay : 1.0;
  for (std::size_t i = 0; i < param.size(); ++i) {
    mom.m[i] = cfg_.beta1 * mom.m[i] + (1.0 - cfg_.beta1) * grad[i];
    mom.v[i] = cfg_.beta2 * mom.v[i] + (1.0 - cfg_.beta2) * grad[i] * grad[i];
    const double m_hat = mom.m[i] / bias1;
    const double v_hat = mom.v[i] / bias2;
    param[i] = param[i] * shrink - lr * m_hat / (std::sqrt(v_hat) + cfg_.epsilon);
  }
}

}  // namespace mdmf
