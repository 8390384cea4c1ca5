#include "mdmf/synth.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace mdmf::synth {

namespace {

double norm2(const std::vector<double>& v) {
  double acc = 0.0;
  for (double x : v) acc += x * x;
  return std::sqrt(acc);
}

Matrix base_noise(const SyntheticConfig& cfg, rng::Key noise_key, std::size_t record) {
  Matrix patches(cfg.patch_count, cfg.dim);
  for (std::size_t i = 0; i < cfg.patch_count; ++i) {
    rng::Stream s(noise_key, static_cast<std::uint32_t>(record), static_cast<std::uint32_t>(i));
    for (auto& v : patches.row(i)) v = cfg.sigma_e * s.normal();
  }
  return patches;
}

}  // namespace

void SyntheticConfig::validate() const {
  if (dim == 0 || patch_count == 0) throw std::invalid_argument("SyntheticConfig: D and K must be positive");
  if (!(sigma_e > 0.0)) throw std::invalid_argument("SyntheticConfig: sigma_e must be > 0");
  if (!(rho >= 0.0 && rho <= 1.0)) throw std::invalid_argument("SyntheticConfig: rho must lie in [0, 1]");
  if (mu_defect.size() != dim) {
    throw std::invalid_argument("SyntheticConfig: mu_defect has dimension " + std::to_string(mu_defect.size()) +
                                ", expected " + std::to_string(dim));
  }
  if (dilution) {
    if (!(dilution->c > 0.0) || !(dilution->eta >= 0.0)) {
      throw std::invalid_argument("SyntheticConfig: dilution needs c > 0 and eta >= 0");
    }
    if (norm2(mu_defect) == 0.0) throw std::invalid_argument("SyntheticConfig: dilution needs a nonzero mu_defect");
  }
  if (!(phi_mix >= 0.0 && phi_mix < 1.0)) throw std::invalid_argument("SyntheticConfig: phi_mix must lie in [0, 1)");
}

std::vector<double> SyntheticConfig::effective_defect() const {
  if (!dilution) return mu_defect;
  const double n = norm2(mu_defect);
  std::vector<double> nu(mu_defect);
  for (auto& v : nu) v /= n;
  return diluted_defect(patch_count, dilution->c, dilution->eta, nu);
}

std::vector<double> axis_defect(std::size_t dim, double norm) {
  std::vector<double> mu(dim, 0.0);
  if (dim > 0) mu[0] = norm;
  return mu;
}

std::vector<double> diluted_defect(std::size_t patch_count, double c, double eta, const std::vector<double>& nu) {
  if (patch_count == 0) throw std::invalid_argument("diluted_defect: K must be >= 1");
  if (std::abs(norm2(nu) - 1.0) > 1e-9) throw std::invalid_argument("diluted_defect: nu must have unit norm");
  const double g = c * std::pow(static_cast<double>(patch_count), -eta);
  std::vector<double> out(nu);
  for (auto& v : out) v *= g;
  return out;
}

std::vector<PatchEmbeddingField> sample_real_fields(const SyntheticConfig& cfg, std::size_t n, rng::Key key) {
  cfg.validate();
  const auto noise_key = rng::derive(key, rng::Tag::base_noise);
  std::vector<Matrix> raw(n);
#pragma omp parallel for schedule(static)
  for (std::size_t r = 0; r < n; ++r) raw[r] = base_noise(cfg, noise_key, r);

  std::vector<PatchEmbeddingField> out;
  out.reserve(n);
  for (auto& m : raw) out.emplace_back(std::move(m));
  return out;
}

std::vector<PatchEmbeddingField> sample_fake_fields(const SyntheticConfig& cfg, std::size_t n, rng::Key key) {
  cfg.validate();
  const auto noise_key = rng::derive(key, rng::Tag::base_noise);
  const auto defect_key = rng::derive(key, rng::Tag::defect);
  const auto mu = cfg.effective_defect();
  const double stay = 0.5 * (1.0 + cfg.phi_mix);

  std::vector<Matrix> raw(n);
#pragma omp parallel for schedule(static)
  for (std::size_t r = 0; r < n; ++r) {
    Matrix patches = base_noise(cfg, noise_key, r);
    rng::Stream s(defect_key, static_cast<std::uint32_t>(r));
    double sign = 0.0;
    for (std::size_t i = 0; i < cfg.patch_count; ++i) {
      const bool defective = s.bernoulli(cfg.rho);
      if (cfg.phi_mix > 0.0 && i > 0) {
        sign = s.uniform() < stay ? sign : -sign;
      } else {
        sign = s.rademacher();
      }
      if (defective) {
        auto row = patches.row(i);
        for (std::size_t c = 0; c < cfg.dim; ++c) row[c] += sign * mu[c];
      }
    }
    raw[r] = std::move(patches);
  }

  std::vector<PatchEmbeddingField> out;
  out.reserve(n);
  for (auto& m : raw) out.emplace_back(std::move(m));
  return out;
}

EmbeddingDataset make_dataset(const std::vector<PatchEmbeddingField>& fields, Label label, const std::string& id_prefix) {
  if (fields.empty()) throw std::invalid_argument("make_dataset: no fields");
  EmbeddingDataset ds(static_cast<std::uint32_t>(fields.front().patch_count()),
                      static_cast<std::uint32_t>(fields.front().dim()));
  ds.reserve(fields.size());
  for (std::size_t i = 0; i < fields.size(); ++i) ds.add({fields[i], label, id_prefix + std::to_string(i)});
  return ds;
}

}  // namespace mdmf::synth
