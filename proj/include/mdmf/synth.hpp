#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "mdmf/embeddings.hpp"
#include "mdmf/rng.hpp"

namespace mdmf::synth {

// Power-law dilution of the defect with patch refinement: g(K) = c * K^-eta.
struct Dilution {
  double c = 1.0;
  double eta = 0.0;
};

// Sparse-defect generator settings. Real patches are u ~ N(0, sigma_e^2 I_D);
// fake patches add a_i * s_i * mu with a_i ~ Bernoulli(rho) and s_i a random
// sign.
struct SyntheticConfig {
  std::size_t dim = 8;           // D
  std::size_t patch_count = 16;  // K
  double sigma_e = 1.0;
  double rho = 0.3;
  std::vector<double> mu_defect;  // length D
  // When set, the defect is diluted_defect(K, c, eta, mu_defect / |mu_defect|).
  std::optional<Dilution> dilution;
  // Lag-one sign correlation across the row-major patch sequence; 0 gives
  // independent signs.
  double phi_mix = 0.0;
  std::uint64_t seed = 0;

  // Throws std::invalid_argument when an invariant is violated.
  void validate() const;
  // mu_defect(K) after optional dilution.
  std::vector<double> effective_defect() const;
};

// Defect along the first axis with the given norm.
std::vector<double> axis_defect(std::size_t dim, double norm);

// Patch streams are keyed by (key, record index, patch index), so any
// record range can be generated independently and in parallel.
std::vector<PatchEmbeddingField> sample_real_fields(const SyntheticConfig& cfg, std::size_t n, rng::Key key);
std::vector<PatchEmbeddingField> sample_fake_fields(const SyntheticConfig& cfg, std::size_t n, rng::Key key);

// c * K^-eta * nu; nu must have unit norm within 1e-9.
std::vector<double> diluted_defect(std::size_t patch_count, double c, double eta, const std::vector<double>& nu);

// Convenience wrapper producing a labeled dataset with ids "<prefix><index>".
EmbeddingDataset make_dataset(const std::vector<PatchEmbeddingField>& fields, Label label, const std::string& id_prefix);

}  // namespace mdmf::synth
