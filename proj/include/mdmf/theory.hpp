#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mdmf/matrix.hpp"
#include "mdmf/rng.hpp"
#include "mdmf/synth.hpp"

// Monte-Carlo checks of the detector's theoretical properties.
namespace mdmf::theory {

// Isotropic Gaussian surrogate of the signature field: real fields are
// N(0, sigma_z^2 I_{Kd}); fake fields shift every patch by a d-vector of norm
// delta_norm.
struct ClosedFormInputs {
  double gamma = 1.0;
  double sigma_z = 0.5;
  std::size_t patch_count = 4;  // K
  std::size_t pfs_dim = 1;      // d
  double delta_norm = 1.0;

  void validate() const;
};

// 2 (g^2 / (g^2 + 2 s^2))^{Kd/2} [1 - exp(-K |delta|^2 / (2 (g^2 + 2 s^2)))].
double population_mmd_closed_form(const ClosedFormInputs& in);

// n x (K*d) surrogate draws. Row r uses the stream (key, a, r). When
// `shifted`, the first component of each patch is offset by delta_norm.
Matrix sample_surrogate(const ClosedFormInputs& in, std::size_t n, bool shifted, rng::Key key, std::uint32_t a);

struct CheckResult {
  std::string id;
  double measured = 0.0;
  double predicted = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

struct TheoryReport {
  std::vector<CheckResult> checks;

  bool passed() const;
  void append(const TheoryReport& other);
  std::string to_json() const;
  // Fixed-width pass/fail table, one check per line.
  std::string to_table() const;
};

// Mean of independent block estimates of MMD^2_u (blocks of 1000 per side)
// against the closed form. Passes when the difference is inside the 5-sigma
// band of the block mean and, for a positive closed form, below 5% relative.
CheckResult verify_population_mmd(const ClosedFormInputs& in, std::size_t n_samples, std::uint64_t seed);

// phi(e) = e^T A e for a symmetric D x D matrix A.
struct QuadraticMap {
  Matrix a;

  static QuadraticMap identity(std::size_t dim);
  double operator()(std::span<const double> e) const;
};

struct ShiftMeasurement {
  std::size_t patch_count = 0;
  double delta_pfs = 0.0;     // mean phi over fake patches - over real patches
  double se_pfs = 0.0;
  double delta_global = 0.0;  // same for phi of the per-image mean patch
  double se_global = 0.0;
  double ratio = 0.0;         // |delta_pfs| / |delta_global|
};

// Uses n_patches / K images per class. Any mixing setting is allowed here.
ShiftMeasurement measure_shift(std::size_t patch_count, const synth::SyntheticConfig& cfg, std::size_t n_patches,
                               std::uint64_t seed, const QuadraticMap& phi);

// Per K: the PFS shift against rho * mu^T A mu (5-sigma band) and the
// amplification ratio against K (10%). Requires independent patches.
TheoryReport measure_shift_amplification(const std::vector<std::size_t>& k_values, const synth::SyntheticConfig& cfg,
                                         std::size_t n_patches, std::uint64_t seed, const QuadraticMap& phi);

struct SizeStats {
  std::size_t m = 0;
  std::size_t n = 0;
  double null_p95 = 0.0;        // 95th percentile of |MMD^2_u| with both sets real
  double null_mean = 0.0;
  double null_se = 0.0;
  double fake_mean = 0.0;       // mean MMD^2_u(reference, fake test set)
  double ordering_rate = 0.0;   // fraction of trials with fake > real
  double fitted_band = 0.0;     // band_constant * sqrt(1/M + 1/N)
};

struct ConcentrationResult {
  std::vector<SizeStats> sizes;
  double fit_intercept = 0.0;
  double fit_slope = 0.0;
  double r_squared = 0.0;
  // Slope of log p95 against log sqrt(1/M + 1/N).
  double loglog_slope = 0.0;
  // Smallest C with p95 <= C sqrt(1/M + 1/N) at every size.
  double band_constant = 0.0;
  double closed_form = 0.0;
  TheoryReport report;
};

// Case I: both sets real, p95 of |MMD^2_u| fitted linearly against
// sqrt(1/M + 1/N). Case II: the test set is fake; per trial the score against
// a fake set is compared with the score against a fresh real set, and the
// mean fake score must stay above closed form - band. Only M = N is
// supported.
ConcentrationResult concentration_sweep(const std::vector<std::pair<std::size_t, std::size_t>>& sizes,
                                        const ClosedFormInputs& in, std::size_t trials, std::uint64_t seed);

struct SnrResult {
  std::vector<std::size_t> k_values;
  std::vector<double> snr;
  std::size_t argmax_k = 0;
  // Log-log slope over the K values after the peak; NaN with fewer than two.
  double tail_slope = 0.0;
  TheoryReport report;
};

// For each K, estimates Delta_PFS from n_images images per class, repeated
// over `resamples` independent draws; SNR = |mean| / std of the estimates.
// The defect is c K^-eta along the direction of base_cfg.mu_defect.
SnrResult snr_sweep(const std::vector<std::size_t>& k_values, double c, double eta, std::size_t n_images,
                    const synth::SyntheticConfig& base_cfg, std::size_t resamples, std::uint64_t seed);

// Standard suite behind `mdmf theory-check`. `quick` shrinks every sample
// count for smoke runs; its tolerances are then not expected to hold.
TheoryReport run_suite(std::uint64_t seed, bool quick);

// Least-squares line y = a + b x with its coefficient of determination.
struct LinearFit {
  double intercept = 0.0;
  double slope = 0.0;
  double r_squared = 0.0;
};
LinearFit fit_line(std::span<const double> x, std::span<const double> y);

// Empirical quantile with linear interpolation between order statistics.
double quantile(std::vector<double> values, double q);

}  // namespace mdmf::theory
