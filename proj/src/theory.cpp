#include "mdmf/theory.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

#include "json.hpp"

#include "mdmf/kernel_mmd.hpp"

namespace mdmf::theory {

namespace {

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};

MeanSe mean_se(std::span<const double> v) {
  MeanSe out;
  if (v.empty()) return out;
  for (double x : v) out.mean += x;
  out.mean /= static_cast<double>(v.size());
  if (v.size() < 2) return out;
  double ss = 0.0;
  for (double x : v) ss += (x - out.mean) * (x - out.mean);
  out.se = std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
  return out;
}

double sample_sd(std::span<const double> v) { return mean_se(v).se * std::sqrt(static_cast<double>(v.size())); }

std::string format_id(const char* fmt, double a, double b = 0.0) {
  char buf[96];
  std::snprintf(buf, sizeof buf, fmt, a, b);
  return buf;
}

// Per-record phi of every patch and of the mean patch.
struct PhiStats {
  std::vector<double> patch;   // n * K values
  std::vector<double> pooled;  // n values
};

PhiStats phi_stats(const std::vector<PatchEmbeddingField>& fields, const QuadraticMap& phi) {
  PhiStats out;
  if (fields.empty()) return out;
  const std::size_t k = fields.front().patch_count();
  const std::size_t dim = fields.front().dim();
  out.patch.resize(fields.size() * k);
  out.pooled.resize(fields.size());
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < fields.size(); ++i) {
    std::vector<double> mean(dim, 0.0);
    for (std::size_t p = 0; p < k; ++p) {
      const auto e = fields[i].patch(p);
      out.patch[i * k + p] = phi(e);
      for (std::size_t c = 0; c < dim; ++c) mean[c] += e[c];
    }
    for (auto& v : mean) v /= static_cast<double>(k);
    out.pooled[i] = phi(mean);
  }
  return out;
}

double mean_of(std::span<const double> v) {
  double acc = 0.0;
  for (double x : v) acc += x;
  return acc / static_cast<double>(v.size());
}

}  // namespace

void ClosedFormInputs::validate() const {
  if (!(gamma > 0.0)) throw std::invalid_argument("ClosedFormInputs: gamma must be > 0");
  if (!(sigma_z >= 0.0)) throw std::invalid_argument("ClosedFormInputs: sigma_z must be >= 0");
  if (patch_count == 0 || pfs_dim == 0) throw std::invalid_argument("ClosedFormInputs: K and d must be positive");
  if (!(delta_norm >= 0.0)) throw std::invalid_argument("ClosedFormInputs: delta_norm must be >= 0");
}

double population_mmd_closed_form(const ClosedFormInputs& in) {
  in.validate();
  const double g2 = in.gamma * in.gamma;
  const double lam = g2 + 2.0 * in.sigma_z * in.sigma_z;
  const double kd = static_cast<double>(in.patch_count * in.pfs_dim);
  const double k = static_cast<double>(in.patch_count);
  const double shrink = std::pow(g2 / lam, kd / 2.0);
  return 2.0 * shrink * -std::expm1(-k * in.delta_norm * in.delta_norm / (2.0 * lam));
}

Matrix sample_surrogate(const ClosedFormInputs& in, std::size_t n, bool shifted, rng::Key key, std::uint32_t a) {
  in.validate();
  const std::size_t width = in.patch_count * in.pfs_dim;
  Matrix out(n, width);
#pragma omp parallel for schedule(static)
  for (std::size_t r = 0; r < n; ++r) {
    rng::Stream s(key, a, static_cast<std::uint32_t>(r));
    auto row = out.row(r);
    for (std::size_t c = 0; c < width; ++c) row[c] = in.sigma_z * s.normal();
    if (shifted) {
      for (std::size_t p = 0; p < in.patch_count; ++p) row[p * in.pfs_dim] += in.delta_norm;
    }
  }
  return out;
}

bool TheoryReport::passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.pass; });
}

void TheoryReport::append(const TheoryReport& other) {
  checks.insert(checks.end(), other.checks.begin(), other.checks.end());
}

std::string TheoryReport::to_json() const {
  nlohmann::ordered_json j;
  j["passed"] = passed();
  auto& arr = j["checks"] = nlohmann::ordered_json::array();
  for (const auto& c : checks) {
    nlohmann::ordered_json e;
    e["id"] = c.id;
    e["measured"] = c.measured;
    e["predicted"] = c.predicted;
    e["tolerance"] = c.tolerance;
    e["pass"] = c.pass;
    arr.push_back(std::move(e));
  }
  return j.dump(2) + "\n";
}

std::string TheoryReport::to_table() const {
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-34s %14s %14s %12s  %s\n", "check", "measured", "predicted", "tolerance",
                "result");
  out += buf;
  for (const auto& c : checks) {
    std::snprintf(buf, sizeof buf, "%-34s %14.6g %14.6g %12.4g  %s\n", c.id.c_str(), c.measured, c.predicted,
                  c.tolerance, c.pass ? "PASS" : "FAIL");
    out += buf;
  }
  return out;
}

CheckResult verify_population_mmd(const ClosedFormInputs& in, std::size_t n_samples, std::uint64_t seed) {
  in.validate();
  if (n_samples < 10000) throw std::invalid_argument("verify_population_mmd: needs at least 1e4 samples");
  constexpr std::size_t kBlock = 1000;
  const std::size_t blocks = n_samples / kBlock;
  const auto key = rng::derive(rng::Key(seed), rng::Tag::trial);
  const auto key_x = rng::derive(key, rng::Tag::real_set);
  const auto key_y = rng::derive(key, rng::Tag::fake_set);
  std::vector<double> est(blocks);
  for (std::size_t b = 0; b < blocks; ++b) {
    const auto x = sample_surrogate(in, kBlock, false, key_x, static_cast<std::uint32_t>(b));
    const auto y = sample_surrogate(in, kBlock, true, key_y, static_cast<std::uint32_t>(b));
    est[b] = mmd::mmd2_unbiased(x, y, in.gamma);
  }
  const auto ms = mean_se(est);
  const double closed = population_mmd_closed_form(in);
  // Floor for degenerate draws (sigma_z = 0 has no sampling variance).
  const double band = 5.0 * ms.se + 1e-12 * std::max(1.0, closed);
  const double diff = std::abs(ms.mean - closed);
  CheckResult r;
  r.id = format_id("closed_form[g=%g,s=%g", in.gamma, in.sigma_z) +
         format_id(",K=%g,d=%g", static_cast<double>(in.patch_count), static_cast<double>(in.pfs_dim)) +
         format_id(",delta=%g]", in.delta_norm);
  r.measured = ms.mean;
  r.predicted = closed;
  if (closed > 0.0) {
    r.tolerance = 0.05 * closed;
    r.pass = diff < r.tolerance && diff <= band;
  } else {
    r.tolerance = band;
    r.pass = diff <= band;
  }
  return r;
}

QuadraticMap QuadraticMap::identity(std::size_t dim) {
  QuadraticMap q{Matrix(dim, dim)};
  for (std::size_t i = 0; i < dim; ++i) q.a(i, i) = 1.0;
  return q;
}

double QuadraticMap::operator()(std::span<const double> e) const {
  if (e.size() != a.rows()) throw std::invalid_argument("QuadraticMap: dimension mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i) acc += e[i] * dot(a.row(i), e);
  return acc;
}

ShiftMeasurement measure_shift(std::size_t patch_count, const synth::SyntheticConfig& cfg, std::size_t n_patches,
                               std::uint64_t seed, const QuadraticMap& phi) {
  synth::SyntheticConfig c = cfg;
  c.patch_count = patch_count;
  c.validate();
  const std::size_t images = n_patches / patch_count;
  if (images < 2) throw std::invalid_argument("measure_shift: fewer than two images per class");
  const auto key = rng::Key(seed).derive(patch_count);
  const auto real = phi_stats(synth::sample_real_fields(c, images, rng::derive(key, rng::Tag::real_set)), phi);
  const auto fake = phi_stats(synth::sample_fake_fields(c, images, rng::derive(key, rng::Tag::fake_set)), phi);

  ShiftMeasurement m;
  m.patch_count = patch_count;
  const auto pr = mean_se(real.patch);
  const auto pf = mean_se(fake.patch);
  const auto gr = mean_se(real.pooled);
  const auto gf = mean_se(fake.pooled);
  m.delta_pfs = pf.mean - pr.mean;
  m.se_pfs = std::hypot(pf.se, pr.se);
  m.delta_global = gf.mean - gr.mean;
  m.se_global = std::hypot(gf.se, gr.se);
  m.ratio = std::abs(m.delta_pfs) / std::abs(m.delta_global);
  return m;
}

TheoryReport measure_shift_amplification(const std::vector<std::size_t>& k_values, const synth::SyntheticConfig& cfg,
                                         std::size_t n_patches, std::uint64_t seed, const QuadraticMap& phi) {
  if (cfg.phi_mix != 0.0) throw std::invalid_argument("measure_shift_amplification: requires independent patches");
  TheoryReport report;
  for (std::size_t k : k_values) {
    synth::SyntheticConfig c = cfg;
    c.patch_count = k;
    const auto mu = c.effective_defect();
    const double predicted = cfg.rho * phi(mu);
    const auto m = measure_shift(k, cfg, n_patches, seed, phi);
    const double kd = static_cast<double>(k);
    report.checks.push_back({format_id("patch_shift[K=%g]", kd), m.delta_pfs, predicted,
                             std::max(5.0 * m.se_pfs, std::numeric_limits<double>::min()),
                             std::abs(m.delta_pfs - predicted) <= 5.0 * m.se_pfs});
    report.checks.push_back({format_id("amplification_ratio[K=%g]", kd), m.ratio, kd, 0.1 * kd,
                             std::abs(m.ratio - kd) <= 0.1 * kd});
  }
  return report;
}

LinearFit fit_line(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("fit_line: needs two or more paired points");
  const double mx = mean_of(x);
  const double my = mean_of(y);
  double sxx = 0.0;
  double sxy = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  LinearFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double ss_res = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - (f.intercept + f.slope * x[i]);
    ss_res += r * r;
  }
  f.r_squared = syy > 0.0 ? 1.0 - ss_res / syy : 1.0;
  return f;
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw std::invalid_argument("quantile: empty input");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

ConcentrationResult concentration_sweep(const std::vector<std::pair<std::size_t, std::size_t>>& sizes,
                                        const ClosedFormInputs& in, std::size_t trials, std::uint64_t seed) {
  in.validate();
  if (trials < 200) throw std::invalid_argument("concentration_sweep: needs at least 200 trials");
  if (sizes.size() < 2) throw std::invalid_argument("concentration_sweep: needs at least two sizes");
  const auto key = rng::derive(rng::Key(seed), rng::Tag::trial);
  const auto key_ref = rng::derive(key, rng::Tag::reference_set);
  const auto key_real = rng::derive(key, rng::Tag::real_set);
  const auto key_fake = rng::derive(key, rng::Tag::fake_set);

  ConcentrationResult out;
  out.closed_form = population_mmd_closed_form(in);
  std::vector<double> xs;
  std::vector<double> ys;
  std::vector<std::vector<double>> fake_scores(sizes.size());
  for (std::size_t si = 0; si < sizes.size(); ++si) {
    const auto [m, n] = sizes[si];
    if (m != n || m < 2) throw std::invalid_argument("concentration_sweep: only M = N >= 2 is supported");
    std::vector<double> null_est(trials);
    std::vector<double> fake_est(trials);
#pragma omp parallel for schedule(dynamic)
    for (std::size_t t = 0; t < trials; ++t) {
      // One stream family per (size, trial); rows index within.
      const auto a = static_cast<std::uint32_t>(si * trials + t);
      const auto ref = sample_surrogate(in, m, false, key_ref, a);
      const auto real = sample_surrogate(in, n, false, key_real, a);
      const auto fake = sample_surrogate(in, n, true, key_fake, a);
      null_est[t] = mmd::mmd2_unbiased(ref, real, in.gamma);
      fake_est[t] = mmd::mmd2_unbiased(ref, fake, in.gamma);
    }
    SizeStats st;
    st.m = m;
    st.n = n;
    std::vector<double> abs_null(trials);
    std::size_t ordered = 0;
    for (std::size_t t = 0; t < trials; ++t) {
      abs_null[t] = std::abs(null_est[t]);
      if (fake_est[t] > null_est[t]) ++ordered;
    }
    st.null_p95 = quantile(abs_null, 0.95);
    const auto ns = mean_se(null_est);
    st.null_mean = ns.mean;
    st.null_se = ns.se;
    st.fake_mean = mean_of(fake_est);
    st.ordering_rate = static_cast<double>(ordered) / static_cast<double>(trials);
    out.sizes.push_back(st);
    xs.push_back(std::sqrt(1.0 / static_cast<double>(m) + 1.0 / static_cast<double>(n)));
    ys.push_back(st.null_p95);
  }

  const auto fit = fit_line(xs, ys);
  out.fit_intercept = fit.intercept;
  out.fit_slope = fit.slope;
  out.r_squared = fit.r_squared;
  std::vector<double> lx;
  std::vector<double> ly;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    lx.push_back(std::log(xs[i]));
    ly.push_back(std::log(ys[i]));
  }
  out.loglog_slope = fit_line(lx, ly).slope;

  // Band of the form C sqrt(1/M + 1/N), with the smallest C covering every
  // measured 95th percentile.
  out.band_constant = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) out.band_constant = std::max(out.band_constant, ys[i] / xs[i]);

  auto& checks = out.report.checks;
  checks.push_back({"case1_fit_r2", fit.r_squared, 1.0, 0.05, fit.r_squared >= 0.95});
  for (std::size_t i = 0; i < out.sizes.size(); ++i) {
    auto& st = out.sizes[i];
    st.fitted_band = out.band_constant * xs[i];
    const auto mm = static_cast<double>(st.m);
    const auto nn = static_cast<double>(st.n);
    const double null_band = std::max(5.0 * st.null_se, std::numeric_limits<double>::min());
    checks.push_back({format_id("case1_null_mean[M=%g,N=%g]", mm, nn), st.null_mean, 0.0, null_band,
                      std::abs(st.null_mean) <= null_band});
    const double band = std::max(st.fitted_band, std::numeric_limits<double>::min());
    checks.push_back({format_id("case2_mean[M=%g,N=%g]", mm, nn), st.fake_mean, out.closed_form, band,
                      st.fake_mean >= out.closed_form - st.fitted_band});
    checks.push_back({format_id("case2_separation[M=%g,N=%g]", mm, nn), out.closed_form, 2.0 * st.fitted_band, band,
                      out.closed_form > 2.0 * st.fitted_band});
    checks.push_back({format_id("case2_ordering[M=%g,N=%g]", mm, nn), st.ordering_rate, 1.0, 0.01,
                      st.ordering_rate >= 0.99});
  }
  return out;
}

SnrResult snr_sweep(const std::vector<std::size_t>& k_values, double c, double eta, std::size_t n_images,
                    const synth::SyntheticConfig& base_cfg, std::size_t resamples, std::uint64_t seed) {
  if (k_values.size() < 2) throw std::invalid_argument("snr_sweep: needs at least two K values");
  if (resamples < 2 || n_images < 1) throw std::invalid_argument("snr_sweep: needs resamples >= 2 and images >= 1");
  if (base_cfg.phi_mix != 0.0) throw std::invalid_argument("snr_sweep: requires independent patches");
  const auto phi = QuadraticMap::identity(base_cfg.dim);
  const auto key = rng::derive(rng::Key(seed), rng::Tag::trial);

  SnrResult out;
  out.k_values = k_values;
  for (std::size_t k : k_values) {
    synth::SyntheticConfig cfg = base_cfg;
    cfg.patch_count = k;
    cfg.dilution = synth::Dilution{c, eta};
    cfg.validate();
    std::vector<double> deltas(resamples);
    for (std::size_t r = 0; r < resamples; ++r) {
      const auto rk = key.derive(k).derive(r);
      const auto real = phi_stats(synth::sample_real_fields(cfg, n_images, rng::derive(rk, rng::Tag::real_set)), phi);
      const auto fake = phi_stats(synth::sample_fake_fields(cfg, n_images, rng::derive(rk, rng::Tag::fake_set)), phi);
      deltas[r] = mean_of(fake.patch) - mean_of(real.patch);
    }
    out.snr.push_back(std::abs(mean_of(deltas)) / sample_sd(deltas));
  }

  const auto peak = static_cast<std::size_t>(std::max_element(out.snr.begin(), out.snr.end()) - out.snr.begin());
  out.argmax_k = k_values[peak];
  std::vector<double> lx;
  std::vector<double> ly;
  for (std::size_t i = peak + 1; i < k_values.size(); ++i) {
    lx.push_back(std::log(static_cast<double>(k_values[i])));
    ly.push_back(std::log(out.snr[i]));
  }
  out.tail_slope = lx.size() >= 2 ? fit_line(lx, ly).slope : std::numeric_limits<double>::quiet_NaN();

  auto& checks = out.report.checks;
  const double predicted_slope = 0.5 - 2.0 * eta;
  if (eta > 0.25) {
    checks.push_back({format_id("snr_interior_max[eta=%g]", eta), static_cast<double>(out.argmax_k),
                      static_cast<double>(k_values.back()), 1.0, out.snr.back() < out.snr[peak]});
    checks.push_back({format_id("snr_tail_slope[eta=%g]", eta), out.tail_slope, predicted_slope, 0.25,
                      std::abs(out.tail_slope - predicted_slope) <= 0.25});
  } else {
    bool nondecreasing = true;
    for (std::size_t i = 1; i < out.snr.size(); ++i) nondecreasing = nondecreasing && out.snr[i] >= out.snr[i - 1];
    checks.push_back({format_id("snr_nondecreasing[eta=%g]", eta), out.snr.back() / out.snr.front(),
                      std::pow(static_cast<double>(k_values.back()) / static_cast<double>(k_values.front()),
                               predicted_slope),
                      1.0, nondecreasing});
  }
  return out;
}

TheoryReport run_suite(std::uint64_t seed, bool quick) {
  TheoryReport report;
  const std::size_t mc_samples = quick ? 10000 : 100000;
  const ClosedFormInputs points[] = {
      {1.0, 0.5, 4, 1, 1.0},
      {1.0, 1.0, 2, 1, 1.0},
      {1.0, 0.0, 1, 1, 1.0},
      {2.0, 0.5, 3, 2, 0.5},
      {1.0, 0.5, 4, 1, 0.0},
  };
  for (const auto& p : points) report.checks.push_back(verify_population_mmd(p, mc_samples, seed));

  synth::SyntheticConfig shift_cfg;
  shift_cfg.dim = 4;
  shift_cfg.sigma_e = 0.01;
  shift_cfg.rho = 0.5;
  shift_cfg.mu_defect = synth::axis_defect(4, 1.0);
  const std::size_t patches = quick ? 100000 : 1000000;
  const auto phi = QuadraticMap::identity(shift_cfg.dim);
  report.append(measure_shift_amplification({4, 16, 49}, shift_cfg, patches, seed, phi));
  auto mixed = shift_cfg;
  mixed.phi_mix = 0.8;
  const auto m = measure_shift(16, mixed, patches, seed, phi);
  report.checks.push_back({"mixing_below_K[K=16]", m.ratio, 16.0, 16.0, m.ratio < 16.0});

  std::vector<std::pair<std::size_t, std::size_t>> sizes = {{25, 25}, {50, 50}, {100, 100}, {200, 200}, {400, 400}};
  if (quick) sizes.resize(3);
  report.append(concentration_sweep(sizes, {1.0, 0.5, 4, 1, 1.0}, quick ? 200 : 500, seed).report);

  synth::SyntheticConfig snr_cfg;
  snr_cfg.dim = 16;
  snr_cfg.sigma_e = 1.0;
  snr_cfg.rho = 0.2;
  snr_cfg.mu_defect = synth::axis_defect(16, 1.0);
  const std::vector<std::size_t> ks = {1, 4, 16, 64, 256};
  const std::size_t resamples = quick ? 20 : 200;
  report.append(snr_sweep(ks, std::sqrt(80.0), 0.5, 50, snr_cfg, resamples, seed).report);
  report.append(snr_sweep(ks, std::sqrt(80.0), 0.0, 50, snr_cfg, resamples, seed).report);
  return report;
}

}  // namespace mdmf::theory
