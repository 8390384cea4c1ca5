#include "mdmf/objective.hpp"

#include <cmath>
#include <stdexcept>

namespace mdmf::mmd {

namespace {

// Records per gradient-accumulation chunk. Chunks are summed in index
// order, so the total does not depend on how chunks map to threads.
constexpr std::size_t kChunk = 32;

void add_into(PFSWeights& dst, const PFSWeights& src) {
  auto add = [](std::vector<double>& a, const std::vector<double>& b) {
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
  };
  add(dst.w1, src.w1);
  add(dst.b1, src.b1);
  add(dst.w2, src.w2);
  add(dst.b2, src.b2);
  dst.log_gamma += src.log_gamma;
}

struct RawVariance {
  std::vector<double> row_sums;
  double total = 0.0;
  double raw = 0.0;  // before clamping
};

RawVariance raw_variance(const Matrix& h) {
  const std::size_t n = h.rows();
  RawVariance v;
  v.row_sums.resize(n);
  double sum_sq = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double r = 0.0;
    for (std::size_t j = 0; j < n; ++j) r += h(i, j);
    v.row_sums[i] = r;
    sum_sq += r * r;
    v.total += r;
  }
  const double nd = static_cast<double>(n);
  v.raw = 4.0 * (nd * sum_sq - v.total * v.total) / (nd * nd * nd * nd);
  return v;
}

}  // namespace

ObjectiveTerms objective_terms(const Matrix& h, double lambda) {
  if (!(lambda > 0.0)) throw std::invalid_argument("objective: lambda must be positive");
  ObjectiveTerms t;
  t.mmd2 = mmd2_unbiased(h);
  t.variance = variance_h1(h);
  t.j = t.mmd2 / std::sqrt(t.variance + lambda);
  return t;
}

SignatureGradients signature_gradients(const Matrix& x, const Matrix& y, const KernelMatrixBundle& bundle,
                                       double gamma, double lambda) {
  const std::size_t n = x.rows();
  const std::size_t width = x.cols();
  const auto& h = bundle.h;
  const auto var = raw_variance(h);
  const double mmd2 = mmd2_unbiased(h);
  const double clamped = std::max(0.0, var.raw);
  const double s = std::sqrt(clamped + lambda);
  const double nd = static_cast<double>(n);

  // dJ/dH_ij = [i != j] / (N(N-1) s) - (mmd2 / (2 s^3)) * dV/dH_ij
  const double d_mmd = 1.0 / (nd * (nd - 1.0) * s);
  const double d_var = var.raw > 0.0 ? -0.5 * mmd2 / (s * s * s) : 0.0;
  Matrix g(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    const double dv_row = 8.0 * var.row_sums[i] / (nd * nd * nd) - 8.0 * var.total / (nd * nd * nd * nd);
    for (std::size_t j = 0; j < n; ++j) g(i, j) = (i != j ? d_mmd : 0.0) + d_var * dv_row;
  }

  // Kxx_ij and Kyy_ij enter H_ij with weight +1; Kxy_ij enters H_ij and H_ji
  // with weight -1 each.
  const double inv_g2 = 1.0 / (gamma * gamma);
  SignatureGradients out{Matrix(n, width), Matrix(n, width), 0.0};
  std::vector<double> lg_rows(n);
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < n; ++i) {
    auto gx = out.gx.row(i);
    auto gy = out.gy.row(i);
    const auto xi = x.row(i);
    const auto yi = y.row(i);
    double lg = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const auto xj = x.row(j);
      const auto yj = y.row(j);
      const double sym = g(i, j) + g(j, i);
      // Row i of Kxx/Kyy: k(x_i, x_j) depends on x_i through (x_i - x_j).
      const double wxx = sym * bundle.kxx(i, j) * inv_g2;
      const double wyy = sym * bundle.kyy(i, j) * inv_g2;
      const double cxy = -(g(i, j) + g(j, i));
      const double wxy = cxy * bundle.kxy(i, j) * inv_g2;  // k(x_i, y_j)
      const double wyx = cxy * bundle.kxy(j, i) * inv_g2;  // k(x_j, y_i)
      for (std::size_t c = 0; c < width; ++c) {
        gx[c] -= wxx * (xi[c] - xj[c]) + wxy * (xi[c] - yj[c]);
        gy[c] -= wyy * (yi[c] - yj[c]) + wyx * (yi[c] - xj[c]);
      }
      // d k / d log(gamma) = k * |a - b|^2 / gamma^2, summed over the
      // entries of row i of each matrix.
      lg += g(i, j) * bundle.kxx(i, j) * squared_distance(xi, xj) * inv_g2 +
            g(i, j) * bundle.kyy(i, j) * squared_distance(yi, yj) * inv_g2 +
            cxy * bundle.kxy(i, j) * squared_distance(xi, yj) * inv_g2;
    }
    lg_rows[i] = lg;
  }
  for (double v : lg_rows) out.log_gamma += v;
  return out;
}

ObjectiveResult test_power_objective(std::span<const PatchEmbeddingField> sx, std::span<const PatchEmbeddingField> sy,
                                     const PFSParams& params, double lambda) {
  if (sx.size() != sy.size()) throw std::invalid_argument("objective: batches must have equal size");
  std::vector<PFSField> zx(sx.size());
  std::vector<PFSField> zy(sy.size());
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < sx.size(); ++i) {
    zx[i] = pfs_forward(sx[i], params, Mode::eval);
    zy[i] = pfs_forward(sy[i], params, Mode::eval);
  }
  auto bundle = kernel_bundle(stack_fields(zx), stack_fields(zy), params.gamma());
  const auto terms = objective_terms(bundle.h, lambda);
  return {terms, std::move(bundle)};
}

ObjectiveAndGradient evaluate_objective(std::span<const PatchEmbeddingField> sx,
                                        std::span<const PatchEmbeddingField> sy, const PFSParams& params,
                                        double lambda, Mode mode, rng::Key dropout_key, std::uint32_t step) {
  std::vector<const PatchEmbeddingField*> px;
  std::vector<const PatchEmbeddingField*> py;
  for (const auto& f : sx) px.push_back(&f);
  for (const auto& f : sy) py.push_back(&f);
  return evaluate_objective(FieldRefs(px), FieldRefs(py), params, lambda, mode, dropout_key, step);
}

ObjectiveAndGradient evaluate_objective(FieldRefs sx, FieldRefs sy, const PFSParams& params, double lambda, Mode mode,
                                        rng::Key dropout_key, std::uint32_t step) {
  if (sx.size() != sy.size()) throw std::invalid_argument("objective: batches must have equal size");
  if (sx.size() < 2) throw std::invalid_argument("objective: batches need N >= 2");
  const std::size_t n = sx.size();
  const std::size_t total = 2 * n;
  auto field_at = [&](std::size_t r) -> const PatchEmbeddingField& { return r < n ? *sx[r] : *sy[r - n]; };
  auto stream_index = [&](std::size_t r) {
    return static_cast<std::uint32_t>(r < n ? 2 * r : 2 * (r - n) + 1);
  };

  std::vector<ForwardCache> caches(total);
  std::vector<PFSField> z(total);
#pragma omp parallel for schedule(static)
  for (std::size_t r = 0; r < total; ++r) {
    z[r] = pfs_forward(field_at(r), params, mode, DropoutStream{dropout_key, step, stream_index(r)}, &caches[r]);
  }
  const Matrix x = stack_fields(std::span(z).first(n));
  const Matrix y = stack_fields(std::span(z).subspan(n));
  const double gamma = params.gamma();
  const auto bundle = kernel_bundle(x, y, gamma);

  ObjectiveAndGradient out;
  out.terms = objective_terms(bundle.h, lambda);
  const auto sig = signature_gradients(x, y, bundle, gamma, lambda);

  const std::size_t chunks = (total + kChunk - 1) / kChunk;
  std::vector<PFSWeights> partial(chunks, params.zeros_like());
  const std::size_t k = z.front().patch_count();
  const std::size_t d = z.front().dim();
#pragma omp parallel for schedule(static)
  for (std::size_t c = 0; c < chunks; ++c) {
    for (std::size_t r = c * kChunk; r < std::min(total, (c + 1) * kChunk); ++r) {
      const auto src = r < n ? sig.gx.row(r) : sig.gy.row(r - n);
      Matrix grad_z(k, d, std::vector<double>(src.begin(), src.end()));
      pfs_backward(field_at(r), params, caches[r], grad_z, partial[c]);
    }
  }
  out.grad = params.zeros_like();
  for (const auto& p : partial) add_into(out.grad, p);
  out.grad.log_gamma = sig.log_gamma;
  return out;
}

PFSWeights objective_gradients(std::span<const PatchEmbeddingField> sx, std::span<const PatchEmbeddingField> sy,
                               const PFSParams& params, double lambda) {
  return evaluate_objective(sx, sy, params, lambda, Mode::eval).grad;
}

}  // namespace mdmf::mmd
