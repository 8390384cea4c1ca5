#include "mdmf/kernel_mmd.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace mdmf::mmd {

namespace {

void require_gamma(double gamma) {
  if (!(gamma > 0.0) || !std::isfinite(gamma)) throw std::invalid_argument("kernel bandwidth must be positive");
}

void require_same_width(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) {
    throw std::invalid_argument("sample dimension mismatch: " + std::to_string(a.cols()) + " vs " +
                                std::to_string(b.cols()));
  }
}

void require_paired(const Matrix& x, const Matrix& y) {
  require_same_width(x, y);
  if (x.rows() != y.rows()) throw std::invalid_argument("batches must have equal size");
  if (x.rows() < 2) throw std::invalid_argument("unbiased estimator needs N >= 2");
}

std::vector<double> row_norms(const Matrix& m) {
  std::vector<double> out(m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i) out[i] = dot(m.row(i), m.row(i));
  return out;
}

// Expanded-form kernel value from cached squared norms.
inline double kernel_from_parts(double na, double nb, std::span<const double> a, std::span<const double> b,
                                double inv_two_gamma_sq) {
  const double d2 = std::max(0.0, na + nb - 2.0 * dot(a, b));
  return std::exp(-d2 * inv_two_gamma_sq);
}

double ordered_sum(const std::vector<double>& v) {
  double acc = 0.0;
  for (double x : v) acc += x;
  return acc;
}

}  // namespace

double gaussian_kernel(std::span<const double> a, std::span<const double> b, double gamma) {
  require_gamma(gamma);
  if (a.size() != b.size()) throw std::invalid_argument("gaussian_kernel: dimension mismatch");
  const double na = dot(a, a);
  const double nb = dot(b, b);
  return kernel_from_parts(na, nb, a, b, 1.0 / (2.0 * gamma * gamma));
}

double deep_kernel(const PFSField& zx, const PFSField& zy, double gamma) {
  if (zx.patch_count() != zy.patch_count() || zx.dim() != zy.dim()) {
    throw std::invalid_argument("deep_kernel: field shapes differ");
  }
  return gaussian_kernel(zx.flat(), zy.flat(), gamma);
}

Matrix stack_fields(std::span<const PFSField> fields) {
  if (fields.empty()) return {};
  const std::size_t width = fields.front().flat().size();
  Matrix out(fields.size(), width);
  for (std::size_t i = 0; i < fields.size(); ++i) {
    const auto src = fields[i].flat();
    if (src.size() != width) throw std::invalid_argument("stack_fields: field shapes differ");
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

Matrix cross_kernel(const Matrix& a, const Matrix& b, double gamma) {
  require_gamma(gamma);
  require_same_width(a, b);
  const auto na = row_norms(a);
  const auto nb = row_norms(b);
  const double scale = 1.0 / (2.0 * gamma * gamma);
  Matrix out(a.rows(), b.rows());
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const auto ai = a.row(i);
    auto dst = out.row(i);
    for (std::size_t j = 0; j < b.rows(); ++j) dst[j] = kernel_from_parts(na[i], nb[j], ai, b.row(j), scale);
  }
  return out;
}

KernelMatrixBundle kernel_bundle(const Matrix& x, const Matrix& y, double gamma) {
  require_paired(x, y);
  KernelMatrixBundle b{cross_kernel(x, x, gamma), cross_kernel(y, y, gamma), cross_kernel(x, y, gamma), {}};
  const std::size_t n = x.rows();
  b.h = Matrix(n, n);
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) b.h(i, j) = b.kxx(i, j) + b.kyy(i, j) - b.kxy(i, j) - b.kxy(j, i);
  }
  return b;
}

double mmd2_unbiased(const Matrix& h) {
  const std::size_t n = h.rows();
  if (h.cols() != n) throw std::invalid_argument("mmd2_unbiased: H must be square");
  if (n < 2) throw std::invalid_argument("mmd2_unbiased: N must be >= 2");
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i != j) acc += h(i, j);
    }
  }
  return acc / (static_cast<double>(n) * static_cast<double>(n - 1));
}

double mmd2_unbiased(const Matrix& x, const Matrix& y, double gamma) {
  require_gamma(gamma);
  require_paired(x, y);
  const std::size_t n = x.rows();
  const auto nx = row_norms(x);
  const auto ny = row_norms(y);
  const double scale = 1.0 / (2.0 * gamma * gamma);
  std::vector<double> rows(n);
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < n; ++i) {
    const auto xi = x.row(i);
    const auto yi = y.row(i);
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const auto xj = x.row(j);
      const auto yj = y.row(j);
      acc += kernel_from_parts(nx[i], nx[j], xi, xj, scale) + kernel_from_parts(ny[i], ny[j], yi, yj, scale) -
             kernel_from_parts(nx[i], ny[j], xi, yj, scale) - kernel_from_parts(ny[i], nx[j], yi, xj, scale);
    }
    rows[i] = acc;
  }
  return ordered_sum(rows) / (static_cast<double>(n) * static_cast<double>(n - 1));
}

double mmd2_biased(const Matrix& x, const Matrix& y, double gamma) {
  require_gamma(gamma);
  require_same_width(x, y);
  if (x.rows() == 0 || y.rows() == 0) throw std::invalid_argument("mmd2_biased: empty sample set");
  const auto nx = row_norms(x);
  const auto ny = row_norms(y);
  const double scale = 1.0 / (2.0 * gamma * gamma);

  auto block_sum = [&](const Matrix& a, const std::vector<double>& na, const Matrix& b, const std::vector<double>& nb) {
    std::vector<double> rows(a.rows());
#pragma omp parallel for schedule(static)
    for (std::size_t i = 0; i < a.rows(); ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < b.rows(); ++j) acc += kernel_from_parts(na[i], nb[j], a.row(i), b.row(j), scale);
      rows[i] = acc;
    }
    return ordered_sum(rows);
  };

  const double m = static_cast<double>(x.rows());
  const double n = static_cast<double>(y.rows());
  const double value =
      block_sum(x, nx, x, nx) / (m * m) + block_sum(y, ny, y, ny) / (n * n) - 2.0 * block_sum(x, nx, y, ny) / (m * n);
  return std::max(0.0, value);
}

double variance_h1(const Matrix& h) {
  const std::size_t n = h.rows();
  if (h.cols() != n || n == 0) throw std::invalid_argument("variance_h1: H must be square and non-empty");
  double sum_sq = 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double r = 0.0;
    for (std::size_t j = 0; j < n; ++j) r += h(i, j);
    sum_sq += r * r;
    total += r;
  }
  // 4 (N sum_i r_i^2 - S^2) / N^4, the two-term formula over a common denominator.
  const double nd = static_cast<double>(n);
  const double value = 4.0 * (nd * sum_sq - total * total) / (nd * nd * nd * nd);
  return std::max(0.0, value);
}

namespace reference {

Matrix cross_kernel(const Matrix& a, const Matrix& b, double gamma) {
  require_gamma(gamma);
  require_same_width(a, b);
  Matrix out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.rows(); ++j) {
      out(i, j) = std::exp(-squared_distance(a.row(i), b.row(j)) / (2.0 * gamma * gamma));
    }
  }
  return out;
}

KernelMatrixBundle kernel_bundle(const Matrix& x, const Matrix& y, double gamma) {
  require_paired(x, y);
  KernelMatrixBundle b{cross_kernel(x, x, gamma), cross_kernel(y, y, gamma), cross_kernel(x, y, gamma), {}};
  const std::size_t n = x.rows();
  b.h = Matrix(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) b.h(i, j) = b.kxx(i, j) + b.kyy(i, j) - b.kxy(i, j) - b.kxy(j, i);
  }
  return b;
}

double mmd2_unbiased(const Matrix& x, const Matrix& y, double gamma) {
  return mmd::mmd2_unbiased(kernel_bundle(x, y, gamma).h);
}

double mmd2_biased(const Matrix& x, const Matrix& y, double gamma) {
  require_same_width(x, y);
  if (x.rows() == 0 || y.rows() == 0) throw std::invalid_argument("mmd2_biased: empty sample set");
  auto mean_of = [](const Matrix& k) {
    double acc = 0.0;
    for (double v : k.flat()) acc += v;
    return acc / static_cast<double>(k.size());
  };
  const double value = mean_of(cross_kernel(x, x, gamma)) + mean_of(cross_kernel(y, y, gamma)) -
                       2.0 * mean_of(cross_kernel(x, y, gamma));
  return std::max(0.0, value);
}

}  // namespace reference

}  // namespace mdmf::mmd
