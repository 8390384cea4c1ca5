#pragma once

#include <span>
#include <vector>

#include "mdmf/matrix.hpp"
#include "mdmf/pfs.hpp"

namespace mdmf::mmd {

// Kernel matrices over two equal-size batches and the combined
// H_ij = Kxx_ij + Kyy_ij - Kxy_ij - Kxy_ji.
struct KernelMatrixBundle {
  Matrix kxx;
  Matrix kyy;
  Matrix kxy;
  Matrix h;
};

// exp(-|a - b|^2 / (2 gamma^2)).
double gaussian_kernel(std::span<const double> a, std::span<const double> b, double gamma);

// Deep kernel between two signature fields, using the Frobenius distance
// over all K*d entries.
double deep_kernel(const PFSField& zx, const PFSField& zy, double gamma);

// One flattened field per row.
Matrix stack_fields(std::span<const PFSField> fields);

// Batches are N x P matrices, one flattened sample per row. All of the
// functions below are deterministic regardless of the OpenMP thread count:
// rows are processed in parallel, reductions run in index order.

// |a| x |b| Gaussian kernel matrix.
Matrix cross_kernel(const Matrix& a, const Matrix& b, double gamma);
KernelMatrixBundle kernel_bundle(const Matrix& x, const Matrix& y, double gamma);

// U-statistic, (1/(N(N-1))) sum_{i != j} H_ij. May be negative.
double mmd2_unbiased(const Matrix& h);
// Same value without materializing the N x N matrices.
double mmd2_unbiased(const Matrix& x, const Matrix& y, double gamma);

// V-statistic between the two empirical distributions; sizes may differ.
// Clamped at 0 against roundoff.
double mmd2_biased(const Matrix& x, const Matrix& y, double gamma);

// (4/N^3) sum_i (sum_j H_ij)^2 - (4/N^4) (sum_ij H_ij)^2, clamped at 0.
double variance_h1(const Matrix& h);

// Single-threaded implementations kept as the reference the parallel
// kernels are tested and benchmarked against. Distances use the direct
// difference form.
namespace reference {
Matrix cross_kernel(const Matrix& a, const Matrix& b, double gamma);
KernelMatrixBundle kernel_bundle(const Matrix& x, const Matrix& y, double gamma);
double mmd2_unbiased(const Matrix& x, const Matrix& y, double gamma);
double mmd2_biased(const Matrix& x, const Matrix& y, double gamma);
}  // namespace reference

}  // namespace mdmf::mmd
