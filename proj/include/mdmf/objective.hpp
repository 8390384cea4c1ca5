#pragma once

#include <span>

#include "mdmf/kernel_mmd.hpp"
#include "mdmf/pfs.hpp"

namespace mdmf::mmd {

// Default variance regularizer of the test-power criterion.
inline constexpr double kDefaultLambda = 1e-8;

struct ObjectiveTerms {
  double j = 0.0;         // MMD2_u / sqrt(var + lambda)
  double mmd2 = 0.0;      // unbiased MMD^2
  double variance = 0.0;  // H1 variance estimate (clamped)
};

ObjectiveTerms objective_terms(const Matrix& h, double lambda);

// Gradient of J with respect to the flattened signatures of each batch and
// to log(gamma), for batches already mapped into signature space.
struct SignatureGradients {
  Matrix gx;
  Matrix gy;
  double log_gamma = 0.0;
};

SignatureGradients signature_gradients(const Matrix& x, const Matrix& y, const KernelMatrixBundle& bundle,
                                       double gamma, double lambda);

struct ObjectiveResult {
  ObjectiveTerms terms;
  KernelMatrixBundle bundle;
};

// J for two equal-size embedding batches under the current projection, in
// eval mode.
ObjectiveResult test_power_objective(std::span<const PatchEmbeddingField> sx, std::span<const PatchEmbeddingField> sy,
                                     const PFSParams& params, double lambda = kDefaultLambda);

// Analytic gradient of J with respect to every projection weight and
// log(gamma), in eval mode.
PFSWeights objective_gradients(std::span<const PatchEmbeddingField> sx, std::span<const PatchEmbeddingField> sy,
                               const PFSParams& params, double lambda = kDefaultLambda);

// Objective and gradient in one pass. In train mode with a positive dropout
// rate, record i of batch side s (0 = x, 1 = y) uses the dropout stream
// (key, step, 2*i + s).
struct ObjectiveAndGradient {
  ObjectiveTerms terms;
  PFSWeights grad;
};

ObjectiveAndGradient evaluate_objective(std::span<const PatchEmbeddingField> sx,
                                        std::span<const PatchEmbeddingField> sy, const PFSParams& params,
                                        double lambda, Mode mode, rng::Key dropout_key = rng::Key(),
                                        std::uint32_t step = 0);

// Same, over batches of borrowed records (no copies of the fields).
using FieldRefs = std::span<const PatchEmbeddingField* const>;
ObjectiveAndGradient evaluate_objective(FieldRefs sx, FieldRefs sy, const PFSParams& params, double lambda, Mode mode,
                                        rng::Key dropout_key = rng::Key(), std::uint32_t step = 0);

}  // namespace mdmf::mmd
