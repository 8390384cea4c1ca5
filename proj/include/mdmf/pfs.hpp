#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "mdmf/embeddings.hpp"
#include "mdmf/matrix.hpp"
#include "mdmf/rng.hpp"

namespace mdmf {

// K signature vectors of dimension d for one image. Fields produced by
// pfs_forward lie in [-1, 1]; the kernel code accepts arbitrary values.
class PFSField {
 public:
  PFSField() = default;
  explicit PFSField(Matrix signatures) : z_(std::move(signatures)) {}

  std::size_t patch_count() const noexcept { return z_.rows(); }
  std::size_t dim() const noexcept { return z_.cols(); }
  const Matrix& signatures() const noexcept { return z_; }
  // Row-major K*d view, the vector the deep kernel compares.
  std::span<const double> flat() const noexcept { return z_.flat(); }

  bool operator==(const PFSField&) const = default;

 private:
  Matrix z_;
};

enum class Activation : std::uint8_t { gelu = 0, tanh = 1 };

// Trainable values of the projection head plus the kernel log-bandwidth.
// Gradients share this layout.
struct PFSWeights {
  std::vector<double> w1;  // D x H, row-major
  std::vector<double> b1;  // H
  std::vector<double> w2;  // H x d, row-major
  std::vector<double> b2;  // d
  double log_gamma = 0.0;

  // Visits the projection blocks (w1, b1, w2, b2), excluding log_gamma.
  template <class F>
  void for_each_block(F&& f) {
    f(w1);
    f(b1);
    f(w2);
    f(b2);
  }
  template <class F>
  void for_each_block(F&& f) const {
    f(w1);
    f(b1);
    f(w2);
    f(b2);
  }

  bool operator==(const PFSWeights&) const = default;
};

struct PFSParams {
  std::size_t input_dim = 0;     // D
  std::size_t hidden_width = 0;  // H
  std::size_t output_dim = 1;    // d
  double dropout_rate = 0.0;
  Activation activation = Activation::gelu;
  PFSWeights weights;

  double gamma() const noexcept;
  // Zero-filled weights of matching shape (gradient accumulator).
  PFSWeights zeros_like() const;
  void validate() const;

  bool operator==(const PFSParams&) const = default;
};

// Fan-in scaled uniform weights U(-1/sqrt(fan_in), 1/sqrt(fan_in)), zero
// biases, gamma = 1.
PFSParams init_params(std::size_t input_dim, std::size_t hidden_width, std::size_t output_dim,
                      std::uint64_t seed, double dropout_rate = 0.3, Activation activation = Activation::gelu);

enum class Mode { train, eval };

// Per-call dropout addressing: the mask for patch i of this field is drawn
// from Stream(key, a, b, i).
struct DropoutStream {
  rng::Key key;
  std::uint32_t a = 0;
  std::uint32_t b = 0;
};

// Cached intermediate values for the backward pass.
struct ForwardCache {
  Matrix pre;   // K x H, W1^T e + b1
  Matrix mask;  // K x H dropout scale (0 or 1/(1-p)); empty in eval mode
  Matrix hidden;  // K x H after activation and dropout
  Matrix out;   // K x d, tanh output
};

PFSField pfs_forward(const PatchEmbeddingField& field, const PFSParams& params, Mode mode,
                     const DropoutStream& dropout = {}, ForwardCache* cache = nullptr);

// Accumulates d(loss)/d(weights) into `grad` given d(loss)/dZ for one field.
void pfs_backward(const PatchEmbeddingField& field, const PFSParams& params, const ForwardCache& cache,
                  const Matrix& grad_z, PFSWeights& grad);

double activate(Activation act, double x) noexcept;
double activate_derivative(Activation act, double x) noexcept;

// Projects a whole dataset in eval mode.
std::vector<PFSField> project_all(const EmbeddingDataset& dataset, const PFSParams& params);

// .pfsp checkpoints.
std::vector<std::uint8_t> encode_checkpoint(const PFSParams& params);
PFSParams decode_checkpoint(std::span<const std::uint8_t> bytes);
void write_checkpoint(const PFSParams& params, const std::filesystem::path& path);
PFSParams read_checkpoint(const std::filesystem::path& path);

}  // namespace mdmf
