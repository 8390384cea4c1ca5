#include "mdmf/pfs.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "mdmf/errors.hpp"
#include "mdmf/io.hpp"

namespace mdmf {

namespace {

constexpr std::uint8_t kCheckpointMagic[4] = {'M', 'D', 'M', 'P'};
constexpr std::uint32_t kCheckpointVersion = 1;

void check_finite(const std::vector<double>& v, const char* what) {
  for (double x : v) {
    if (!std::isfinite(x)) throw std::invalid_argument(std::string("PFSParams: non-finite value in ") + what);
  }
}

}  // namespace

double activate(Activation act, double x) noexcept {
  if (act == Activation::tanh) return std::tanh(x);
  return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
}

double activate_derivative(Activation act, double x) noexcept {
  if (act == Activation::tanh) {
    const double t = std::tanh(x);
    return 1.0 - t * t;
  }
  const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
  const double pdf = std::exp(-0.5 * x * x) * std::numbers::inv_sqrtpi / std::numbers::sqrt2;
  return cdf + x * pdf;
}

double PFSParams::gamma() const noexcept { return std::exp(weights.log_gamma); }

PFSWeights PFSParams::zeros_like() const {
  PFSWeights z;
  z.w1.assign(input_dim * hidden_width, 0.0);
  z.b1.assign(hidden_width, 0.0);
  z.w2.assign(hidden_width * output_dim, 0.0);
  z.b2.assign(output_dim, 0.0);
  z.log_gamma = 0.0;
  return z;
}

void PFSParams::validate() const {
  if (input_dim == 0 || hidden_width == 0 || output_dim == 0) {
    throw std::invalid_argument("PFSParams: dimensions must be positive");
  }
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
    throw std::invalid_argument("PFSParams: dropout rate must lie in [0, 1)");
  }
  if (weights.w1.size() != input_dim * hidden_width || weights.b1.size() != hidden_width ||
      weights.w2.size() != hidden_width * output_dim || weights.b2.size() != output_dim) {
    throw std::invalid_argument("PFSParams: weight blocks do not match dimensions");
  }
  weights.for_each_block([](const std::vector<double>& b) { check_finite(b, "weights"); });
  if (!std::isfinite(weights.log_gamma)) throw std::invalid_argument("PFSParams: non-finite log_gamma");
}

PFSParams init_params(std::size_t input_dim, std::size_t hidden_width, std::size_t output_dim, std::uint64_t seed,
                      double dropout_rate, Activation activation) {
  PFSParams p;
  p.input_dim = input_dim;
  p.hidden_width = hidden_width;
  p.output_dim = output_dim;
  p.dropout_rate = dropout_rate;
  p.activation = activation;
  p.weights = p.zeros_like();
  p.weights.log_gamma = std::log(1.0);

  const auto key = rng::derive(rng::Key(seed), rng::Tag::init);
  auto fill = [&](std::vector<double>& w, std::size_t fan_in, std::uint32_t layer) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    rng::Stream s(key, layer);
    for (auto& v : w) v = bound * (2.0 * s.uniform() - 1.0);
  };
  fill(p.weights.w1, input_dim, 1);
  fill(p.weights.w2, hidden_width, 2);
  p.validate();
  return p;
}

PFSField pfs_forward(const PatchEmbeddingField& field, const PFSParams& params, Mode mode,
                     const DropoutStream& dropout, ForwardCache* cache) {
  if (field.dim() != params.input_dim) {
    throw std::invalid_argument("pfs_forward: field dimension " + std::to_string(field.dim()) +
                                " does not match projection input " + std::to_string(params.input_dim));
  }
  const std::size_t k = field.patch_count();
  const std::size_t dim_in = params.input_dim;
  const std::size_t hid = params.hidden_width;
  const std::size_t dim_out = params.output_dim;
  const auto& w = params.weights;
  const bool drop = mode == Mode::train && params.dropout_rate > 0.0;
  const double keep_scale = drop ? 1.0 / (1.0 - params.dropout_rate) : 1.0;

  Matrix pre(k, hid);
  Matrix hidden(k, hid);
  Matrix mask = drop ? Matrix(k, hid) : Matrix();
  Matrix out(k, dim_out);

  for (std::size_t i = 0; i < k; ++i) {
    const auto e = field.patch(i);
    auto pre_row = pre.row(i);
    for (std::size_t h = 0; h < hid; ++h) pre_row[h] = w.b1[h];
    for (std::size_t c = 0; c < dim_in; ++c) {
      const double ec = e[c];
      const double* wrow = &w.w1[c * hid];
      for (std::size_t h = 0; h < hid; ++h) pre_row[h] += ec * wrow[h];
    }
    auto hid_row = hidden.row(i);
    for (std::size_t h = 0; h < hid; ++h) hid_row[h] = activate(params.activation, pre_row[h]);
    if (drop) {
      rng::Stream s(dropout.key, dropout.a, dropout.b, static_cast<std::uint32_t>(i));
      auto m = mask.row(i);
      for (std::size_t h = 0; h < hid; ++h) {
        m[h] = s.uniform() < params.dropout_rate ? 0.0 : keep_scale;
        hid_row[h] *= m[h];
      }
    }
    auto out_row = out.row(i);
    for (std::size_t o = 0; o < dim_out; ++o) out_row[o] = w.b2[o];
    for (std::size_t h = 0; h < hid; ++h) {
      const double hv = hid_row[h];
      const double* wrow = &w.w2[h * dim_out];
      for (std::size_t o = 0; o < dim_out; ++o) out_row[o] += hv * wrow[o];
    }
    for (auto& v : out_row) v = std::tanh(v);
  }

  if (cache) {
    cache->pre = std::move(pre);
    cache->mask = std::move(mask);
    cache->hidden = std::move(hidden);
    cache->out = out;
  }
  return PFSField(std::move(out));
}

void pfs_backward(const PatchEmbeddingField& field, const PFSParams& params, const ForwardCache& cache,
                  const Matrix& grad_z, PFSWeights& grad) {
  const std::size_t k = field.patch_count();
  const std::size_t dim_in = params.input_dim;
  const std::size_t hid = params.hidden_width;
  const std::size_t dim_out = params.output_dim;
  const auto& w = params.weights;
  const bool has_mask = !cache.mask.empty();

  std::vector<double> g_out(dim_out);
  std::vector<double> g_pre(hid);
  for (std::size_t i = 0; i < k; ++i) {
    const auto z = cache.out.row(i);
    const auto gz = grad_z.row(i);
    for (std::size_t o = 0; o < dim_out; ++o) g_out[o] = gz[o] * (1.0 - z[o] * z[o]);

    const auto hid_row = cache.hidden.row(i);
    const auto pre_row = cache.pre.row(i);
    for (std::size_t o = 0; o < dim_out; ++o) grad.b2[o] += g_out[o];
    for (std::size_t h = 0; h < hid; ++h) {
      const double* wrow = &w.w2[h * dim_out];
      double* gw = &grad.w2[h * dim_out];
      double back = 0.0;
      for (std::size_t o = 0; o < dim_out; ++o) {
        gw[o] += hid_row[h] * g_out[o];
        back += wrow[o] * g_out[o];
      }
      if (has_mask) back *= cache.mask(i, h);
      g_pre[h] = back * activate_derivative(params.activation, pre_row[h]);
      grad.b1[h] += g_pre[h];
    }
    const auto e = field.patch(i);
    for (std::size_t c = 0; c < dim_in; ++c) {
      const double ec = e[c];
      double* gw = &grad.w1[c * hid];
      for (std::size_t h = 0; h < hid; ++h) gw[h] += ec * g_pre[h];
    }
  }
}

std::vector<PFSField> project_all(const EmbeddingDataset& dataset, const PFSParams& params) {
  std::vector<PFSField> out(dataset.size());
#pragma omp parallel for schedule(static)
  for (std::size_t r = 0; r < dataset.size(); ++r) {
    out[r] = pfs_forward(dataset[r].field, params, Mode::eval);
  }
  return out;
}

std::vector<std::uint8_t> encode_checkpoint(const PFSParams& params) {
  params.validate();
  if (params.activation != Activation::gelu) {
    throw std::invalid_argument("checkpoint: only GELU projection heads can be stored");
  }
  std::vector<std::uint8_t> out(std::begin(kCheckpointMagic), std::end(kCheckpointMagic));
  io::put_u32(out, kCheckpointVersion);
  io::put_u32(out, static_cast<std::uint32_t>(params.input_dim));
  io::put_u32(out, static_cast<std::uint32_t>(params.hidden_width));
  io::put_u32(out, static_cast<std::uint32_t>(params.output_dim));
  io::put_f64(out, params.dropout_rate);
  io::put_f64(out, params.weights.log_gamma);
  params.weights.for_each_block([&](const std::vector<double>& block) {
    for (double v : block) io::put_f64(out, v);
  });
  return out;
}

PFSParams decode_checkpoint(std::span<const std::uint8_t> bytes) {
  io::Reader in(bytes);
  const auto magic = in.take(4);
  if (!std::equal(magic.begin(), magic.end(), std::begin(kCheckpointMagic))) {
    throw FormatError(FormatError::Kind::bad_magic, "checkpoint: bad magic");
  }
  const auto version = in.u32();
  if (version != kCheckpointVersion) {
    throw FormatError(FormatError::Kind::unsupported_version, "checkpoint: unsupported version " + std::to_string(version));
  }
  PFSParams p;
  p.input_dim = in.u32();
  p.hidden_width = in.u32();
  p.output_dim = in.u32();
  p.dropout_rate = in.f64();
  if (p.input_dim == 0 || p.hidden_width == 0 || p.output_dim == 0) {
    throw FormatError(FormatError::Kind::invalid, "checkpoint: zero dimension");
  }
  p.weights = p.zeros_like();
  p.weights.log_gamma = in.f64();
  p.weights.for_each_block([&](std::vector<double>& block) {
    for (auto& v : block) v = in.f64();
  });
  if (in.remaining() != 0) throw FormatError(FormatError::Kind::trailing_bytes, "checkpoint: trailing bytes");
  try {
    p.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError(FormatError::Kind::invalid, std::string("checkpoint: ") + e.what());
  }
  return p;
}

void write_checkpoint(const PFSParams& params, const std::filesystem::path& path) {
  io::write_file_atomic(path, encode_checkpoint(params));
}

PFSParams read_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(io::read_file(path)); }

}  // namespace mdmf
