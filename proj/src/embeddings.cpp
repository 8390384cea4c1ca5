#include "mdmf/embeddings.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "mdmf/errors.hpp"
#include "mdmf/io.hpp"

namespace mdmf {

namespace {

constexpr std::uint8_t kMagic[4] = {'M', 'D', 'M', 'F'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint32_t kFlagLabels = 1u << 0;
constexpr std::uint32_t kFlagIds = 1u << 1;

std::size_t exact_sqrt(std::size_t n) {
  auto r = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(n))));
  while (r * r > n) --r;
  while ((r + 1) * (r + 1) <= n) ++r;
  return r * r == n ? r : 0;
}

}  // namespace

const char* to_string(Label label) noexcept { return label == Label::real ? "real" : "generated"; }

PatchEmbeddingField::PatchEmbeddingField(Matrix patches) : patches_(std::move(patches)) {
  if (patches_.rows() == 0 || patches_.cols() == 0) {
    throw std::invalid_argument("PatchEmbeddingField: K and D must be positive");
  }
  for (double v : patches_.flat()) {
    if (!std::isfinite(v)) throw std::invalid_argument("PatchEmbeddingField: non-finite component");
  }
}

void EmbeddingDataset::add(EmbeddingRecord record) {
  if (record.field.patch_count() != k_ || record.field.dim() != d_) {
    throw std::invalid_argument("EmbeddingDataset: record shape (" +
                                std::to_string(record.field.patch_count()) + ", " +
                                std::to_string(record.field.dim()) + ") does not match dataset (" +
                                std::to_string(k_) + ", " + std::to_string(d_) + ")");
  }
  records_.push_back(std::move(record));
}

std::vector<std::uint8_t> encode_embedding_file(const EmbeddingDataset& dataset) {
  if (dataset.size() > std::numeric_limits<std::uint32_t>::max()) {
    throw std::invalid_argument("embedding file: too many records");
  }
  bool any_id = false;
  for (const auto& r : dataset.records()) {
    if (r.source_id.size() > std::numeric_limits<std::uint16_t>::max()) {
      throw std::invalid_argument("embedding file: source id longer than 65535 bytes");
    }
    any_id = any_id || !r.source_id.empty();
  }
  const std::uint32_t flags = (dataset.labels_present() ? kFlagLabels : 0u) | (any_id ? kFlagIds : 0u);

  std::vector<std::uint8_t> out;
  out.reserve(24 + dataset.size() * (dataset.patch_count() * dataset.dim() * 4 + 1));
  for (std::uint8_t c : kMagic) out.push_back(c);
  io::put_u32(out, kVersion);
  io::put_u32(out, static_cast<std::uint32_t>(dataset.size()));
  io::put_u32(out, dataset.patch_count());
  io::put_u32(out, dataset.dim());
  io::put_u32(out, flags);

  for (const auto& r : dataset.records()) {
    for (double v : r.field.patches().flat()) io::put_f32(out, static_cast<float>(v));
  }
  if (flags & kFlagLabels) {
    for (const auto& r : dataset.records()) out.push_back(static_cast<std::uint8_t>(r.label));
  }
  if (flags & kFlagIds) {
    for (const auto& r : dataset.records()) {
      io::put_u16(out, static_cast<std::uint16_t>(r.source_id.size()));
      out.insert(out.end(), r.source_id.begin(), r.source_id.end());
    }
  }
  return out;
}

EmbeddingDataset decode_embedding_file(std::span<const std::uint8_t> bytes) {
  io::Reader in(bytes);
  const auto magic = in.take(4);
  if (!std::equal(magic.begin(), magic.end(), std::begin(kMagic))) {
    throw FormatError(FormatError::Kind::bad_magic, "embedding file: bad magic");
  }
  const std::uint32_t version = in.u32();
  if (version != kVersion) {
    throw FormatError(FormatError::Kind::unsupported_version,
                      "embedding file: unsupported version " + std::to_string(version));
  }
  const std::uint32_t n = in.u32();
  const std::uint32_t k = in.u32();
  const std::uint32_t d = in.u32();
  const std::uint32_t flags = in.u32();
  if (k == 0 || d == 0) throw FormatError(FormatError::Kind::invalid, "embedding file: K and D must be positive");
  if (flags & ~(kFlagLabels | kFlagIds)) {
    throw FormatError(FormatError::Kind::invalid, "embedding file: unknown flag bits");
  }

  const std::size_t stride = static_cast<std::size_t>(k) * d;
  if (in.remaining() / 4 / stride < n) {
    throw FormatError(FormatError::Kind::truncated,
                      "embedding file: payload shorter than " + std::to_string(n) + " records");
  }

  std::vector<Matrix> fields;
  fields.reserve(n);
  for (std::uint32_t r = 0; r < n; ++r) {
    std::vector<double> values(stride);
    for (auto& v : values) {
      v = in.f32();
      if (!std::isfinite(v)) {
        throw FormatError(FormatError::Kind::non_finite,
                          "embedding file: non-finite value in record " + std::to_string(r));
      }
    }
    fields.emplace_back(k, d, std::move(values));
  }

  std::vector<Label> labels(n, Label::real);
  if (flags & kFlagLabels) {
    const auto raw = in.take(n);
    for (std::uint32_t r = 0; r < n; ++r) {
      if (raw[r] > 1) {
        throw FormatError(FormatError::Kind::invalid, "embedding file: label byte out of range");
      }
      labels[r] = static_cast<Label>(raw[r]);
    }
  }
  std::vector<std::string> ids(n);
  if (flags & kFlagIds) {
    for (std::uint32_t r = 0; r < n; ++r) {
      const auto len = in.u16();
      const auto raw = in.take(len);
      ids[r].assign(raw.begin(), raw.end());
    }
  }
  if (in.remaining() != 0) {
    throw FormatError(FormatError::Kind::trailing_bytes,
                      "embedding file: " + std::to_string(in.remaining()) + " unexpected trailing bytes");
  }

  EmbeddingDataset out(k, d);
  out.set_labels_present(flags & kFlagLabels);
  out.reserve(n);
  for (std::uint32_t r = 0; r < n; ++r) {
    out.add({PatchEmbeddingField(std::move(fields[r])), labels[r], std::move(ids[r])});
  }
  return out;
}

void write_embedding_file(const EmbeddingDataset& dataset, const std::filesystem::path& path) {
  io::write_file_atomic(path, encode_embedding_file(dataset));
}

EmbeddingDataset read_embedding_file(const std::filesystem::path& path) {
  return decode_embedding_file(io::read_file(path));
}

PatchEmbeddingField pool_token_grid(const TokenGrid& grid, std::size_t target_patch_count) {
  const std::size_t g = grid.side;
  if (g == 0 || grid.tokens.rows() != g * g) {
    throw std::invalid_argument("pool_token_grid: token count is not side*side");
  }
  const std::size_t k = exact_sqrt(target_patch_count);
  if (k == 0) {
    throw std::invalid_argument("pool_token_grid: K=" + std::to_string(target_patch_count) +
                                " is not a positive perfect square");
  }
  if (g % k != 0) {
    throw std::invalid_argument("pool_token_grid: " + std::to_string(k) + " does not divide grid side " +
                                std::to_string(g));
  }
  const std::size_t block = g / k;
  const std::size_t dim = grid.tokens.cols();
  const double inv = 1.0 / static_cast<double>(block * block);

  Matrix out(k * k, dim);
  for (std::size_t pi = 0; pi < k; ++pi) {
    for (std::size_t pj = 0; pj < k; ++pj) {
      auto dst = out.row(pi * k + pj);
      for (std::size_t bi = 0; bi < block; ++bi) {
        for (std::size_t bj = 0; bj < block; ++bj) {
          const auto src = grid.tokens.row((pi * block + bi) * g + pj * block + bj);
          for (std::size_t c = 0; c < dim; ++c) dst[c] += src[c];
        }
      }
      for (auto& v : dst) v *= inv;
    }
  }
  return PatchEmbeddingField(std::move(out));
}

EmbeddingDataset pool_dataset(const EmbeddingDataset& dataset, std::size_t target_patch_count) {
  const std::size_t side = exact_sqrt(dataset.patch_count());
  if (side == 0) throw std::invalid_argument("pool_dataset: dataset K is not a perfect square");
  EmbeddingDataset out(static_cast<std::uint32_t>(target_patch_count), dataset.dim());
  out.set_labels_present(dataset.labels_present());
  out.reserve(dataset.size());
  for (const auto& r : dataset.records()) {
    TokenGrid grid{side, r.field.patches()};
    out.add({pool_token_grid(grid, target_patch_count), r.label, r.source_id});
  }
  return out;
}

}  // namespace mdmf
