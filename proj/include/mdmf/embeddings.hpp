#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mdmf/matrix.hpp"

namespace mdmf {

enum class Label : std::uint8_t { real = 0, generated = 1 };

const char* to_string(Label label) noexcept;

// K patch embeddings of dimension D for one image, one patch per row.
class PatchEmbeddingField {
 public:
  PatchEmbeddingField() = default;
  // Throws std::invalid_argument on an empty shape or non-finite entries.
  explicit PatchEmbeddingField(Matrix patches);

  std::size_t patch_count() const noexcept { return patches_.rows(); }
  std::size_t dim() const noexcept { return patches_.cols(); }
  const Matrix& patches() const noexcept { return patches_; }
  std::span<const double> patch(std::size_t i) const noexcept { return patches_.row(i); }

  bool operator==(const PatchEmbeddingField&) const = default;

 private:
  Matrix patches_;
};

// Raw G x G backbone token layout, row-major over the grid.
struct TokenGrid {
  std::size_t side = 0;  // G
  Matrix tokens;         // G*G rows, D columns
};

struct EmbeddingRecord {
  PatchEmbeddingField field;
  Label label = Label::real;
  std::string source_id;

  bool operator==(const EmbeddingRecord&) const = default;
};

// Labeled records sharing one (K, D). Immutable once built.
class EmbeddingDataset {
 public:
  EmbeddingDataset(std::uint32_t patch_count, std::uint32_t dim) : k_(patch_count), d_(dim) {}

  void add(EmbeddingRecord record);
  void reserve(std::size_t n) { records_.reserve(n); }

  std::uint32_t patch_count() const noexcept { return k_; }
  std::uint32_t dim() const noexcept { return d_; }
  std::size_t size() const noexcept { return records_.size(); }
  bool empty() const noexcept { return records_.empty(); }
  const EmbeddingRecord& operator[](std::size_t i) const noexcept { return records_[i]; }
  const std::vector<EmbeddingRecord>& records() const noexcept { return records_; }

  // False only for files written without the label block.
  bool labels_present() const noexcept { return labels_present_; }
  void set_labels_present(bool present) noexcept { labels_present_ = present; }

  bool operator==(const EmbeddingDataset&) const = default;

 private:
  std::uint32_t k_;
  std::uint32_t d_;
  bool labels_present_ = true;
  std::vector<EmbeddingRecord> records_;
};

// .pfse encoding. Values are stored as IEEE-754 binary32, so a field only
// round-trips exactly when its entries are representable as floats.
std::vector<std::uint8_t> encode_embedding_file(const EmbeddingDataset& dataset);
EmbeddingDataset decode_embedding_file(std::span<const std::uint8_t> bytes);

void write_embedding_file(const EmbeddingDataset& dataset, const std::filesystem::path& path);
EmbeddingDataset read_embedding_file(const std::filesystem::path& path);

// Mean-pools a G x G token grid down to K = k*k patches (k must divide G).
PatchEmbeddingField pool_token_grid(const TokenGrid& grid, std::size_t target_patch_count);

// Applies pool_token_grid to every record, treating each K-patch field as a
// sqrt(K) x sqrt(K) token grid.
EmbeddingDataset pool_dataset(const EmbeddingDataset& dataset, std::size_t target_patch_count);

}  // namespace mdmf
