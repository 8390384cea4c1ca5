#pragma once

#include <cstdint>
#include <vector>

#include "mdmf/embeddings.hpp"
#include "mdmf/matrix.hpp"
#include "mdmf/pfs.hpp"
#include "mdmf/rng.hpp"

namespace testing {

// Uniform(-scale, scale) matrix from a keyed stream.
inline mdmf::Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed, double scale = 1.0) {
  mdmf::Matrix m(rows, cols);
  mdmf::rng::Stream s(mdmf::rng::Key(seed), 0xabcd);
  for (auto& v : m.flat()) v = scale * (2.0 * s.uniform() - 1.0);
  return m;
}

inline mdmf::PatchEmbeddingField random_field(std::size_t k, std::size_t d, std::uint64_t seed, double scale = 1.0) {
  return mdmf::PatchEmbeddingField(random_matrix(k, d, seed, scale));
}

inline std::vector<mdmf::PatchEmbeddingField> random_fields(std::size_t n, std::size_t k, std::size_t d,
                                                            std::uint64_t seed, double scale = 1.0) {
  std::vector<mdmf::PatchEmbeddingField> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(random_field(k, d, seed * 1000003 + i, scale));
  return out;
}

inline std::vector<mdmf::PFSField> random_pfs(std::size_t n, std::size_t k, std::size_t d, std::uint64_t seed) {
  std::vector<mdmf::PFSField> out;
  for (std::size_t i = 0; i < n; ++i) out.emplace_back(random_matrix(k, d, seed * 7919 + i));
  return out;
}

inline mdmf::PFSField pfs_of(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t k = rows.size();
  const std::size_t d = rows.begin()->size();
  std::vector<double> v;
  for (const auto& r : rows) v.insert(v.end(), r.begin(), r.end());
  return mdmf::PFSField(mdmf::Matrix(k, d, v));
}

}  // namespace testing
