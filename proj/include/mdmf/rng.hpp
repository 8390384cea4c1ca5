#pragma once

#include <array>
#include <cstdint>
#include <initializer_list>

namespace mdmf::rng {

// Philox4x32-10 block function (Salmon et al., SC'11).
using PhiloxCounter = std::array<std::uint32_t, 4>;
using PhiloxKey = std::array<std::uint32_t, 2>;

PhiloxCounter philox4x32_10(PhiloxCounter ctr, PhiloxKey key) noexcept;

std::uint64_t splitmix64(std::uint64_t x) noexcept;

// 64-bit key naming one family of random streams. Sub-keys are derived by
// hashing tags in, so experiments can carve out independent families
// ("real", "fake", "dropout", ...) from a single user seed.
class Key {
 public:
  constexpr Key() = default;
  constexpr explicit Key(std::uint64_t seed) : value_(seed) {}

  Key derive(std::uint64_t tag) const noexcept;
  std::uint64_t value() const noexcept { return value_; }

  bool operator==(const Key&) const = default;

 private:
  std::uint64_t value_ = 0;
};

// Tags for Key::derive. Values are part of the on-disk reproducibility
// contract: changing them changes every synthetic dataset.
enum class Tag : std::uint64_t {
  base_noise = 1,
  defect = 2,
  real_set = 3,
  fake_set = 4,
  init = 5,
  shuffle = 6,
  dropout = 7,
  reference_set = 8,
  test_set = 9,
  trial = 10,
};

inline Key derive(Key key, Tag tag) noexcept { return key.derive(static_cast<std::uint64_t>(tag)); }

// Counter-based stream addressed by (key, a, b, c). Two streams with
// different addresses are statistically independent, and the values drawn
// from a stream never depend on which thread draws them or in what order
// other streams are consumed.
class Stream {
 public:
  Stream(Key key, std::uint32_t a = 0, std::uint32_t b = 0, std::uint32_t c = 0) noexcept;

  std::uint32_t next_u32() noexcept;
  std::uint64_t next_u64() noexcept;

  // Uniform on the open interval (0, 1); 53-bit resolution.
  double uniform() noexcept;
  // Unbiased integer in [0, bound). bound must be positive.
  std::uint64_t below(std::uint64_t bound) noexcept;
  double normal() noexcept;
  bool bernoulli(double p) noexcept { return uniform() < p; }
  // +1 or -1 with equal probability.
  double rademacher() noexcept { return (next_u32() & 1u) ? 1.0 : -1.0; }

 private:
  void refill() noexcept;

  PhiloxKey key_;
  PhiloxCounter counter_;
  PhiloxCounter block_{};
  int used_ = 4;
  bool has_spare_normal_ = false;
  double spare_normal_ = 0.0;
};

}  // namespace mdmf::rng
