#pragma once

#include <stdexcept>
#include <string>

namespace mdmf {

// Malformed or corrupt on-disk data (.pfse, .pfsp, score CSV).
class FormatError : public std::runtime_error {
 public:
  enum class Kind { bad_magic, unsupported_version, truncated, trailing_bytes, non_finite, invalid };

  FormatError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

// I/O failure that is not a format problem (open, write, rename).
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mdmf
