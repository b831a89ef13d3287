#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace h2lo {

class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Malformed file contents. Carries the byte offset where decoding failed.
class FormatError : public Error {
public:
  FormatError(const std::string& what, std::uint64_t offset)
      : Error(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}
  std::uint64_t offset() const noexcept { return offset_; }

private:
  std::uint64_t offset_;
};

/// Invalid input data: shape mismatches, out-of-range indices, bad parameters.
class DataError : public Error {
public:
  using Error::Error;
};

/// NaN/Inf produced or detected during a computation.
class NumericalError : public Error {
public:
  using Error::Error;
};

}  // namespace h2lo
