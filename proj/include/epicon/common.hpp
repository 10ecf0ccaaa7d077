#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace epicon {

inline constexpr const char* kVersion = "0.1.0";

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Base class for all errors raised by the toolkit.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Malformed input text (contact files, allocation files).
struct ParseError : Error {
  using Error::Error;
};

/// Structurally valid input that denotes no usable data (empty log, empty network).
struct DataError : Error {
  using Error::Error;
};

/// Inconsistent or out-of-range configuration values.
struct ConfigError : Error {
  using Error::Error;
};

/// Shape mismatch between operands.
struct DimensionError : Error {
  using Error::Error;
};

/// A documented precondition of an operation was violated by the caller.
struct ContractError : Error {
  using Error::Error;
};

/// Request exceeds a hard resource guard (e.g. master equation state count).
struct ResourceError : Error {
  using Error::Error;
};

/// Rate bounds that collapse an interval needed for cost normalization.
struct DegenerateBoundsError : Error {
  using Error::Error;
};

namespace detail {

// splitmix64; used to derive independent child seeds from (seed, stream).
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Uniform double in [0, 1) from the top 53 bits; identical on every platform,
// unlike std::uniform_real_distribution.
inline double canonical(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Exponential(rate) waiting time; rate > 0.
inline double exponential(std::mt19937_64& rng, double rate) {
  double u;
  do {
    u = canonical(rng);
  } while (u <= 0.0);
  return -std::log(u) / rate;
}

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw ContractError(msg);
}

}  // namespace detail

}  // namespace epicon
