#pragma once

#include <Eigen/Dense>

#include <concepts>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace hcr {

/// Row-major dynamic matrix; one sample per row throughout the library.
template <std::floating_point Real>
using Mat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <std::floating_point Real>
using Vec = Eigen::Matrix<Real, Eigen::Dynamic, 1>;

using MatD = Mat<double>;
using VecD = Vec<double>;

using Labels = std::vector<int>;
using Mask = std::vector<bool>;

// Errors -------------------------------------------------------------------

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ZeroVector : Error { using Error::Error; };
struct ShapeMismatch : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };
struct EmptyBatch : Error { using Error::Error; };
struct NoNegatives : Error { using Error::Error; };
struct EmptyDataset : Error { using Error::Error; };
struct DuplicatePoints : Error { using Error::Error; };
struct DegenerateData : Error { using Error::Error; };
struct ProportionTooSmall : Error { using Error::Error; };
struct EmptyFile : Error { using Error::Error; };

struct ParseError : Error {
  ParseError(const std::string& what, long row, long column)
      : Error(what + " (row " + std::to_string(row) + ", column " + std::to_string(column) + ")"),
        reason(what),
        row(row),
        column(column) {}
  std::string reason;
  long row;
  long column;
};

// Randomness ----------------------------------------------------------------

using Seed = std::uint64_t;
using Rng = std::mt19937_64;

/// splitmix64 finalizer; used to derive independent per-purpose streams.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Derive a child seed from a parent seed and a sequence of stream tags.
template <std::unsigned_integral... Tags>
constexpr Seed derive_seed(Seed parent, Tags... tags) noexcept {
  Seed s = mix64(parent);
  ((s = mix64(s ^ static_cast<std::uint64_t>(tags))), ...);
  return s;
}

inline Rng make_rng(Seed seed) { return Rng{seed}; }

/// Matrix of i.i.d. N(0, sd^2) draws, filled row by row.
inline MatD gaussian_matrix(Eigen::Index rows, Eigen::Index cols, double sd, Rng& rng) {
  std::normal_distribution<double> normal(0.0, sd);
  MatD m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = normal(rng);
  return m;
}

inline void require_same_shape(Eigen::Index r1, Eigen::Index c1, Eigen::Index r2, Eigen::Index c2,
                               const char* what) {
  if (r1 != r2 || c1 != c2)
    throw ShapeMismatch(std::string(what) + ": " + std::to_string(r1) + "x" + std::to_string(c1) +
                        " vs " + std::to_string(r2) + "x" + std::to_string(c2));
}

}  // namespace hcr
