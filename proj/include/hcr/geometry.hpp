#pragma once

// Hypersphere projection, pairwise distances and distance histograms.

#include "hcr/common.hpp"
#include "hcr/detail/format.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <utility>

namespace hcr {

/// Norm threshold below which a row cannot be projected onto the sphere.
inline constexpr double kZeroNormThreshold = 1e-12;

/// Row-wise l2-normalized matrix with at least two columns.
template <std::floating_point Real>
class UnitSphereBatch {
 public:
  UnitSphereBatch() = default;

  /// Wrap rows that are already unit norm (to 1e-6); throws ConfigError otherwise.
  static UnitSphereBatch from_unit_rows(Mat<Real> values) {
    if (values.cols() < 2) throw ConfigError("UnitSphereBatch: dim must be >= 2");
    for (Eigen::Index i = 0; i < values.rows(); ++i) {
      const double n = static_cast<double>(values.row(i).norm());
      if (std::abs(n - 1.0) > 1e-6)
        throw ConfigError("UnitSphereBatch: row " + std::to_string(i) + " has norm " + std::to_string(n));
    }
    UnitSphereBatch b;
    b.values_ = std::move(values);
    return b;
  }

  Eigen::Index rows() const noexcept { return values_.rows(); }
  Eigen::Index dim() const noexcept { return values_.cols(); }
  const Mat<Real>& values() const noexcept { return values_; }
  auto row(Eigen::Index i) const { return values_.row(i); }

 private:
  template <std::floating_point R>
  friend UnitSphereBatch<R> project_to_sphere(const Mat<R>& features);
  template <std::floating_point R>
  friend UnitSphereBatch<R> project_to_sphere(const Mat<R>& features, Vec<R>& norms);

  Mat<Real> values_;
};

/// Symmetric, zero-diagonal, non-negative n x n matrix of pairwise distances.
template <std::floating_point Real>
class DistanceMatrix {
 public:
  DistanceMatrix() = default;

  /// Validate an explicitly supplied matrix (exact symmetry, zero diagonal, entries >= 0).
  static DistanceMatrix from_values(Mat<Real> values) {
    if (values.rows() != values.cols()) throw ShapeMismatch("DistanceMatrix must be square");
    for (Eigen::Index i = 0; i < values.rows(); ++i) {
      if (values(i, i) != Real(0)) throw ConfigError("DistanceMatrix: nonzero diagonal");
      for (Eigen::Index j = 0; j < values.cols(); ++j) {
        if (values(i, j) != values(j, i)) throw ConfigError("DistanceMatrix: not symmetric");
        if (!(values(i, j) >= Real(0))) throw ConfigError("DistanceMatrix: negative or NaN entry");
      }
    }
    DistanceMatrix d;
    d.values_ = std::move(values);
    return d;
  }

  Eigen::Index size() const noexcept { return values_.rows(); }
  const Mat<Real>& values() const noexcept { return values_; }
  Real operator()(Eigen::Index i, Eigen::Index j) const { return values_(i, j); }

  /// Strict upper triangle in row-major pair order (0,1), (0,2), ..., (n-2,n-1).
  std::vector<double> upper_triangle() const {
    std::vector<double> out;
    const auto n = size();
    out.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = i + 1; j < n; ++j) out.push_back(static_cast<double>(values_(i, j)));
    return out;
  }

 private:
  template <std::floating_point R>
  friend DistanceMatrix<R> pairwise_distances_raw(const Mat<R>& rows);

  Mat<Real> values_;
};

/// Divide each row by its Euclidean norm; `norms` receives the pre-projection norms.
template <std::floating_point Real>
UnitSphereBatch<Real> project_to_sphere(const Mat<Real>& features, Vec<Real>& norms) {
  if (features.cols() < 2) throw ConfigError("project_to_sphere: dim must be >= 2");
  norms = features.rowwise().norm();
  UnitSphereBatch<Real> out;
  out.values_.resize(features.rows(), features.cols());
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    if (!(static_cast<double>(norms(i)) >= kZeroNormThreshold))
      throw ZeroVector("project_to_sphere: row " + std::to_string(i) + " has zero norm");
    out.values_.row(i) = features.row(i) / norms(i);
  }
  return out;
}

template <std::floating_point Real>
UnitSphereBatch<Real> project_to_sphere(const Mat<Real>& features) {
  Vec<Real> norms;
  return project_to_sphere(features, norms);
}

/// Reverse-mode through row normalization: grad_v = (I - u u^T) grad_u / |v|.
template <std::floating_point Real>
Mat<Real> project_to_sphere_backward(const UnitSphereBatch<Real>& projected, const Vec<Real>& norms,
                                     const Mat<Real>& grad_unit) {
  const auto& u = projected.values();
  require_same_shape(u.rows(), u.cols(), grad_unit.rows(), grad_unit.cols(), "project_to_sphere_backward");
  Mat<Real> out(u.rows(), u.cols());
  for (Eigen::Index i = 0; i < u.rows(); ++i) {
    const Real radial = u.row(i).dot(grad_unit.row(i));
    out.row(i) = (grad_unit.row(i) - radial * u.row(i)) / norms(i);
  }
  return out;
}

/// Euclidean distances between arbitrary rows via the Gram identity
/// d^2 = |a|^2 + |b|^2 - 2<a,b>; negative rounding residue clamps to 0.
template <std::floating_point Real>
DistanceMatrix<Real> pairwise_distances_raw(const Mat<Real>& rows) {
  const Eigen::Index n = rows.rows();
  const Mat<Real> gram = rows * rows.transpose();
  DistanceMatrix<Real> d;
  d.values_.setZero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const Real sq = gram(i, i) + gram(j, j) - Real(2) * gram(i, j);
      const Real dist = std::sqrt(std::max(sq, Real(0)));
      d.values_(i, j) = dist;
      d.values_(j, i) = dist;
    }
  }
  return d;
}

template <std::floating_point Real>
DistanceMatrix<Real> pairwise_distances(const UnitSphereBatch<Real>& batch) {
  if (batch.rows() < 2) throw ConfigError("pairwise_distances: need at least 2 rows");
  return pairwise_distances_raw(batch.values());
}

/// Gradient w.r.t. the rows given dL/dD for every entry of D (either triangle may carry weight).
/// Pairs at zero distance contribute nothing.
template <std::floating_point Real>
Mat<Real> pairwise_distances_backward(const Mat<Real>& rows, const DistanceMatrix<Real>& d,
                                      const Mat<Real>& grad_d) {
  const Eigen::Index n = rows.rows();
  require_same_shape(n, n, grad_d.rows(), grad_d.cols(), "pairwise_distances_backward");
  Mat<Real> w = Mat<Real>::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j || d(i, j) <= Real(0)) continue;
      w(i, j) = (grad_d(i, j) + grad_d(j, i)) / d(i, j);
    }
  }
  const Vec<Real> row_sums = w.rowwise().sum();
  return row_sums.asDiagonal() * rows - w * rows;
}

/// n i.i.d. points uniform on S^{dim-1}: normalized standard Gaussians.
inline UnitSphereBatch<double> sample_uniform_sphere(Eigen::Index n, Eigen::Index dim, Seed seed) {
  if (n < 1 || dim < 2) throw ConfigError("sample_uniform_sphere: need n >= 1 and dim >= 2");
  Rng rng = make_rng(seed);
  MatD g = gaussian_matrix(n, dim, 1.0, rng);
  // zero-norm draws cannot be projected
  for (Eigen::Index i = 0; i < n; ++i)
    while (g.row(i).norm() < kZeroNormThreshold) g.row(i) = gaussian_matrix(1, dim, 1.0, rng);
  return project_to_sphere(g);
}

// Histograms ----------------------------------------------------------------

struct Histogram {
  std::vector<double> bin_edges;        // bins + 1 ascending edges
  std::vector<std::uint64_t> counts;    // one per bin

  std::size_t bins() const noexcept { return counts.size(); }
  std::uint64_t total() const noexcept {
    std::uint64_t t = 0;
    for (auto c : counts) t += c;
    return t;
  }
};

/// Equal-width histogram over [lo, hi]; values outside clamp into the end bins.
inline Histogram histogram(const std::vector<double>& samples, std::size_t bins, double lo, double hi) {
  if (bins < 1) throw ConfigError("histogram: bins must be >= 1");
  if (!(lo < hi)) throw ConfigError("histogram: require lo < hi");
  Histogram h;
  h.bin_edges.resize(bins + 1);
  const double width = (hi - lo) / static_cast<double>(bins);
  for (std::size_t k = 0; k <= bins; ++k) h.bin_edges[k] = lo + width * static_cast<double>(k);
  h.bin_edges[bins] = hi;
  h.counts.assign(bins, 0);
  for (double x : samples) {
    const double pos = std::floor((x - lo) / width);
    std::size_t k = 0;
    if (pos >= static_cast<double>(bins)) k = bins - 1;
    else if (pos > 0) k = static_cast<std::size_t>(pos);
    ++h.counts[k];
  }
  return h;
}

/// Histogram of the strict upper triangle of a distance matrix.
template <std::floating_point Real>
Histogram distance_histogram(const DistanceMatrix<Real>& d, std::size_t bins, double lo, double hi) {
  return histogram(d.upper_triangle(), bins, lo, hi);
}

/// CSV with header `bin_lo,bin_hi,count`.
inline void write_histogram_csv(std::ostream& os, const Histogram& h) {
  os << "bin_lo,bin_hi,count\n";
  for (std::size_t k = 0; k < h.bins(); ++k)
    os << format_real(h.bin_edges[k]) << ',' << format_real(h.bin_edges[k + 1]) << ',' << h.counts[k] << '\n';
}

}  // namespace hcr
