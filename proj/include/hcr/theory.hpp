#pragma once

// Monte-Carlo checks of the geometric facts HCR leans on: distance
// concentration on high-dimensional spheres, random-projection distance
// preservation, and k-NN mutual information under invertible reparametrization.

#include "hcr/common.hpp"
#include "hcr/geometry.hpp"
#include "hcr/stats.hpp"

#include <Eigen/QR>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

namespace hcr {

// Distance concentration -------------------------------------------------------------

struct DistanceStats {
  Eigen::Index dim = 0;
  Eigen::Index n_points = 0;
  double mean = 0;
  double variance = 0;
  double predicted_mean = 0;
  double predicted_variance = 0;
};

/// Pairwise chord distances of n uniform points on S^{dim-1} against the
/// concentration predictions sqrt(2) and 1 / (2 dim).
inline DistanceStats check_distance_asymptotics(Eigen::Index dim, Eigen::Index n_points, Seed seed) {
  if (dim < 2) throw ConfigError("check_distance_asymptotics: dim must be >= 2");
  if (n_points < 100) throw ConfigError("check_distance_asymptotics: need at least 100 points");
  const auto d = pairwise_distances(sample_uniform_sphere(n_points, dim, seed)).upper_triangle();
  DistanceStats s;
  s.dim = dim;
  s.n_points = n_points;
  s.mean = mean(d);
  s.variance = variance(d);
  s.predicted_mean = std::numbers::sqrt2;
  s.predicted_variance = 1.0 / (2.0 * static_cast<double>(dim));
  return s;
}

// Random projection ------------------------------------------------------------------

/// points * G with G_ij ~ N(0, 1 / target_dim).
inline MatD jl_project(const MatD& points, Eigen::Index target_dim, Seed seed) {
  if (target_dim < 1) throw ConfigError("jl_project: target_dim must be >= 1");
  Rng rng = make_rng(seed);
  const MatD g = gaussian_matrix(points.cols(), target_dim, 1.0 / std::sqrt(static_cast<double>(target_dim)), rng);
  return points * g;
}

struct JlReport {
  Eigen::Index source_dim = 0;
  Eigen::Index target_dim = 0;
  Eigen::Index n_points = 0;
  double max_distortion_eps = 0;
  /// |ratio - 1| per pair (i < j), row-major over the upper triangle.
  std::vector<double> distortions;
};

inline JlReport jl_distortion(const MatD& original, const MatD& projected) {
  if (original.rows() != projected.rows())
    throw ShapeMismatch("jl_distortion: original and projected row counts differ");
  const Eigen::Index n = original.rows();
  JlReport r;
  r.source_dim = original.cols();
  r.target_dim = projected.cols();
  r.n_points = n;
  r.distortions.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double before = (original.row(i) - original.row(j)).squaredNorm();
      if (before == 0) throw DuplicatePoints("jl_distortion: rows " + std::to_string(i) + " and " +
                                             std::to_string(j) + " coincide");
      const double after = (projected.row(i) - projected.row(j)).squaredNorm();
      const double eps = std::abs(after / before - 1.0);
      r.distortions.push_back(eps);
      r.max_distortion_eps = std::max(r.max_distortion_eps, eps);
    }
  }
  return r;
}

// Mutual information -----------------------------------------------------------------

struct MiEstimate {
  double value = 0;
  int k_neighbors = 0;
  Eigen::Index n_samples = 0;
};

namespace detail {

/// psi(1..n) via psi(m + 1) = psi(m) + 1/m.
inline std::vector<double> digamma_table(Eigen::Index n) {
  std::vector<double> t(static_cast<std::size_t>(n) + 1, 0.0);
  t[1] = -std::numbers::egamma;
  for (std::size_t m = 2; m < t.size(); ++m) t[m] = t[m - 1] + 1.0 / static_cast<double>(m - 1);
  return t;
}

inline void require_spread(const MatD& m, const char* which) {
  for (Eigen::Index c = 0; c < m.cols(); ++c)
    if (m.col(c).maxCoeff() == m.col(c).minCoeff())
      throw DegenerateData(std::string("ksg_mutual_information: ") + which + " column " + std::to_string(c) +
                           " is constant");
}

inline double max_norm_distance(const MatD& m, Eigen::Index i, Eigen::Index j) {
  return (m.row(i) - m.row(j)).cwiseAbs().maxCoeff();
}

}  // namespace detail

/// Kraskov-Stoegbauer-Grassberger estimator (variant 1, max-norm neighbourhoods):
///   psi(k) + psi(N) - < psi(n_x + 1) + psi(n_y + 1) >.
/// Exhaustive O(N^2) neighbour search.
inline MiEstimate ksg_mutual_information(const MatD& x, const MatD& y, int k = 5) {
  const Eigen::Index n = x.rows();
  if (y.rows() != n) throw ShapeMismatch("ksg_mutual_information: x and y must have the same number of rows");
  if (x.cols() < 1 || y.cols() < 1) throw ShapeMismatch("ksg_mutual_information: empty marginal");
  if (k < 1 || n <= k) throw ConfigError("ksg_mutual_information: need N > k >= 1");
  detail::require_spread(x, "x");
  detail::require_spread(y, "y");

  const auto psi = detail::digamma_table(n);
  std::vector<double> dx(static_cast<std::size_t>(n)), dy(dx.size()), joint(dx.size());
  double acc = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const auto s = static_cast<std::size_t>(j);
      dx[s] = detail::max_norm_distance(x, i, j);
      dy[s] = detail::max_norm_distance(y, i, j);
      joint[s] = std::max(dx[s], dy[s]);
    }
    joint[static_cast<std::size_t>(i)] = std::numeric_limits<double>::infinity();
    auto kth = joint.begin() + (k - 1);
    std::nth_element(joint.begin(), kth, joint.end());
    const double eps = *kth;
    long nx = 0, ny = 0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == i) continue;
      nx += dx[static_cast<std::size_t>(j)] < eps;
      ny += dy[static_cast<std::size_t>(j)] < eps;
    }
    acc += psi[static_cast<std::size_t>(nx + 1)] + psi[static_cast<std::size_t>(ny + 1)];
  }
  MiEstimate m;
  m.value = psi[static_cast<std::size_t>(k)] + psi[static_cast<std::size_t>(n)] - acc / static_cast<double>(n);
  m.k_neighbors = k;
  m.n_samples = n;
  return m;
}

enum class ReparamKind { identity, orthogonal, general };

inline constexpr double kMaxConditionNumber = 10.0;

inline double condition_number(const MatD& a) {
  const Eigen::JacobiSVD<MatD> svd(a);
  const auto& s = svd.singularValues();
  return s(s.size() - 1) > 0 ? s(0) / s(s.size() - 1) : std::numeric_limits<double>::infinity();
}

/// Random dim x dim invertible map. General maps are Gaussian matrices
/// rejection-sampled to condition number <= 10; orthogonal maps come from QR.
inline MatD random_reparametrization(Eigen::Index dim, ReparamKind kind, Rng& rng) {
  switch (kind) {
    case ReparamKind::identity:
      return MatD::Identity(dim, dim);
    case ReparamKind::orthogonal: {
      const MatD g = gaussian_matrix(dim, dim, 1.0, rng);
      Eigen::HouseholderQR<MatD> qr(g);
      MatD q = qr.householderQ();
      // Sign fix so Q is Haar distributed.
      for (Eigen::Index c = 0; c < dim; ++c)
        if (qr.matrixQR()(c, c) < 0) q.col(c) = -q.col(c);
      return q;
    }
    case ReparamKind::general:
      for (;;) {
        MatD g = gaussian_matrix(dim, dim, 1.0, rng);
        if (condition_number(g) <= kMaxConditionNumber) return g;
      }
  }
  throw ConfigError("random_reparametrization: unknown kind");
}

struct MiInvariance {
  MiEstimate before;
  MiEstimate after;
  double delta = 0;
};

/// Re-estimates I(x; y) after independent invertible maps on each side.
inline MiInvariance mi_invariance_check(const MatD& x, const MatD& y, Seed map_seed, int k = 5,
                                        ReparamKind kind = ReparamKind::general) {
  Rng rng = make_rng(map_seed);
  const MatD a = random_reparametrization(x.cols(), kind, rng);
  const MatD b = random_reparametrization(y.cols(), kind, rng);
  MiInvariance out;
  out.before = ksg_mutual_information(x, y, k);
  out.after = ksg_mutual_information(x * a.transpose(), y * b.transpose(), k);
  out.delta = std::abs(out.before.value - out.after.value);
  return out;
}

/// Per-coordinate correlated Gaussian pairs: y_c = rho x_c + sqrt(1 - rho^2) e_c.
struct GaussianPair {
  MatD x;
  MatD y;
  /// Closed form: -dim/2 * ln(1 - rho^2).
  double mutual_information = 0;
};

inline GaussianPair correlated_gaussians(Eigen::Index n, Eigen::Index dim, double rho, Seed seed) {
  if (!(std::abs(rho) < 1)) throw ConfigError("correlated_gaussians: |rho| must be < 1");
  Rng rng = make_rng(seed);
  GaussianPair p;
  p.x = gaussian_matrix(n, dim, 1.0, rng);
  p.y = rho * p.x + std::sqrt(1 - rho * rho) * gaussian_matrix(n, dim, 1.0, rng);
  p.mutual_information = -0.5 * static_cast<double>(dim) * std::log(1 - rho * rho);
  return p;
}

}  // namespace hcr
