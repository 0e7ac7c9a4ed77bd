#pragma once

#include "hcr/common.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

namespace hcr::testing {

/// Central finite-difference gradient of a scalar function of a matrix.
inline MatD numeric_gradient(const std::function<double(const MatD&)>& f, const MatD& x, double step = 1e-5) {
  MatD g(x.rows(), x.cols());
  MatD probe = x;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      const double orig = probe(i, j);
      probe(i, j) = orig + step;
      const double up = f(probe);
      probe(i, j) = orig - step;
      const double down = f(probe);
      probe(i, j) = orig;
      g(i, j) = (up - down) / (2 * step);
    }
  }
  return g;
}

/// max |analytic - numeric| relative to the largest numeric component.
inline double relative_error(const MatD& analytic, const MatD& numeric) {
  const double scale = std::max(numeric.cwiseAbs().maxCoeff(), 1e-12);
  return (analytic - numeric).cwiseAbs().maxCoeff() / scale;
}

inline MatD random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng, double sd = 1.0) {
  return gaussian_matrix(r, c, sd, rng);
}

inline MatD random_unit_rows(Eigen::Index r, Eigen::Index c, Rng& rng) {
  MatD m = gaussian_matrix(r, c, 1.0, rng);
  for (Eigen::Index i = 0; i < r; ++i) m.row(i).normalize();
  return m;
}

}  // namespace hcr::testing
