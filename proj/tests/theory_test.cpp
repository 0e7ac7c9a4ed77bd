#include "hcr/theory_report.hpp"

#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

namespace hcr {
namespace {

// Distance concentration -------------------------------------------------------------

TEST(DistanceAsymptotics, HighDimensionMatchesPrediction) {
  const auto s = check_distance_asymptotics(512, 2000, 1);
  EXPECT_EQ(s.dim, 512);
  EXPECT_EQ(s.n_points, 2000);
  EXPECT_DOUBLE_EQ(s.predicted_mean, std::sqrt(2.0));
  EXPECT_DOUBLE_EQ(s.predicted_variance, 1.0 / 1024.0);
  EXPECT_NEAR(s.mean, 1.41421, 0.01);
  EXPECT_NEAR(s.variance, 1.0 / 1024.0, 0.25 / 1024.0);
}

TEST(DistanceAsymptotics, LowDimensionStillReports) {
  const auto s = check_distance_asymptotics(2, 200, 3);
  EXPECT_EQ(s.predicted_variance, 0.25);
  // On the circle the chord mean is 4/pi, far from the high-dimensional limit.
  EXPECT_NEAR(s.mean, 4.0 / std::numbers::pi, 0.05);
  EXPECT_GT(std::abs(s.variance - s.predicted_variance), 0.1);
}

TEST(DistanceAsymptotics, ErrorShrinksWithDimension) {
  double err8 = 0, err512 = 0;
  for (Seed s = 1; s <= 3; ++s) {
    err8 += std::abs(check_distance_asymptotics(8, 300, s).mean - std::sqrt(2.0));
    err512 += std::abs(check_distance_asymptotics(512, 300, s).mean - std::sqrt(2.0));
  }
  EXPECT_LT(err512, err8);
}

TEST(DistanceAsymptotics, Preconditions) {
  EXPECT_THROW(check_distance_asymptotics(1, 200, 1), ConfigError);
  EXPECT_THROW(check_distance_asymptotics(8, 99, 1), ConfigError);
}

// Random projection ------------------------------------------------------------------

TEST(JlProject, PreservesSquaredNormInExpectation) {
  Rng rng = make_rng(5);
  const MatD x = gaussian_matrix(10, 32, 1.0, rng);
  const double before = x.squaredNorm();
  double after = 0;
  for (Seed s = 0; s < 100; ++s) after += jl_project(x, 32, s).squaredNorm();
  EXPECT_NEAR(after / 100.0 / before, 1.0, 0.10);
}

TEST(JlProject, LinearAndDeterministic) {
  EXPECT_EQ(jl_project(MatD::Zero(4, 16), 8, 3), MatD::Zero(4, 8));
  Rng rng = make_rng(6);
  const MatD x = gaussian_matrix(5, 16, 1.0, rng);
  EXPECT_EQ(jl_project(x, 8, 3), jl_project(x, 8, 3));
  EXPECT_NE(jl_project(x, 8, 3), jl_project(x, 8, 4));
  EXPECT_THROW(jl_project(x, 0, 3), ConfigError);
}

TEST(JlDistortion, IdentityIsExact) {
  Rng rng = make_rng(7);
  const MatD x = gaussian_matrix(12, 6, 1.0, rng);
  const auto r = jl_distortion(x, x);
  EXPECT_EQ(r.max_distortion_eps, 0.0);
  EXPECT_EQ(r.distortions.size(), 66u);
  EXPECT_EQ(r.n_points, 12);
}

TEST(JlDistortion, PairwiseRatios) {
  MatD x(3, 2), y(3, 1);
  x << 0, 0, 1, 0, 0, 2;
  y << 0, 2, 1;
  const auto r = jl_distortion(x, y);
  // Pairs (0,1), (0,2), (1,2): ratios 4/1, 1/4, 1/5.
  ASSERT_EQ(r.distortions.size(), 3u);
  EXPECT_DOUBLE_EQ(r.distortions[0], 3.0);
  EXPECT_DOUBLE_EQ(r.distortions[1], 0.75);
  EXPECT_DOUBLE_EQ(r.distortions[2], 0.8);
  EXPECT_DOUBLE_EQ(r.max_distortion_eps, 3.0);
}

TEST(JlDistortion, ScaleInvariant) {
  Rng rng = make_rng(8);
  const MatD x = gaussian_matrix(30, 64, 1.0, rng);
  const auto base = jl_distortion(x, jl_project(x, 16, 9));
  for (double c : {1e-3, 0.5, 7.0, 1e4}) {
    const auto scaled = jl_distortion(c * x, jl_project(MatD(c * x), 16, 9));
    ASSERT_EQ(scaled.distortions.size(), base.distortions.size());
    for (std::size_t i = 0; i < base.distortions.size(); ++i)
      EXPECT_NEAR(scaled.distortions[i], base.distortions[i], 1e-12);
  }
}

TEST(JlDistortion, Errors) {
  MatD x(3, 2);
  x << 1, 2, 3, 4, 1, 2;
  EXPECT_THROW(jl_distortion(x, x), DuplicatePoints);
  EXPECT_THROW(jl_distortion(x, MatD(2, 2)), ShapeMismatch);
}

TEST(JlCalibration, FrozenBoundsReproduce) {
  for (const auto& b : bounds::kJlCalibrated) {
    std::vector<double> draws;
    for (int i = 0; i < bounds::kJlCalibrationDraws; ++i)
      draws.push_back(jl_max_distortion(b.target_dim, derive_seed(bounds::kJlCalibrationSeed, unsigned(i))));
    std::sort(draws.begin(), draws.end());
    EXPECT_LE(draws.back(), b.max_distortion) << b.target_dim;
    EXPECT_GT(draws.back(), b.max_distortion - 0.01) << b.target_dim;
  }
}

TEST(JlCalibration, MedianFallsWithTargetDim) {
  std::vector<double> medians;
  for (auto k : bounds::kJlSweep) {
    std::vector<double> m;
    for (unsigned s = 0; s < 20; ++s) m.push_back(jl_max_distortion(k, derive_seed(99, s)));
    medians.push_back(median(m));
  }
  for (std::size_t i = 1; i < medians.size(); ++i) EXPECT_LT(medians[i], medians[i - 1]);
}

// Mutual information -----------------------------------------------------------------

double digamma_int(long n) {
  double v = -std::numbers::egamma;
  for (long m = 1; m < n; ++m) v += 1.0 / static_cast<double>(m);
  return v;
}

// Straightforward KSG-1: sort every neighbour by joint max-norm distance.
double naive_ksg(const MatD& x, const MatD& y, int k) {
  const auto n = x.rows();
  auto chebyshev = [](const MatD& m, Eigen::Index i, Eigen::Index j) {
    double d = 0;
    for (Eigen::Index c = 0; c < m.cols(); ++c) d = std::max(d, std::abs(m(i, c) - m(j, c)));
    return d;
  };
  double acc = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    std::vector<double> joint;
    for (Eigen::Index j = 0; j < n; ++j)
      if (j != i) joint.push_back(std::max(chebyshev(x, i, j), chebyshev(y, i, j)));
    std::sort(joint.begin(), joint.end());
    const double eps = joint[static_cast<std::size_t>(k - 1)];
    long nx = 0, ny = 0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == i) continue;
      nx += chebyshev(x, i, j) < eps;
      ny += chebyshev(y, i, j) < eps;
    }
    acc += digamma_int(nx + 1) + digamma_int(ny + 1);
  }
  return digamma_int(k) + digamma_int(n) - acc / static_cast<double>(n);
}

TEST(Ksg, MatchesNaiveOracle) {
  for (Seed s = 1; s <= 4; ++s) {
    const auto p = correlated_gaussians(60, 2, 0.6, s);
    for (int k : {1, 3, 5}) EXPECT_NEAR(ksg_mutual_information(p.x, p.y, k).value, naive_ksg(p.x, p.y, k), 1e-12);
  }
}

TEST(Ksg, IndependentNormalsNearZero) {
  for (Seed s = 1; s <= 10; ++s) {
    Rng rng = make_rng(derive_seed(s, 40u));
    const MatD x = gaussian_matrix(2000, 1, 1.0, rng);
    const MatD y = gaussian_matrix(2000, 1, 1.0, rng);
    const auto m = ksg_mutual_information(x, y, 5);
    EXPECT_LT(std::abs(m.value), 0.05) << s;
    EXPECT_EQ(m.k_neighbors, 5);
    EXPECT_EQ(m.n_samples, 2000);
  }
}

TEST(Ksg, NearDeterministicDependence) {
  Rng rng = make_rng(41);
  const MatD x = gaussian_matrix(2000, 1, 1.0, rng);
  const MatD y = x + gaussian_matrix(2000, 1, 1e-3, rng);
  EXPECT_GT(ksg_mutual_information(x, y, 5).value, 2.0);
}

TEST(Ksg, CorrelatedGaussianClosedForm) {
  for (Seed s = 1; s <= 3; ++s) {
    const auto p = correlated_gaussians(2000, 1, 0.9, derive_seed(s, 42u));
    EXPECT_NEAR(p.mutual_information, 0.8304, 1e-4);
    EXPECT_NEAR(ksg_mutual_information(p.x, p.y, 5).value, p.mutual_information, 0.1);
  }
}

TEST(Ksg, NonincreasingInNoise) {
  Rng rng = make_rng(43);
  const MatD x = gaussian_matrix(1000, 1, 1.0, rng);
  const MatD e = gaussian_matrix(1000, 1, 1.0, rng);
  double prev = std::numeric_limits<double>::infinity();
  for (double sd : {0.1, 0.3, 1.0, 3.0}) {
    const double v = ksg_mutual_information(x, MatD(x + sd * e), 5).value;
    EXPECT_LE(v, prev) << sd;
    prev = v;
  }
}

TEST(Ksg, Errors) {
  MatD x = MatD::Ones(20, 1);
  Rng rng = make_rng(44);
  const MatD y = gaussian_matrix(20, 1, 1.0, rng);
  EXPECT_THROW(ksg_mutual_information(x, y, 3), DegenerateData);
  EXPECT_THROW(ksg_mutual_information(y, y, 20), ConfigError);
  EXPECT_THROW(ksg_mutual_information(y, y, 0), ConfigError);
  EXPECT_THROW(ksg_mutual_information(y, MatD(y.topRows(10)), 3), ShapeMismatch);
}

TEST(Reparametrization, ConditioningAndOrthogonality) {
  Rng rng = make_rng(45);
  for (int i = 0; i < 20; ++i) {
    const MatD g = random_reparametrization(3, ReparamKind::general, rng);
    EXPECT_LE(condition_number(g), kMaxConditionNumber);
    const MatD q = random_reparametrization(3, ReparamKind::orthogonal, rng);
    EXPECT_LT((q.transpose() * q - MatD::Identity(3, 3)).cwiseAbs().maxCoeff(), 1e-12);
  }
  EXPECT_EQ(random_reparametrization(2, ReparamKind::identity, rng), MatD::Identity(2, 2));
}

TEST(MiInvariance, IdentityMapsGiveZeroDelta) {
  const auto p = correlated_gaussians(300, 2, 0.8, 46);
  const auto r = mi_invariance_check(p.x, p.y, 1, 5, ReparamKind::identity);
  EXPECT_EQ(r.delta, 0.0);
  EXPECT_EQ(r.before.value, r.after.value);
}

TEST(MiInvariance, CorrelatedGaussiansUnderGeneralMaps) {
  for (Seed s = 1; s <= 3; ++s) {
    const auto p = correlated_gaussians(2000, 1, 0.9, derive_seed(s, 47u));
    EXPECT_LT(mi_invariance_check(p.x, p.y, derive_seed(s, 48u)).delta, 0.1) << s;
  }
}

TEST(MiInvariance, OrthogonalNoWiderThanGeneral) {
  std::vector<double> general, orthogonal;
  for (Seed s = 1; s <= 6; ++s) {
    const auto p = correlated_gaussians(800, 2, 0.9, derive_seed(s, 49u));
    general.push_back(mi_invariance_check(p.x, p.y, derive_seed(s, 50u), 5, ReparamKind::general).delta);
    orthogonal.push_back(mi_invariance_check(p.x, p.y, derive_seed(s, 50u), 5, ReparamKind::orthogonal).delta);
  }
  EXPECT_LE(*std::max_element(orthogonal.begin(), orthogonal.end()),
            *std::max_element(general.begin(), general.end()));
  EXPECT_LE(mean(orthogonal), mean(general));
}

// Reports ------------------------------------------------------------------------------

TEST(TheoryReport, JlReportAgainstFrozenBound) {
  TheoryOptions o;
  o.seeds = 5;
  const auto c = verify_jl(o);
  EXPECT_EQ(c.name, "jl");
  EXPECT_EQ(c.report["inputs"]["target_dim"], 64);
  EXPECT_EQ(c.report["statistics"]["max_distortion_per_seed"].size(), 5u);
  EXPECT_EQ(c.report["statistics"]["sweep"].size(), 4u);
  EXPECT_DOUBLE_EQ(c.report["bounds"]["max_distortion"].get<double>(), 1.15);
  EXPECT_EQ(c.report["passed"].get<bool>(), c.passed);
  o.jl_target_dim = 48;
  EXPECT_THROW(verify_jl(o), ConfigError);
}

TEST(TheoryReport, DistanceAndMiReports) {
  TheoryOptions o;
  o.seeds = 1;
  const auto d = verify_distance_asymptotics(o);
  EXPECT_TRUE(d.passed);
  EXPECT_EQ(d.report["statistics"]["per_seed"].size(), 1u);
  EXPECT_DOUBLE_EQ(d.report["predictions"]["mean"].get<double>(), std::sqrt(2.0));
  const auto m = verify_mi(o);
  EXPECT_TRUE(m.passed);
  EXPECT_NEAR(m.report["predictions"]["mutual_information"].get<double>(), 0.8304, 1e-4);
  o.seeds = -1;
  EXPECT_THROW(verify_mi(o), ConfigError);
}

}  // namespace
}  // namespace hcr
