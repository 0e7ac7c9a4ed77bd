#include "hcr/losses.hpp"

#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

namespace hcr {
namespace {

using testing::numeric_gradient;
using testing::random_matrix;
using testing::random_unit_rows;
using testing::relative_error;

/// Symmetric distance matrix built from the strict upper triangle of `m`.
DistanceMatrix<double> symmetric_from_upper(const MatD& m) {
  MatD s = MatD::Zero(m.rows(), m.cols());
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = i + 1; j < m.cols(); ++j) s(i, j) = s(j, i) = m(i, j);
  return DistanceMatrix<double>::from_values(s);
}

MatD random_distances(Eigen::Index n, Rng& rng) {
  std::uniform_real_distribution<double> u(0.2, 1.9);
  MatD m = MatD::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j) m(i, j) = m(j, i) = u(rng);
  return m;
}

MatD strict_upper(const MatD& m) {
  MatD u = MatD::Zero(m.rows(), m.cols());
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = i + 1; j < m.cols(); ++j) u(i, j) = m(i, j);
  return u;
}

// Gaussian similarity ---------------------------------------------------------

TEST(GaussianSimilarity, DefaultKernelIsExpMinusDSquared) {
  MatD m(3, 3);
  const double r2 = std::sqrt(2.0);
  m << 0, r2, 2, r2, 0, 0.5, 2, 0.5, 0;
  auto s = gaussian_similarity(DistanceMatrix<double>::from_values(m), SimilarityConfig{});
  EXPECT_NEAR(s.values(0, 0), 1.0, 1e-15);
  EXPECT_NEAR(s.values(0, 1), std::exp(-2.0), 1e-12);
  EXPECT_NEAR(s.values(0, 1), 0.135335, 1e-6);
  EXPECT_NEAR(s.values(0, 2), 0.018316, 1e-6);
  EXPECT_NEAR(s.values(1, 2), std::exp(-0.25), 1e-12);
}

TEST(GaussianSimilarity, StrictlyDecreasingOnUnitSphereRange) {
  SimilarityConfig cfg;
  double prev = cfg(0.0);
  for (int k = 1; k <= 2000; ++k) {
    const double cur = cfg(k * 1e-3);
    EXPECT_LT(cur, prev);
    prev = cur;
  }
}

TEST(GaussianSimilarity, RejectsKernelAboveOne) {
  SimilarityConfig cfg;
  cfg.normalizer *= 1.5;
  EXPECT_THROW(cfg.validate(), ConfigError);
  SimilarityConfig shifted;
  shifted.mu = 3.0;  // peak outside [0, 2] may use a larger constant
  shifted.normalizer *= 2.0;
  EXPECT_NO_THROW(shifted.validate());
  shifted.sigma = -1;
  EXPECT_THROW(shifted.validate(), ConfigError);
}

// HCR ---------------------------------------------------------------------------

TEST(HcrLoss, HalfSimilarityGivesLn2) {
  const double d = std::sqrt(std::log(2.0));
  MatD m = MatD::Constant(5, 5, d);
  m.diagonal().setZero();
  auto dm = DistanceMatrix<double>::from_values(m);
  auto l = hcr_loss(dm, dm, HcrConfig{});
  EXPECT_NEAR(l.value, std::log(2.0), 1e-9);
}

TEST(HcrLoss, CoincidentPointsGiveClampedEntropy) {
  MatD m = MatD::Zero(4, 4);
  auto dm = DistanceMatrix<double>::from_values(m);
  HcrConfig cfg;
  auto l = hcr_loss(dm, dm, cfg);
  const double eps = cfg.clamp_eps;
  EXPECT_NEAR(l.value, -(1 - eps) * std::log(1 - eps) - eps * std::log(eps), 1e-15);
  EXPECT_LT(l.value, 2e-6);
  EXPECT_EQ(l.grad("d_g").cwiseAbs().maxCoeff(), 0.0);
}

TEST(HcrLoss, SinglePairScalarEvaluation) {
  MatD g(2, 2), h(2, 2);
  const double dg = std::sqrt(-std::log(0.8));
  const double dh = std::sqrt(-std::log(0.2));
  g << 0, dg, dg, 0;
  h << 0, dh, dh, 0;
  auto l = hcr_loss(DistanceMatrix<double>::from_values(g), DistanceMatrix<double>::from_values(h), HcrConfig{});
  EXPECT_NEAR(l.value, -0.8 * std::log(0.2) - 0.2 * std::log(0.8), 1e-12);
  EXPECT_NEAR(l.value, 1.33217, 1e-5);
}

TEST(HcrLoss, ShapeMismatch) {
  auto a = DistanceMatrix<double>::from_values(MatD::Zero(3, 3));
  auto b = DistanceMatrix<double>::from_values(MatD::Zero(4, 4));
  EXPECT_THROW(hcr_loss(a, b, HcrConfig{}), ShapeMismatch);
}

TEST(HcrLoss, GradientFlowControlsTargetGradient) {
  Rng rng(1);
  auto g = DistanceMatrix<double>::from_values(random_distances(6, rng));
  auto h = DistanceMatrix<double>::from_values(random_distances(6, rng));
  HcrConfig cfg;
  EXPECT_FALSE(hcr_loss(g, h, cfg).has("d_h"));
  cfg.gradient_flow = GradientFlow::both;
  auto both = hcr_loss(g, h, cfg);
  ASSERT_TRUE(both.has("d_h"));
  EXPECT_GT(both.grad("d_h").cwiseAbs().maxCoeff(), 0.0);
}

TEST(HcrLoss, GradientsMatchFiniteDifferences) {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const MatD g = random_distances(5, rng);
    const MatD h = random_distances(5, rng);
    HcrConfig cfg;
    cfg.gradient_flow = GradientFlow::both;
    auto l = hcr_loss(symmetric_from_upper(g), symmetric_from_upper(h), cfg);
    auto fg = [&](const MatD& x) { return hcr_loss(symmetric_from_upper(x), symmetric_from_upper(h), cfg).value; };
    auto fh = [&](const MatD& x) { return hcr_loss(symmetric_from_upper(g), symmetric_from_upper(x), cfg).value; };
    EXPECT_LT(relative_error(l.grad("d_g"), strict_upper(numeric_gradient(fg, g))), 1e-5);
    EXPECT_LT(relative_error(l.grad("d_h"), strict_upper(numeric_gradient(fh, h))), 1e-5);
  }
}

TEST(HcrLoss, IdenticalInputsGiveMeanBinaryEntropy) {
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const MatD m = random_distances(7, rng);
    auto d = DistanceMatrix<double>::from_values(m);
    auto l = hcr_loss(d, d, HcrConfig{});
    double acc = 0;
    int pairs = 0;
    for (int i = 0; i < 7; ++i)
      for (int j = i + 1; j < 7; ++j, ++pairs) {
        const double p = std::exp(-m(i, j) * m(i, j));
        acc += -p * std::log(p) - (1 - p) * std::log(1 - p);
        // the BCE slope log((1-p)/p) only vanishes at p = 1/2
        if (std::abs(p - 0.5) > 1e-3) EXPECT_NE(l.grad("d_g")(i, j), 0.0);
      }
    EXPECT_NEAR(l.value, acc / pairs, 1e-12);
  }
}

TEST(HcrLoss, InvariantUnderSimultaneousPermutation) {
  Rng rng(4);
  Rng shuffle_rng(5);
  const MatD g = random_distances(8, rng);
  const MatD h = random_distances(8, rng);
  std::vector<int> perm(8);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), shuffle_rng);
  MatD pg(8, 8), ph(8, 8);
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 8; ++j) {
      pg(i, j) = g(perm[i], perm[j]);
      ph(i, j) = h(perm[i], perm[j]);
    }
  const double a = hcr_loss(symmetric_from_upper(g), symmetric_from_upper(h), HcrConfig{}).value;
  const double b = hcr_loss(DistanceMatrix<double>::from_values(pg), DistanceMatrix<double>::from_values(ph),
                            HcrConfig{}).value;
  EXPECT_NEAR(a, b, 1e-14);
}

TEST(BinaryCrossEntropy, MinimizedAtTarget) {
  for (int k = 1; k <= 20; ++k) {
    const double p = k / 21.0;
    double best_q = 0;
    double best = INFINITY;
    for (int s = 1; s < 1000; ++s) {
      const double q = s * 1e-3;
      const double v = binary_cross_entropy(p, q);
      if (v < best) {
        best = v;
        best_q = q;
      }
    }
    EXPECT_LE(std::abs(best_q - p), 1e-3) << "p=" << p;
  }
}

// Cross entropy -----------------------------------------------------------------

TEST(CrossEntropy, UniformLogits) {
  MatD logits = MatD::Constant(3, 4, 0.7);
  auto l = cross_entropy(logits, {0, 1, 3}, {true, true, true});
  EXPECT_NEAR(l.value, std::log(4.0), 1e-14);
}

TEST(CrossEntropy, VanishesWithGrowingMargin) {
  double prev = INFINITY;
  for (double margin : {1.0, 5.0, 10.0, 20.0, 40.0}) {
    MatD logits = MatD::Zero(2, 3);
    logits(0, 1) = margin;
    logits(1, 2) = margin;
    const double v = cross_entropy(logits, {1, 2}, {true, true}).value;
    EXPECT_LT(v, prev);
    prev = v;
  }
  EXPECT_LT(prev, 1e-16);
}

TEST(CrossEntropy, MatchesLogSumExpHandComputation) {
  Rng rng(6);
  MatD logits = random_matrix(3, 5, rng, 2.0);
  const Labels labels{4, 0, 2};
  const Mask mask{true, false, true};
  double expected = 0;
  for (int i : {0, 2}) {
    double z = 0;
    for (int c = 0; c < 5; ++c) z += std::exp(logits(i, c));
    expected += std::log(z) - logits(i, labels[i]);
  }
  expected /= 2;
  auto l = cross_entropy(logits, labels, mask);
  EXPECT_NEAR(l.value, expected, 1e-10);
  EXPECT_EQ(l.grad("logits").row(1).cwiseAbs().maxCoeff(), 0.0);
  auto f = [&](const MatD& x) { return cross_entropy(x, labels, mask).value; };
  EXPECT_LT(relative_error(l.grad("logits"), numeric_gradient(f, logits)), 1e-7);
}

TEST(CrossEntropy, EmptyMaskThrows) {
  EXPECT_THROW(cross_entropy(MatD(MatD::Zero(2, 3)), {0, 1}, {false, false}), EmptyBatch);
}

// InfoNCE -----------------------------------------------------------------------

TEST(InfoNce, EqualScoresGiveLogBatch) {
  for (Eigen::Index b : {2, 5, 16}) {
    auto l = info_nce_from_scores(MatD(MatD::Constant(b, b, 0.3)));
    EXPECT_NEAR(l.value, std::log(static_cast<double>(b)), 1e-13);
  }
}

TEST(InfoNce, SeparatedScoresNearZero) {
  const double tau = 0.07;
  for (Eigen::Index b : {2, 8, 64}) {
    MatD scores = MatD::Constant(b, b, -1.0 / tau);
    scores.diagonal().setConstant(1.0 / tau);
    auto l = info_nce_from_scores(scores);
    EXPECT_LT(l.value, 1e-8) << "B=" << b;
    EXPECT_GE(l.value, 0.0);
  }
}

TEST(InfoNce, TwoRowsMatchTwoClassSoftmax) {
  Rng rng(7);
  MatD q = random_unit_rows(2, 3, rng);
  MatD k = random_unit_rows(2, 3, rng);
  const double tau = 0.5;
  double expected = 0;
  for (int i = 0; i < 2; ++i) {
    const double s0 = q.row(i).dot(k.row(0)) / tau;
    const double s1 = q.row(i).dot(k.row(1)) / tau;
    const double own = i == 0 ? s0 : s1;
    expected += -std::log(std::exp(own) / (std::exp(s0) + std::exp(s1)));
  }
  expected /= 2;
  EXPECT_NEAR(info_nce(q, k, tau).value, expected, 1e-10);
}

TEST(InfoNce, GradientsMatchFiniteDifferences) {
  Rng rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    MatD q = random_unit_rows(5, 4, rng);
    MatD k = random_unit_rows(5, 4, rng);
    const double tau = 0.3;
    auto l = info_nce(q, k, tau);
    auto fq = [&](const MatD& x) { return info_nce(x, k, tau).value; };
    auto fk = [&](const MatD& x) { return info_nce(q, x, tau).value; };
    EXPECT_LT(relative_error(l.grad("queries"), numeric_gradient(fq, q)), 1e-6);
    EXPECT_LT(relative_error(l.grad("keys"), numeric_gradient(fk, k)), 1e-6);
  }
}

TEST(InfoNce, ShapeMismatchThrows) {
  EXPECT_THROW(info_nce(MatD(MatD::Ones(3, 2)), MatD(MatD::Ones(4, 2)), 0.1), ShapeMismatch);
}

// Pseudo-group contrast -----------------------------------------------------------

TEST(PgcLoss, DistinctLabelsReduceToInfoNce) {
  Rng rng(9);
  MatD q = random_unit_rows(6, 5, rng);
  MatD k = random_unit_rows(6, 5, rng);
  const Labels distinct{0, 1, 2, 3, 4, 5};
  auto a = pgc_loss(q, k, distinct, 0.07);
  auto b = info_nce(q, k, 0.07);
  EXPECT_NEAR(a.value, b.value, 1e-12);
  EXPECT_LT((a.grad("queries") - b.grad("queries")).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(PgcLoss, IdenticalLabelsHaveNoNegatives) {
  MatD q = MatD::Identity(3, 3);
  EXPECT_THROW(pgc_loss(q, q, {2, 2, 2}, 0.07), NoNegatives);
}

TEST(PgcLoss, MatchesBruteForceEnumeration) {
  Rng rng(10);
  MatD q = random_unit_rows(4, 3, rng);
  MatD k = random_unit_rows(4, 3, rng);
  const Labels pl{0, 1, 0, 1};
  const double tau = 0.2;
  // groups {0, 2} and {1, 3}: positives share the query's group, negatives are the other group
  const int positives[4][2] = {{0, 2}, {1, 3}, {0, 2}, {1, 3}};
  const int negatives[4][2] = {{1, 3}, {0, 2}, {1, 3}, {0, 2}};
  double expected = 0;
  for (int i = 0; i < 4; ++i) {
    const double neg = std::exp(q.row(i).dot(k.row(negatives[i][0])) / tau) +
                       std::exp(q.row(i).dot(k.row(negatives[i][1])) / tau);
    double per_query = 0;
    for (int p : positives[i]) {
      const double e = std::exp(q.row(i).dot(k.row(p)) / tau);
      per_query += -std::log(e / (e + neg));
    }
    expected += per_query / 2;
  }
  expected /= 4;
  auto l = pgc_loss(q, k, pl, tau);
  EXPECT_NEAR(l.value, expected, 1e-10);

  auto fq = [&](const MatD& x) { return pgc_loss(x, k, pl, tau).value; };
  auto fk = [&](const MatD& x) { return pgc_loss(q, x, pl, tau).value; };
  EXPECT_LT(relative_error(l.grad("queries"), numeric_gradient(fq, q)), 1e-6);
  EXPECT_LT(relative_error(l.grad("keys"), numeric_gradient(fk, k)), 1e-6);
}

// Composite ---------------------------------------------------------------------

struct Batch {
  MatD logits, queries, keys;
  Labels labels, pseudo;
  Mask mask;
  CompositeInputs<double> inputs() const { return {logits, queries, keys, labels, mask, pseudo}; }
};

Batch random_batch(Eigen::Index b, Rng& rng) {
  Batch out;
  out.logits = random_matrix(b, 4, rng);
  out.queries = random_unit_rows(b, 5, rng);
  out.keys = random_unit_rows(b, 5, rng);
  std::uniform_int_distribution<int> cls(0, 3);
  for (Eigen::Index i = 0; i < b; ++i) {
    out.labels.push_back(cls(rng));
    out.pseudo.push_back(static_cast<int>(i % 3));
    out.mask.push_back(i % 2 == 0);
  }
  return out;
}

TEST(CompositeLoss, AblationReducesToCrossEntropy) {
  Rng rng(11);
  Batch b = random_batch(8, rng);
  CompositeConfig cfg;
  cfg.hcr.weight = 0;
  cfg.lambda_u = 0;
  auto c = composite_loss(b.inputs(), cfg);
  auto ce = cross_entropy(b.logits, b.labels, b.mask);
  EXPECT_EQ(c.value, ce.value);
  EXPECT_EQ(c.grad("logits"), ce.grad("logits"));
}

TEST(CompositeLoss, SumOfComponents) {
  Rng rng(12);
  Batch b = random_batch(8, rng);
  CompositeConfig cfg;
  auto c = composite_loss(b.inputs(), cfg);
  const double ce = cross_entropy(b.logits, b.labels, b.mask).value;
  const double nce = info_nce(b.queries, b.keys, cfg.tau).value;
  const auto g = pairwise_distances(project_to_sphere(b.logits));
  const auto h = pairwise_distances_raw(b.queries);
  const double reg = hcr_loss(g, h, cfg.hcr).value;
  EXPECT_NEAR(c.value, ce + nce + reg, 1e-12);
  EXPECT_EQ(c.loss_s, ce);
  EXPECT_EQ(c.loss_u, nce);
  EXPECT_EQ(c.loss_hcr, reg);
}

TEST(CompositeLoss, DisabledAndZeroWeightHcrAreIdentical) {
  Rng rng(13);
  Batch b = random_batch(8, rng);
  CompositeConfig zero;
  zero.hcr.weight = 0;
  CompositeConfig off;
  off.hcr.enabled = false;
  auto a = composite_loss(b.inputs(), zero);
  auto c = composite_loss(b.inputs(), off);
  EXPECT_EQ(a.value, c.value);
  EXPECT_EQ(a.loss_hcr, 0.0);
  for (const auto& name : {"logits", "queries", "keys"}) EXPECT_EQ(a.grad(name), c.grad(name));
}

TEST(CompositeLoss, GradientsMatchFiniteDifferences) {
  Rng rng(14);
  for (auto kind : {UnsupervisedKind::info_nce, UnsupervisedKind::pgc}) {
    for (auto flow : {GradientFlow::classifier_only, GradientFlow::both}) {
      Batch b = random_batch(8, rng);
      CompositeConfig cfg;
      cfg.unsupervised = kind;
      cfg.lambda_u = 0.7;
      cfg.tau = 0.5;
      cfg.hcr.gradient_flow = flow;
      cfg.hcr.weight = 1.3;
      auto c = composite_loss(b.inputs(), cfg);
      auto at = [&](const MatD& lg, const MatD& qq, const MatD& kk) {
        return composite_loss(CompositeInputs<double>{lg, qq, kk, b.labels, b.mask, b.pseudo}, cfg).value;
      };
      auto fl = [&](const MatD& x) { return at(x, b.queries, b.keys); };
      auto fk = [&](const MatD& x) { return at(b.logits, b.queries, x); };
      EXPECT_LT(relative_error(c.grad("logits"), numeric_gradient(fl, b.logits)), 1e-5);
      EXPECT_LT(relative_error(c.grad("keys"), numeric_gradient(fk, b.keys)), 1e-5);
      if (flow == GradientFlow::both) {
        auto fq = [&](const MatD& x) { return at(b.logits, x, b.keys); };
        EXPECT_LT(relative_error(c.grad("queries"), numeric_gradient(fq, b.queries)), 1e-5);
      }
    }
  }
}

}  // namespace
}  // namespace hcr
