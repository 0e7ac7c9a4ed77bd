#pragma once

// Seeded sweeps over the theory checks with frozen pass/fail bounds. Each
// sweep produces a JSON report with its inputs, per-seed statistics,
// predictions and verdict.

#include "hcr/theory.hpp"

#include <json.hpp>

#include <array>
#include <string>

namespace hcr {

using Json = nlohmann::ordered_json;

struct TheoryCheck {
  std::string name;
  bool passed = false;
  Json report;
};

struct TheoryOptions {
  /// 0 selects each check's default seed count.
  int seeds = 0;
  Seed base_seed = 0;
  Eigen::Index jl_target_dim = 64;
};

namespace bounds {

inline constexpr Eigen::Index kDistanceDim = 512;
inline constexpr Eigen::Index kDistancePoints = 2000;
inline constexpr double kDistanceMeanTol = 0.01;
inline constexpr double kDistanceVarianceRelTol = 0.25;
inline constexpr int kDistanceSeeds = 3;

inline constexpr Eigen::Index kJlPoints = 100;
inline constexpr Eigen::Index kJlSourceDim = 256;
inline constexpr int kJlSeeds = 20;
inline constexpr double kJlCoverage = 0.95;
inline constexpr double kJlTargetDistortion = 0.5;
inline constexpr std::array<Eigen::Index, 4> kJlSweep = {16, 32, 64, 128};

/// Max-distortion bounds frozen from the largest of 200 calibration draws
/// (seeds derive_seed(0xCA1B, i), i < 200; disjoint from the check seeds),
/// rounded up to 0.01. Standard Gaussian points, 100 x 256. A single seed then
/// exceeds its bound with probability about 1/201.
struct JlBound {
  Eigen::Index target_dim;
  double max_distortion;
};
inline constexpr std::array<JlBound, 4> kJlCalibrated = {{{16, 3.02}, {32, 1.68}, {64, 1.15}, {128, 0.71}}};
inline constexpr Seed kJlCalibrationSeed = 0xCA1B;
inline constexpr int kJlCalibrationDraws = 200;

inline constexpr Eigen::Index kMiSamples = 2000;
inline constexpr int kMiNeighbors = 5;
inline constexpr double kMiRho = 0.9;
inline constexpr double kMiTol = 0.1;
inline constexpr double kMiDeltaTol = 0.1;
inline constexpr int kMiSeeds = 5;

inline double jl_bound(Eigen::Index target_dim) {
  for (const auto& b : kJlCalibrated)
    if (b.target_dim == target_dim) return b.max_distortion;
  throw ConfigError("no calibrated distortion bound for target dim " + std::to_string(target_dim) +
                    " (calibrated: 16, 32, 64, 128)");
}

}  // namespace bounds

namespace detail {

inline int seeds_or(const TheoryOptions& o, int fallback) {
  if (o.seeds < 0) throw ConfigError("seeds must be >= 0");
  return o.seeds > 0 ? o.seeds : fallback;
}

inline Json summary(const std::vector<double>& v) {
  return Json{{"mean", mean(v)},
              {"median", median(v)},
              {"min", *std::min_element(v.begin(), v.end())},
              {"max", *std::max_element(v.begin(), v.end())}};
}

}  // namespace detail

inline TheoryCheck verify_distance_asymptotics(const TheoryOptions& o) {
  using namespace bounds;
  const int seeds = detail::seeds_or(o, kDistanceSeeds);
  Json per_seed = Json::array();
  std::vector<double> means, variances;
  bool ok = true;
  DistanceStats s;
  for (int i = 0; i < seeds; ++i) {
    s = check_distance_asymptotics(kDistanceDim, kDistancePoints, derive_seed(o.base_seed, 10u, unsigned(i)));
    const bool mean_ok = std::abs(s.mean - s.predicted_mean) <= kDistanceMeanTol;
    const bool var_ok = std::abs(s.variance - s.predicted_variance) <= kDistanceVarianceRelTol * s.predicted_variance;
    ok = ok && mean_ok && var_ok;
    means.push_back(s.mean);
    variances.push_back(s.variance);
    per_seed.push_back({{"seed_index", i}, {"mean", s.mean}, {"variance", s.variance}, {"passed", mean_ok && var_ok}});
  }
  TheoryCheck c{"distance", ok, {}};
  c.report = Json{{"check", c.name},
                  {"inputs", {{"dim", kDistanceDim}, {"n_points", kDistancePoints}, {"seeds", seeds},
                              {"base_seed", o.base_seed}}},
                  {"predictions", {{"mean", s.predicted_mean}, {"variance", s.predicted_variance}}},
                  {"bounds", {{"mean_abs_tol", kDistanceMeanTol}, {"variance_rel_tol", kDistanceVarianceRelTol}}},
                  {"statistics", {{"per_seed", per_seed}, {"mean", detail::summary(means)},
                                  {"variance", detail::summary(variances)}}},
                  {"passed", ok}};
  return c;
}

inline double jl_max_distortion(Eigen::Index target_dim, Seed seed) {
  Rng rng = make_rng(derive_seed(seed, 1u));
  const MatD x = gaussian_matrix(bounds::kJlPoints, bounds::kJlSourceDim, 1.0, rng);
  return jl_distortion(x, jl_project(x, target_dim, derive_seed(seed, 2u))).max_distortion_eps;
}

inline TheoryCheck verify_jl(const TheoryOptions& o) {
  using namespace bounds;
  const int seeds = detail::seeds_or(o, kJlSeeds);
  const double bound = jl_bound(o.jl_target_dim);

  std::vector<double> target_max;
  for (int i = 0; i < seeds; ++i)
    target_max.push_back(jl_max_distortion(o.jl_target_dim, derive_seed(o.base_seed, 20u, unsigned(i))));
  const auto within = std::count_if(target_max.begin(), target_max.end(), [&](double e) { return e <= bound; });
  const double coverage = static_cast<double>(within) / seeds;

  Json sweep = Json::array();
  std::vector<double> medians;
  for (auto k : kJlSweep) {
    std::vector<double> m;
    for (int i = 0; i < seeds; ++i) m.push_back(jl_max_distortion(k, derive_seed(o.base_seed, 20u, unsigned(i))));
    medians.push_back(median(m));
    sweep.push_back({{"target_dim", k}, {"median_max_distortion", medians.back()}});
  }
  bool decreasing = true;
  for (std::size_t i = 1; i < medians.size(); ++i) decreasing = decreasing && medians[i] < medians[i - 1];

  const bool ok = coverage >= kJlCoverage && decreasing;
  TheoryCheck c{"jl", ok, {}};
  c.report = Json{{"check", c.name},
                  {"inputs", {{"n_points", kJlPoints}, {"source_dim", kJlSourceDim}, {"target_dim", o.jl_target_dim},
                              {"seeds", seeds}, {"base_seed", o.base_seed}}},
                  {"predictions", {{"median_decreasing_in_target_dim", true}}},
                  {"bounds", {{"max_distortion", bound}, {"required_coverage", kJlCoverage},
                              {"calibration", {{"seed", kJlCalibrationSeed}, {"draws", kJlCalibrationDraws},
                                               {"statistic", "max"}}},
                              {"target_max_distortion", kJlTargetDistortion},
                              {"target_met", bound <= kJlTargetDistortion}}},
                  {"statistics", {{"max_distortion_per_seed", target_max}, {"max_distortion", detail::summary(target_max)},
                                  {"coverage", coverage}, {"sweep", sweep}, {"median_strictly_decreasing", decreasing}}},
                  {"passed", ok}};
  return c;
}

inline TheoryCheck verify_mi(const TheoryOptions& o) {
  using namespace bounds;
  const int seeds = detail::seeds_or(o, kMiSeeds);
  Json per_seed = Json::array();
  std::vector<double> estimates, deltas;
  double truth = 0;
  bool ok = true;
  for (int i = 0; i < seeds; ++i) {
    const auto pair = correlated_gaussians(kMiSamples, 1, kMiRho, derive_seed(o.base_seed, 30u, unsigned(i)));
    truth = pair.mutual_information;
    const auto inv = mi_invariance_check(pair.x, pair.y, derive_seed(o.base_seed, 31u, unsigned(i)), kMiNeighbors);
    const bool est_ok = std::abs(inv.before.value - truth) < kMiTol;
    const bool delta_ok = inv.delta < kMiDeltaTol;
    ok = ok && est_ok && delta_ok;
    estimates.push_back(inv.before.value);
    deltas.push_back(inv.delta);
    per_seed.push_back({{"seed_index", i}, {"estimate", inv.before.value}, {"after_reparametrization", inv.after.value},
                        {"delta", inv.delta}, {"passed", est_ok && delta_ok}});
  }
  TheoryCheck c{"mi", ok, {}};
  c.report = Json{{"check", c.name},
                  {"inputs", {{"n_samples", kMiSamples}, {"k_neighbors", kMiNeighbors}, {"rho", kMiRho},
                              {"dim", 1}, {"max_condition_number", kMaxConditionNumber}, {"seeds", seeds},
                              {"base_seed", o.base_seed}}},
                  {"predictions", {{"mutual_information", truth}, {"delta", 0.0}}},
                  {"bounds", {{"estimate_abs_tol", kMiTol}, {"delta_tol", kMiDeltaTol}}},
                  {"statistics", {{"per_seed", per_seed}, {"estimate", detail::summary(estimates)},
                                  {"delta", detail::summary(deltas)}}},
                  {"passed", ok}};
  return c;
}

}  // namespace hcr
