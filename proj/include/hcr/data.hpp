#pragma once

// Synthetic datasets, CSV ingestion/export, two-view augmentation,
// stratified label masking and label-noise corruption.

#include "hcr/common.hpp"
#include "hcr/detail/format.hpp"
#include "hcr/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>

namespace hcr {

struct LabeledDataset {
  MatD features;
  Labels true_labels;
  Labels observed_labels;
  Mask labeled_mask;
  int num_classes = 0;
  /// Original label value of each dense class index (identity for generated data).
  std::vector<long> label_values;

  Eigen::Index size() const { return features.rows(); }
  Eigen::Index dim() const { return features.cols(); }

  std::size_t labeled_count() const {
    return static_cast<std::size_t>(std::count(labeled_mask.begin(), labeled_mask.end(), true));
  }

  void validate() const {
    const auto n = static_cast<std::size_t>(features.rows());
    if (true_labels.size() != n || observed_labels.size() != n || labeled_mask.size() != n)
      throw ShapeMismatch("LabeledDataset: features and label lists are not aligned");
    for (std::size_t i = 0; i < n; ++i)
      if (true_labels[i] < 0 || true_labels[i] >= num_classes || observed_labels[i] < 0 ||
          observed_labels[i] >= num_classes)
        throw ConfigError("LabeledDataset: label out of range at row " + std::to_string(i));
  }

  LabeledDataset subset(const std::vector<Eigen::Index>& rows) const {
    LabeledDataset out;
    out.features.resize(static_cast<Eigen::Index>(rows.size()), dim());
    out.num_classes = num_classes;
    out.label_values = label_values;
    for (std::size_t k = 0; k < rows.size(); ++k) {
      const auto i = rows[k];
      out.features.row(static_cast<Eigen::Index>(k)) = features.row(i);
      out.true_labels.push_back(true_labels[static_cast<std::size_t>(i)]);
      out.observed_labels.push_back(observed_labels[static_cast<std::size_t>(i)]);
      out.labeled_mask.push_back(labeled_mask[static_cast<std::size_t>(i)]);
    }
    return out;
  }
};

namespace detail {

inline LabeledDataset fully_labeled(MatD features, Labels labels, int num_classes) {
  LabeledDataset ds;
  ds.features = std::move(features);
  ds.true_labels = labels;
  ds.observed_labels = std::move(labels);
  ds.labeled_mask.assign(ds.true_labels.size(), true);
  ds.num_classes = num_classes;
  ds.label_values.resize(static_cast<std::size_t>(num_classes));
  std::iota(ds.label_values.begin(), ds.label_values.end(), 0L);
  return ds;
}

/// Row indices grouped by label.
inline std::vector<std::vector<Eigen::Index>> rows_by_class(const Labels& labels, int num_classes) {
  std::vector<std::vector<Eigen::Index>> out(static_cast<std::size_t>(num_classes));
  for (std::size_t i = 0; i < labels.size(); ++i) out[static_cast<std::size_t>(labels[i])].push_back(static_cast<Eigen::Index>(i));
  return out;
}

}  // namespace detail

// Generators --------------------------------------------------------------------

/// Class centers uniform on the unit sphere; each sample is
/// normalize(center + N(0, I / concentration)). Rows are grouped by class.
inline LabeledDataset make_sphere_blobs(int num_classes, Eigen::Index dim, Eigen::Index per_class,
                                        double concentration, Seed seed) {
  if (num_classes < 2 || dim < 2) throw ConfigError("make_sphere_blobs: need num_classes >= 2 and dim >= 2");
  if (!(concentration > 0)) throw ConfigError("make_sphere_blobs: concentration must be > 0");
  if (per_class < 1) throw ConfigError("make_sphere_blobs: per_class must be >= 1");
  const MatD centers = sample_uniform_sphere(num_classes, dim, derive_seed(seed, 1u)).values();
  Rng rng = make_rng(derive_seed(seed, 2u));
  const double sd = std::isinf(concentration) ? 0.0 : 1.0 / std::sqrt(concentration);
  std::normal_distribution<double> normal(0.0, 1.0);

  MatD x(num_classes * per_class, dim);
  Labels y;
  y.reserve(static_cast<std::size_t>(x.rows()));
  for (int c = 0; c < num_classes; ++c) {
    for (Eigen::Index k = 0; k < per_class; ++k) {
      const Eigen::Index i = c * per_class + k;
      for (Eigen::Index j = 0; j < dim; ++j) x(i, j) = centers(c, j) + sd * normal(rng);
      x.row(i).normalize();
      y.push_back(c);
    }
  }
  return detail::fully_labeled(std::move(x), std::move(y), num_classes);
}

/// Class c lives on the sphere of radius 1 + 0.5 c, with N(0, 0.05^2) jitter per coordinate.
inline LabeledDataset make_shell_dataset(int num_classes, Eigen::Index dim, Eigen::Index per_class, Seed seed) {
  if (num_classes < 2 || dim < 2) throw ConfigError("make_shell_dataset: need num_classes >= 2 and dim >= 2");
  if (per_class < 1) throw ConfigError("make_shell_dataset: per_class must be >= 1");
  const MatD directions = sample_uniform_sphere(num_classes * per_class, dim, derive_seed(seed, 1u)).values();
  Rng rng = make_rng(derive_seed(seed, 2u));
  std::normal_distribution<double> jitter(0.0, 0.05);
  MatD x(num_classes * per_class, dim);
  Labels y;
  for (int c = 0; c < num_classes; ++c) {
    const double radius = 1.0 + 0.5 * c;
    for (Eigen::Index k = 0; k < per_class; ++k) {
      const Eigen::Index i = c * per_class + k;
      for (Eigen::Index j = 0; j < dim; ++j) x(i, j) = radius * directions(i, j) + jitter(rng);
      y.push_back(c);
    }
  }
  return detail::fully_labeled(std::move(x), std::move(y), num_classes);
}

/// Stratified split (by true label); returns {train, test}.
inline std::pair<LabeledDataset, LabeledDataset> stratified_split(const LabeledDataset& ds, double test_fraction,
                                                                  Seed seed) {
  if (!(test_fraction > 0 && test_fraction < 1)) throw ConfigError("stratified_split: fraction must lie in (0, 1)");
  Rng rng = make_rng(seed);
  std::vector<Eigen::Index> train, test;
  for (auto& rows : detail::rows_by_class(ds.true_labels, ds.num_classes)) {
    std::shuffle(rows.begin(), rows.end(), rng);
    const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(rows.size())));
    test.insert(test.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(n_test));
    train.insert(train.end(), rows.begin() + static_cast<std::ptrdiff_t>(n_test), rows.end());
  }
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  return {ds.subset(train), ds.subset(test)};
}

// CSV -----------------------------------------------------------------------

inline constexpr const char* kTrueLabelColumn = "true_label";
inline constexpr const char* kObservedLabelColumn = "observed_label";
inline constexpr const char* kLabeledColumn = "labeled";

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  for (auto& c : out) {
    const auto b = c.find_first_not_of(" \t\r");
    const auto e = c.find_last_not_of(" \t\r");
    c = b == std::string::npos ? std::string() : c.substr(b, e - b + 1);
  }
  return out;
}

inline double parse_real(const std::string& cell, long row, long col) {
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(cell, &used);
  } catch (const std::exception&) {
    throw ParseError("non-numeric cell '" + cell + "'", row, col);
  }
  if (used != cell.size()) throw ParseError("non-numeric cell '" + cell + "'", row, col);
  return v;
}

inline long parse_integer(const std::string& cell, long row, long col) {
  std::size_t used = 0;
  long v = 0;
  try {
    v = std::stol(cell, &used);
  } catch (const std::exception&) {
    throw ParseError("non-integer label '" + cell + "'", row, col);
  }
  if (used != cell.size()) throw ParseError("non-integer label '" + cell + "'", row, col);
  return v;
}

}  // namespace detail

/// Parse a headed CSV. Every column except the label column and the reserved
/// `true_label`, `observed_label`, `labeled` columns is a float64 feature.
/// Labels are re-indexed densely in ascending order of their original values.
/// Rows and columns in errors are 1-based; the header is row 1.
inline LabeledDataset read_csv_dataset(std::istream& is, const std::string& label_column = "label") {
  std::string line;
  if (!std::getline(is, line) || line.find_first_not_of(" \t\r") == std::string::npos)
    throw EmptyFile("dataset CSV is empty");
  const auto header = detail::split_csv_line(line);

  long label_col = -1, true_col = -1, labeled_col = -1;
  std::vector<long> feature_cols;
  for (std::size_t c = 0; c < header.size(); ++c) {
    const auto col = static_cast<long>(c);
    if (header[c] == label_column) label_col = col;
    else if (header[c] == kTrueLabelColumn) true_col = col;
    else if (header[c] == kLabeledColumn) labeled_col = col;
    else if (header[c] == kObservedLabelColumn) continue;
    else feature_cols.push_back(col);
  }
  if (label_col < 0) throw ParseError("label column '" + label_column + "' not found in header", 1, 0);
  if (feature_cols.empty()) throw ParseError("no feature columns", 1, 0);

  std::vector<std::vector<double>> rows;
  std::vector<long> raw_observed, raw_true;
  Mask mask;
  long row = 1;
  while (std::getline(is, line)) {
    ++row;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != header.size())
      throw ParseError("expected " + std::to_string(header.size()) + " cells, found " + std::to_string(cells.size()),
                       row, static_cast<long>(cells.size()) + 1);
    std::vector<double> feats;
    feats.reserve(feature_cols.size());
    for (long c : feature_cols) feats.push_back(detail::parse_real(cells[static_cast<std::size_t>(c)], row, c + 1));
    rows.push_back(std::move(feats));
    raw_observed.push_back(detail::parse_integer(cells[static_cast<std::size_t>(label_col)], row, label_col + 1));
    raw_true.push_back(true_col >= 0 ? detail::parse_integer(cells[static_cast<std::size_t>(true_col)], row, true_col + 1)
                                     : raw_observed.back());
    if (labeled_col >= 0) {
      const long flag = detail::parse_integer(cells[static_cast<std::size_t>(labeled_col)], row, labeled_col + 1);
      if (flag != 0 && flag != 1) throw ParseError("labeled flag must be 0 or 1", row, labeled_col + 1);
      mask.push_back(flag == 1);
    } else {
      mask.push_back(true);
    }
  }
  if (rows.empty()) throw EmptyFile("dataset CSV has a header but no rows");

  std::vector<long> values(raw_observed);
  values.insert(values.end(), raw_true.begin(), raw_true.end());
  std::sort(values.begin(), values.end());
  values.erase(std::unique(values.begin(), values.end()), values.end());
  std::map<long, int> index;
  for (std::size_t k = 0; k < values.size(); ++k) index[values[k]] = static_cast<int>(k);

  LabeledDataset ds;
  ds.features.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(feature_cols.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < feature_cols.size(); ++j)
      ds.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  for (std::size_t i = 0; i < rows.size(); ++i) {
    ds.observed_labels.push_back(index[raw_observed[i]]);
    ds.true_labels.push_back(index[raw_true[i]]);
  }
  ds.labeled_mask = std::move(mask);
  ds.num_classes = static_cast<int>(values.size());
  ds.label_values = std::move(values);
  return ds;
}

inline LabeledDataset load_csv_dataset(const std::string& path, const std::string& label_column = "label") {
  std::ifstream is(path);
  if (!is) throw Error("cannot open dataset: " + path);
  try {
    return read_csv_dataset(is, label_column);
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.reason, e.row, e.column);
  } catch (const EmptyFile& e) {
    throw EmptyFile(path + ": " + e.what());
  }
}

/// Re-index `ds` onto the class values of `reference` (e.g. a test file whose
/// label set is a subset of the training file's). Unknown values raise ConfigError.
inline LabeledDataset align_labels(const LabeledDataset& ds, const std::vector<long>& reference) {
  auto value_of = [&](int k) { return ds.label_values.empty() ? static_cast<long>(k) : ds.label_values[k]; };
  auto remap = [&](int k) {
    const auto it = std::lower_bound(reference.begin(), reference.end(), value_of(k));
    if (it == reference.end() || *it != value_of(k))
      throw ConfigError("label value " + std::to_string(value_of(k)) + " does not occur in the reference label set");
    return static_cast<int>(it - reference.begin());
  };
  LabeledDataset out = ds;
  for (auto& y : out.true_labels) y = remap(y);
  for (auto& y : out.observed_labels) y = remap(y);
  out.num_classes = static_cast<int>(reference.size());
  out.label_values = reference;
  return out;
}

/// Features as x0..x{d-1}, then `label` (observed), `true_label`, `observed_label`, `labeled`.
inline void write_csv_dataset(std::ostream& os, const LabeledDataset& ds) {
  ds.validate();
  auto original = [&](int k) {
    return ds.label_values.empty() ? static_cast<long>(k) : ds.label_values[static_cast<std::size_t>(k)];
  };
  for (Eigen::Index j = 0; j < ds.dim(); ++j) os << 'x' << j << ',';
  os << "label," << kTrueLabelColumn << ',' << kObservedLabelColumn << ',' << kLabeledColumn << '\n';
  for (Eigen::Index i = 0; i < ds.size(); ++i) {
    const auto k = static_cast<std::size_t>(i);
    for (Eigen::Index j = 0; j < ds.dim(); ++j) os << format_real(ds.features(i, j)) << ',';
    os << original(ds.observed_labels[k]) << ',' << original(ds.true_labels[k]) << ','
       << original(ds.observed_labels[k]) << ',' << (ds.labeled_mask[k] ? 1 : 0) << '\n';
  }
}

// Label masking -------------------------------------------------------------------

/// Keep exactly round(proportion * N_c) labels per observed class; the rest become unlabeled.
inline LabeledDataset mask_labels(const LabeledDataset& ds, double proportion, Seed seed) {
  if (!(proportion > 0 && proportion <= 1)) throw ConfigError("mask_labels: proportion must lie in (0, 1]");
  ds.validate();
  LabeledDataset out = ds;
  out.labeled_mask.assign(out.labeled_mask.size(), false);
  Rng rng = make_rng(seed);
  const auto groups = detail::rows_by_class(ds.observed_labels, ds.num_classes);
  for (std::size_t c = 0; c < groups.size(); ++c) {
    auto rows = groups[c];
    if (rows.empty()) continue;
    const auto keep = static_cast<std::size_t>(std::llround(proportion * static_cast<double>(rows.size())));
    if (keep == 0)
      throw ProportionTooSmall("mask_labels: class " + std::to_string(c) + " would keep no labeled examples");
    std::shuffle(rows.begin(), rows.end(), rng);
    for (std::size_t k = 0; k < keep; ++k) out.labeled_mask[static_cast<std::size_t>(rows[k])] = true;
  }
  return out;
}

// Label noise ---------------------------------------------------------------------

enum class NoiseKind { symmetric, asymmetric, instance };

inline const char* to_string(NoiseKind k) {
  switch (k) {
    case NoiseKind::symmetric: return "symmetric";
    case NoiseKind::asymmetric: return "asymmetric";
    case NoiseKind::instance: return "instance";
  }
  return "?";
}

inline NoiseKind noise_kind_from_string(const std::string& s) {
  if (s == "symmetric") return NoiseKind::symmetric;
  if (s == "asymmetric") return NoiseKind::asymmetric;
  if (s == "instance") return NoiseKind::instance;
  throw ConfigError("unknown noise kind '" + s + "' (expected symmetric, asymmetric or instance)");
}

struct NoiseSpec {
  NoiseKind kind = NoiseKind::symmetric;
  double rate = 0.0;
  Seed seed = 0;
};

/// Per-example flip probabilities and targets for instance-dependent noise.
/// Ambiguity a_i = exp(-(second-nearest minus nearest class-mean distance));
/// p_i = clip(rate * N * a_i / sum a, 0, 1); the flip target is the nearest
/// class mean other than the example's current class.
inline std::pair<std::vector<double>, Labels> instance_noise_plan(const LabeledDataset& ds, double rate) {
  const auto n = ds.size();
  MatD centers = MatD::Zero(ds.num_classes, ds.dim());
  std::vector<double> counts(static_cast<std::size_t>(ds.num_classes), 0.0);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto c = ds.true_labels[static_cast<std::size_t>(i)];
    centers.row(c) += ds.features.row(i);
    counts[static_cast<std::size_t>(c)] += 1;
  }
  for (int c = 0; c < ds.num_classes; ++c)
    if (counts[static_cast<std::size_t>(c)] > 0) centers.row(c) /= counts[static_cast<std::size_t>(c)];

  std::vector<double> ambiguity(static_cast<std::size_t>(n));
  Labels target(static_cast<std::size_t>(n));
  std::vector<std::pair<double, int>> dist(static_cast<std::size_t>(ds.num_classes));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int c = 0; c < ds.num_classes; ++c)
      dist[static_cast<std::size_t>(c)] = {(ds.features.row(i) - centers.row(c)).norm(), c};
    std::sort(dist.begin(), dist.end());
    ambiguity[static_cast<std::size_t>(i)] = std::exp(-(dist[1].first - dist[0].first));
    const int current = ds.observed_labels[static_cast<std::size_t>(i)];
    target[static_cast<std::size_t>(i)] = dist[0].second != current ? dist[0].second : dist[1].second;
  }
  const double total = std::accumulate(ambiguity.begin(), ambiguity.end(), 0.0);
  std::vector<double> prob(static_cast<std::size_t>(n));
  for (std::size_t i = 0; i < prob.size(); ++i)
    prob[i] = std::clamp(rate * static_cast<double>(n) * ambiguity[i] / total, 0.0, 1.0);
  return {std::move(prob), std::move(target)};
}

/// Corrupt observed labels; features and true labels are left untouched.
inline LabeledDataset apply_noise(const LabeledDataset& ds, const NoiseSpec& spec) {
  if (!(spec.rate >= 0 && spec.rate < 1)) throw ConfigError("apply_noise: rate must lie in [0, 1)");
  if (ds.num_classes < 2) throw ConfigError("apply_noise: need at least 2 classes");
  ds.validate();
  LabeledDataset out = ds;
  if (spec.rate == 0) return out;
  Rng rng = make_rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto n = static_cast<std::size_t>(ds.size());

  switch (spec.kind) {
    case NoiseKind::symmetric: {
      std::uniform_int_distribution<int> other(1, ds.num_classes - 1);
      for (std::size_t i = 0; i < n; ++i)
        if (unit(rng) < spec.rate) out.observed_labels[i] = (ds.observed_labels[i] + other(rng)) % ds.num_classes;
      break;
    }
    case NoiseKind::asymmetric:
      for (std::size_t i = 0; i < n; ++i)
        if (unit(rng) < spec.rate) out.observed_labels[i] = (ds.observed_labels[i] + 1) % ds.num_classes;
      break;
    case NoiseKind::instance: {
      const auto [prob, target] = instance_noise_plan(ds, spec.rate);
      for (std::size_t i = 0; i < n; ++i)
        if (unit(rng) < prob[i]) out.observed_labels[i] = target[i];
      break;
    }
  }
  return out;
}

// Augmentation ----------------------------------------------------------------------

struct AugmentSpec {
  double jitter_sigma = 0.1;
  double scale_lo = 0.8;
  double scale_hi = 1.25;

  void validate() const {
    if (!(jitter_sigma >= 0)) throw ConfigError("AugmentSpec: jitter_sigma must be >= 0");
    if (!(scale_lo > 0 && scale_lo <= scale_hi)) throw ConfigError("AugmentSpec: need 0 < scale_lo <= scale_hi");
  }
};

/// Per row: multiply by s ~ U[lo, hi], then add N(0, jitter^2) per coordinate.
inline MatD augment(const MatD& features, const AugmentSpec& spec, Seed seed) {
  spec.validate();
  Rng rng = make_rng(seed);
  std::uniform_real_distribution<double> scale(spec.scale_lo, spec.scale_hi);
  std::normal_distribution<double> jitter(0.0, 1.0);
  MatD out(features.rows(), features.cols());
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    const double s = spec.scale_lo == spec.scale_hi ? spec.scale_lo : scale(rng);
    for (Eigen::Index j = 0; j < features.cols(); ++j) {
      const double noise = spec.jitter_sigma > 0 ? spec.jitter_sigma * jitter(rng) : 0.0;
      out(i, j) = s * features(i, j) + noise;
    }
  }
  return out;
}

}  // namespace hcr
