#pragma once

// Semi-supervised training with the composite objective, evaluation and the
// classifier-vs-projection distance consistency diagnostic.

#include "hcr/data.hpp"
#include "hcr/detail/format.hpp"
#include "hcr/diffnet.hpp"
#include "hcr/geometry.hpp"
#include "hcr/losses.hpp"
#include "hcr/stats.hpp"

#include <algorithm>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

namespace hcr {

enum class Precision { float32, float64 };

struct TrainConfig {
  NetworkConfig network;
  HcrConfig hcr;
  double tau = 0.07;
  double lambda_u = 1.0;
  UnsupervisedKind unsupervised = UnsupervisedKind::info_nce;
  double learning_rate = 0.05;
  double momentum = 0.9;
  Eigen::Index batch_size = 64;
  int epochs = 50;
  Seed seed = 0;
  Precision precision = Precision::float64;
  AugmentSpec augment;
  /// Leading test rows used for the per-epoch KS diagnostic.
  Eigen::Index diagnostic_rows = 256;

  CompositeConfig composite() const {
    CompositeConfig c;
    c.hcr = hcr;
    c.unsupervised = unsupervised;
    c.lambda_u = lambda_u;
    c.tau = tau;
    return c;
  }

  void validate() const {
    network.validate();
    hcr.validate();
    augment.validate();
    if (!(tau > 0)) throw ConfigError("TrainConfig: tau must be > 0");
    if (!(lambda_u >= 0)) throw ConfigError("TrainConfig: lambda_u must be >= 0");
    if (!(learning_rate > 0)) throw ConfigError("TrainConfig: learning rate must be > 0");
    if (!(momentum >= 0 && momentum < 1)) throw ConfigError("TrainConfig: momentum must lie in [0, 1)");
    if (epochs < 0) throw ConfigError("TrainConfig: epochs must be >= 0");
    if (batch_size < 2) throw ConfigError("TrainConfig: batch_size must be >= 2");
    if (hcr.active() && batch_size < 4) throw ConfigError("TrainConfig: batch_size must be >= 4 when HCR is enabled");
    if (hcr.active() && network.num_classes < 2)
      throw ConfigError("TrainConfig: HCR needs at least 2 classes (logits live on a sphere)");
    if (diagnostic_rows < 8) throw ConfigError("TrainConfig: diagnostic_rows must be >= 8");
  }
};

struct MetricsRecord {
  int epoch = 0;
  double loss_s = 0;
  double loss_u = 0;
  double loss_hcr = 0;
  double loss_total = 0;
  double train_acc = 0;
  double test_acc = 0;
  double ks_statistic = 0;
};

struct TrainResult {
  std::vector<MetricsRecord> metrics;
  NetworkParams<double> params;
};

inline const char* metrics_csv_header() { return "epoch,loss_s,loss_u,loss_hcr,loss_total,train_acc,test_acc,ks"; }

inline void write_metrics_csv(std::ostream& os, const std::vector<MetricsRecord>& records) {
  os << metrics_csv_header() << '\n';
  for (const auto& r : records)
    os << r.epoch << ',' << format_real(r.loss_s) << ',' << format_real(r.loss_u) << ',' << format_real(r.loss_hcr)
       << ',' << format_real(r.loss_total) << ',' << format_real(r.train_acc) << ',' << format_real(r.test_acc) << ','
       << format_real(r.ks_statistic) << '\n';
}

// Evaluation ------------------------------------------------------------------------

/// Row-wise argmax; ties go to the lowest class index.
template <std::floating_point Real>
Labels argmax_rows(const Mat<Real>& logits) {
  Labels out(static_cast<std::size_t>(logits.rows()));
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < logits.cols(); ++c)
      if (logits(i, c) > logits(i, best)) best = c;
    out[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return out;
}

/// Fraction of rows whose argmax logit equals the true label.
template <std::floating_point Real>
double evaluate(const NetworkParams<Real>& params, const LabeledDataset& ds, Activation act) {
  if (ds.size() == 0) throw EmptyDataset("evaluate: empty dataset");
  const Mat<Real> x = ds.features.cast<Real>();
  const Labels pred = argmax_rows(logits(params, x, act));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == ds.true_labels[i];
  return static_cast<double>(correct) / static_cast<double>(pred.size());
}

// Distance consistency diagnostic ------------------------------------------------------

struct DistanceConsistency {
  Histogram hist_g;
  Histogram hist_h;
  double ks_statistic = 0;
};

inline constexpr std::size_t kDiagnosticBins = 50;

/// KS gap between the pairwise-distance distributions of two unit-row batches.
inline DistanceConsistency compare_distance_distributions(const MatD& classifier_rows, const MatD& projection_rows) {
  const auto d_g = pairwise_distances(UnitSphereBatch<double>::from_unit_rows(classifier_rows));
  const auto d_h = pairwise_distances(UnitSphereBatch<double>::from_unit_rows(projection_rows));
  DistanceConsistency out;
  out.hist_g = distance_histogram(d_g, kDiagnosticBins, 0.0, 2.0);
  out.hist_h = distance_histogram(d_h, kDiagnosticBins, 0.0, 2.0);
  out.ks_statistic = ks_statistic(d_g.upper_triangle(), d_h.upper_triangle());
  return out;
}

/// Histograms over [0, 2] (50 bins) of d_g (sphere-projected logits) and d_h
/// (projections) plus their two-sample KS statistic. Evaluated in float64.
template <std::floating_point Real>
DistanceConsistency distance_consistency(const NetworkParams<Real>& params, const MatD& batch, Activation act) {
  if (batch.rows() < 8) throw ConfigError("distance_consistency: batch must have at least 8 rows");
  const auto p = params.template cast<double>();
  const auto r = forward(p, batch, act);
  return compare_distance_distributions(project_to_sphere(r.logits).values(), r.projections.values());
}

// Training ----------------------------------------------------------------------------

namespace detail {

inline void check_compatible(const TrainConfig& cfg, const LabeledDataset& ds, const char* which) {
  ds.validate();
  if (ds.dim() != cfg.network.input_dim)
    throw ConfigError(std::string(which) + " dataset has " + std::to_string(ds.dim()) + " features, network expects " +
                      std::to_string(cfg.network.input_dim));
  if (ds.num_classes > cfg.network.num_classes)
    throw ConfigError(std::string(which) + " dataset has more classes than the classifier head");
}

template <std::floating_point Real>
struct BatchTerms {
  CompositeLoss<Real> loss;
  NetworkGradients<Real> grads;
};

}  // namespace detail

/// Composite objective and parameter gradients for one batch given two augmented views.
template <std::floating_point Real>
detail::BatchTerms<Real> batch_objective(const NetworkParams<Real>& params, const TrainConfig& cfg,
                                         const Mat<Real>& view1, const Mat<Real>& view2, const Labels& labels,
                                         const Mask& mask) {
  const Activation act = cfg.network.activation;
  CompositeConfig cc = cfg.composite();
  cc.supervised = std::find(mask.begin(), mask.end(), true) != mask.end();

  const auto r1 = forward(params, view1, act);
  const bool need_keys = cc.unsupervised != UnsupervisedKind::none;
  const Labels pseudo = argmax_rows(r1.logits);
  if (cc.unsupervised == UnsupervisedKind::pgc &&
      std::all_of(pseudo.begin(), pseudo.end(), [&](int c) { return c == pseudo.front(); }))
    cc.unsupervised = UnsupervisedKind::none;

  ForwardRecord<Real> r2;
  if (need_keys) r2 = forward(params, view2, act);
  const Mat<Real>& keys = need_keys ? r2.projections.values() : r1.projections.values();

  detail::BatchTerms<Real> out;
  out.loss = composite_loss(
      CompositeInputs<Real>{r1.logits, r1.projections.values(), keys, labels, mask, pseudo}, cc);
  out.grads = params.zeros_like();
  backward_accumulate(params, r1, UpstreamGradients<Real>{out.loss.grad("logits"), out.loss.grad("queries"), {}}, act,
                      out.grads);
  if (need_keys)
    backward_accumulate(params, r2, UpstreamGradients<Real>{{}, out.loss.grad("keys"), {}}, act, out.grads);
  return out;
}

template <std::floating_point Real>
TrainResult train_with_precision(const TrainConfig& cfg, const LabeledDataset& train_ds, const LabeledDataset& test_ds) {
  cfg.validate();
  detail::check_compatible(cfg, train_ds, "train");
  detail::check_compatible(cfg, test_ds, "test");
  if (test_ds.size() < 8) throw ConfigError("test dataset needs at least 8 rows for the diagnostic");

  NetworkParams<Real> params = init_params<Real>(cfg.network, derive_seed(cfg.seed, 1u));
  auto state = OptimizerState<Real>::for_params(params, cfg.learning_rate, cfg.momentum);
  const Activation act = cfg.network.activation;
  const MatD diag_batch = test_ds.features.topRows(std::min(cfg.diagnostic_rows, test_ds.size()));
  const Eigen::Index n = train_ds.size();
  const Eigen::Index min_batch = cfg.hcr.active() ? 4 : 2;

  TrainResult result;
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    Rng shuffle_rng = make_rng(derive_seed(cfg.seed, 2u, static_cast<unsigned>(epoch)));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double sum_s = 0, sum_u = 0, sum_hcr = 0;
    int batches = 0;
    for (Eigen::Index start = 0; start + min_batch <= n; start += cfg.batch_size) {
      const Eigen::Index b = std::min(cfg.batch_size, n - start);
      MatD x(b, train_ds.dim());
      Labels labels(static_cast<std::size_t>(b));
      Mask mask(static_cast<std::size_t>(b));
      for (Eigen::Index k = 0; k < b; ++k) {
        const auto i = order[static_cast<std::size_t>(start + k)];
        x.row(k) = train_ds.features.row(i);
        labels[static_cast<std::size_t>(k)] = train_ds.observed_labels[static_cast<std::size_t>(i)];
        mask[static_cast<std::size_t>(k)] = train_ds.labeled_mask[static_cast<std::size_t>(i)];
      }
      const auto batch_id = static_cast<unsigned>(batches);
      const Mat<Real> view1 =
          augment(x, cfg.augment, derive_seed(cfg.seed, 3u, static_cast<unsigned>(epoch), batch_id)).cast<Real>();
      const Mat<Real> view2 =
          augment(x, cfg.augment, derive_seed(cfg.seed, 4u, static_cast<unsigned>(epoch), batch_id)).cast<Real>();

      auto terms = batch_objective(params, cfg, view1, view2, labels, mask);
      sgd_momentum_step(params, terms.grads, state);
      sum_s += static_cast<double>(terms.loss.loss_s);
      sum_u += static_cast<double>(terms.loss.loss_u);
      sum_hcr += static_cast<double>(terms.loss.loss_hcr);
      ++batches;
    }

    MetricsRecord rec;
    rec.epoch = epoch + 1;
    if (batches > 0) {
      rec.loss_s = sum_s / batches;
      rec.loss_u = sum_u / batches;
      rec.loss_hcr = sum_hcr / batches;
    }
    rec.loss_total = rec.loss_s + cfg.lambda_u * rec.loss_u + cfg.hcr.weight * rec.loss_hcr;
    rec.train_acc = evaluate(params, train_ds, act);
    rec.test_acc = evaluate(params, test_ds, act);
    rec.ks_statistic = distance_consistency(params, diag_batch, act).ks_statistic;
    result.metrics.push_back(rec);
  }
  result.params = params.template cast<double>();
  return result;
}

/// Run training; epochs = 0 returns the initial parameters and no metrics.
inline TrainResult train(const TrainConfig& cfg, const LabeledDataset& train_ds, const LabeledDataset& test_ds) {
  if (cfg.precision == Precision::float32) return train_with_precision<float>(cfg, train_ds, test_ds);
  return train_with_precision<double>(cfg, train_ds, test_ds);
}

}  // namespace hcr
