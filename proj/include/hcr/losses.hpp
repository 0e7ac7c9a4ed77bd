#pragma once

// Differentiable losses: Gaussian distance similarity, hyperspherical
// consistency (BCE between similarity structures), softmax cross-entropy,
// InfoNCE, in-batch pseudo-group contrast and the composite objective.
// Every loss returns its value together with analytic input gradients.

#include "hcr/common.hpp"
#include "hcr/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <string>

namespace hcr {

template <std::floating_point Real>
struct LossValue {
  Real value = 0;
  std::map<std::string, Mat<Real>> gradients;

  bool has(const std::string& name) const { return gradients.count(name) != 0; }
  const Mat<Real>& grad(const std::string& name) const {
    auto it = gradients.find(name);
    if (it == gradients.end()) throw Error("LossValue: no gradient named '" + name + "'");
    return it->second;
  }
};

// Gaussian similarity -------------------------------------------------------

/// s(d) = C / (sigma sqrt(2 pi)) * exp(-(d - mu)^2 / (2 sigma^2)).
/// Defaults give variance 1/2 and C = sigma sqrt(2 pi), i.e. s(d) = exp(-d^2).
struct SimilarityConfig {
  double mu = 0.0;
  double sigma = std::numbers::sqrt2 / 2.0;
  double normalizer = (std::numbers::sqrt2 / 2.0) * std::sqrt(2.0 * std::numbers::pi);

  double peak_scale() const { return normalizer / (sigma * std::sqrt(2.0 * std::numbers::pi)); }

  /// Throws ConfigError unless sigma, C > 0 and the kernel stays within [0, 1] on d in [0, 2].
  void validate() const {
    if (!(sigma > 0)) throw ConfigError("SimilarityConfig: sigma must be > 0");
    if (!(normalizer > 0)) throw ConfigError("SimilarityConfig: normalizer must be > 0");
    const double d_peak = std::clamp(mu, 0.0, 2.0);
    const double peak = peak_scale() * std::exp(-(d_peak - mu) * (d_peak - mu) / (2 * sigma * sigma));
    if (peak > 1.0 + 1e-12) throw ConfigError("SimilarityConfig: kernel exceeds 1 on [0, 2]");
  }

  template <std::floating_point Real>
  Real operator()(Real d) const {
    const Real z = (d - static_cast<Real>(mu)) / static_cast<Real>(sigma);
    return static_cast<Real>(peak_scale()) * std::exp(Real(-0.5) * z * z);
  }

  /// ds/dd.
  template <std::floating_point Real>
  Real derivative(Real d) const {
    const Real s2 = static_cast<Real>(sigma * sigma);
    return (*this)(d) * -(d - static_cast<Real>(mu)) / s2;
  }
};

template <std::floating_point Real>
struct SimilarityMatrix {
  Mat<Real> values;
};

template <std::floating_point Real>
SimilarityMatrix<Real> gaussian_similarity(const DistanceMatrix<Real>& d, const SimilarityConfig& cfg) {
  cfg.validate();
  SimilarityMatrix<Real> s{d.values().unaryExpr([&cfg](Real x) { return cfg(x); })};
  return s;
}

// Hyperspherical consistency ------------------------------------------------

enum class GradientFlow { classifier_only, both };

struct HcrConfig {
  SimilarityConfig similarity_g;
  SimilarityConfig similarity_h;
  double clamp_eps = 1e-7;
  GradientFlow gradient_flow = GradientFlow::classifier_only;
  double weight = 1.0;
  /// When false the regularizer is never evaluated (ablation switch).
  bool enabled = true;

  void validate() const {
    similarity_g.validate();
    similarity_h.validate();
    if (!(clamp_eps > 0 && clamp_eps < 0.5)) throw ConfigError("HcrConfig: clamp_eps must lie in (0, 0.5)");
    if (!(weight >= 0)) throw ConfigError("HcrConfig: weight must be >= 0");
  }

  bool active() const { return enabled && weight != 0.0; }
};

/// Binary cross entropy -p log q - (1-p) log(1-q).
template <std::floating_point Real>
Real binary_cross_entropy(Real p, Real q) {
  return -p * std::log(q) - (Real(1) - p) * std::log(Real(1) - q);
}

/// Mean BCE between p = s_g(d_g) and q = s_h(d_h) over pairs i < j.
/// Both similarities are clamped into [eps, 1 - eps]; entries pinned by the
/// clamp carry zero gradient. Gradients live on the strict upper triangle:
/// "d_g" always, "d_h" only with GradientFlow::both.
template <std::floating_point Real>
LossValue<Real> hcr_loss(const DistanceMatrix<Real>& d_g, const DistanceMatrix<Real>& d_h, const HcrConfig& cfg) {
  if (d_g.size() != d_h.size()) throw ShapeMismatch("hcr_loss: distance matrices differ in size");
  const Eigen::Index n = d_g.size();
  if (n < 2) throw ConfigError("hcr_loss: need at least 2 points");
  cfg.validate();

  const Real eps = static_cast<Real>(cfg.clamp_eps);
  const Real hi = Real(1) - eps;
  const Real pairs = static_cast<Real>(n * (n - 1) / 2);
  const bool flow_h = cfg.gradient_flow == GradientFlow::both;

  LossValue<Real> out;
  Mat<Real> grad_g = Mat<Real>::Zero(n, n);
  Mat<Real> grad_h;
  if (flow_h) grad_h = Mat<Real>::Zero(n, n);

  Real total = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const Real p_raw = cfg.similarity_g(d_g(i, j));
      const Real q_raw = cfg.similarity_h(d_h(i, j));
      const Real p = std::clamp(p_raw, eps, hi);
      const Real q = std::clamp(q_raw, eps, hi);
      total += binary_cross_entropy(p, q);

      if (p_raw > eps && p_raw < hi) {
        const Real dl_dp = std::log((Real(1) - q) / q);
        grad_g(i, j) = dl_dp * cfg.similarity_g.derivative(d_g(i, j)) / pairs;
      }
      if (flow_h && q_raw > eps && q_raw < hi) {
        const Real dl_dq = (q - p) / (q * (Real(1) - q));
        grad_h(i, j) = dl_dq * cfg.similarity_h.derivative(d_h(i, j)) / pairs;
      }
    }
  }
  out.value = total / pairs;
  out.gradients.emplace("d_g", std::move(grad_g));
  if (flow_h) out.gradients.emplace("d_h", std::move(grad_h));
  return out;
}

// Supervised cross entropy --------------------------------------------------

/// Row-wise log-softmax, shifted by the row max.
template <std::floating_point Real>
Mat<Real> log_softmax(const Mat<Real>& logits) {
  Mat<Real> out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const Real m = logits.row(i).maxCoeff();
    const Real lse = m + std::log((logits.row(i).array() - m).exp().sum());
    out.row(i) = logits.row(i).array() - lse;
  }
  return out;
}

/// Mean softmax cross entropy over rows selected by `mask`; gradient "logits"
/// is zero on unselected rows.
template <std::floating_point Real>
LossValue<Real> cross_entropy(const Mat<Real>& logits, const Labels& labels, const Mask& mask) {
  const auto b = logits.rows();
  if (static_cast<Eigen::Index>(labels.size()) != b || static_cast<Eigen::Index>(mask.size()) != b)
    throw ShapeMismatch("cross_entropy: labels/mask length must equal batch size");
  Eigen::Index selected = 0;
  for (Eigen::Index i = 0; i < b; ++i) {
    if (!mask[i]) continue;
    if (labels[i] < 0 || labels[i] >= logits.cols())
      throw ConfigError("cross_entropy: label out of range at row " + std::to_string(i));
    ++selected;
  }
  if (selected == 0) throw EmptyBatch("cross_entropy: mask selects no rows");

  const Mat<Real> logp = log_softmax(logits);
  const Real scale = Real(1) / static_cast<Real>(selected);
  LossValue<Real> out;
  Mat<Real> grad = Mat<Real>::Zero(b, logits.cols());
  Real total = 0;
  for (Eigen::Index i = 0; i < b; ++i) {
    if (!mask[i]) continue;
    total -= logp(i, labels[i]);
    grad.row(i) = logp.row(i).array().exp() * scale;
    grad(i, labels[i]) -= scale;
  }
  out.value = total * scale;
  out.gradients.emplace("logits", std::move(grad));
  return out;
}

// Contrastive losses --------------------------------------------------------

/// InfoNCE on a precomputed score matrix (already divided by the temperature):
/// row i's positive is column i. Gradient "scores".
template <std::floating_point Real>
LossValue<Real> info_nce_from_scores(const Mat<Real>& scores) {
  if (scores.rows() != scores.cols()) throw ShapeMismatch("info_nce: score matrix must be square");
  const auto b = scores.rows();
  if (b < 2) throw ConfigError("info_nce: need at least 2 rows");
  const Mat<Real> logp = log_softmax(scores);
  Mat<Real> grad = logp.array().exp() / static_cast<Real>(b);
  Real total = 0;
  for (Eigen::Index i = 0; i < b; ++i) {
    total -= logp(i, i);
    grad(i, i) -= Real(1) / static_cast<Real>(b);
  }
  LossValue<Real> out;
  out.value = total / static_cast<Real>(b);
  out.gradients.emplace("scores", std::move(grad));
  return out;
}

namespace detail {

template <std::floating_point Real>
LossValue<Real> chain_scores(LossValue<Real> on_scores, const Mat<Real>& queries, const Mat<Real>& keys, Real tau) {
  const Mat<Real>& g = on_scores.grad("scores");
  LossValue<Real> out;
  out.value = on_scores.value;
  out.gradients.emplace("queries", Mat<Real>(g * keys / tau));
  out.gradients.emplace("keys", Mat<Real>(g.transpose() * queries / tau));
  return out;
}

template <std::floating_point Real>
void check_contrastive_inputs(const Mat<Real>& queries, const Mat<Real>& keys, double tau, const char* who) {
  require_same_shape(queries.rows(), queries.cols(), keys.rows(), keys.cols(), who);
  if (!(tau > 0)) throw ConfigError(std::string(who) + ": tau must be > 0");
}

}  // namespace detail

/// Mean over queries of -log softmax_j(q_i . k_j / tau)[i]. Gradients "queries", "keys".
template <std::floating_point Real>
LossValue<Real> info_nce(const Mat<Real>& queries, const Mat<Real>& keys, double tau) {
  detail::check_contrastive_inputs(queries, keys, tau, "info_nce");
  const Real t = static_cast<Real>(tau);
  const Mat<Real> scores = queries * keys.transpose() / t;
  return detail::chain_scores(info_nce_from_scores(scores), queries, keys, t);
}

template <std::floating_point Real>
LossValue<Real> info_nce(const UnitSphereBatch<Real>& queries, const UnitSphereBatch<Real>& keys, double tau) {
  return info_nce(queries.values(), keys.values(), tau);
}

/// Pseudo-group contrast on scores: for query i the positives are all keys
/// sharing its pseudo-label (its own key included), the negatives all other
/// keys. Each positive is contrasted against the full negative set.
template <std::floating_point Real>
LossValue<Real> pgc_from_scores(const Mat<Real>& scores, const Labels& pseudo_labels) {
  if (scores.rows() != scores.cols()) throw ShapeMismatch("pgc_loss: score matrix must be square");
  const auto b = scores.rows();
  if (static_cast<Eigen::Index>(pseudo_labels.size()) != b)
    throw ShapeMismatch("pgc_loss: pseudo_labels must be row-aligned with keys");
  bool any_negative = false;
  for (Eigen::Index j = 1; j < b && !any_negative; ++j) any_negative = pseudo_labels[j] != pseudo_labels[0];
  if (!any_negative) throw NoNegatives("pgc_loss: all pseudo-labels identical");

  Mat<Real> grad = Mat<Real>::Zero(b, b);
  Real total = 0;
  const Real inv_b = Real(1) / static_cast<Real>(b);
  std::vector<Eigen::Index> pos;
  std::vector<Eigen::Index> neg;
  for (Eigen::Index i = 0; i < b; ++i) {
    pos.clear();
    neg.clear();
    for (Eigen::Index j = 0; j < b; ++j) (pseudo_labels[j] == pseudo_labels[i] ? pos : neg).push_back(j);

    const Real m = scores.row(i).maxCoeff();
    Real neg_sum = 0;
    for (auto j : neg) neg_sum += std::exp(scores(i, j) - m);

    const Real w = inv_b / static_cast<Real>(pos.size());
    Real neg_weight = 0;
    for (auto p : pos) {
      const Real e_pos = std::exp(scores(i, p) - m);
      const Real z = e_pos + neg_sum;
      total += w * (std::log(z) - (scores(i, p) - m));
      grad(i, p) += w * (e_pos / z - Real(1));
      neg_weight += w / z;
    }
    for (auto j : neg) grad(i, j) += neg_weight * std::exp(scores(i, j) - m);
  }
  LossValue<Real> out;
  out.value = total;
  out.gradients.emplace("scores", std::move(grad));
  return out;
}

template <std::floating_point Real>
LossValue<Real> pgc_loss(const Mat<Real>& queries, const Mat<Real>& keys, const Labels& pseudo_labels, double tau) {
  detail::check_contrastive_inputs(queries, keys, tau, "pgc_loss");
  const Real t = static_cast<Real>(tau);
  const Mat<Real> scores = queries * keys.transpose() / t;
  return detail::chain_scores(pgc_from_scores(scores, pseudo_labels), queries, keys, t);
}

template <std::floating_point Real>
LossValue<Real> pgc_loss(const UnitSphereBatch<Real>& queries, const UnitSphereBatch<Real>& keys,
                         const Labels& pseudo_labels, double tau) {
  return pgc_loss(queries.values(), keys.values(), pseudo_labels, tau);
}

// Composite objective -------------------------------------------------------

enum class UnsupervisedKind { none, info_nce, pgc };

struct CompositeConfig {
  HcrConfig hcr;
  UnsupervisedKind unsupervised = UnsupervisedKind::info_nce;
  double lambda_u = 1.0;
  double tau = 0.07;
  /// Include the supervised term; callers clear it for batches without labels.
  bool supervised = true;
};

/// Network outputs for one batch. `queries`/`keys` are the projection-head
/// embeddings of two views; HCR compares the classifier logits against `queries`.
template <std::floating_point Real>
struct CompositeInputs {
  const Mat<Real>& logits;
  const Mat<Real>& queries;
  const Mat<Real>& keys;
  const Labels& labels;
  const Mask& mask;
  const Labels& pseudo_labels;
};

template <std::floating_point Real>
struct CompositeLoss : LossValue<Real> {
  Real loss_s = 0;
  Real loss_u = 0;
  Real loss_hcr = 0;
};

/// value = L_s + lambda_u * L_u + weight * HCR. Gradients "logits", "queries", "keys".
template <std::floating_point Real>
CompositeLoss<Real> composite_loss(const CompositeInputs<Real>& in, const CompositeConfig& cfg) {
  const auto b = in.logits.rows();
  if (in.queries.rows() != b || in.keys.rows() != b) throw ShapeMismatch("composite_loss: batch sizes differ");

  CompositeLoss<Real> out;
  Mat<Real> g_logits = Mat<Real>::Zero(b, in.logits.cols());
  Mat<Real> g_queries = Mat<Real>::Zero(b, in.queries.cols());
  Mat<Real> g_keys = Mat<Real>::Zero(b, in.keys.cols());

  if (cfg.supervised) {
    auto ce = cross_entropy(in.logits, in.labels, in.mask);
    out.loss_s = ce.value;
    g_logits += ce.grad("logits");
  }

  if (cfg.unsupervised != UnsupervisedKind::none) {
    auto lu = cfg.unsupervised == UnsupervisedKind::info_nce
                  ? info_nce(in.queries, in.keys, cfg.tau)
                  : pgc_loss(in.queries, in.keys, in.pseudo_labels, cfg.tau);
    out.loss_u = lu.value;
    const Real lambda = static_cast<Real>(cfg.lambda_u);
    g_queries += lambda * lu.grad("queries");
    g_keys += lambda * lu.grad("keys");
  }

  if (cfg.hcr.active()) {
    Vec<Real> norms;
    const auto sphere_logits = project_to_sphere(in.logits, norms);
    const auto d_g = pairwise_distances(sphere_logits);
    const auto d_h = pairwise_distances_raw(in.queries);
    auto h = hcr_loss(d_g, d_h, cfg.hcr);
    out.loss_hcr = h.value;
    const Real w = static_cast<Real>(cfg.hcr.weight);
    const Mat<Real> g_unit = pairwise_distances_backward(sphere_logits.values(), d_g, h.grad("d_g"));
    g_logits += w * project_to_sphere_backward(sphere_logits, norms, g_unit);
    if (h.has("d_h")) g_queries += w * pairwise_distances_backward(in.queries, d_h, h.grad("d_h"));
  }

  out.value = out.loss_s + static_cast<Real>(cfg.lambda_u) * out.loss_u +
              static_cast<Real>(cfg.hcr.weight) * out.loss_hcr;
  out.gradients.emplace("logits", std::move(g_logits));
  out.gradients.emplace("queries", std::move(g_queries));
  out.gradients.emplace("keys", std::move(g_keys));
  return out;
}

}  // namespace hcr
