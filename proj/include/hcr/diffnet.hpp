#pragma once

// Shared encoder f, classifier head g and projection head h with explicit
// per-layer reverse-mode passes, plus SGD with momentum.
//
//   features    = f(x)   stack of affine + activation layers
//   logits      = g(f)   single affine map
//   projections = h(f)   affine -> activation -> affine, then row-normalized

#include "hcr/common.hpp"
#include "hcr/geometry.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace hcr {

enum class Activation { relu, tanh };

struct NetworkConfig {
  Eigen::Index input_dim = 2;
  std::vector<Eigen::Index> encoder_widths;  // hidden widths before the feature layer
  Eigen::Index feature_dim = 16;
  Eigen::Index num_classes = 2;
  Eigen::Index projection_dim = 8;
  Eigen::Index projection_hidden = 0;  // 0 means feature_dim
  Activation activation = Activation::tanh;

  Eigen::Index hidden_width() const { return projection_hidden > 0 ? projection_hidden : feature_dim; }

  void validate() const {
    if (input_dim < 1 || feature_dim < 1 || num_classes < 1 || projection_hidden < 0)
      throw ConfigError("NetworkConfig: dimensions must be >= 1");
    for (auto w : encoder_widths)
      if (w < 1) throw ConfigError("NetworkConfig: encoder widths must be >= 1");
    if (projection_dim < 2) throw ConfigError("NetworkConfig: projection_dim must be >= 2");
  }
};

template <std::floating_point Real>
using RowVec = Eigen::Matrix<Real, 1, Eigen::Dynamic>;

/// Affine map y = x W + b with W of shape (in, out).
template <std::floating_point Real>
struct Dense {
  Mat<Real> weight;
  RowVec<Real> bias;

  // coefficient-wise product: each output row depends only on its input row,
  // bit for bit, whatever the batch size
  Mat<Real> apply(const Mat<Real>& x) const { return x.lazyProduct(weight).rowwise() + bias; }
};

template <std::floating_point Real>
struct NetworkParams {
  std::vector<Dense<Real>> encoder;
  Dense<Real> classifier;
  Dense<Real> projection_hidden;
  Dense<Real> projection_out;

  /// Visit every tensor with a stable name, in a fixed order.
  template <typename Self, typename F>
  static void visit(Self& self, F&& f) {
    for (std::size_t l = 0; l < self.encoder.size(); ++l) {
      const std::string p = "encoder." + std::to_string(l);
      f(p + ".weight", self.encoder[l].weight);
      f(p + ".bias", self.encoder[l].bias);
    }
    f(std::string("classifier.weight"), self.classifier.weight);
    f(std::string("classifier.bias"), self.classifier.bias);
    f(std::string("projection.0.weight"), self.projection_hidden.weight);
    f(std::string("projection.0.bias"), self.projection_hidden.bias);
    f(std::string("projection.1.weight"), self.projection_out.weight);
    f(std::string("projection.1.bias"), self.projection_out.bias);
  }
  template <typename F>
  void for_each(F&& f) { visit(*this, std::forward<F>(f)); }
  template <typename F>
  void for_each(F&& f) const { visit(*this, std::forward<F>(f)); }

  /// Every affine layer in visiting order.
  std::vector<Dense<Real>*> layers() {
    std::vector<Dense<Real>*> out;
    for (auto& l : encoder) out.push_back(&l);
    out.insert(out.end(), {&classifier, &projection_hidden, &projection_out});
    return out;
  }
  std::vector<const Dense<Real>*> layers() const {
    std::vector<const Dense<Real>*> out;
    for (const auto& l : encoder) out.push_back(&l);
    out.insert(out.end(), {&classifier, &projection_hidden, &projection_out});
    return out;
  }

  /// Same shapes, all zeros.
  NetworkParams zeros_like() const {
    NetworkParams z = *this;
    z.for_each([](const std::string&, auto& t) { t.setZero(); });
    return z;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for_each([&n](const std::string&, const auto& t) { n += static_cast<std::size_t>(t.size()); });
    return n;
  }

  template <std::floating_point To>
  NetworkParams<To> cast() const {
    NetworkParams<To> out;
    auto conv = [](const Dense<Real>& d) { return Dense<To>{d.weight.template cast<To>(), d.bias.template cast<To>()}; };
    for (const auto& l : encoder) out.encoder.push_back(conv(l));
    out.classifier = conv(classifier);
    out.projection_hidden = conv(projection_hidden);
    out.projection_out = conv(projection_out);
    return out;
  }
};

template <std::floating_point Real>
using NetworkGradients = NetworkParams<Real>;

namespace detail {

template <std::floating_point Real>
Mat<Real> activate(const Mat<Real>& z, Activation a) {
  if (a == Activation::relu) return z.cwiseMax(Real(0));
  return z.array().tanh().matrix();
}

/// dL/dz given dL/dy, pre-activation z and output y.
template <std::floating_point Real>
Mat<Real> activate_backward(const Mat<Real>& grad_out, const Mat<Real>& z, const Mat<Real>& y, Activation a) {
  if (a == Activation::relu) return (z.array() > Real(0)).select(grad_out, Real(0));
  return (grad_out.array() * (Real(1) - y.array().square())).matrix();
}

template <std::floating_point Real>
Dense<Real> init_dense(Eigen::Index in, Eigen::Index out, Rng& rng) {
  const MatD w = gaussian_matrix(in, out, 1.0 / std::sqrt(static_cast<double>(in)), rng);
  return Dense<Real>{w.cast<Real>(), RowVec<Real>::Zero(out)};
}

}  // namespace detail

/// Weights ~ N(0, 1/fan_in), biases zero; drawn layer by layer from one stream.
template <std::floating_point Real = double>
NetworkParams<Real> init_params(const NetworkConfig& cfg, Seed seed) {
  cfg.validate();
  Rng rng = make_rng(seed);
  NetworkParams<Real> p;
  Eigen::Index in = cfg.input_dim;
  for (auto w : cfg.encoder_widths) {
    p.encoder.push_back(detail::init_dense<Real>(in, w, rng));
    in = w;
  }
  p.encoder.push_back(detail::init_dense<Real>(in, cfg.feature_dim, rng));
  p.classifier = detail::init_dense<Real>(cfg.feature_dim, cfg.num_classes, rng);
  p.projection_hidden = detail::init_dense<Real>(cfg.feature_dim, cfg.hidden_width(), rng);
  p.projection_out = detail::init_dense<Real>(cfg.hidden_width(), cfg.projection_dim, rng);
  return p;
}

/// Throws ShapeMismatch unless `p` has the layer shapes `cfg` describes.
template <std::floating_point Real>
void check_shapes(const NetworkParams<Real>& p, const NetworkConfig& cfg) {
  auto expect = [](const Dense<Real>& d, Eigen::Index in, Eigen::Index out, const std::string& name) {
    if (d.weight.rows() != in || d.weight.cols() != out || d.bias.size() != out)
      throw ShapeMismatch("parameter shapes do not match network config at " + name);
  };
  if (p.encoder.size() != cfg.encoder_widths.size() + 1) throw ShapeMismatch("encoder depth does not match config");
  Eigen::Index in = cfg.input_dim;
  for (std::size_t l = 0; l < p.encoder.size(); ++l) {
    const Eigen::Index out = l < cfg.encoder_widths.size() ? cfg.encoder_widths[l] : cfg.feature_dim;
    expect(p.encoder[l], in, out, "encoder." + std::to_string(l));
    in = out;
  }
  expect(p.classifier, cfg.feature_dim, cfg.num_classes, "classifier");
  expect(p.projection_hidden, cfg.feature_dim, cfg.hidden_width(), "projection.0");
  expect(p.projection_out, cfg.hidden_width(), cfg.projection_dim, "projection.1");
}

template <std::floating_point Real>
struct ForwardRecord {
  Mat<Real> inputs;
  std::vector<Mat<Real>> encoder_pre;   // pre-activation per encoder layer
  std::vector<Mat<Real>> encoder_post;  // activation per encoder layer; back() == features
  Mat<Real> logits;
  Mat<Real> projection_pre;
  Mat<Real> projection_post;
  Mat<Real> projection_raw;
  Vec<Real> projection_norms;
  UnitSphereBatch<Real> projections;

  const Mat<Real>& features() const { return encoder_post.back(); }
};

template <std::floating_point Real>
Mat<Real> encode(const NetworkParams<Real>& p, const Mat<Real>& x, Activation act) {
  Mat<Real> h = x;
  for (const auto& layer : p.encoder) h = detail::activate(layer.apply(h), act);
  return h;
}

/// Classifier logits only; no projection, so it never raises ZeroVector.
template <std::floating_point Real>
Mat<Real> logits(const NetworkParams<Real>& p, const Mat<Real>& x, Activation act) {
  if (p.encoder.empty() || x.cols() != p.encoder.front().weight.rows())
    throw ShapeMismatch("logits: input width does not match the encoder");
  return p.classifier.apply(encode(p, x, act));
}

template <std::floating_point Real>
ForwardRecord<Real> forward(const NetworkParams<Real>& p, const Mat<Real>& x, Activation act) {
  if (p.encoder.empty() || x.cols() != p.encoder.front().weight.rows())
    throw ShapeMismatch("forward: input has " + std::to_string(x.cols()) + " columns, encoder expects " +
                        std::to_string(p.encoder.empty() ? 0 : p.encoder.front().weight.rows()));
  ForwardRecord<Real> r;
  r.inputs = x;
  const Mat<Real>* h = &r.inputs;
  for (const auto& layer : p.encoder) {
    r.encoder_pre.push_back(layer.apply(*h));
    r.encoder_post.push_back(detail::activate(r.encoder_pre.back(), act));
    h = &r.encoder_post.back();
  }
  r.logits = p.classifier.apply(r.features());
  r.projection_pre = p.projection_hidden.apply(r.features());
  r.projection_post = detail::activate(r.projection_pre, act);
  r.projection_raw = p.projection_out.apply(r.projection_post);
  r.projections = project_to_sphere(r.projection_raw, r.projection_norms);
  return r;
}

/// Upstream gradients for one forward record. Empty matrices mean zero.
template <std::floating_point Real>
struct UpstreamGradients {
  Mat<Real> logits;
  Mat<Real> projections;  // w.r.t. the unit-norm projections
  Mat<Real> features;
};

namespace detail {

template <std::floating_point Real>
void accumulate_dense(Dense<Real>& grad, const Mat<Real>& input, const Mat<Real>& grad_out) {
  grad.weight.noalias() += input.transpose() * grad_out;
  grad.bias += grad_out.colwise().sum();
}

template <std::floating_point Real>
bool present(const Mat<Real>& m, Eigen::Index rows, Eigen::Index cols, const char* name) {
  if (m.size() == 0) return false;
  if (m.rows() != rows || m.cols() != cols) throw ShapeMismatch(std::string("backward: bad upstream shape for ") + name);
  return true;
}

}  // namespace detail

/// Reverse-mode pass; gradients are accumulated into `grads` (same shapes as params).
template <std::floating_point Real>
void backward_accumulate(const NetworkParams<Real>& p, const ForwardRecord<Real>& r,
                         const UpstreamGradients<Real>& up, Activation act, NetworkGradients<Real>& grads) {
  const Eigen::Index b = r.inputs.rows();
  Mat<Real> g_features = Mat<Real>::Zero(b, r.features().cols());
  if (detail::present(up.features, b, g_features.cols(), "features")) g_features += up.features;

  if (detail::present(up.logits, b, r.logits.cols(), "logits")) {
    detail::accumulate_dense(grads.classifier, r.features(), up.logits);
    g_features.noalias() += up.logits * p.classifier.weight.transpose();
  }

  if (detail::present(up.projections, b, r.projections.dim(), "projections")) {
    const Mat<Real> g_raw = project_to_sphere_backward(r.projections, r.projection_norms, up.projections);
    detail::accumulate_dense(grads.projection_out, r.projection_post, g_raw);
    const Mat<Real> g_post = g_raw * p.projection_out.weight.transpose();
    const Mat<Real> g_pre = detail::activate_backward(g_post, r.projection_pre, r.projection_post, act);
    detail::accumulate_dense(grads.projection_hidden, r.features(), g_pre);
    g_features.noalias() += g_pre * p.projection_hidden.weight.transpose();
  }

  Mat<Real> g = std::move(g_features);
  for (std::size_t l = p.encoder.size(); l-- > 0;) {
    const Mat<Real> g_pre = detail::activate_backward(g, r.encoder_pre[l], r.encoder_post[l], act);
    const Mat<Real>& input = l == 0 ? r.inputs : r.encoder_post[l - 1];
    detail::accumulate_dense(grads.encoder[l], input, g_pre);
    if (l > 0) g = g_pre * p.encoder[l].weight.transpose();
  }
}

template <std::floating_point Real>
NetworkGradients<Real> backward(const NetworkParams<Real>& p, const ForwardRecord<Real>& r,
                                const UpstreamGradients<Real>& up, Activation act) {
  NetworkGradients<Real> grads = p.zeros_like();
  backward_accumulate(p, r, up, act, grads);
  return grads;
}

// Optimizer -----------------------------------------------------------------

template <std::floating_point Real>
struct OptimizerState {
  double learning_rate = 1e-3;
  double momentum = 0.9;
  NetworkParams<Real> velocity;

  static OptimizerState for_params(const NetworkParams<Real>& p, double lr, double momentum) {
    if (!(lr > 0)) throw ConfigError("optimizer: learning rate must be > 0");
    if (!(momentum >= 0 && momentum < 1)) throw ConfigError("optimizer: momentum must lie in [0, 1)");
    return OptimizerState{lr, momentum, p.zeros_like()};
  }
};

/// v <- m v + g;  theta <- theta - lr v.
template <std::floating_point Real>
void sgd_momentum_step(NetworkParams<Real>& params, const NetworkGradients<Real>& grads, OptimizerState<Real>& state) {
  auto layers = params.layers();
  const auto grad_layers = grads.layers();
  auto velocity = state.velocity.layers();
  if (grad_layers.size() != layers.size() || velocity.size() != layers.size())
    throw ShapeMismatch("sgd_momentum_step: layer count mismatch");
  const Real m = static_cast<Real>(state.momentum);
  const Real lr = static_cast<Real>(state.learning_rate);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    Dense<Real>& theta = *layers[l];
    const Dense<Real>& g = *grad_layers[l];
    Dense<Real>& v = *velocity[l];
    require_same_shape(theta.weight.rows(), theta.weight.cols(), g.weight.rows(), g.weight.cols(), "sgd weight");
    require_same_shape(theta.weight.rows(), theta.weight.cols(), v.weight.rows(), v.weight.cols(), "sgd velocity");
    v.weight = m * v.weight + g.weight;
    v.bias = m * v.bias + g.bias;
    theta.weight -= lr * v.weight;
    theta.bias -= lr * v.bias;
  }
}

}  // namespace hcr
