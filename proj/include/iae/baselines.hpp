#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "iae/autodiff.hpp"
#include "iae/errors.hpp"
#include "iae/iae.hpp"
#include "iae/nn.hpp"
#include "iae/rng.hpp"
#include "iae/timeseries.hpp"

namespace iae::baselines {

using ad::Matrix;

/// One-step linear prediction-error filter x_t ~ a . (x_{t-1},...,x_{t-k}) + c.
struct LinearPredictor {
  int order = 0;
  Eigen::VectorXd coeffs;
  double intercept = 0.0;

  double predict(std::span<const double> history) const {
    // history[0] = x_{t-1}, history[1] = x_{t-2}, ...
    double p = intercept;
    for (int i = 0; i < order; ++i) p += coeffs(i) * history[static_cast<std::size_t>(i)];
    return p;
  }

  /// Single-layer linear network view, sharing the model file format.
  nn::DenseNet as_net() const {
    nn::Layer l;
    l.W.resize(1, order);
    for (int i = 0; i < order; ++i) l.W(0, i) = coeffs(i);
    l.b = Matrix::Constant(1, 1, intercept);
    l.act = nn::Activation::kLinear;
    nn::DenseNet net;
    net.layers.push_back(std::move(l));
    return net;
  }
};

/// Ordinary least squares of x_t on (x_{t-1}, ..., x_{t-k}, 1).
inline LinearPredictor lls_fit(const ts::TimeSeries& series, int order) {
  if (order < 1) throw std::invalid_argument("lls_fit: order must be >= 1");
  if (series.size() < static_cast<std::size_t>(10 * order)) {
    throw std::invalid_argument("lls_fit: series must hold at least 10*order samples");
  }
  const long rows = static_cast<long>(series.size()) - order;
  Matrix design(rows, order + 1);
  Eigen::VectorXd target(rows);
  for (long r = 0; r < rows; ++r) {
    const std::size_t t = static_cast<std::size_t>(r + order);
    for (int i = 0; i < order; ++i) {
      design(r, i) = series.samples[t - 1 - static_cast<std::size_t>(i)];
    }
    design(r, order) = 1.0;
    target(r) = series.samples[t];
  }
  Eigen::ColPivHouseholderQR<Matrix> qr(design);
  if (qr.rank() < order + 1) {
    throw NumericError("lls_fit: rank-deficient design (constant or degenerate series)");
  }
  const Eigen::VectorXd beta = qr.solve(target);
  LinearPredictor p;
  p.order = order;
  p.coeffs = beta.head(order);
  p.intercept = beta(order);
  return p;
}

/// One-step prediction errors e_t = x_t - prediction, aligned at t = order.
inline ts::TimeSeries residuals(const LinearPredictor& predictor, const ts::TimeSeries& series) {
  if (series.size() <= static_cast<std::size_t>(predictor.order)) {
    throw std::invalid_argument("residuals: series shorter than the model order");
  }
  ts::TimeSeries out;
  out.name = series.name + "-lls-residuals";
  const std::size_t k = static_cast<std::size_t>(predictor.order);
  out.samples.reserve(series.size() - k);
  std::vector<double> hist(k);
  for (std::size_t t = k; t < series.size(); ++t) {
    for (std::size_t i = 0; i < k; ++i) hist[i] = series.samples[t - 1 - i];
    out.samples.push_back(series.samples[t] - predictor.predict(hist));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Nonlinear least-squares baseline: a dense network trained on mean-squared
// one-step prediction error. The architecture mirrors the IAE encoder.
// ---------------------------------------------------------------------------

struct NllsConfig {
  double alpha = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int batch = 64;
  int updates = 2000;
  std::uint64_t seed = 0;
  std::vector<int> hidden = {100, 50, 25};
};

inline nn::DenseNet nlls_train(const ts::TimeSeries& series, int m, const NllsConfig& config) {
  if (m < 1) throw std::invalid_argument("nlls_train: m must be >= 1");
  if (series.size() < static_cast<std::size_t>(m + config.batch)) {
    throw std::invalid_argument("nlls_train: series too short");
  }
  std::vector<nn::LayerSpec> spec;
  for (int h : config.hidden) spec.push_back({h, nn::Activation::kTanh});
  spec.push_back({1, nn::Activation::kLinear});
  nn::DenseNet net = nn::init_params(m, spec, rng::derive_stream(config.seed, "nlls.init"));

  auto params = nn::parameters(net);
  nn::AdamState adam(params, {config.alpha, config.beta1, config.beta2, config.adam_eps});
  rng::SplitMix64 gen(rng::derive_stream(config.seed, "nlls.loop"));
  const std::size_t anchors = series.size() - static_cast<std::size_t>(m);

  Matrix xw(m, config.batch), target(1, config.batch);
  for (int update = 0; update < config.updates; ++update) {
    for (int i = 0; i < config.batch; ++i) {
      // Predict x_t from (x_{t-1}, ..., x_{t-m}).
      const std::size_t t = static_cast<std::size_t>(m) + gen.uniform_index(anchors);
      for (int r = 0; r < m; ++r) xw(r, i) = series.samples[t - 1 - static_cast<std::size_t>(r)];
      target(0, i) = series.samples[t];
    }
    ad::Graph g;
    nn::BoundNet bn = nn::bind(g, net, /*requires_grad=*/true);
    ad::NodeRef pred = nn::apply(g, bn, g.input(xw));
    ad::NodeRef loss = g.mean(g.square(g.sub(pred, g.constant(target))));
    if (!std::isfinite(g.value(loss)(0, 0))) {
      throw NumericError("nlls_train: non-finite loss at update " + std::to_string(update + 1));
    }
    adam.step(params, g.gradients(loss, bn.params));
  }
  return net;
}

/// Prediction errors of a network predictor, aligned at t = m.
inline ts::TimeSeries nlls_residuals(const nn::DenseNet& net, const ts::TimeSeries& series) {
  const int m = net.input_dim();
  if (series.size() <= static_cast<std::size_t>(m)) {
    throw std::invalid_argument("nlls_residuals: series shorter than the window");
  }
  const std::size_t count = series.size() - static_cast<std::size_t>(m);
  Matrix xw(m, static_cast<long>(count));
  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t t = static_cast<std::size_t>(m) + k;
    for (int r = 0; r < m; ++r) {
      xw(r, static_cast<long>(k)) = series.samples[t - 1 - static_cast<std::size_t>(r)];
    }
  }
  const Matrix pred = nn::apply(net, xw);
  ts::TimeSeries out;
  out.name = series.name + "-nlls-residuals";
  out.samples.resize(count);
  for (std::size_t k = 0; k < count; ++k) {
    out.samples[k] = series.samples[static_cast<std::size_t>(m) + k] - pred(0, static_cast<long>(k));
  }
  return out;
}

}  // namespace iae::baselines
