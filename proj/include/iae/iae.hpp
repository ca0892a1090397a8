#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "iae/autodiff.hpp"
#include "iae/errors.hpp"
#include "iae/nn.hpp"
#include "iae/rng.hpp"
#include "iae/timeseries.hpp"

namespace iae::model {

using ad::Matrix;

/// Innovations autoencoder: encoder G (R^m -> R), decoder H (R^{k_nu m} -> R),
/// and the Wasserstein discriminator D (R^N -> R) used during training.
struct IaeModel {
  nn::DenseNet encoder;
  nn::DenseNet decoder;
  nn::DenseNet discriminator;
  bool has_discriminator = false;
  int m = 0;           // encoder window
  int dec_window = 0;  // decoder window n = k_nu * m
  int n_block = 0;     // training block dimension N

  int k_nu() const { return m > 0 ? dec_window / m : 0; }

  void validate() const {
    encoder.validate();
    decoder.validate();
    if (encoder.input_dim() != m) throw std::invalid_argument("IaeModel: encoder input != m");
    if (encoder.output_dim() != 1) throw std::invalid_argument("IaeModel: encoder output must be scalar");
    if (decoder.input_dim() != dec_window) {
      throw std::invalid_argument("IaeModel: decoder input != decoder window");
    }
    if (decoder.output_dim() != 1) throw std::invalid_argument("IaeModel: decoder output must be scalar");
    if (has_discriminator) {
      discriminator.validate();
      if (discriminator.input_dim() != n_block) {
        throw std::invalid_argument("IaeModel: discriminator input != N");
      }
      if (discriminator.output_dim() != 1) {
        throw std::invalid_argument("IaeModel: discriminator output must be scalar");
      }
    }
  }
};

/// Architecture descriptor for training. N defaults to 3m, the decoder window
/// to k_nu * m.
struct IaeArch {
  int m = 20;
  int k_nu = 3;
  int n_block = 0;  // 0 selects the default N = 3m
  std::vector<int> hidden = {100, 50, 25};

  int resolved_n() const { return n_block > 0 ? n_block : 3 * m; }

  void validate() const {
    if (m < 1 || k_nu < 1) throw std::invalid_argument("IaeArch: m and k_nu must be >= 1");
    if (hidden.empty()) throw std::invalid_argument("IaeArch: need at least one hidden layer");
    if (resolved_n() < k_nu * m) {
      throw std::invalid_argument("IaeArch: training block N must cover the decoder window");
    }
  }
};

struct TrainConfig {
  double lambda_gp = 5.0;  // gradient penalty weight
  double mu = 0.1;         // reconstruction weight
  double alpha = 2e-4;     // Adam step size
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int n_critic = 5;   // discriminator updates per generator update
  int batch = 64;
  int max_updates = 20000;  // generator updates
  // Optional early stop on a smoothed discriminator-loss plateau; disabled by
  // default because the loss descends slowly enough to fake a plateau early.
  int plateau_window = 0;
  double plateau_rel_tol = 1e-3;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(lambda_gp > 0.0)) throw std::invalid_argument("train config: lambda must be > 0");
    if (mu < 0.0) throw std::invalid_argument("train config: mu must be >= 0");
    if (batch < 1) throw std::invalid_argument("train config: batch must be >= 1");
    if (n_critic < 1) throw std::invalid_argument("train config: n_critic must be >= 1");
    if (max_updates < 0) throw std::invalid_argument("train config: max_updates must be >= 0");
    nn::AdamConfig{alpha, beta1, beta2, adam_eps}.validate();
  }

  /// Appendix-style hyperparameters for the field-data regime.
  static TrainConfig field_preset() {
    TrainConfig c;
    c.mu = 0.01;
    c.lambda_gp = 3.0;
    c.alpha = 0.001;
    return c;
  }
};

/// Encoder output; values are nominally in [-1, 1] under the null model.
/// values[i] corresponds to original sample index anchor + i.
struct InnovationsSequence {
  std::vector<double> values;
  std::size_t anchor = 0;  // first valid t, always m-1
};

// ---------------------------------------------------------------------------
// Encoding / decoding
// ---------------------------------------------------------------------------

namespace detail {

/// Window matrix with columns (x_t, ..., x_{t-m+1}) for t = first..last.
inline Matrix window_matrix(std::span<const double> x, int m, std::size_t first, std::size_t count) {
  Matrix w(m, static_cast<long>(count));
  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t t = first + k;
    for (int i = 0; i < m; ++i) w(i, static_cast<long>(k)) = x[t - static_cast<std::size_t>(i)];
  }
  return w;
}

}  // namespace detail

inline InnovationsSequence encode(const IaeModel& model, const ts::TimeSeries& series) {
  model.validate();
  const std::size_t m = static_cast<std::size_t>(model.m);
  if (series.size() < m) throw std::invalid_argument("encode: series shorter than m");
  const std::size_t count = series.size() - m + 1;
  InnovationsSequence out;
  out.anchor = m - 1;
  out.values.resize(count);
  // Chunked batch evaluation keeps the working set small.
  const std::size_t chunk = 8192;
  for (std::size_t base = 0; base < count; base += chunk) {
    const std::size_t take = std::min(chunk, count - base);
    const Matrix w = detail::window_matrix(series.samples, model.m, m - 1 + base, take);
    const Matrix nu = nn::apply(model.encoder, w);
    for (std::size_t k = 0; k < take; ++k) out.values[base + k] = nu(0, static_cast<long>(k));
  }
  return out;
}

/// Reconstructs x_hat_t = H(nu_t, ..., nu_{t-n+1}). Output sample i estimates
/// the original series at index innovations.anchor + dec_window - 1 + i.
inline ts::TimeSeries decode(const IaeModel& model, const InnovationsSequence& innovations) {
  model.validate();
  const std::size_t n = static_cast<std::size_t>(model.dec_window);
  if (innovations.values.size() < n) {
    throw std::invalid_argument("decode: insufficient innovations history");
  }
  const std::size_t count = innovations.values.size() - n + 1;
  ts::TimeSeries out;
  out.name = "reconstruction";
  out.samples.resize(count);
  const std::size_t chunk = 8192;
  for (std::size_t base = 0; base < count; base += chunk) {
    const std::size_t take = std::min(chunk, count - base);
    const Matrix w = detail::window_matrix(innovations.values, model.dec_window, n - 1 + base, take);
    const Matrix xh = nn::apply(model.decoder, w);
    for (std::size_t k = 0; k < take; ++k) out.samples[base + k] = xh(0, static_cast<long>(k));
  }
  return out;
}

/// Index of the first original sample that decode() can reconstruct.
inline std::size_t reconstruction_offset(const IaeModel& model) {
  return static_cast<std::size_t>(model.m + model.dec_window - 2);
}

// ---------------------------------------------------------------------------
// Closed-form AR(1) autoencoder (linear): encoder (1, -alpha), truncated
// decoder (1, alpha, ..., alpha^{K-1}). Serves as the exact oracle model.
// ---------------------------------------------------------------------------

inline IaeModel closed_form_ar1(double alpha, int truncation) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw std::invalid_argument("closed_form_ar1: alpha must lie in (0,1)");
  }
  if (truncation < 1) throw std::invalid_argument("closed_form_ar1: truncation must be >= 1");
  IaeModel model;
  model.m = 2;
  model.dec_window = truncation;
  model.n_block = 6;
  nn::Layer enc;
  enc.W.resize(1, 2);
  enc.W(0, 0) = 1.0;
  enc.W(0, 1) = -alpha;
  enc.b = Matrix::Zero(1, 1);
  enc.act = nn::Activation::kLinear;
  model.encoder.layers.push_back(std::move(enc));
  nn::Layer dec;
  dec.W.resize(1, truncation);
  double p = 1.0;
  for (int i = 0; i < truncation; ++i) {
    dec.W(0, i) = p;
    p *= alpha;
  }
  dec.b = Matrix::Zero(1, 1);
  dec.act = nn::Activation::kLinear;
  model.decoder.layers.push_back(std::move(dec));
  return model;
}

// ---------------------------------------------------------------------------
// Training (Wasserstein GAN with gradient penalty + reconstruction term)
// ---------------------------------------------------------------------------

struct HistoryRow {
  int update = 0;
  double d_loss = 0.0;
  double g_loss = 0.0;
  double recon_mse = 0.0;
};

struct TrainResult {
  IaeModel model;
  std::vector<HistoryRow> history;
  int skipped_steps = 0;  // Adam steps skipped due to non-finite gradients
};

namespace detail {

inline nn::DenseNet build_net(int input_dim, const std::vector<int>& hidden,
                              nn::Activation hidden_act, nn::Activation last_hidden_act,
                              nn::Activation out_act, std::uint64_t seed) {
  std::vector<nn::LayerSpec> spec;
  for (std::size_t i = 0; i < hidden.size(); ++i) {
    const bool last = (i + 1 == hidden.size());
    spec.push_back({hidden[i], last ? last_hidden_act : hidden_act});
  }
  spec.push_back({1, out_act});
  return nn::init_params(input_dim, spec, seed);
}

}  // namespace detail

/// Fresh untrained networks for the given architecture. Encoder and decoder
/// use tanh hidden layers with linear outputs; the discriminator uses tanh on
/// its first two hidden layers and linear afterwards.
inline IaeModel init_model(const IaeArch& arch, std::uint64_t seed) {
  arch.validate();
  IaeModel model;
  model.m = arch.m;
  model.dec_window = arch.k_nu * arch.m;
  model.n_block = arch.resolved_n();
  model.encoder = detail::build_net(arch.m, arch.hidden, nn::Activation::kTanh,
                                    nn::Activation::kTanh, nn::Activation::kLinear,
                                    rng::derive_stream(seed, "init.encoder"));
  model.decoder = detail::build_net(model.dec_window, arch.hidden, nn::Activation::kTanh,
                                    nn::Activation::kTanh, nn::Activation::kLinear,
                                    rng::derive_stream(seed, "init.decoder"));
  model.discriminator = detail::build_net(model.n_block, arch.hidden, nn::Activation::kTanh,
                                          nn::Activation::kLinear, nn::Activation::kLinear,
                                          rng::derive_stream(seed, "init.discriminator"));
  model.has_discriminator = true;
  return model;
}

inline TrainResult train(const TrainConfig& config, const ts::TimeSeries& series,
                         const IaeArch& arch) {
  config.validate();
  arch.validate();
  const int m = arch.m;
  const int n_blk = arch.resolved_n();
  const int n_dec = arch.k_nu * arch.m;
  const int b = config.batch;
  const int win = n_blk + m - 1;  // samples per training window
  const int per = n_blk - n_dec + 1;  // decoder outputs per window
  if (series.size() < static_cast<std::size_t>(win + b)) {
    throw std::invalid_argument("train: series too short for block and batch size");
  }

  TrainResult result;
  result.model = init_model(arch, config.seed);
  IaeModel& model = result.model;

  const nn::AdamConfig adam_cfg{config.alpha, config.beta1, config.beta2, config.adam_eps};
  auto enc_params = nn::parameters(model.encoder);
  auto dec_params = nn::parameters(model.decoder);
  auto disc_params = nn::parameters(model.discriminator);
  nn::AdamState adam_enc(enc_params, adam_cfg);
  nn::AdamState adam_dec(dec_params, adam_cfg);
  nn::AdamState adam_disc(disc_params, adam_cfg);

  rng::SplitMix64 gen(rng::derive_stream(config.seed, "train.loop"));
  const std::size_t anchors = series.size() - static_cast<std::size_t>(win) + 1;

  const auto sample_windows = [&](Matrix& xw, Matrix& targets) {
    // xw: encoder inputs, column (i*N + j) = window at t_i - j, newest first.
    // targets(r, i) = x_{t_i - r} for the reconstructed positions.
    xw.resize(m, static_cast<long>(n_blk) * b);
    targets.resize(per, b);
    for (int i = 0; i < b; ++i) {
      const std::size_t t = static_cast<std::size_t>(win) - 1 + gen.uniform_index(anchors);
      for (int j = 0; j < n_blk; ++j) {
        const std::size_t tj = t - static_cast<std::size_t>(j);
        for (int r = 0; r < m; ++r) {
          xw(r, static_cast<long>(i) * n_blk + j) = series.samples[tj - static_cast<std::size_t>(r)];
        }
      }
      for (int r = 0; r < per; ++r) {
        targets(r, i) = series.samples[t - static_cast<std::size_t>(r)];
      }
    }
  };

  std::vector<double> d_history;
  d_history.reserve(static_cast<std::size_t>(config.max_updates));
  Matrix xw, targets;

  for (int update = 1; update <= config.max_updates; ++update) {
    double d_loss_sum = 0.0;
    for (int step = 0; step < config.n_critic; ++step) {
      sample_windows(xw, targets);
      const Matrix nu_row = nn::apply(model.encoder, xw);
      const Matrix nu_hat = Eigen::Map<const Matrix>(nu_row.data(), n_blk, b);
      Matrix u(n_blk, b), nu_bar(n_blk, b);
      for (int i = 0; i < b; ++i) {
        for (int j = 0; j < n_blk; ++j) u(j, i) = gen.uniform(-1.0, 1.0);
        const double eps = gen.uniform01();
        nu_bar.col(i) = eps * u.col(i) + (1.0 - eps) * nu_hat.col(i);
      }

      ad::Graph g;
      nn::BoundNet disc = nn::bind(g, model.discriminator, /*requires_grad=*/true);
      ad::NodeRef in_bar = g.input(nu_bar, /*requires_grad=*/true);
      ad::NodeRef out_bar = nn::apply(g, disc, in_bar);
      const ad::NodeRef wrt_in[] = {in_bar};
      ad::NodeRef gin = g.backward(g.sum(out_bar), wrt_in)[0];
      ad::NodeRef norms = g.col_norms(gin, 1e-12);
      ad::NodeRef pen = g.mean(g.square(g.sub(norms, g.constant(Matrix::Ones(1, b)))));
      ad::NodeRef gap = g.sub(g.mean(nn::apply(g, disc, g.constant(nu_hat))),
                              g.mean(nn::apply(g, disc, g.constant(u))));
      ad::NodeRef d_loss = g.add(gap, g.scale(pen, config.lambda_gp));

      const double d_val = g.value(d_loss)(0, 0);
      if (!std::isfinite(d_val)) {
        throw NumericError("train: non-finite discriminator loss at update " +
                           std::to_string(update));
      }
      d_loss_sum += d_val;
      if (!adam_disc.step(disc_params, g.gradients(d_loss, disc.params))) {
        ++result.skipped_steps;
      }
    }

    sample_windows(xw, targets);
    ad::Graph g;
    nn::BoundNet enc = nn::bind(g, model.encoder, /*requires_grad=*/true);
    nn::BoundNet dec = nn::bind(g, model.decoder, /*requires_grad=*/true);
    nn::BoundNet disc = nn::bind(g, model.discriminator, /*requires_grad=*/false);
    ad::NodeRef nu_mat = g.reshape(nn::apply(g, enc, g.input(xw)), n_blk, b);
    ad::NodeRef d_out = nn::apply(g, disc, nu_mat);
    ad::NodeRef xhat = g.reshape(nn::apply(g, dec, g.unfold(nu_mat, n_dec)), per, b);
    ad::NodeRef err = g.sub(xhat, g.constant(targets));
    ad::NodeRef rec = g.mean(g.col_norms(err, 1e-12));
    ad::NodeRef g_loss = g.add(g.scale(g.mean(d_out), -1.0), g.scale(rec, config.mu));

    const double g_val = g.value(g_loss)(0, 0);
    if (!std::isfinite(g_val)) {
      throw NumericError("train: non-finite generator loss at update " + std::to_string(update));
    }
    const double recon_mse = g.value(err).array().square().mean();

    std::vector<ad::NodeRef> wrt = enc.params;
    wrt.insert(wrt.end(), dec.params.begin(), dec.params.end());
    std::vector<Matrix> grads = g.gradients(g_loss, wrt);
    std::vector<Matrix> enc_grads(grads.begin(), grads.begin() + static_cast<long>(enc.params.size()));
    std::vector<Matrix> dec_grads(grads.begin() + static_cast<long>(enc.params.size()), grads.end());
    if (!adam_enc.step(enc_params, enc_grads)) ++result.skipped_steps;
    if (!adam_dec.step(dec_params, dec_grads)) ++result.skipped_steps;

    const double d_mean = d_loss_sum / config.n_critic;
    result.history.push_back({update, d_mean, g_val, recon_mse});
    d_history.push_back(d_mean);

    // Plateau stop: smoothed discriminator loss stops moving.
    const int w = config.plateau_window;
    if (w > 0 && static_cast<int>(d_history.size()) >= 2 * w) {
      double cur = 0.0, prev = 0.0;
      const std::size_t k = d_history.size();
      for (int i = 0; i < w; ++i) {
        cur += d_history[k - 1 - static_cast<std::size_t>(i)];
        prev += d_history[k - 1 - static_cast<std::size_t>(w + i)];
      }
      cur /= w;
      prev /= w;
      if (std::fabs(cur - prev) / std::max(std::fabs(prev), 1e-8) < config.plateau_rel_tol) {
        break;
      }
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Model file: the network serialization format extended with m, k_nu, N.
// ---------------------------------------------------------------------------

inline constexpr std::uint32_t kModelFormatVersion = 1;

inline void save_model(std::ostream& os, const IaeModel& model) {
  model.validate();
  if (model.dec_window % model.m != 0) {
    throw std::invalid_argument("save_model: decoder window must be a multiple of m");
  }
  os.write("IAEM", 4);
  nn::io::put_u32(os, kModelFormatVersion);
  nn::io::put_u32(os, static_cast<std::uint32_t>(model.m));
  nn::io::put_u32(os, static_cast<std::uint32_t>(model.k_nu()));
  nn::io::put_u32(os, static_cast<std::uint32_t>(model.n_block));
  nn::io::put_u8(os, model.has_discriminator ? 1 : 0);
  nn::save_net(os, model.encoder);
  nn::save_net(os, model.decoder);
  if (model.has_discriminator) nn::save_net(os, model.discriminator);
}

inline IaeModel load_model(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  if (is.gcount() != 4 || std::string(magic, 4) != "IAEM") {
    throw std::runtime_error("model file: bad magic");
  }
  const std::uint32_t version = nn::io::get_u32(is);
  if (version != kModelFormatVersion) {
    throw std::runtime_error("model file: unsupported version " + std::to_string(version));
  }
  IaeModel model;
  model.m = static_cast<int>(nn::io::get_u32(is));
  const int k_nu = static_cast<int>(nn::io::get_u32(is));
  model.dec_window = k_nu * model.m;
  model.n_block = static_cast<int>(nn::io::get_u32(is));
  model.has_discriminator = nn::io::get_u8(is) != 0;
  model.encoder = nn::load_net(is);
  model.decoder = nn::load_net(is);
  if (model.has_discriminator) model.discriminator = nn::load_net(is);
  model.validate();
  return model;
}

inline void save_model_file(const std::string& path, const IaeModel& model) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  save_model(os, model);
  if (!os) throw std::runtime_error("write failed: " + path);
}

inline IaeModel load_model_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open: " + path);
  return load_model(is);
}

}  // namespace iae::model
