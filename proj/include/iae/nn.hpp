#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "iae/autodiff.hpp"
#include "iae/rng.hpp"

namespace iae::nn {

using ad::Matrix;

enum class Activation : std::uint8_t { kTanh = 0, kLinear = 1 };

struct Layer {
  Matrix W;  // out x in
  Matrix b;  // out x 1
  Activation act = Activation::kTanh;
};

/// Dense feed-forward network; columns of the evaluation input are samples.
struct DenseNet {
  std::vector<Layer> layers;

  int input_dim() const { return layers.empty() ? 0 : static_cast<int>(layers.front().W.cols()); }
  int output_dim() const { return layers.empty() ? 0 : static_cast<int>(layers.back().W.rows()); }

  void validate() const {
    if (layers.empty()) throw std::invalid_argument("DenseNet: no layers");
    for (std::size_t i = 1; i < layers.size(); ++i) {
      if (layers[i].W.cols() != layers[i - 1].W.rows()) {
        throw std::invalid_argument("DenseNet: layer dimensions do not chain");
      }
    }
    for (const Layer& l : layers) {
      if (l.b.rows() != l.W.rows() || l.b.cols() != 1) {
        throw std::invalid_argument("DenseNet: bias shape mismatch");
      }
    }
  }
};

struct LayerSpec {
  int units = 0;
  Activation act = Activation::kTanh;
};

/// Weights drawn uniformly in +-sqrt(6/(fan_in+fan_out)), biases zero.
inline DenseNet init_params(int input_dim, const std::vector<LayerSpec>& spec, std::uint64_t seed) {
  if (input_dim < 1 || spec.empty()) throw std::invalid_argument("init_params: empty spec");
  rng::SplitMix64 gen(seed);
  DenseNet net;
  int in = input_dim;
  for (const LayerSpec& s : spec) {
    Layer l;
    l.W.resize(s.units, in);
    const double bound = std::sqrt(6.0 / static_cast<double>(in + s.units));
    for (long r = 0; r < l.W.rows(); ++r) {
      for (long c = 0; c < l.W.cols(); ++c) {
        l.W(r, c) = gen.uniform(-bound, bound);
      }
    }
    l.b = Matrix::Zero(s.units, 1);
    l.act = s.act;
    net.layers.push_back(std::move(l));
    in = s.units;
  }
  return net;
}

/// Batch forward pass; each column of x is one input vector.
inline Matrix apply(const DenseNet& net, const Matrix& x) {
  if (x.rows() != net.input_dim()) {
    throw std::invalid_argument("net_forward: input dimension mismatch");
  }
  Matrix h = x;
  for (const Layer& l : net.layers) {
    Matrix z;
    z.noalias() = l.W * h;
    z.colwise() += Eigen::VectorXd::ConstMapType(l.b.data(), l.b.rows());
    if (l.act == Activation::kTanh) fastmath::tanh_inplace(z);
    h = std::move(z);
  }
  return h;
}

inline std::vector<double> apply(const DenseNet& net, const std::vector<double>& x) {
  Matrix in(static_cast<long>(x.size()), 1);
  for (std::size_t i = 0; i < x.size(); ++i) in(static_cast<long>(i), 0) = x[i];
  Matrix out = apply(net, in);
  std::vector<double> v(static_cast<std::size_t>(out.rows()));
  for (long i = 0; i < out.rows(); ++i) v[static_cast<std::size_t>(i)] = out(i, 0);
  return v;
}

/// A network bound into a graph: parameter leaves plus the architecture
/// needed to emit the forward ops.
struct BoundNet {
  const DenseNet* arch = nullptr;
  std::vector<ad::NodeRef> params;  // W0, b0, W1, b1, ...
};

inline BoundNet bind(ad::Graph& g, const DenseNet& net, bool requires_grad) {
  BoundNet bn;
  bn.arch = &net;
  for (const Layer& l : net.layers) {
    bn.params.push_back(requires_grad ? g.input(l.W, true) : g.constant(l.W));
    bn.params.push_back(requires_grad ? g.input(l.b, true) : g.constant(l.b));
  }
  return bn;
}

inline ad::NodeRef apply(ad::Graph& g, const BoundNet& net, ad::NodeRef x) {
  ad::NodeRef h = x;
  for (std::size_t i = 0; i < net.arch->layers.size(); ++i) {
    h = g.affine(net.params[2 * i], h, net.params[2 * i + 1]);
    if (net.arch->layers[i].act == Activation::kTanh) h = g.tanh(h);
  }
  return h;
}

inline std::vector<Matrix*> parameters(DenseNet& net) {
  std::vector<Matrix*> out;
  for (Layer& l : net.layers) {
    out.push_back(&l.W);
    out.push_back(&l.b);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct AdamConfig {
  double alpha = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const {
    if (!(alpha > 0.0) || beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) {
      throw std::invalid_argument("AdamConfig: require alpha>0 and 0<=beta1,beta2<1");
    }
  }
};

/// Per-parameter first/second moment accumulators with bias correction.
class AdamState {
 public:
  AdamState(const std::vector<Matrix*>& params, AdamConfig cfg) : cfg_(cfg) {
    cfg_.validate();
    for (const Matrix* p : params) {
      m_.push_back(Matrix::Zero(p->rows(), p->cols()));
      v_.push_back(Matrix::Zero(p->rows(), p->cols()));
    }
  }

  long step_count() const { return step_; }

  /// One Adam update. Returns false and leaves parameters and state untouched
  /// when any gradient component is non-finite (the step is skipped).
  bool step(const std::vector<Matrix*>& params, const std::vector<Matrix>& grads) {
    if (params.size() != m_.size() || grads.size() != m_.size()) {
      throw std::invalid_argument("adam_step: parameter/gradient count mismatch");
    }
    for (std::size_t i = 0; i < grads.size(); ++i) {
      if (grads[i].rows() != params[i]->rows() || grads[i].cols() != params[i]->cols()) {
        throw std::invalid_argument("adam_step: gradient shape mismatch");
      }
      if (!grads[i].allFinite()) return false;
    }
    ++step_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    for (std::size_t i = 0; i < grads.size(); ++i) {
      m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * grads[i];
      v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * grads[i].cwiseProduct(grads[i]);
      *params[i] -= cfg_.alpha * (m_[i] / c1).cwiseQuotient(((v_[i] / c2).cwiseSqrt().array() + cfg_.eps).matrix());
    }
    return true;
  }

 private:
  AdamConfig cfg_;
  std::vector<Matrix> m_, v_;
  long step_ = 0;
};

// ---------------------------------------------------------------------------
// Serialization: version tag, architecture descriptor, then row-major
// float64 parameter arrays, all little-endian.
// ---------------------------------------------------------------------------

namespace io {

inline void put_u8(std::ostream& os, std::uint8_t v) {
  os.put(static_cast<char>(v));
}
inline void put_u32(std::ostream& os, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) os.put(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_f64(std::ostream& os, double d) {
  const std::uint64_t v = std::bit_cast<std::uint64_t>(d);
  for (int i = 0; i < 8; ++i) os.put(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline std::uint8_t get_u8(std::istream& is) {
  const int c = is.get();
  if (c < 0) throw std::runtime_error("model file: unexpected end of file");
  return static_cast<std::uint8_t>(c);
}
inline std::uint32_t get_u32(std::istream& is) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(get_u8(is)) << (8 * i);
  return v;
}
inline double get_f64(std::istream& is) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(get_u8(is)) << (8 * i);
  return std::bit_cast<double>(v);
}

}  // namespace io

inline constexpr std::uint32_t kNetFormatVersion = 1;

inline void save_net(std::ostream& os, const DenseNet& net) {
  os.write("IAEN", 4);
  io::put_u32(os, kNetFormatVersion);
  io::put_u32(os, static_cast<std::uint32_t>(net.layers.size()));
  io::put_u32(os, static_cast<std::uint32_t>(net.input_dim()));
  for (const Layer& l : net.layers) {
    io::put_u32(os, static_cast<std::uint32_t>(l.W.rows()));
    io::put_u8(os, static_cast<std::uint8_t>(l.act));
  }
  for (const Layer& l : net.layers) {
    for (long r = 0; r < l.W.rows(); ++r) {
      for (long c = 0; c < l.W.cols(); ++c) io::put_f64(os, l.W(r, c));
    }
    for (long r = 0; r < l.b.rows(); ++r) io::put_f64(os, l.b(r, 0));
  }
}

inline DenseNet load_net(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  if (is.gcount() != 4 || std::string(magic, 4) != "IAEN") {
    throw std::runtime_error("model file: bad magic");
  }
  const std::uint32_t version = io::get_u32(is);
  if (version != kNetFormatVersion) {
    throw std::runtime_error("model file: unsupported version " + std::to_string(version));
  }
  const std::uint32_t n_layers = io::get_u32(is);
  std::uint32_t in = io::get_u32(is);
  DenseNet net;
  std::vector<std::uint32_t> dims(n_layers);
  for (std::uint32_t i = 0; i < n_layers; ++i) {
    Layer l;
    dims[i] = io::get_u32(is);
    const std::uint8_t act = io::get_u8(is);
    if (act > 1) throw std::runtime_error("model file: unknown activation code");
    l.act = static_cast<Activation>(act);
    net.layers.push_back(std::move(l));
  }
  for (std::uint32_t i = 0; i < n_layers; ++i) {
    Layer& l = net.layers[i];
    l.W.resize(dims[i], in);
    for (long r = 0; r < l.W.rows(); ++r) {
      for (long c = 0; c < l.W.cols(); ++c) l.W(r, c) = io::get_f64(is);
    }
    l.b.resize(dims[i], 1);
    for (long r = 0; r < l.b.rows(); ++r) l.b(r, 0) = io::get_f64(is);
    in = dims[i];
  }
  net.validate();
  return net;
}

inline void save_net_file(const std::string& path, const DenseNet& net) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  save_net(os, net);
  if (!os) throw std::runtime_error("write failed: " + path);
}

inline DenseNet load_net_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open: " + path);
  return load_net(is);
}

}  // namespace iae::nn
