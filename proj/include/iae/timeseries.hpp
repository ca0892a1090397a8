#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "iae/rng.hpp"

namespace iae::ts {

struct TimeSeries {
  std::vector<double> samples;
  std::string name;

  std::size_t size() const { return samples.size(); }
  void require_nonempty() const {
    if (samples.empty()) throw std::invalid_argument("time series is empty");
  }
};

/// Causal window (x_t, ..., x_{t-m+1}); values[0] is the most recent sample.
struct Window {
  std::vector<double> values;
  std::size_t anchor = 0;
  std::size_t length() const { return values.size(); }
};

inline Window window(const TimeSeries& series, std::size_t m, std::size_t t) {
  series.require_nonempty();
  if (m < 1) throw std::invalid_argument("window: m must be >= 1");
  if (t >= series.size() || t + 1 < m) {
    throw std::out_of_range("window: insufficient history at t");
  }
  Window w;
  w.anchor = t;
  w.values.resize(m);
  for (std::size_t i = 0; i < m; ++i) w.values[i] = series.samples[t - i];
  return w;
}

/// N-fold time-shifted application of an m-variate scalar map F:
/// returns (F(x_t^{(m)}), ..., F(x_{t-N+1}^{(m)})), newest first.
inline std::vector<double> shifted_map(
    std::size_t m, std::size_t n, const TimeSeries& series, std::size_t t,
    const std::function<double(std::span<const double>)>& f) {
  if (n < 1) throw std::invalid_argument("shifted_map: N must be >= 1");
  if (t + 1 < n + m - 1 || t >= series.size()) {
    throw std::out_of_range("shifted_map: insufficient history at anchor");
  }
  std::vector<double> out(n);
  std::vector<double> buf(m);
  for (std::size_t j = 0; j < n; ++j) {
    const std::size_t tj = t - j;
    for (std::size_t i = 0; i < m; ++i) buf[i] = series.samples[tj - i];
    out[j] = f(std::span<const double>(buf));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic generators
// ---------------------------------------------------------------------------

enum class Kind : std::uint8_t {
  kMa,        // x_t = (1/10) sum_{i=1..10} nu_{t-i}
  kLar,       // x_t = 0.5 x_{t-1} + nu_t
  kNlar,      // x_t = 0.5 x_{t-1} + 0.4*1(x_{t-2} < 0.7) + nu_t
  kSyn1Null,  // x_t = 0.5 x_{t-1} + nu_t, nu ~ N(0,1)
  kSyn1Anom,  // x_t = 0.3 x_{t-1} + 0.3 x_{t-2} + nu_t, nu ~ N(0,1)
  kSyn2Null,  // identical model to kSyn1Null
  kSyn2Anom,  // x_t = 0.5 x_{t-1} + nu'_t, nu' ~ U[-1.5, 1.5]
  kCustomAr,  // x_t = sum_i a_i x_{t-i} + nu_t
};

enum class InnovationDist : std::uint8_t {
  kUniform01,     // U[0, 1]
  kUniformSym,    // U[-1, 1]
  kUniform15Sym,  // U[-1.5, 1.5]
  kNormal,        // N(0, 1)
};

struct GeneratorSpec {
  Kind kind = Kind::kLar;
  InnovationDist dist = InnovationDist::kUniform01;
  std::vector<double> coeffs;  // used by kCustomAr only
  std::size_t length = 0;
  std::uint64_t seed = 0;
  std::size_t burn_in = 1000;

  void validate() const {
    if (length == 0) throw std::invalid_argument("generator: length must be positive");
    if (kind == Kind::kCustomAr && coeffs.empty()) {
      throw std::invalid_argument("generator: custom-ar requires coefficients");
    }
    if (kind != Kind::kMa && burn_in < 100) {
      throw std::invalid_argument("generator: autoregressive kinds require burn-in >= 100");
    }
  }
};

struct GeneratedSeries {
  TimeSeries series;
  // innovations[t] is the draw consumed at step t, aligned with series.
  TimeSeries innovations;
};

namespace detail {

inline double draw(rng::SplitMix64& gen, InnovationDist d) {
  switch (d) {
    case InnovationDist::kUniform01: return gen.uniform01();
    case InnovationDist::kUniformSym: return gen.uniform(-1.0, 1.0);
    case InnovationDist::kUniform15Sym: return gen.uniform(-1.5, 1.5);
    case InnovationDist::kNormal: return gen.normal();
  }
  throw std::invalid_argument("generator: unknown innovation distribution");
}

/// Autoregressive "drift" term for one step, evaluated in a fixed order so
/// generation and regeneration round to identical doubles.
inline double ar_combine(Kind kind, std::span<const double> coeffs,
                         std::span<const double> hist) {
  // hist[0] = x_{t-1}, hist[1] = x_{t-2}, ...
  switch (kind) {
    case Kind::kLar:
    case Kind::kSyn1Null:
    case Kind::kSyn2Null:
    case Kind::kSyn2Anom:
      return 0.5 * hist[0];
    case Kind::kNlar: {
      double a = 0.5 * hist[0];
      if (hist[1] < 0.7) a += 0.4;
      return a;
    }
    case Kind::kSyn1Anom:
      return 0.3 * hist[0] + 0.3 * hist[1];
    case Kind::kCustomAr: {
      double a = 0.0;
      for (std::size_t i = 0; i < coeffs.size(); ++i) a += coeffs[i] * hist[i];
      return a;
    }
    default:
      throw std::invalid_argument("generator: not an autoregressive kind");
  }
}

inline std::size_t ar_order(Kind kind, std::span<const double> coeffs) {
  switch (kind) {
    case Kind::kLar:
    case Kind::kSyn1Null:
    case Kind::kSyn2Null:
    case Kind::kSyn2Anom:
      return 1;
    case Kind::kNlar:
    case Kind::kSyn1Anom:
      return 2;
    case Kind::kCustomAr:
      return coeffs.size();
    default:
      return 0;
  }
}

}  // namespace detail

inline const char* kind_name(Kind k) {
  switch (k) {
    case Kind::kMa: return "ma";
    case Kind::kLar: return "lar";
    case Kind::kNlar: return "nlar";
    case Kind::kSyn1Null: return "syn1-null";
    case Kind::kSyn1Anom: return "syn1-anom";
    case Kind::kSyn2Null: return "syn2-null";
    case Kind::kSyn2Anom: return "syn2-anom";
    case Kind::kCustomAr: return "custom-ar";
  }
  return "?";
}

inline InnovationDist default_dist(Kind k) {
  switch (k) {
    case Kind::kMa:
    case Kind::kLar:
    case Kind::kNlar:
      return InnovationDist::kUniform01;  // Table-1 generators
    case Kind::kSyn1Null:
    case Kind::kSyn1Anom:
    case Kind::kSyn2Null:
      return InnovationDist::kNormal;
    case Kind::kSyn2Anom:
      return InnovationDist::kUniform15Sym;
    case Kind::kCustomAr:
      return InnovationDist::kUniformSym;
  }
  return InnovationDist::kUniform01;
}

/// SYN kinds pin their innovation law; other kinds honor the spec's field.
inline InnovationDist effective_dist(const GeneratorSpec& spec) {
  switch (spec.kind) {
    case Kind::kSyn1Null:
    case Kind::kSyn1Anom:
    case Kind::kSyn2Null:
    case Kind::kSyn2Anom:
      return default_dist(spec.kind);
    default:
      return spec.dist;
  }
}

/// Generates a series together with the innovations that produced it.
///
/// For autoregressive kinds each stored innovation is the representable value
/// nu_t = fl(x_t - a_t), chosen so that both identities hold bit-exactly:
/// re-running the recursion from stored innovations reproduces the series,
/// and the exact linear encoder recovers the stored innovations.
inline GeneratedSeries generate_with_innovations(const GeneratorSpec& spec) {
  spec.validate();
  rng::SplitMix64 gen(spec.seed);
  const std::size_t total = spec.burn_in + spec.length;

  GeneratedSeries out;
  out.series.name = kind_name(spec.kind);
  out.series.samples.reserve(spec.length);
  out.innovations.name = std::string(kind_name(spec.kind)) + "-innovations";
  out.innovations.samples.reserve(spec.length);

  const InnovationDist dist = effective_dist(spec);
  if (spec.kind == Kind::kMa) {
    std::vector<double> nu(total + 10, 0.0);
    for (std::size_t t = 0; t < total; ++t) nu[t + 10] = detail::draw(gen, dist);
    for (std::size_t t = 0; t < total; ++t) {
      // x_t = (1/10) * (nu_{t-1} + ... + nu_{t-10}); missing history is zero.
      double s = 0.0;
      for (std::size_t i = 1; i <= 10; ++i) s += nu[t + 10 - i];
      const double x = s / 10.0;
      if (t >= spec.burn_in) {
        out.series.samples.push_back(x);
        out.innovations.samples.push_back(nu[t + 10]);
      }
    }
    return out;
  }

  const std::size_t order = detail::ar_order(spec.kind, spec.coeffs);
  std::vector<double> hist(order, 0.0);  // hist[0] = x_{t-1}
  for (std::size_t t = 0; t < total; ++t) {
    const double a = detail::ar_combine(spec.kind, spec.coeffs, hist);
    double x = a + detail::draw(gen, dist);
    double nu = x - a;
    // Snap to the fixed point of s -> a + (s - a) so that nu == fl(x - a)
    // and x == fl(a + nu) hold simultaneously (at most 1 ulp from the draw).
    for (int guard = 0; a + nu != x; ++guard) {
      if (guard > 8) throw std::logic_error("generator: innovation fix-up did not converge");
      x = a + nu;
      nu = x - a;
    }
    for (std::size_t i = order; i-- > 1;) hist[i] = hist[i - 1];
    if (order > 0) hist[0] = x;
    if (t >= spec.burn_in) {
      out.series.samples.push_back(x);
      out.innovations.samples.push_back(nu);
    }
  }
  return out;
}

inline TimeSeries generate(const GeneratorSpec& spec) {
  return generate_with_innovations(spec).series;
}

// ---------------------------------------------------------------------------
// CSV: one value per line, optional single header line, '#' comments skipped,
// values serialized with 17 significant digits so round trips are exact.
// ---------------------------------------------------------------------------

inline void save_csv(const TimeSeries& series, const std::string& path,
                     std::span<const std::string> comments = {}) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  for (const std::string& c : comments) os << "# " << c << "\n";
  os << "value\n";
  char buf[40];
  for (double v : series.samples) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    os << buf << "\n";
  }
  if (!os) throw std::runtime_error("write failed: " + path);
}

inline TimeSeries load_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open: " + path);
  TimeSeries out;
  out.name = path;
  std::string line;
  std::size_t line_no = 0;
  bool header_allowed = true;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::size_t begin = line.find_first_not_of(" \t");
    if (begin == std::string::npos) continue;
    if (line[begin] == '#') continue;
    const char* s = line.c_str() + begin;
    char* end = nullptr;
    const double v = std::strtod(s, &end);
    while (end && *end == ' ') ++end;
    if (end == s || (end && *end != '\0')) {
      if (header_allowed) {
        header_allowed = false;  // a single non-numeric header line is tolerated
        continue;
      }
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": malformed line: " + line);
    }
    header_allowed = false;
    out.samples.push_back(v);
  }
  if (out.samples.empty()) {
    throw std::runtime_error(path + ": no data values found");
  }
  return out;
}

}  // namespace iae::ts
