#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "iae/rng.hpp"
#include "iae/stats.hpp"

namespace iae::detect {

// ---------------------------------------------------------------------------
// Quantizer: Q equal-length bins over [-1, 1], out-of-range values clamped
// into the edge bins.
// ---------------------------------------------------------------------------

inline int quantize(double nu, int q) {
  if (q < 2) throw std::invalid_argument("quantize: Q must be >= 2");
  if (nu <= -1.0 + 2.0 / q) return 1;
  if (nu >= 1.0 - 2.0 / q) return q;
  // nu in (-1 + 2(i-1)/Q, -1 + 2i/Q]  =>  i = ceil((nu+1) * Q/2)
  const int i = static_cast<int>(std::ceil((nu + 1.0) * static_cast<double>(q) / 2.0));
  return std::clamp(i, 1, q);
}

inline std::vector<int> quantize(std::span<const double> values, int q) {
  std::vector<int> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = quantize(values[i], q);
  return out;
}

// ---------------------------------------------------------------------------
// Coincidence statistics T = (T_0, ..., T_N): T_i counts the bins holding
// exactly i samples. Identities sum T_i = Q and sum i*T_i = N always hold.
// ---------------------------------------------------------------------------

struct CoincidenceStats {
  std::vector<long> t;  // length N+1
  int q = 0;
  int n() const { return static_cast<int>(t.size()) - 1; }
};

inline CoincidenceStats coincidence(std::span<const int> bins, int q) {
  if (q < 2) throw std::invalid_argument("coincidence: Q must be >= 2");
  std::vector<long> occupancy(static_cast<std::size_t>(q), 0);
  for (int b : bins) {
    if (b < 1 || b > q) throw std::out_of_range("coincidence: bin index outside 1..Q");
    ++occupancy[static_cast<std::size_t>(b - 1)];
  }
  CoincidenceStats st;
  st.q = q;
  st.t.assign(bins.size() + 1, 0);
  for (long c : occupancy) ++st.t[static_cast<std::size_t>(c)];
  return st;
}

// ---------------------------------------------------------------------------
// Linear coincidence tests (T1 is the ζ = e_1 special case) with Monte-Carlo
// threshold calibration.
// ---------------------------------------------------------------------------

enum class TestKind : std::uint8_t { kT1, kLinear };
enum class Direction : std::uint8_t { kRejectSmall, kRejectLarge };

struct TestSpec {
  TestKind kind = TestKind::kT1;
  std::vector<double> zeta;  // coefficients on T_0..T_N; missing tail = 0
  double tau = 0.0;
  bool calibrated = false;
  Direction direction = Direction::kRejectSmall;
  // Calibration metadata.
  double target_fpr = 0.0;
  double achieved_fpr = 0.0;
  int q = 0;
  int n = 0;
  long replicates = 0;
  std::uint64_t seed = 0;

  void validate() const {
    if (kind == TestKind::kLinear) {
      bool any = false;
      for (double z : zeta) any = any || z != 0.0;
      if (!any) throw std::invalid_argument("test spec: all-zero coefficients are degenerate");
    }
  }
};

inline double linear_score(const CoincidenceStats& stats, const TestSpec& spec) {
  if (spec.kind == TestKind::kT1) {
    return stats.n() >= 1 ? static_cast<double>(stats.t[1]) : 0.0;
  }
  double s = 0.0;
  const std::size_t k = std::min(spec.zeta.size(), stats.t.size());
  for (std::size_t i = 0; i < k; ++i) s += spec.zeta[i] * static_cast<double>(stats.t[i]);
  return s;
}

struct Decision {
  bool reject = false;  // true declares H1
  double score = 0.0;
};

inline Decision linear_test(const CoincidenceStats& stats, const TestSpec& spec) {
  spec.validate();
  if (!spec.calibrated) {
    throw std::invalid_argument("linear_test: spec has no calibrated threshold");
  }
  Decision d;
  d.score = linear_score(stats, spec);
  d.reject = (spec.direction == Direction::kRejectSmall) ? (d.score <= spec.tau)
                                                         : (d.score >= spec.tau);
  return d;
}

/// Simulates the null (N i.i.d. U[-1,1] draws quantized to Q bins) and places
/// tau at the empirical quantile closest to the target FPR without exceeding
/// it. The achieved FPR is recorded; with a too-discrete score distribution
/// the nearest achievable value is reported instead of failing.
inline TestSpec calibrate(int q, int n, double target_fpr, TestKind kind,
                          long replicates, std::uint64_t seed,
                          Direction direction = Direction::kRejectSmall,
                          std::vector<double> zeta = {}) {
  if (replicates < 1000) throw std::invalid_argument("calibrate: need >= 1000 replicates");
  if (target_fpr < 0.0 || target_fpr >= 1.0) {
    throw std::invalid_argument("calibrate: target FPR must lie in [0, 1)");
  }
  TestSpec spec;
  spec.kind = kind;
  if (kind == TestKind::kT1) {
    spec.zeta.assign(2, 0.0);
    spec.zeta[1] = 1.0;
    spec.direction = Direction::kRejectSmall;
  } else {
    spec.zeta = std::move(zeta);
    spec.direction = direction;
  }
  spec.validate();
  spec.q = q;
  spec.n = n;
  spec.target_fpr = target_fpr;
  spec.replicates = replicates;
  spec.seed = seed;

  rng::SplitMix64 gen(seed);
  std::vector<double> scores(static_cast<std::size_t>(replicates));
  std::vector<double> block(static_cast<std::size_t>(n));
  for (long r = 0; r < replicates; ++r) {
    for (int i = 0; i < n; ++i) block[static_cast<std::size_t>(i)] = gen.uniform(-1.0, 1.0);
    const CoincidenceStats st = coincidence(quantize(block, q), q);
    scores[static_cast<std::size_t>(r)] = linear_score(st, spec);
  }
  std::sort(scores.begin(), scores.end());

  const double total = static_cast<double>(replicates);
  if (spec.direction == Direction::kRejectSmall) {
    // FPR(tau) = P(score <= tau); scan distinct score values from below.
    double best_tau = scores.front() - 1.0;  // beyond the null range: FPR 0
    double best_fpr = 0.0;
    for (std::size_t i = 0; i < scores.size();) {
      std::size_t j = i;
      while (j < scores.size() && scores[j] == scores[i]) ++j;
      const double fpr = static_cast<double>(j) / total;
      if (fpr <= target_fpr && fpr >= best_fpr) {
        best_fpr = fpr;
        best_tau = scores[i];
      }
      i = j;
    }
    spec.tau = best_tau;
    spec.achieved_fpr = best_fpr;
  } else {
    // FPR(tau) = P(score >= tau); scan from above.
    double best_tau = scores.back() + 1.0;
    double best_fpr = 0.0;
    for (std::size_t i = scores.size(); i > 0;) {
      std::size_t j = i;
      while (j > 0 && scores[j - 1] == scores[i - 1]) --j;
      const double fpr = static_cast<double>(scores.size() - j) / total;
      if (fpr <= target_fpr && fpr >= best_fpr) {
        best_fpr = fpr;
        best_tau = scores[j];
      }
      i = j;
    }
    spec.tau = best_tau;
    spec.achieved_fpr = best_fpr;
  }
  spec.calibrated = true;
  return spec;
}

// ---------------------------------------------------------------------------
// Runs up-and-down independence test.
// ---------------------------------------------------------------------------

/// Two-sided p-value of the runs up-and-down test under the normal
/// approximation E[R] = (2L-1)/3, Var[R] = (16L-29)/90, with a 0.5 continuity
/// correction. Zero differences inherit the preceding nonzero sign; leading
/// zero differences are dropped and the effective length adjusted.
struct RunsResult {
  long runs = 0;
  long effective_length = 0;
  double p_value = 1.0;
};

inline RunsResult runs_test(std::span<const double> values) {
  std::vector<int> signs;
  signs.reserve(values.size());
  int prev = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    const double d = values[i] - values[i - 1];
    int s = (d > 0.0) ? 1 : (d < 0.0 ? -1 : 0);
    if (s == 0) {
      if (prev == 0) continue;  // leading tie: drop, shrinking L
      s = prev;
    }
    prev = s;
    signs.push_back(s);
  }
  if (signs.empty()) {
    throw std::invalid_argument("runs test: all differences are zero");
  }
  RunsResult res;
  res.effective_length = static_cast<long>(signs.size()) + 1;
  if (res.effective_length < 3) {
    throw std::invalid_argument("runs test: need length >= 3 after tie handling");
  }
  res.runs = 1;
  for (std::size_t i = 1; i < signs.size(); ++i) {
    if (signs[i] != signs[i - 1]) ++res.runs;
  }
  const double l = static_cast<double>(res.effective_length);
  const double mu = (2.0 * l - 1.0) / 3.0;
  const double var = (16.0 * l - 29.0) / 90.0;
  const double z = std::max(std::fabs(static_cast<double>(res.runs) - mu) - 0.5, 0.0) /
                   std::sqrt(var);
  res.p_value = std::min(1.0, 2.0 * (1.0 - stats::normal_cdf(z)));
  return res;
}

inline double runs_pvalue(std::span<const double> values) {
  return runs_test(values).p_value;
}

// ---------------------------------------------------------------------------
// Calibration artifact: key-value text so detection runs are auditable.
// ---------------------------------------------------------------------------

inline void save_test_spec(std::ostream& os, const TestSpec& spec) {
  char buf[40];
  const auto f64 = [&buf](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  };
  os << "kind = " << (spec.kind == TestKind::kT1 ? "t1" : "linear") << "\n";
  os << "q = " << spec.q << "\n";
  os << "n = " << spec.n << "\n";
  os << "tau = " << f64(spec.tau) << "\n";
  os << "direction = " << (spec.direction == Direction::kRejectSmall ? "small" : "large") << "\n";
  os << "target_fpr = " << f64(spec.target_fpr) << "\n";
  os << "achieved_fpr = " << f64(spec.achieved_fpr) << "\n";
  os << "replicates = " << spec.replicates << "\n";
  os << "seed = " << spec.seed << "\n";
  if (spec.kind == TestKind::kLinear) {
    os << "zeta =";
    for (std::size_t i = 0; i < spec.zeta.size(); ++i) os << (i ? "," : " ") << f64(spec.zeta[i]);
    os << "\n";
  }
}

inline TestSpec load_test_spec(std::istream& is) {
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(is, line)) {
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      const std::size_t a = s.find_first_not_of(" \t");
      const std::size_t b = s.find_last_not_of(" \t\r");
      return (a == std::string::npos) ? std::string() : s.substr(a, b - a + 1);
    };
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  const auto need = [&kv](const std::string& k) -> const std::string& {
    auto it = kv.find(k);
    if (it == kv.end()) throw std::runtime_error("calibration file: missing key " + k);
    return it->second;
  };
  TestSpec spec;
  spec.kind = (need("kind") == "t1") ? TestKind::kT1 : TestKind::kLinear;
  spec.q = std::stoi(need("q"));
  spec.n = std::stoi(need("n"));
  spec.tau = std::stod(need("tau"));
  spec.direction = (need("direction") == "small") ? Direction::kRejectSmall : Direction::kRejectLarge;
  spec.target_fpr = std::stod(need("target_fpr"));
  spec.achieved_fpr = std::stod(need("achieved_fpr"));
  spec.replicates = std::stol(need("replicates"));
  spec.seed = std::stoull(need("seed"));
  if (spec.kind == TestKind::kT1) {
    spec.zeta.assign(2, 0.0);
    spec.zeta[1] = 1.0;
  } else {
    std::stringstream ss(need("zeta"));
    std::string tok;
    while (std::getline(ss, tok, ',')) spec.zeta.push_back(std::stod(tok));
  }
  spec.calibrated = true;
  spec.validate();
  return spec;
}

inline void save_test_spec_file(const std::string& path, const TestSpec& spec) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  save_test_spec(os, spec);
}

inline TestSpec load_test_spec_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open: " + path);
  return load_test_spec(is);
}

}  // namespace iae::detect
