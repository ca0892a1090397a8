#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "iae/baselines.hpp"
#include "iae/config.hpp"
#include "iae/detection.hpp"
#include "iae/errors.hpp"
#include "iae/eval.hpp"
#include "iae/iae.hpp"
#include "iae/rng.hpp"
#include "iae/timeseries.hpp"

namespace iae::cli {

using config::Config;

namespace detail {

inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

/// Key-value pairs a command actually used, embedded into its outputs.
class Resolved {
 public:
  void put(const std::string& key, const std::string& value) { items_.emplace_back(key, value); }
  void put(const std::string& key, double value) { put(key, fmt(value)); }
  void put(const std::string& key, long value) { put(key, std::to_string(value)); }
  void put(const std::string& key, int value) { put(key, std::to_string(value)); }
  void put(const std::string& key, std::uint64_t value) { put(key, std::to_string(value)); }

  std::vector<std::string> comments() const {
    std::vector<std::string> out;
    out.reserve(items_.size());
    for (const auto& [k, v] : items_) out.push_back(k + " = " + v);
    return out;
  }

  void write_comments(std::ostream& os) const {
    for (const auto& [k, v] : items_) os << "# " << k << " = " << v << "\n";
  }

 private:
  std::vector<std::pair<std::string, std::string>> items_;
};

inline ts::Kind parse_kind(const std::string& s) {
  if (s == "ma") return ts::Kind::kMa;
  if (s == "lar") return ts::Kind::kLar;
  if (s == "nlar") return ts::Kind::kNlar;
  if (s == "syn1-null") return ts::Kind::kSyn1Null;
  if (s == "syn1-anom") return ts::Kind::kSyn1Anom;
  if (s == "syn2-null") return ts::Kind::kSyn2Null;
  if (s == "syn2-anom") return ts::Kind::kSyn2Anom;
  if (s == "custom-ar") return ts::Kind::kCustomAr;
  throw ConfigError("unknown generator kind: " + s);
}

inline ts::InnovationDist parse_dist(const std::string& s) {
  if (s == "uniform01") return ts::InnovationDist::kUniform01;
  if (s == "uniform-sym") return ts::InnovationDist::kUniformSym;
  if (s == "uniform15") return ts::InnovationDist::kUniform15Sym;
  if (s == "normal") return ts::InnovationDist::kNormal;
  throw ConfigError("unknown innovation distribution: " + s);
}

inline const char* dist_name(ts::InnovationDist d) {
  switch (d) {
    case ts::InnovationDist::kUniform01: return "uniform01";
    case ts::InnovationDist::kUniformSym: return "uniform-sym";
    case ts::InnovationDist::kUniform15Sym: return "uniform15";
    case ts::InnovationDist::kNormal: return "normal";
  }
  return "?";
}

inline ts::GeneratorSpec generator_from(const Config& cfg, const std::string& prefix,
                                        std::uint64_t default_seed, Resolved* resolved) {
  ts::GeneratorSpec spec;
  spec.kind = parse_kind(cfg.get_str(prefix + "kind"));
  spec.dist = cfg.has(prefix + "innovation-dist")
                  ? parse_dist(cfg.get_str(prefix + "innovation-dist"))
                  : ts::default_dist(spec.kind);
  const long n = cfg.get_long(prefix + "n");
  if (n <= 0) throw ConfigError("key " + prefix + "n: length must be positive");
  spec.length = static_cast<std::size_t>(n);
  spec.seed = cfg.get_u64(prefix + "seed", default_seed);
  spec.burn_in = static_cast<std::size_t>(cfg.get_long(prefix + "burn-in", 1000));
  if (spec.kind == ts::Kind::kCustomAr) spec.coeffs = cfg.get_doubles(prefix + "coeffs");
  if (resolved) {
    resolved->put(prefix + "kind", ts::kind_name(spec.kind));
    resolved->put(prefix + "innovation-dist", dist_name(spec.dist));
    resolved->put(prefix + "n", static_cast<long>(spec.length));
    resolved->put(prefix + "seed", spec.seed);
    resolved->put(prefix + "burn-in", static_cast<long>(spec.burn_in));
    if (!spec.coeffs.empty()) {
      std::string c;
      for (std::size_t i = 0; i < spec.coeffs.size(); ++i) c += (i ? "," : "") + fmt(spec.coeffs[i]);
      resolved->put(prefix + "coeffs", c);
    }
  }
  return spec;
}

inline ts::TimeSeries load_series(const std::string& path) {
  if (!std::filesystem::exists(path)) throw ConfigError("input file not found: " + path);
  return ts::load_csv(path);
}

inline void write_history_csv(const std::string& path, const Resolved& resolved,
                              const std::vector<model::HistoryRow>& history) {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot open for writing: " + path);
  resolved.write_comments(os);
  os << "epoch,d_loss,g_loss,recon_mse\n";
  for (const auto& row : history) {
    os << row.update << "," << fmt(row.d_loss) << "," << fmt(row.g_loss) << ","
       << fmt(row.recon_mse) << "\n";
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

inline void run_synth(const Config& cfg, std::ostream& out = std::cout) {
  detail::Resolved resolved;
  const ts::GeneratorSpec spec =
      detail::generator_from(cfg, "", cfg.get_u64("seed", 0), &resolved);
  const ts::GeneratedSeries gen = ts::generate_with_innovations(spec);

  const std::string path = cfg.get_str("out");
  ts::save_csv(gen.series, path, resolved.comments());
  if (cfg.has("innovations-out")) {
    ts::save_csv(gen.innovations, cfg.get_str("innovations-out"), resolved.comments());
  }

  std::span<const double> s(gen.series.samples);
  out << "wrote " << gen.series.size() << " samples to " << path << "\n";
  out << "mean = " << detail::fmt(stats::mean(s)) << ", variance = " << detail::fmt(stats::variance(s))
      << ", min = " << detail::fmt(*std::min_element(s.begin(), s.end()))
      << ", max = " << detail::fmt(*std::max_element(s.begin(), s.end())) << "\n";
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

inline model::TrainConfig train_config_from(const Config& cfg, detail::Resolved* resolved) {
  model::TrainConfig tc;
  const std::string preset = cfg.get_str("preset", "synthetic");
  if (preset == "field") {
    tc = model::TrainConfig::field_preset();
  } else if (preset != "synthetic") {
    throw ConfigError("key preset: expected 'synthetic' or 'field', got '" + preset + "'");
  }
  tc.mu = cfg.get_double("mu", tc.mu);
  tc.lambda_gp = cfg.get_double("lambda", tc.lambda_gp);
  tc.alpha = cfg.get_double("alpha", tc.alpha);
  tc.beta1 = cfg.get_double("beta1", tc.beta1);
  tc.beta2 = cfg.get_double("beta2", tc.beta2);
  tc.n_critic = static_cast<int>(cfg.get_long("nc", tc.n_critic));
  tc.batch = static_cast<int>(cfg.get_long("batch", tc.batch));
  tc.max_updates = static_cast<int>(cfg.get_long("updates", tc.max_updates));
  tc.seed = cfg.get_u64("seed", 0);
  tc.validate();
  if (resolved) {
    resolved->put("preset", preset);
    resolved->put("mu", tc.mu);
    resolved->put("lambda", tc.lambda_gp);
    resolved->put("alpha", tc.alpha);
    resolved->put("beta1", tc.beta1);
    resolved->put("beta2", tc.beta2);
    resolved->put("nc", tc.n_critic);
    resolved->put("batch", tc.batch);
    resolved->put("updates", tc.max_updates);
    resolved->put("seed", tc.seed);
  }
  return tc;
}

inline model::IaeArch arch_from(const Config& cfg, detail::Resolved* resolved) {
  model::IaeArch arch;
  arch.m = static_cast<int>(cfg.get_long("m", arch.m));
  arch.k_nu = static_cast<int>(cfg.get_long("knu", arch.k_nu));
  arch.n_block = static_cast<int>(cfg.get_long("nblock", 0));
  arch.validate();
  if (resolved) {
    resolved->put("m", arch.m);
    resolved->put("knu", arch.k_nu);
    resolved->put("nblock", arch.resolved_n());
  }
  return arch;
}

inline void run_train(const Config& cfg, std::ostream& out = std::cout) {
  detail::Resolved resolved;
  const std::string input = cfg.get_str("input");
  const ts::TimeSeries series = detail::load_series(input);
  const model::IaeArch arch = arch_from(cfg, &resolved);
  const model::TrainConfig tc = train_config_from(cfg, &resolved);

  const model::TrainResult result = model::train(tc, series, arch);

  const std::string model_path = cfg.get_str("out");
  model::save_model_file(model_path, result.model);
  if (cfg.has("history")) {
    detail::write_history_csv(cfg.get_str("history"), resolved, result.history);
  }
  out << "trained " << result.history.size() << " generator updates; model written to "
      << model_path << "\n";
  if (!result.history.empty()) {
    const auto& last = result.history.back();
    out << "final d_loss = " << detail::fmt(last.d_loss)
        << ", g_loss = " << detail::fmt(last.g_loss)
        << ", recon_mse = " << detail::fmt(last.recon_mse) << "\n";
  }
  if (result.skipped_steps > 0) {
    out << "warning: " << result.skipped_steps << " optimizer steps skipped (non-finite gradients)\n";
  }
}

// ---------------------------------------------------------------------------
// closed-form model file
// ---------------------------------------------------------------------------

inline void run_closedform(const Config& cfg, std::ostream& out = std::cout) {
  const double alpha = cfg.get_double("alpha");
  const int k = static_cast<int>(cfg.get_long("k"));
  if (k < 2 || k % 2 != 0) {
    throw ConfigError("key k: the file format stores k_nu = K/m with m=2, so K must be even and >= 2");
  }
  const model::IaeModel m = model::closed_form_ar1(alpha, k);
  const std::string path = cfg.get_str("out");
  model::save_model_file(path, m);
  out << "wrote closed-form AR(1) model (alpha = " << detail::fmt(alpha) << ", K = " << k
      << ") to " << path << "\n";
}

// ---------------------------------------------------------------------------
// extract
// ---------------------------------------------------------------------------

inline void run_extract(const Config& cfg, std::ostream& out = std::cout) {
  detail::Resolved resolved;
  const std::string model_path = cfg.get_str("model");
  const std::string input = cfg.get_str("input");
  const model::IaeModel m = model::load_model_file(model_path);
  const ts::TimeSeries series = detail::load_series(input);
  const model::InnovationsSequence nu = model::encode(m, series);
  resolved.put("anchor", static_cast<long>(nu.anchor));

  ts::TimeSeries values;
  values.samples = nu.values;
  const std::string path = cfg.get_str("out");
  ts::save_csv(values, path, resolved.comments());
  out << "wrote " << nu.values.size() << " innovations to " << path << "\n";
}

// ---------------------------------------------------------------------------
// calibrate
// ---------------------------------------------------------------------------

inline void run_calibrate(const Config& cfg, std::ostream& out = std::cout) {
  const int q = static_cast<int>(cfg.get_long("q"));
  const int n = static_cast<int>(cfg.get_long("nblock"));
  const double target = cfg.get_double("target-fpr", 0.05);
  const long replicates = cfg.get_long("replicates", 10000);
  const std::uint64_t seed = rng::derive_stream(cfg.get_u64("seed", 0), "calibrate");
  const std::string kind_str = cfg.get_str("kind", "t1");

  detect::TestSpec spec;
  if (kind_str == "t1") {
    spec = detect::calibrate(q, n, target, detect::TestKind::kT1, replicates, seed);
  } else if (kind_str == "linear") {
    const detect::Direction dir = cfg.get_str("direction", "small") == "large"
                                      ? detect::Direction::kRejectLarge
                                      : detect::Direction::kRejectSmall;
    spec = detect::calibrate(q, n, target, detect::TestKind::kLinear, replicates, seed, dir,
                             cfg.get_doubles("zeta"));
  } else {
    throw ConfigError("key kind: expected 't1' or 'linear', got '" + kind_str + "'");
  }
  detect::save_test_spec_file(cfg.get_str("out"), spec);
  out << "calibrated " << kind_str << " test: tau = " << detail::fmt(spec.tau)
      << ", achieved FPR = " << detail::fmt(spec.achieved_fpr)
      << " (target " << detail::fmt(target) << ")\n";
}

// ---------------------------------------------------------------------------
// detect
// ---------------------------------------------------------------------------

inline void run_detect(const Config& cfg, std::ostream& out = std::cout) {
  detail::Resolved resolved;
  const model::IaeModel m = model::load_model_file(cfg.get_str("model"));
  const detect::TestSpec spec = detect::load_test_spec_file(cfg.get_str("calib"));
  const ts::TimeSeries series = detail::load_series(cfg.get_str("input"));
  const int block_size = static_cast<int>(cfg.get_long("block-size"));
  long blocks = cfg.get_long("blocks", 0);
  if (blocks <= 0) blocks = static_cast<long>(series.size()) / block_size;
  if (blocks < 1) throw ConfigError("input shorter than one block");

  resolved.put("block-size", static_cast<long>(block_size));
  resolved.put("blocks", blocks);
  resolved.put("tau", spec.tau);

  const auto decisions =
      eval::score_blocks(m, series, block_size, static_cast<int>(blocks), spec);
  const std::string path = cfg.get_str("out");
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot open for writing: " + path);
  resolved.write_comments(os);
  os << "block,score,decision\n";
  long rejected = 0;
  for (std::size_t i = 0; i < decisions.size(); ++i) {
    os << i << "," << detail::fmt(decisions[i].score) << "," << (decisions[i].reject ? "H1" : "H0")
       << "\n";
    rejected += decisions[i].reject;
  }
  out << "scored " << decisions.size() << " blocks, rejected " << rejected << " ("
      << detail::fmt(static_cast<double>(rejected) / static_cast<double>(decisions.size()))
      << ")\n";
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

inline void run_eval(const Config& cfg, std::ostream& out = std::cout) {
  detail::Resolved resolved;
  const std::uint64_t seed = cfg.get_u64("seed", 0);
  const model::IaeModel m = model::load_model_file(cfg.get_str("model"));
  const detect::TestSpec spec = detect::load_test_spec_file(cfg.get_str("calib"));
  const int block_size = static_cast<int>(cfg.get_long("block-size"));
  const int blocks = static_cast<int>(cfg.get_long("blocks", 500));
  if (blocks < 50) throw ConfigError("key blocks: need >= 50 blocks per class for ROC estimation");
  resolved.put("block-size", static_cast<long>(block_size));
  resolved.put("blocks", static_cast<long>(blocks));
  resolved.put("seed", seed);

  const auto source = [&](const std::string& cls) -> ts::TimeSeries {
    if (cfg.has(cls + "-input")) {
      return detail::load_series(cfg.get_str(cls + "-input"));
    }
    Config sub;
    sub.set("kind", cfg.get_str(cls + "-kind"));
    if (cfg.has(cls + "-innovation-dist")) {
      sub.set("innovation-dist", cfg.get_str(cls + "-innovation-dist"));
    }
    if (cfg.has(cls + "-coeffs")) sub.set("coeffs", cfg.get_str(cls + "-coeffs"));
    sub.set("n", std::to_string(static_cast<long>(block_size) * blocks));
    ts::GeneratorSpec gs = detail::generator_from(
        sub, "", rng::derive_stream(seed, "eval." + cls), nullptr);
    resolved.put(cls + "-kind", ts::kind_name(gs.kind));
    resolved.put(cls + "-seed", gs.seed);
    return ts::generate(gs);
  };
  const ts::TimeSeries null_series = source("null");
  const ts::TimeSeries anom_series = source("anom");

  const eval::DetectReport report =
      eval::detect_blocks(m, null_series, anom_series, block_size, blocks, spec);

  if (cfg.has("out-blocks")) {
    std::ofstream os(cfg.get_str("out-blocks"));
    if (!os) throw ConfigError("cannot open for writing: " + cfg.get_str("out-blocks"));
    resolved.write_comments(os);
    os << "class,score,decision\n";
    for (const auto& b : report.blocks) {
      os << b.cls << "," << detail::fmt(b.score) << "," << (b.reject ? "H1" : "H0") << "\n";
    }
  }
  if (cfg.has("out-roc")) {
    std::ofstream os(cfg.get_str("out-roc"));
    if (!os) throw ConfigError("cannot open for writing: " + cfg.get_str("out-roc"));
    resolved.write_comments(os);
    os << "fpr,tpr\n";
    for (const auto& p : report.curve.points) {
      os << detail::fmt(p.fpr) << "," << detail::fmt(p.tpr) << "\n";
    }
  }
  if (cfg.has("out-summary")) {
    std::ofstream os(cfg.get_str("out-summary"));
    if (!os) throw ConfigError("cannot open for writing: " + cfg.get_str("out-summary"));
    resolved.write_comments(os);
    os << "auroc,fpr_at_tau,tpr_at_tau,tau,blocks_per_class,block_size\n";
    os << detail::fmt(report.curve.auroc) << "," << detail::fmt(report.fpr_at_tau) << ","
       << detail::fmt(report.tpr_at_tau) << "," << detail::fmt(spec.tau) << "," << blocks << ","
       << block_size << "\n";
  }
  out << "AUROC = " << detail::fmt(report.curve.auroc)
      << ", FPR at tau = " << detail::fmt(report.fpr_at_tau)
      << ", TPR at tau = " << detail::fmt(report.tpr_at_tau) << "\n";
}

// ---------------------------------------------------------------------------
// pipeline: one config file drives synth -> train -> calibrate -> eval
// ---------------------------------------------------------------------------

inline void run_pipeline(const Config& cfg, std::ostream& out = std::cout) {
  const std::string outdir = cfg.get_str("outdir");
  std::filesystem::create_directories(outdir);
  const std::uint64_t seed = cfg.get_u64("seed", 0);
  const auto path = [&outdir](const std::string& name) { return outdir + "/" + name; };

  bool any = false;
  if (cfg.has("synth-null.kind")) {
    any = true;
    Config sub;
    sub.adopt_section(cfg, "synth-null");
    sub.set("out", path("null.csv"));
    if (!sub.has("seed")) sub.set("seed", std::to_string(rng::derive_stream(seed, "synth.null")));
    run_synth(sub, out);
  }
  if (cfg.has("synth-anom.kind")) {
    any = true;
    Config sub;
    sub.adopt_section(cfg, "synth-anom");
    sub.set("out", path("anom.csv"));
    if (!sub.has("seed")) sub.set("seed", std::to_string(rng::derive_stream(seed, "synth.anom")));
    run_synth(sub, out);
  }
  int m = 0;
  if (cfg.has("train.m") || cfg.has("train.input")) {
    any = true;
    Config sub;
    sub.adopt_section(cfg, "train");
    if (!sub.has("input")) sub.set("input", path("null.csv"));
    sub.set("out", path("model.bin"));
    sub.set("history", path("history.csv"));
    if (!sub.has("seed")) sub.set("seed", std::to_string(rng::derive_stream(seed, "train")));
    m = static_cast<int>(sub.get_long("m", 20));
    run_train(sub, out);
  }
  if (cfg.has("calibrate.q") || cfg.has("calibrate.block-size") || cfg.has("eval.block-size")) {
    any = true;
    Config sub;
    sub.adopt_section(cfg, "calibrate");
    // Default geometry: N = block-size - m + 1 innovations per block, Q = 2N.
    if (!sub.has("nblock")) {
      const long bs = sub.has("block-size") ? sub.get_long("block-size")
                                            : Config(cfg).get_long("eval.block-size");
      sub.set("nblock", std::to_string(bs - m + 1));
    }
    if (!sub.has("q")) sub.set("q", std::to_string(2 * sub.get_long("nblock")));
    if (!sub.has("seed")) sub.set("seed", std::to_string(seed));
    sub.set("out", path("calibration.txt"));
    run_calibrate(sub, out);
  }
  if (cfg.has("eval.block-size")) {
    any = true;
    Config sub;
    sub.adopt_section(cfg, "eval");
    sub.set("model", path("model.bin"));
    sub.set("calib", path("calibration.txt"));
    if (!sub.has("null-input") && !sub.has("null-kind")) sub.set("null-input", path("null.csv"));
    if (!sub.has("anom-input") && !sub.has("anom-kind")) sub.set("anom-input", path("anom.csv"));
    if (!sub.has("seed")) sub.set("seed", std::to_string(rng::derive_stream(seed, "eval")));
    sub.set("out-blocks", path("blocks.csv"));
    sub.set("out-roc", path("roc.csv"));
    sub.set("out-summary", path("summary.csv"));
    run_eval(sub, out);
  }
  if (!any) throw ConfigError("pipeline config has no recognized stage sections");
}

}  // namespace iae::cli
