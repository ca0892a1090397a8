// Command-line front end: reproducible synth/train/calibrate/detect/eval runs.

#include <CLI11.hpp>

#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "iae/cli.hpp"

namespace {

using iae::cli::Config;

struct OptDef {
  const char* key;
  const char* desc;
};

struct SubDef {
  const char* name;
  const char* desc;
  std::vector<OptDef> opts;
  void (*fn)(const Config&, std::ostream&);
};

const std::vector<SubDef> kSubcommands = {
    {"synth",
     "Generate a synthetic dataset as CSV",
     {{"kind", "generator: ma|lar|nlar|syn1-null|syn1-anom|syn2-null|syn2-anom|custom-ar"},
      {"n", "number of samples"},
      {"seed", "generator seed"},
      {"out", "output CSV path"},
      {"innovation-dist", "uniform01|uniform-sym|uniform15|normal (default per kind)"},
      {"coeffs", "custom-ar coefficients, comma separated"},
      {"burn-in", "burn-in samples discarded (default 1000)"},
      {"innovations-out", "also write the generating innovations CSV"}},
     iae::cli::run_synth},
    {"train",
     "Train an innovations autoencoder",
     {{"input", "training series CSV"},
      {"out", "model file path"},
      {"history", "loss history CSV path"},
      {"m", "encoder window (default 20)"},
      {"nblock", "training block dimension N (default 3m)"},
      {"knu", "decoder window multiplier (default 3)"},
      {"preset", "hyperparameter preset: synthetic|field"},
      {"mu", "reconstruction weight"},
      {"lambda", "gradient penalty weight"},
      {"alpha", "Adam step size"},
      {"beta1", "Adam beta1"},
      {"beta2", "Adam beta2"},
      {"nc", "discriminator steps per generator step"},
      {"batch", "batch size"},
      {"updates", "maximum generator updates"},
      {"seed", "training seed"}},
     iae::cli::run_train},
    {"closedform",
     "Write the closed-form AR(1) encoder/decoder model",
     {{"alpha", "AR(1) coefficient in (0,1)"},
      {"k", "decoder truncation depth (even)"},
      {"out", "model file path"}},
     iae::cli::run_closedform},
    {"extract",
     "Extract innovations from a series with a trained model",
     {{"model", "model file"}, {"input", "series CSV"}, {"out", "innovations CSV"}},
     iae::cli::run_extract},
    {"calibrate",
     "Monte-Carlo calibration of a coincidence test threshold",
     {{"q", "quantization bins"},
      {"nblock", "samples per tested block"},
      {"target-fpr", "target false positive rate (default 0.05)"},
      {"kind", "t1|linear (default t1)"},
      {"zeta", "linear test coefficients on T_0.., comma separated"},
      {"direction", "rejection side for linear tests: small|large"},
      {"replicates", "Monte-Carlo replicates (default 10000)"},
      {"seed", "calibration seed"},
      {"out", "calibration artifact path"}},
     iae::cli::run_calibrate},
    {"detect",
     "Score consecutive blocks of a series against a calibrated test",
     {{"model", "model file"},
      {"calib", "calibration artifact"},
      {"input", "series CSV"},
      {"block-size", "samples per block"},
      {"blocks", "number of blocks (default: as many as fit)"},
      {"out", "per-block report CSV"}},
     iae::cli::run_detect},
    {"eval",
     "Two-class detection experiment with ROC/AUROC",
     {{"model", "model file"},
      {"calib", "calibration artifact"},
      {"block-size", "samples per block"},
      {"blocks", "blocks per class (default 500)"},
      {"seed", "seed for generated sources"},
      {"null-input", "null-class series CSV"},
      {"anom-input", "anomaly-class series CSV"},
      {"null-kind", "generator kind for the null class"},
      {"anom-kind", "generator kind for the anomaly class"},
      {"null-innovation-dist", "innovation distribution override"},
      {"anom-innovation-dist", "innovation distribution override"},
      {"null-coeffs", "custom-ar coefficients for the null class"},
      {"anom-coeffs", "custom-ar coefficients for the anomaly class"},
      {"out-blocks", "per-block CSV"},
      {"out-roc", "ROC points CSV"},
      {"out-summary", "summary CSV"}},
     iae::cli::run_eval},
    {"run",
     "Run a multi-stage pipeline from one config file",
     {{"outdir", "artifact output directory"}, {"seed", "global seed"}},
     iae::cli::run_pipeline},
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"innovations autoencoder and one-class anomalous sequence detection"};
  app.require_subcommand(1);

  struct SubState {
    const SubDef* def = nullptr;
    CLI::App* cmd = nullptr;
    std::string config_path;
    std::map<std::string, std::string> flags;
  };
  std::vector<SubState> states(kSubcommands.size());

  for (std::size_t i = 0; i < kSubcommands.size(); ++i) {
    const SubDef& def = kSubcommands[i];
    SubState& st = states[i];
    st.def = &def;
    st.cmd = app.add_subcommand(def.name, def.desc);
    st.cmd->add_option("--config", st.config_path, "config file; flags override its keys");
    for (const OptDef& opt : def.opts) {
      st.cmd->add_option("--" + std::string(opt.key), st.flags[opt.key], opt.desc);
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  for (SubState& st : states) {
    if (!st.cmd->parsed()) continue;
    try {
      Config cfg = st.config_path.empty() ? Config() : Config::parse_file(st.config_path);
      for (const auto& [key, value] : st.flags) {
        if (st.cmd->count("--" + key) > 0) cfg.set(key, value);
      }
      st.def->fn(cfg, std::cout);
      return 0;
    } catch (const iae::NumericError& e) {
      std::cerr << "numerical failure: " << e.what() << "\n";
      return 2;
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return 1;
    }
  }
  return 1;
}
