#include <catch_amalgamated.hpp>

#include <cmath>
#include <sstream>
#include <vector>

#include "iae/detection.hpp"
#include "iae/eval.hpp"
#include "iae/iae.hpp"
#include "iae/timeseries.hpp"

using iae::model::IaeArch;
using iae::model::IaeModel;
using iae::model::TrainConfig;
using iae::ts::GeneratorSpec;
using iae::ts::InnovationDist;
using iae::ts::Kind;

namespace {

GeneratorSpec lar_spec(std::size_t length, std::uint64_t seed,
                       InnovationDist dist = InnovationDist::kUniformSym) {
  GeneratorSpec spec;
  spec.kind = Kind::kLar;
  spec.dist = dist;
  spec.length = length;
  spec.seed = seed;
  return spec;
}

}  // namespace

TEST_CASE("closed-form AR(1) model validation") {
  CHECK_THROWS_AS(iae::model::closed_form_ar1(0.0, 5), std::invalid_argument);
  CHECK_THROWS_AS(iae::model::closed_form_ar1(1.0, 5), std::invalid_argument);
  CHECK_THROWS_AS(iae::model::closed_form_ar1(0.5, 0), std::invalid_argument);
  const IaeModel m = iae::model::closed_form_ar1(0.5, 8);
  REQUIRE(m.m == 2);
  REQUIRE(m.dec_window == 8);
  REQUIRE(m.encoder.layers[0].W(0, 0) == 1.0);
  REQUIRE(m.encoder.layers[0].W(0, 1) == -0.5);
  REQUIRE(m.decoder.layers[0].W(0, 3) == 0.125);
}

TEST_CASE("encode with a constant encoder yields a constant sequence") {
  IaeModel m = iae::model::init_model({3, 1, 3, {4, 4}}, 1);
  for (auto& l : m.encoder.layers) l.W.setZero();
  m.encoder.layers[0].b.setConstant(0.25);
  const iae::ts::TimeSeries s{{0.1, -0.4, 2.0, 1.0, 0.3}, "x"};
  const auto nu = iae::model::encode(m, s);
  REQUIRE(nu.anchor == 2);
  REQUIRE(nu.values.size() == 3);
  for (double v : nu.values) REQUIRE(v == nu.values[0]);
}

TEST_CASE("closed-form encoder matches the paper's AR(1) map") {
  const IaeModel m = iae::model::closed_form_ar1(0.5, 4);
  const iae::ts::TimeSeries s{{2.0, 2.0}, "x"};
  const auto nu = iae::model::encode(m, s);
  REQUIRE(nu.values.size() == 1);
  REQUIRE(nu.values[0] == 1.0);  // 2 - 0.5*2
}

TEST_CASE("encode recovers stored LAR innovations exactly") {
  const auto gen = iae::ts::generate_with_innovations(lar_spec(5000, 0xace));
  const IaeModel m = iae::model::closed_form_ar1(0.5, 8);
  const auto nu = iae::model::encode(m, gen.series);
  REQUIRE(nu.anchor == 1);
  for (std::size_t j = 0; j < nu.values.size(); ++j) {
    REQUIRE(nu.values[j] == gen.innovations.samples[j + 1]);
  }
}

TEST_CASE("encoding is strictly causal") {
  const IaeModel m = iae::model::init_model({4, 1, 4, {6, 5}}, 3);
  auto gen = iae::ts::generate(lar_spec(64, 5));
  const auto base = iae::model::encode(m, gen);
  auto perturbed = gen;
  perturbed.samples.back() += 0.5;
  const auto after = iae::model::encode(m, perturbed);
  REQUIRE(base.values.size() == after.values.size());
  for (std::size_t j = 0; j + 1 < base.values.size(); ++j) {
    REQUIRE(base.values[j] == after.values[j]);
  }
  REQUIRE(base.values.back() != after.values.back());
}

TEST_CASE("decoding is strictly causal and validates history") {
  const IaeModel m = iae::model::closed_form_ar1(0.4, 6);
  iae::model::InnovationsSequence nu;
  nu.anchor = 1;
  for (int i = 0; i < 20; ++i) nu.values.push_back(0.05 * i - 0.4);
  const auto base = iae::model::decode(m, nu);
  REQUIRE(base.samples.size() == nu.values.size() - 6 + 1);

  auto perturbed = nu;
  perturbed.values.back() += 0.25;
  const auto after = iae::model::decode(m, perturbed);
  for (std::size_t j = 0; j + 1 < base.samples.size(); ++j) {
    REQUIRE(base.samples[j] == after.samples[j]);
  }
  REQUIRE(base.samples.back() != after.samples.back());

  nu.values.resize(3);  // shorter than the decoder window
  CHECK_THROWS_AS(iae::model::decode(m, nu), std::invalid_argument);
}

TEST_CASE("zero innovations decode to zero through the truncated AR(1) decoder") {
  const IaeModel m = iae::model::closed_form_ar1(0.5, 5);
  iae::model::InnovationsSequence nu;
  nu.values.assign(12, 0.0);
  for (double v : iae::model::decode(m, nu).samples) REQUIRE(v == 0.0);
}

TEST_CASE("AR(1) round trip obeys the geometric truncation bound") {
  const double alpha = 0.5;
  const int k = 10;
  const auto gen = iae::ts::generate_with_innovations(lar_spec(4000, 77));
  const IaeModel m = iae::model::closed_form_ar1(alpha, k);
  const auto nu = iae::model::encode(m, gen.series);
  const auto rec = iae::model::decode(m, nu);
  const std::size_t off = iae::model::reconstruction_offset(m);

  double max_x = 0.0;
  for (double v : gen.series.samples) max_x = std::max(max_x, std::fabs(v));
  const double bound = std::pow(alpha, k) * max_x;
  double worst = 0.0;
  for (std::size_t i = 0; i < rec.samples.size(); ++i) {
    worst = std::max(worst, std::fabs(rec.samples[i] - gen.series.samples[off + i]));
  }
  REQUIRE(worst <= bound * (1.0 + 1e-12));
  // Bounded innovations: sup error also below alpha^K / (1 - alpha).
  REQUIRE(worst <= std::pow(alpha, k) / (1.0 - alpha));
}

TEST_CASE("closed form approaches identity as alpha goes to 0") {
  const IaeModel m = iae::model::closed_form_ar1(1e-9, 4);
  const iae::ts::TimeSeries s{{0.3, -0.8, 0.6, 0.1, -0.2}, "x"};
  const auto nu = iae::model::encode(m, s);
  for (std::size_t j = 0; j < nu.values.size(); ++j) {
    REQUIRE(nu.values[j] == Catch::Approx(s.samples[j + 1]).margin(1e-8));
  }
  iae::model::InnovationsSequence direct;
  direct.values = s.samples;
  const auto rec = iae::model::decode(m, direct);
  for (std::size_t j = 0; j < rec.samples.size(); ++j) {
    REQUIRE(rec.samples[j] == Catch::Approx(s.samples[j + 3]).margin(1e-8));
  }
}

TEST_CASE("training runs, is deterministic, and records history") {
  const auto data = iae::ts::generate(lar_spec(2000, 9, InnovationDist::kUniform01));
  IaeArch arch;
  arch.m = 3;
  arch.k_nu = 2;
  arch.n_block = 8;
  arch.hidden = {12, 8};
  TrainConfig cfg;
  cfg.batch = 8;
  cfg.max_updates = 12;
  cfg.plateau_window = 0;
  cfg.seed = 4;

  const auto a = iae::model::train(cfg, data, arch);
  REQUIRE(a.history.size() == 12);
  for (const auto& row : a.history) {
    REQUIRE(std::isfinite(row.d_loss));
    REQUIRE(std::isfinite(row.g_loss));
    REQUIRE(std::isfinite(row.recon_mse));
  }

  const auto b = iae::model::train(cfg, data, arch);
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    REQUIRE(a.history[i].d_loss == b.history[i].d_loss);
    REQUIRE(a.history[i].g_loss == b.history[i].g_loss);
    REQUIRE(a.history[i].recon_mse == b.history[i].recon_mse);
  }
  std::ostringstream sa, sb;
  iae::model::save_model(sa, a.model);
  iae::model::save_model(sb, b.model);
  REQUIRE(sa.str() == sb.str());
}

TEST_CASE("training with mu=0 never updates the decoder") {
  const auto data = iae::ts::generate(lar_spec(1500, 2, InnovationDist::kUniform01));
  IaeArch arch;
  arch.m = 3;
  arch.k_nu = 2;
  arch.n_block = 8;
  arch.hidden = {10, 6};
  TrainConfig cfg;
  cfg.mu = 0.0;
  cfg.batch = 8;
  cfg.max_updates = 10;
  cfg.plateau_window = 0;
  cfg.seed = 6;

  const IaeModel init = iae::model::init_model(arch, cfg.seed);
  const auto result = iae::model::train(cfg, data, arch);
  for (std::size_t l = 0; l < init.decoder.layers.size(); ++l) {
    REQUIRE(result.model.decoder.layers[l].W == init.decoder.layers[l].W);
    REQUIRE(result.model.decoder.layers[l].b == init.decoder.layers[l].b);
  }
  // The encoder still moves (distribution matching is active).
  REQUIRE(result.model.encoder.layers[0].W != init.encoder.layers[0].W);
}

TEST_CASE("training rejects series shorter than N + m - 1 + B") {
  const auto data = iae::ts::generate(lar_spec(30, 2, InnovationDist::kUniform01));
  IaeArch arch;
  arch.m = 3;
  arch.k_nu = 2;
  arch.n_block = 20;
  arch.hidden = {6};
  TrainConfig cfg;
  cfg.batch = 16;
  CHECK_THROWS_AS(iae::model::train(cfg, data, arch), std::invalid_argument);
}

TEST_CASE("train config invariants") {
  TrainConfig cfg;
  cfg.lambda_gp = 0.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = TrainConfig{};
  cfg.mu = -0.1;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = TrainConfig{};
  cfg.n_critic = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = TrainConfig{};
  cfg.batch = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("model files round-trip the full model") {
  const auto data = iae::ts::generate(lar_spec(1200, 3, InnovationDist::kUniform01));
  IaeArch arch;
  arch.m = 2;
  arch.k_nu = 3;
  arch.hidden = {8, 6};
  TrainConfig cfg;
  cfg.batch = 6;
  cfg.max_updates = 4;
  cfg.plateau_window = 0;
  const auto result = iae::model::train(cfg, data, arch);

  std::stringstream ss;
  iae::model::save_model(ss, result.model);
  const IaeModel back = iae::model::load_model(ss);
  REQUIRE(back.m == result.model.m);
  REQUIRE(back.dec_window == result.model.dec_window);
  REQUIRE(back.n_block == result.model.n_block);
  REQUIRE(back.has_discriminator);
  for (std::size_t l = 0; l < back.encoder.layers.size(); ++l) {
    REQUIRE(back.encoder.layers[l].W == result.model.encoder.layers[l].W);
  }
  for (std::size_t l = 0; l < back.discriminator.layers.size(); ++l) {
    REQUIRE(back.discriminator.layers[l].W == result.model.discriminator.layers[l].W);
  }

  // The closed-form model (no discriminator) also round-trips.
  std::stringstream s2;
  iae::model::save_model(s2, iae::model::closed_form_ar1(0.5, 10));
  const IaeModel cf = iae::model::load_model(s2);
  REQUIRE_FALSE(cf.has_discriminator);
  REQUIRE(cf.dec_window == 10);
}

TEST_CASE("closed-form pipeline accepts the null at the nominal rate") {
  // Encoder is exact for LAR with U[-1,1] innovations, so block scores follow
  // the calibrated null distribution.
  const int block_size = 115;
  const int blocks = 200;
  const IaeModel m = iae::model::closed_form_ar1(0.5, 8);
  const int n_innov = block_size - m.m + 1;
  const auto spec = iae::detect::calibrate(2 * n_innov, n_innov, 0.05,
                                           iae::detect::TestKind::kT1, 4000, 99);
  const auto data = iae::ts::generate(lar_spec(
      static_cast<std::size_t>(block_size) * blocks, 0xbeef));
  const auto decisions = iae::eval::score_blocks(m, data, block_size, blocks, spec);
  long rejects = 0;
  for (const auto& d : decisions) rejects += d.reject;
  const double fpr = static_cast<double>(rejects) / blocks;
  // Nominal 0.05 within ~2.5 binomial standard errors.
  REQUIRE(fpr >= 0.01);
  REQUIRE(fpr <= 0.09);
}
