#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "iae/detection.hpp"
#include "iae/iae.hpp"
#include "iae/timeseries.hpp"

namespace iae::eval {

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
};

struct RocCurve {
  std::vector<RocPoint> points;  // monotone, from (0,0) to (1,1)
  double auroc = 0.0;
};

/// ROC over all distinct score thresholds. AUROC uses the rank (Mann-Whitney)
/// statistic with ties counted half. `direction` states which side of the
/// score axis is anomalous, matching the detection test's rejection side.
inline RocCurve roc(std::span<const double> null_scores, std::span<const double> anom_scores,
                    detect::Direction direction) {
  if (null_scores.empty() || anom_scores.empty()) {
    throw std::invalid_argument("roc: empty score list");
  }
  const double flip = (direction == detect::Direction::kRejectSmall) ? -1.0 : 1.0;
  const std::size_t n0 = null_scores.size(), n1 = anom_scores.size();

  // Midranks over the pooled sample.
  std::vector<std::pair<double, int>> pooled;
  pooled.reserve(n0 + n1);
  for (double s : null_scores) pooled.emplace_back(flip * s, 0);
  for (double s : anom_scores) pooled.emplace_back(flip * s, 1);
  std::sort(pooled.begin(), pooled.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  double rank_sum_anom = 0.0;
  for (std::size_t i = 0; i < pooled.size();) {
    std::size_t j = i;
    while (j < pooled.size() && pooled[j].first == pooled[i].first) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);  // average of ranks i+1..j
    for (std::size_t k = i; k < j; ++k) {
      if (pooled[k].second == 1) rank_sum_anom += midrank;
    }
    i = j;
  }
  RocCurve curve;
  curve.auroc = (rank_sum_anom - static_cast<double>(n1) * (static_cast<double>(n1) + 1.0) / 2.0) /
                (static_cast<double>(n0) * static_cast<double>(n1));

  // Sweep thresholds downward; predict anomaly when adjusted score >= thr.
  curve.points.push_back({0.0, 0.0});
  long seen0 = 0, seen1 = 0;
  for (std::size_t i = pooled.size(); i > 0;) {
    std::size_t j = i;
    while (j > 0 && pooled[j - 1].first == pooled[i - 1].first) --j;
    for (std::size_t k = j; k < i; ++k) {
      if (pooled[k].second == 0) ++seen0;
      else ++seen1;
    }
    curve.points.push_back({static_cast<double>(seen0) / static_cast<double>(n0),
                            static_cast<double>(seen1) / static_cast<double>(n1)});
    i = j;
  }
  return curve;
}

/// Mean squared difference over two aligned spans.
inline double mse(std::span<const double> reference, std::span<const double> reconstruction) {
  if (reference.size() != reconstruction.size()) {
    throw std::invalid_argument("mse: length mismatch after alignment");
  }
  if (reference.empty()) throw std::invalid_argument("mse: empty input");
  double s = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    const double d = reference[i] - reconstruction[i];
    s += d * d;
  }
  return s / static_cast<double>(reference.size());
}

/// Reconstruction error of a model over a series: encode, decode, and compare
/// on the aligned overlap.
inline double reconstruction_mse(const model::IaeModel& m, const ts::TimeSeries& series) {
  const model::InnovationsSequence nu = model::encode(m, series);
  const ts::TimeSeries rec = model::decode(m, nu);
  const std::size_t off = model::reconstruction_offset(m);
  return mse(std::span<const double>(series.samples).subspan(off, rec.samples.size()),
             rec.samples);
}

// ---------------------------------------------------------------------------
// Block detection experiments
// ---------------------------------------------------------------------------

struct BlockResult {
  int cls = 0;  // 0 null, 1 anomaly
  double score = 0.0;
  bool reject = false;
};

struct DetectReport {
  std::vector<BlockResult> blocks;
  RocCurve curve;
  double fpr_at_tau = 0.0;
  double tpr_at_tau = 0.0;
};

/// Scores consecutive non-overlapping blocks of a series: encode the block,
/// quantize to spec.q bins, build coincidence statistics, apply the test.
inline std::vector<detect::Decision> score_blocks(const model::IaeModel& m,
                                                  const ts::TimeSeries& series,
                                                  int block_size, int blocks,
                                                  const detect::TestSpec& spec) {
  if (block_size <= m.m) {
    throw std::invalid_argument("score_blocks: block size must exceed the encoder window");
  }
  const int innov_per_block = block_size - m.m + 1;
  if (spec.n != innov_per_block) {
    throw std::invalid_argument(
        "score_blocks: calibration N (" + std::to_string(spec.n) +
        ") does not match innovations per block (" + std::to_string(innov_per_block) + ")");
  }
  if (series.size() < static_cast<std::size_t>(block_size) * static_cast<std::size_t>(blocks)) {
    throw std::invalid_argument("score_blocks: series too short for requested blocks");
  }
  std::vector<detect::Decision> out;
  out.reserve(static_cast<std::size_t>(blocks));
  ts::TimeSeries block;
  for (int i = 0; i < blocks; ++i) {
    block.samples.assign(
        series.samples.begin() + static_cast<long>(i) * block_size,
        series.samples.begin() + static_cast<long>(i + 1) * block_size);
    const model::InnovationsSequence nu = model::encode(m, block);
    const detect::CoincidenceStats st =
        detect::coincidence(detect::quantize(nu.values, spec.q), spec.q);
    out.push_back(detect::linear_test(st, spec));
  }
  return out;
}

/// Runs the two-class experiment: scores null and anomaly blocks, derives the
/// ROC from the continuous scores and the operating point from the
/// calibrated threshold.
inline DetectReport detect_blocks(const model::IaeModel& m, const ts::TimeSeries& null_series,
                                  const ts::TimeSeries& anom_series, int block_size,
                                  int blocks_per_class, const detect::TestSpec& spec) {
  DetectReport report;
  const auto null_dec = score_blocks(m, null_series, block_size, blocks_per_class, spec);
  const auto anom_dec = score_blocks(m, anom_series, block_size, blocks_per_class, spec);
  std::vector<double> s0, s1;
  long r0 = 0, r1 = 0;
  for (const auto& d : null_dec) {
    report.blocks.push_back({0, d.score, d.reject});
    s0.push_back(d.score);
    r0 += d.reject;
  }
  for (const auto& d : anom_dec) {
    report.blocks.push_back({1, d.score, d.reject});
    s1.push_back(d.score);
    r1 += d.reject;
  }
  report.curve = roc(s0, s1, spec.direction);
  report.fpr_at_tau = static_cast<double>(r0) / static_cast<double>(null_dec.size());
  report.tpr_at_tau = static_cast<double>(r1) / static_cast<double>(anom_dec.size());
  return report;
}

}  // namespace iae::eval
