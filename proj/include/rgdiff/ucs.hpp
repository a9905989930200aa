#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "rgdiff/errors.hpp"
#include "rgdiff/rgs.hpp"
#include "rgdiff/volume.hpp"

namespace rgdiff {

/// Uncertainty-aware candidate selection parameters. beta == 0 turns the
/// aggregation into the plain mean of the retained candidates.
struct UcsConfig {
  int K = 8;
  int M = 6;
  double beta = 1.0;
  std::uint64_t base_seed = 0;  // candidate k samples on stream base_seed ^ k

  void validate() const {
    if (K < 1) throw std::invalid_argument("ucs: K must be >= 1");
    if (M < 1 || M > K) throw std::invalid_argument("ucs: need 1 <= M <= K");
    if (!(beta >= 0.0)) throw std::invalid_argument("ucs: beta must be >= 0");
  }
};

/// Everything the selection pipeline derives from the K reconstructions,
/// kept for inspection and export.
struct CandidateSet {
  std::vector<ImageVolume> candidates;      // all K
  ImageVolume mean;                         // over all K
  std::vector<ImageVolume> deviations;      // |candidate - mean|, all K
  std::vector<double> scalar_scores;        // spatial mean deviation, all K
  std::vector<int> retained;                // M indices, ascending
  ImageVolume variance;                     // over retained, population form
  std::vector<ImageVolume> weights;         // per retained candidate
};

/// K stochastic reconstructions; candidate k runs its chain on RNG stream
/// base_seed ^ k, so the list is reproducible and candidates differ only
/// through their draws.
inline std::vector<ImageVolume> generate_candidates(
    const ImageVolume& x, const Denoiser& denoiser, const NoiseSchedule& schedule,
    const RgsConfig& rgs_cfg, const UcsConfig& ucs_cfg, std::uint64_t seed) {
  ucs_cfg.validate();
  std::vector<ImageVolume> out;
  out.reserve(static_cast<std::size_t>(ucs_cfg.K));
  for (int k = 0; k < ucs_cfg.K; ++k) {
    SeededRng chain_rng(seed, ucs_cfg.base_seed ^ static_cast<std::uint64_t>(k));
    try {
      out.push_back(sample_chain(x, denoiser, schedule, rgs_cfg, chain_rng));
    } catch (const NumericError& e) {
      throw NumericError("candidate " + std::to_string(k) + ": " + e.what());
    }
  }
  return out;
}

struct DeviationScores {
  ImageVolume mean;
  std::vector<ImageVolume> deviations;
  std::vector<double> scalar_scores;
};

/// Candidate mean mu over all K, per-voxel absolute deviations from mu, and
/// each candidate's spatially averaged deviation (the ranking key).
inline DeviationScores deviation_scores(const std::vector<ImageVolume>& candidates) {
  if (candidates.empty())
    throw std::invalid_argument("deviation_scores: empty candidate list");
  for (std::size_t k = 1; k < candidates.size(); ++k)
    require_same_shape(candidates[0], candidates[k], "deviation_scores");

  const std::int64_t n = candidates[0].size();
  const double inv_k = 1.0 / static_cast<double>(candidates.size());
  // Mean anchored at candidate 0: identical candidates get deviation 0
  // exactly instead of an accumulation ulp.
  std::vector<double> mean(static_cast<std::size_t>(n), 0.0);
  for (const auto& c : candidates)
    for (std::int64_t i = 0; i < n; ++i)
      mean[static_cast<std::size_t>(i)] += c[i] - candidates[0][i];
  for (std::int64_t i = 0; i < n; ++i)
    mean[static_cast<std::size_t>(i)] =
        candidates[0][i] + mean[static_cast<std::size_t>(i)] * inv_k;
  ImageVolume mu(candidates[0].shape(), std::move(mean));

  DeviationScores out{std::move(mu), {}, {}};
  out.deviations.reserve(candidates.size());
  out.scalar_scores.reserve(candidates.size());
  for (const auto& c : candidates) {
    std::vector<double> d(static_cast<std::size_t>(n));
    double acc = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
      d[static_cast<std::size_t>(i)] = std::abs(c[i] - out.mean[i]);
      acc += d[static_cast<std::size_t>(i)];
    }
    out.deviations.emplace_back(c.shape(), std::move(d));
    out.scalar_scores.push_back(acc / static_cast<double>(n));
  }
  return out;
}

/// Indices of the M smallest scalar scores, ties broken by lower candidate
/// index; returned in ascending index order.
inline std::vector<int> filter_top_m(const std::vector<double>& scalar_scores,
                                     int m) {
  const int k = static_cast<int>(scalar_scores.size());
  if (m < 1 || m > k)
    throw std::invalid_argument("filter_top_m: M out of range [1," +
                                std::to_string(k) + "]");
  std::vector<int> order(scalar_scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return scalar_scores[static_cast<std::size_t>(a)] <
           scalar_scores[static_cast<std::size_t>(b)];
  });
  order.resize(static_cast<std::size_t>(m));
  std::sort(order.begin(), order.end());
  return order;
}

/// Per-voxel population variance (divide by M) over the retained candidates;
/// a single retained candidate yields the zero map.
inline ImageVolume variance_map(const std::vector<ImageVolume>& candidates,
                                const std::vector<int>& retained) {
  if (retained.empty())
    throw std::invalid_argument("variance_map: needs at least one candidate");
  const std::int64_t n = candidates[0].size();
  const double inv_m = 1.0 / static_cast<double>(retained.size());
  // Anchored mean, as in deviation_scores: identical candidates must give a
  // variance of exactly zero.
  const auto& anchor = candidates[static_cast<std::size_t>(retained[0])];
  std::vector<double> mean(static_cast<std::size_t>(n), 0.0);
  for (int k : retained)
    for (std::int64_t i = 0; i < n; ++i)
      mean[static_cast<std::size_t>(i)] +=
          candidates[static_cast<std::size_t>(k)][i] - anchor[i];
  for (std::int64_t i = 0; i < n; ++i)
    mean[static_cast<std::size_t>(i)] =
        anchor[i] + mean[static_cast<std::size_t>(i)] * inv_m;
  std::vector<double> var(static_cast<std::size_t>(n), 0.0);
  for (int k : retained)
    for (std::int64_t i = 0; i < n; ++i) {
      const double d = candidates[static_cast<std::size_t>(k)][i] -
                       mean[static_cast<std::size_t>(i)];
      var[static_cast<std::size_t>(i)] += d * d;
    }
  for (double& v : var) v *= inv_m;
  return ImageVolume(candidates[0].shape(), std::move(var));
}

/// Reliability-weighted fusion over the retained candidates:
///   w_k = exp(-beta U d_k), y_hat = sum w_k y_k / sum w_k.
/// Deviations d_k are the ones computed against the all-K mean. Weights are
/// normalized per voxel so the smallest exponent maps to exactly 1; the
/// ratios w_k/w_j are unchanged, every weight stays in (0,1], and the
/// denominator is at least 1 even where beta*U*d would underflow exp().
inline std::pair<ImageVolume, std::vector<ImageVolume>> aggregate(
    const std::vector<ImageVolume>& candidates,
    const std::vector<ImageVolume>& deviations, const std::vector<int>& retained,
    const ImageVolume& variance, double beta) {
  if (!(beta >= 0.0)) throw std::invalid_argument("aggregate: beta must be >= 0");
  if (retained.empty())
    throw std::invalid_argument("aggregate: needs at least one candidate");
  const std::int64_t n = variance.size();
  const std::size_t m = retained.size();
  std::vector<ImageVolume> weights;
  weights.reserve(m);
  std::vector<std::vector<double>> w(m, std::vector<double>(static_cast<std::size_t>(n)));
  std::vector<double> out(static_cast<std::size_t>(n));
  std::vector<double> exponent(m);
  for (std::int64_t i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < m; ++k) {
      const auto& dev = deviations[static_cast<std::size_t>(retained[k])];
      exponent[k] = beta * variance[i] * dev[i];
      best = std::min(best, exponent[k]);
    }
    double num = 0.0, den = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
      const double wi = std::exp(best - exponent[k]);
      w[k][static_cast<std::size_t>(i)] = wi;
      num += wi * candidates[static_cast<std::size_t>(retained[k])][i];
      den += wi;
    }
    out[static_cast<std::size_t>(i)] = num / den;
  }
  for (std::size_t k = 0; k < m; ++k)
    weights.emplace_back(variance.shape(), std::move(w[k]));
  return {ImageVolume(variance.shape(), std::move(out)), std::move(weights)};
}

struct UcsResult {
  ImageVolume y_hat;
  CandidateSet set;
};

/// Generate K candidates, score and filter to the top M, estimate the
/// per-voxel variance, and fuse. Returns the final image plus the full
/// candidate set.
inline UcsResult ucs_pipeline(const ImageVolume& x, const Denoiser& denoiser,
                              const NoiseSchedule& schedule,
                              const RgsConfig& rgs_cfg, const UcsConfig& ucs_cfg,
                              std::uint64_t seed) {
  ucs_cfg.validate();
  std::vector<ImageVolume> candidates =
      generate_candidates(x, denoiser, schedule, rgs_cfg, ucs_cfg, seed);
  DeviationScores scores = deviation_scores(candidates);
  std::vector<int> retained = filter_top_m(scores.scalar_scores, ucs_cfg.M);
  ImageVolume variance = variance_map(candidates, retained);
  auto [y_hat, weights] = aggregate(candidates, scores.deviations, retained,
                                    variance, ucs_cfg.beta);
  CandidateSet set{std::move(candidates), std::move(scores.mean),
                   std::move(scores.deviations), std::move(scores.scalar_scores),
                   std::move(retained),   std::move(variance),
                   std::move(weights)};
  return UcsResult{std::move(y_hat), std::move(set)};
}

}  // namespace rgdiff
