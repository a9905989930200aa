#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "rgdiff/denoiser.hpp"
#include "rgdiff/errors.hpp"
#include "rgdiff/rng.hpp"
#include "rgdiff/schedule.hpp"
#include "rgdiff/volume.hpp"

namespace rgdiff {

/// Reliability-guided sampling parameters.
///
/// gamma == 0 disables the mechanism entirely: no probes are drawn and the
/// chain is bit-identical to plain ancestral sampling on the same streams.
/// probe_std == 0 selects the adaptive scale 0.1 * std(y_t), refreshed at
/// every recomputation.
struct RgsConfig {
  double gamma = 0.0;
  double probe_std = 0.0;  // 0 -> adaptive
  int n_probes = 8;
  int probe_every = 50;
  std::uint64_t rng_stream = 0;  // probe stream tag, kept apart from chain noise

  void validate() const {
    if (!(gamma >= 0.0)) throw std::invalid_argument("rgs: gamma must be >= 0");
    if (!(probe_std >= 0.0))
      throw std::invalid_argument("rgs: probe_std must be >= 0 (0 = adaptive)");
    if (n_probes < 1) throw std::invalid_argument("rgs: n_probes must be >= 1");
    if (probe_every < 1) throw std::invalid_argument("rgs: probe_every must be >= 1");
  }
};

/// Per-voxel sensitivity S >= 0 and reliability R = exp(-gamma S) in (0,1],
/// valid for the timestep it was computed at.
struct ReliabilityMap {
  ImageVolume sensitivity;
  ImageVolume reliability;
  int computed_at_t = 0;
};

inline constexpr double kAdaptiveProbeFactor = 0.1;

inline double resolve_probe_std(const RgsConfig& cfg, const ImageVolume& y_t) {
  if (cfg.probe_std > 0.0) return cfg.probe_std;
  const double s = kAdaptiveProbeFactor * stddev_value(y_t);
  return s > 0.0 ? s : 1e-12;  // constant state still gets a usable probe
}

/// Monte-Carlo estimate of S = E_delta |eps(y_t + delta) - eps(y_t)| with
/// delta ~ N(0, probe_std^2 I), averaged per voxel over n_probes draws.
inline ImageVolume estimate_sensitivity(const Denoiser& denoiser,
                                        const ImageVolume& y_t,
                                        const ImageVolume& x, int t,
                                        const NoiseSchedule& schedule,
                                        const RgsConfig& cfg, SeededRng& rng) {
  cfg.validate();
  const double probe_std = resolve_probe_std(cfg, y_t);
  const ImageVolume base = denoiser.predict(y_t, x, t, schedule);
  std::vector<double> acc(static_cast<std::size_t>(y_t.size()), 0.0);
  for (int p = 0; p < cfg.n_probes; ++p) {
    ImageVolume delta = gaussian_volume(y_t.shape(), rng, 0.0, probe_std);
    ImageVolume perturbed = axpy_combine({1.0, 1.0}, {&y_t, &delta});
    ImageVolume pred = denoiser.predict(perturbed, x, t, schedule);
    for (std::int64_t i = 0; i < y_t.size(); ++i)
      acc[static_cast<std::size_t>(i)] += std::abs(pred[i] - base[i]);
  }
  const double inv = 1.0 / static_cast<double>(cfg.n_probes);
  for (double& v : acc) v *= inv;
  return ImageVolume(y_t.shape(), std::move(acc));
}

/// R = exp(-gamma S), voxelwise. S must be nonnegative.
inline ImageVolume reliability_from_sensitivity(const ImageVolume& s,
                                                double gamma) {
  if (!(gamma >= 0.0))
    throw std::invalid_argument("reliability_from_sensitivity: gamma must be >= 0");
  std::vector<double> out(static_cast<std::size_t>(s.size()));
  for (std::int64_t i = 0; i < s.size(); ++i) {
    if (!(s[i] >= 0.0))
      throw std::invalid_argument(
          "reliability_from_sensitivity: negative sensitivity at voxel " +
          std::to_string(i));
    out[static_cast<std::size_t>(i)] = std::exp(-gamma * s[i]);
  }
  return ImageVolume(s.shape(), std::move(out));
}

/// One modulated reverse step:
///   y_{t-1} = (y_t - (1-alpha_t)/sqrt(1-alpha_bar_t) (R (*) eps)) / sqrt(alpha_t)
///             + sigma_t z
/// The noise term is not modulated by R. z is drawn from rng only when
/// sigma_t > 0, so the final deterministic step leaves the stream untouched.
inline ImageVolume rgs_reverse_step(const ImageVolume& y_t, const ImageVolume& x,
                                    int t, const Denoiser& denoiser,
                                    const NoiseSchedule& schedule,
                                    const ImageVolume& reliability,
                                    SeededRng& rng) {
  schedule.check_timestep(t);
  require_same_shape(y_t, reliability, "rgs_reverse_step");
  const double alpha = schedule.alpha(t);
  const double bar = schedule.alpha_bar(t);
  const double inv_sqrt_alpha = 1.0 / std::sqrt(alpha);
  const double eps_coeff = (1.0 - alpha) / std::sqrt(1.0 - bar);

  ImageVolume eps = denoiser.predict(y_t, x, t, schedule);
  require_same_shape(y_t, eps, "rgs_reverse_step: denoiser output");
  ImageVolume modulated = hadamard(reliability, eps);
  ImageVolume mean = axpy_combine({inv_sqrt_alpha, -eps_coeff * inv_sqrt_alpha},
                                  {&y_t, &modulated});
  const double sigma = schedule.sigma(t);
  if (sigma == 0.0) return mean;
  ImageVolume z = gaussian_volume(y_t.shape(), rng, 0.0, 1.0);
  return axpy_combine({1.0, sigma}, {&mean, &z});
}

/// Optional observability of a finished chain.
struct ChainTrace {
  std::optional<ReliabilityMap> last_reliability;
  int reliability_recomputes = 0;
};

/// Full reverse chain: y_T ~ N(0, I) from chain_rng, then T modulated steps.
/// The reliability map is re-estimated from the current state every
/// probe_every steps (first at t = T); probe noise comes from a stream
/// derived from (cfg.rng_stream, chain stream), never from chain_rng, so
/// changing n_probes cannot perturb the z sequence. Any non-finite state
/// aborts with the failing timestep in the message.
inline ImageVolume sample_chain(const ImageVolume& x, const Denoiser& denoiser,
                                const NoiseSchedule& schedule,
                                const RgsConfig& cfg, SeededRng chain_rng,
                                ChainTrace* trace = nullptr) {
  cfg.validate();
  if (!x.all_finite()) throw std::invalid_argument("sample_chain: x must be finite");
  SeededRng probe_rng(chain_rng.seed(),
                      derive_stream(cfg.rng_stream ^ chain_rng.stream(), 0x70726F6265ull));

  ImageVolume y = gaussian_volume(x.shape(), chain_rng, 0.0, 1.0);
  ImageVolume reliability = ImageVolume::ones(x.shape());
  const int T = schedule.T();
  for (int t = T; t >= 1; --t) {
    if (cfg.gamma > 0.0 && (T - t) % cfg.probe_every == 0) {
      ImageVolume s =
          estimate_sensitivity(denoiser, y, x, t, schedule, cfg, probe_rng);
      reliability = reliability_from_sensitivity(s, cfg.gamma);
      if (trace) {
        trace->last_reliability = ReliabilityMap{std::move(s), reliability, t};
        ++trace->reliability_recomputes;
      }
    }
    y = rgs_reverse_step(y, x, t, denoiser, schedule, reliability, chain_rng);
    if (!y.all_finite())
      throw NumericError("sample_chain: non-finite state at timestep " +
                         std::to_string(t));
  }
  return y;
}

}  // namespace rgdiff
