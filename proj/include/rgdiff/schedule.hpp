#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "rgdiff/rng.hpp"
#include "rgdiff/volume.hpp"

namespace rgdiff {

enum class SigmaRule { kPosterior, kBeta };

inline const char* sigma_rule_name(SigmaRule r) {
  return r == SigmaRule::kPosterior ? "posterior" : "beta";
}

/// Per-timestep diffusion tables. Timesteps are 1-indexed, t in {1..T};
/// y_0 is the clean image and alpha_bar(0) == 1 by convention.
///
/// sigma follows the configured variance rule:
///   posterior: sigma_t^2 = beta_t * (1 - alpha_bar_{t-1}) / (1 - alpha_bar_t),
///              which is exactly 0 at t = 1 since alpha_bar_0 = 1;
///   beta:      sigma_t^2 = beta_t, with sigma_1 forced to 0 so the final
///              update stays deterministic.
class NoiseSchedule {
 public:
  NoiseSchedule(std::vector<double> beta, SigmaRule rule)
      : beta_(std::move(beta)), rule_(rule) {
    const int T = static_cast<int>(beta_.size());
    if (T < 1) throw std::invalid_argument("NoiseSchedule: T must be >= 1");
    alpha_.resize(beta_.size());
    alpha_bar_.resize(beta_.size());
    sigma_.resize(beta_.size());
    double bar = 1.0;
    for (int i = 0; i < T; ++i) {
      if (!(beta_[i] > 0.0 && beta_[i] < 1.0))
        throw std::invalid_argument("NoiseSchedule: beta_t must lie in (0,1), got " +
                                    std::to_string(beta_[i]) + " at t=" +
                                    std::to_string(i + 1));
      alpha_[i] = 1.0 - beta_[i];
      const double bar_prev = bar;
      bar *= alpha_[i];
      alpha_bar_[i] = bar;
      if (rule_ == SigmaRule::kPosterior) {
        sigma_[i] = std::sqrt(beta_[i] * (1.0 - bar_prev) / (1.0 - bar));
      } else {
        sigma_[i] = (i == 0) ? 0.0 : std::sqrt(beta_[i]);
      }
    }
  }

  int T() const { return static_cast<int>(beta_.size()); }
  SigmaRule rule() const { return rule_; }

  double beta(int t) const { return beta_[index(t)]; }
  double alpha(int t) const { return alpha_[index(t)]; }
  double sigma(int t) const { return sigma_[index(t)]; }

  /// alpha_bar(0) == 1 (clean-image convention).
  double alpha_bar(int t) const {
    if (t == 0) return 1.0;
    return alpha_bar_[index(t)];
  }

  const std::vector<double>& beta_table() const { return beta_; }
  const std::vector<double>& alpha_table() const { return alpha_; }
  const std::vector<double>& alpha_bar_table() const { return alpha_bar_; }
  const std::vector<double>& sigma_table() const { return sigma_; }

  void check_timestep(int t) const {
    if (t < 1 || t > T())
      throw std::invalid_argument("timestep " + std::to_string(t) +
                                  " out of range [1," + std::to_string(T()) + "]");
  }

 private:
  int index(int t) const {
    check_timestep(t);
    return t - 1;
  }

  std::vector<double> beta_;
  std::vector<double> alpha_;
  std::vector<double> alpha_bar_;
  std::vector<double> sigma_;
  SigmaRule rule_;
};

/// beta_t interpolated linearly from beta_start to beta_end inclusive.
inline NoiseSchedule linear_schedule(int T, double beta_start = 1e-4,
                                     double beta_end = 0.02,
                                     SigmaRule rule = SigmaRule::kPosterior) {
  if (T < 1) throw std::invalid_argument("linear_schedule: T must be >= 1");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0))
    throw std::invalid_argument(
        "linear_schedule: need 0 < beta_start <= beta_end < 1");
  std::vector<double> beta(static_cast<std::size_t>(T));
  if (T == 1) {
    beta[0] = beta_start;
  } else {
    for (int i = 0; i < T; ++i)
      beta[i] = beta_start + (beta_end - beta_start) *
                                 (static_cast<double>(i) / (T - 1));
  }
  return NoiseSchedule(std::move(beta), rule);
}

/// Forward marginal: y_t = sqrt(alpha_bar_t) y0 + sqrt(1 - alpha_bar_t) eps.
/// Returns both y_t and the exact eps so oracle denoisers can invert it.
inline std::pair<ImageVolume, ImageVolume> q_sample(const ImageVolume& y0, int t,
                                                    const NoiseSchedule& schedule,
                                                    SeededRng& rng) {
  schedule.check_timestep(t);
  const double bar = schedule.alpha_bar(t);
  ImageVolume eps = gaussian_volume(y0.shape(), rng, 0.0, 1.0);
  ImageVolume y_t =
      axpy_combine({std::sqrt(bar), std::sqrt(1.0 - bar)}, {&y0, &eps});
  return {std::move(y_t), std::move(eps)};
}

}  // namespace rgdiff
