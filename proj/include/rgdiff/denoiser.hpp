#pragma once

#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "rgdiff/schedule.hpp"
#include "rgdiff/volume.hpp"

namespace rgdiff {

/// Noise predictor eps(y_t, x, t). Implementations are immutable after
/// construction and predict() is a pure function, so a single instance can
/// serve any number of sampler threads; all stochasticity lives in the
/// sampler.
class Denoiser {
 public:
  virtual ~Denoiser() = default;

  virtual ImageVolume predict(const ImageVolume& y_t, const ImageVolume& x,
                              int t, const NoiseSchedule& schedule) const = 0;

  /// Stable identifier for configs and reports.
  virtual std::string id() const = 0;
};

/// Inverts the forward marginal around a known clean image:
/// eps = (y_t - sqrt(alpha_bar) y0) / sqrt(1 - alpha_bar).
class OracleDenoiser final : public Denoiser {
 public:
  explicit OracleDenoiser(ImageVolume y0) : y0_(std::move(y0)) {
    if (!y0_.all_finite())
      throw std::invalid_argument("OracleDenoiser: y0 must be finite");
  }

  ImageVolume predict(const ImageVolume& y_t, const ImageVolume&, int t,
                      const NoiseSchedule& schedule) const override {
    require_same_shape(y_t, y0_, "OracleDenoiser::predict");
    const double bar = schedule.alpha_bar(t);
    if (bar >= 1.0)
      throw std::invalid_argument("OracleDenoiser: alpha_bar(t) must be < 1");
    const double inv = 1.0 / std::sqrt(1.0 - bar);
    return axpy_combine({inv, -std::sqrt(bar) * inv}, {&y_t, &y0_});
  }

  std::string id() const override { return "oracle"; }

 private:
  ImageVolume y0_;
};

/// Bayes-optimal predictor for y0 ~ N(mu, diag(var)) per voxel:
///   E[y0|y_t] = (sqrt(ab) var y_t + (1-ab) mu) / (ab var + (1-ab))
///   eps = (y_t - sqrt(ab) E[y0|y_t]) / sqrt(1-ab)
/// Useful as a distributional check: ancestral sampling with this denoiser
/// must reproduce the prior.
class GaussianAnalyticDenoiser final : public Denoiser {
 public:
  GaussianAnalyticDenoiser(ImageVolume mu, ImageVolume var)
      : mu_(std::move(mu)), var_(std::move(var)) {
    require_same_shape(mu_, var_, "GaussianAnalyticDenoiser");
    if (min_value(var_) <= 0.0)
      throw std::invalid_argument(
          "GaussianAnalyticDenoiser: variance must be positive per voxel");
  }

  ImageVolume predict(const ImageVolume& y_t, const ImageVolume&, int t,
                      const NoiseSchedule& schedule) const override {
    require_same_shape(y_t, mu_, "GaussianAnalyticDenoiser::predict");
    const double bar = schedule.alpha_bar(t);
    const double rbar = std::sqrt(bar);
    const double om = 1.0 - bar;
    const double inv = 1.0 / std::sqrt(om);
    std::vector<double> out(static_cast<std::size_t>(y_t.size()));
    for (std::int64_t i = 0; i < y_t.size(); ++i) {
      const double post_mean =
          (rbar * var_[i] * y_t[i] + om * mu_[i]) / (bar * var_[i] + om);
      out[i] = (y_t[i] - rbar * post_mean) * inv;
    }
    return ImageVolume(y_t.shape(), std::move(out));
  }

  std::string id() const override { return "gaussian"; }

 private:
  ImageVolume mu_;
  ImageVolume var_;
};

/// eps = a (*) y_t + b, ignoring x and t. The sensitivity probe has a closed
/// form against this model, which makes it the reference for estimator tests.
class LinearDenoiser final : public Denoiser {
 public:
  LinearDenoiser(ImageVolume a, ImageVolume b)
      : a_(std::move(a)), b_(std::move(b)) {
    require_same_shape(a_, b_, "LinearDenoiser");
  }

  ImageVolume predict(const ImageVolume& y_t, const ImageVolume&, int,
                      const NoiseSchedule&) const override {
    require_same_shape(y_t, a_, "LinearDenoiser::predict");
    std::vector<double> out(static_cast<std::size_t>(y_t.size()));
    for (std::int64_t i = 0; i < y_t.size(); ++i)
      out[i] = a_[i] * y_t[i] + b_[i];
    return ImageVolume(y_t.shape(), std::move(out));
  }

  std::string id() const override { return "linear"; }

 private:
  ImageVolume a_;
  ImageVolume b_;
};

/// Implied clean-image estimate from a noise prediction:
/// y0_hat = (y_t - sqrt(1-alpha_bar) eps) / sqrt(alpha_bar).
inline ImageVolume implied_y0(const ImageVolume& y_t, const ImageVolume& eps,
                              int t, const NoiseSchedule& schedule) {
  const double bar = schedule.alpha_bar(t);
  const double inv = 1.0 / std::sqrt(bar);
  return axpy_combine({inv, -std::sqrt(1.0 - bar) * inv}, {&y_t, &eps});
}

}  // namespace rgdiff
