#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "rgdiff/rng.hpp"
#include "rgdiff/volume.hpp"

namespace rgdiff {

/// Low-field observation model: blur, then gamma contrast, then additive
/// Gaussian noise. With blur_sigma=0, contrast_gamma=1, contrast_scale=1 and
/// noise_std=0 the operator is the identity and the generator is untouched.
struct DegradationConfig {
  double blur_sigma = 1.2;
  double contrast_gamma = 0.9;
  double contrast_scale = 1.0;
  double noise_std = 0.03;
  std::uint64_t rng_stream = 0;

  void validate() const {
    if (!(blur_sigma >= 0.0))
      throw std::invalid_argument("degradation: blur_sigma must be >= 0");
    if (!(contrast_gamma > 0.0))
      throw std::invalid_argument("degradation: contrast_gamma must be > 0");
    if (!(contrast_scale > 0.0))
      throw std::invalid_argument("degradation: contrast_scale must be > 0");
    if (!(noise_std >= 0.0))
      throw std::invalid_argument("degradation: noise_std must be >= 0");
  }
};

namespace detail {

// Reflect indexing (edge repeated): -1 -> 0, n -> n-1.
inline std::int64_t reflect_index(std::int64_t i, std::int64_t n) {
  while (i < 0 || i >= n) {
    if (i < 0) i = -i - 1;
    if (i >= n) i = 2 * n - i - 1;
  }
  return i;
}

inline std::vector<double> gaussian_kernel(double sigma) {
  const auto radius = static_cast<std::int64_t>(std::ceil(3.0 * sigma));
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0.0;
  for (std::int64_t i = -radius; i <= radius; ++i) {
    const double w = std::exp(-0.5 * (static_cast<double>(i) * i) / (sigma * sigma));
    k[static_cast<std::size_t>(i + radius)] = w;
    sum += w;
  }
  for (double& w : k) w /= sum;
  return k;
}

// Convolve along one axis with reflect padding. Shapes are (H[,W[,D]]);
// axis is an index into the shape vector.
inline std::vector<double> convolve_axis(const std::vector<double>& in,
                                         const Shape& shape, int axis,
                                         const std::vector<double>& kernel) {
  const std::int64_t radius = (static_cast<std::int64_t>(kernel.size()) - 1) / 2;
  std::int64_t n = shape[axis];
  std::int64_t stride = 1;
  for (std::size_t a = axis + 1; a < shape.size(); ++a) stride *= shape[a];
  const std::int64_t total = static_cast<std::int64_t>(in.size());
  const std::int64_t block = n * stride;  // elements spanned by one line set

  std::vector<double> out(in.size());
  for (std::int64_t base = 0; base < total; base += block) {
    for (std::int64_t off = 0; off < stride; ++off) {
      for (std::int64_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (std::int64_t k = -radius; k <= radius; ++k) {
          const std::int64_t j = reflect_index(i + k, n);
          acc += kernel[static_cast<std::size_t>(k + radius)] *
                 in[static_cast<std::size_t>(base + j * stride + off)];
        }
        out[static_cast<std::size_t>(base + i * stride + off)] = acc;
      }
    }
  }
  return out;
}

}  // namespace detail

/// Separable Gaussian low-pass, kernel truncated at radius ceil(3*sigma) and
/// renormalized to sum 1, reflect padding at borders. sigma == 0 returns the
/// input unchanged.
inline ImageVolume gaussian_blur(const ImageVolume& y, double sigma) {
  if (!(sigma >= 0.0))
    throw std::invalid_argument("gaussian_blur: sigma must be >= 0");
  if (sigma == 0.0) return y;
  const auto kernel = detail::gaussian_kernel(sigma);
  std::vector<double> data(y.data().begin(), y.data().end());
  for (int axis = 0; axis < y.dims(); ++axis)
    data = detail::convolve_axis(data, y.shape(), axis, kernel);
  return ImageVolume(y.shape(), std::move(data));
}

/// x = contrast_scale * blur(y)^contrast_gamma + N(0, noise_std^2).
/// The generator is consumed only when noise_std > 0, and each stage is
/// skipped exactly at its identity parameter so the identity config is
/// bit-exact.
inline ImageVolume degrade(const ImageVolume& y, const DegradationConfig& cfg,
                           SeededRng& rng) {
  cfg.validate();
  if (cfg.contrast_gamma != 1.0 && min_value(y) < 0.0)
    throw std::invalid_argument(
        "degrade: gamma contrast requires nonnegative input values");

  ImageVolume x = gaussian_blur(y, cfg.blur_sigma);
  if (cfg.contrast_gamma != 1.0 || cfg.contrast_scale != 1.0) {
    std::vector<double> data(x.data().begin(), x.data().end());
    for (double& v : data) {
      if (cfg.contrast_gamma != 1.0) v = std::pow(v, cfg.contrast_gamma);
      if (cfg.contrast_scale != 1.0) v *= cfg.contrast_scale;
    }
    x = ImageVolume(x.shape(), std::move(data));
  }
  if (cfg.noise_std > 0.0) {
    ImageVolume noise = gaussian_volume(x.shape(), rng, 0.0, cfg.noise_std);
    x = axpy_combine({1.0, 1.0}, {&x, &noise});
  }
  return x;
}

}  // namespace rgdiff
