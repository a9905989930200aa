#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "rgdiff/degradation.hpp"
#include "rgdiff/volume.hpp"

namespace rgdiff {

// SSIM uses the reference constants: 11x11 Gaussian window, sigma 1.5,
// K1 = 0.01, K2 = 0.03. Local statistics are averaged over valid window
// positions only (no padding), so values are reproducible to the last bit.
inline constexpr int kSsimWindowRadius = 5;
inline constexpr double kSsimWindowSigma = 1.5;
inline constexpr double kSsimK1 = 0.01;
inline constexpr double kSsimK2 = 0.03;

// High-pass for the artifact score: identity minus Gaussian blur.
inline constexpr double kHighpassSigma = 1.5;

struct MetricsReport {
  std::string method;
  std::string contrast;
  std::string case_id;
  double psnr_db = 0.0;
  double ssim = 0.0;
  double hf_artifact = 0.0;
  // LPIPS is intentionally absent from the computation; the CSV schema
  // keeps an empty column so downstream consumers see the omission.
};

inline double mse(const ImageVolume& a, const ImageVolume& b) {
  require_same_shape(a, b, "mse");
  double acc = 0.0;
  for (std::int64_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc / static_cast<double>(a.size());
}

/// 10 log10(peak^2 / MSE); identical images report +infinity.
inline double psnr(const ImageVolume& a, const ImageVolume& b, double peak) {
  if (!(peak > 0.0)) throw std::invalid_argument("psnr: peak must be > 0");
  const double m = mse(a, b);
  if (m == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / m);
}

namespace detail {

inline const std::vector<double>& ssim_window() {
  static const std::vector<double> w = [] {
    const int size = 2 * kSsimWindowRadius + 1;
    std::vector<double> k(static_cast<std::size_t>(size) * size);
    double sum = 0.0;
    for (int i = -kSsimWindowRadius; i <= kSsimWindowRadius; ++i)
      for (int j = -kSsimWindowRadius; j <= kSsimWindowRadius; ++j) {
        const double g = std::exp(-0.5 * (i * i + j * j) /
                                  (kSsimWindowSigma * kSsimWindowSigma));
        k[static_cast<std::size_t>((i + kSsimWindowRadius) * size +
                                   (j + kSsimWindowRadius))] = g;
        sum += g;
      }
    for (double& v : k) v /= sum;
    return k;
  }();
  return w;
}

// Mean local SSIM over valid windows of one 2-D plane; optionally
// accumulates d(mean SSIM)/d(a) into grad_a.
inline double ssim_plane(std::span<const double> a, std::span<const double> b,
                         std::int64_t h, std::int64_t w, double peak,
                         std::vector<double>* grad_a) {
  const double c1 = (kSsimK1 * peak) * (kSsimK1 * peak);
  const double c2 = (kSsimK2 * peak) * (kSsimK2 * peak);
  const int r = kSsimWindowRadius;
  const int size = 2 * r + 1;
  const auto& win = ssim_window();

  const std::int64_t rows = h - 2 * r;
  const std::int64_t cols = w - 2 * r;
  const double n_windows = static_cast<double>(rows * cols);
  double total = 0.0;

  for (std::int64_t ci = r; ci < h - r; ++ci) {
    for (std::int64_t cj = r; cj < w - r; ++cj) {
      double mx = 0.0, my = 0.0, sxx = 0.0, syy = 0.0, sxy = 0.0;
      for (int di = -r; di <= r; ++di) {
        const std::int64_t row = (ci + di) * w + cj;
        const double* wr = win.data() + (di + r) * size + r;
        for (int dj = -r; dj <= r; ++dj) {
          const double wk = wr[dj];
          const double xv = a[row + dj];
          const double yv = b[row + dj];
          mx += wk * xv;
          my += wk * yv;
          sxx += wk * xv * xv;
          syy += wk * yv * yv;
          sxy += wk * (xv * yv);  // grouping keeps ssim(a,b) == ssim(b,a) bitwise
        }
      }
      const double vx = sxx - mx * mx;
      const double vy = syy - my * my;
      const double cxy = sxy - mx * my;
      const double a1 = 2.0 * (mx * my) + c1;
      const double a2 = 2.0 * cxy + c2;
      const double b1 = mx * mx + my * my + c1;
      const double b2 = vx + vy + c2;
      const double s = (a1 * a2) / (b1 * b2);
      total += s;

      if (grad_a) {
        const double common = 2.0 / (b1 * b2 * n_windows);
        for (int di = -r; di <= r; ++di) {
          const std::int64_t row = (ci + di) * w + cj;
          const double* wr = win.data() + (di + r) * size + r;
          for (int dj = -r; dj <= r; ++dj) {
            const double wk = wr[dj];
            const double xv = a[row + dj];
            const double yv = b[row + dj];
            (*grad_a)[row + dj] +=
                wk * common *
                (my * a2 + a1 * (yv - my) - s * (mx * b2 + b1 * (xv - mx)));
          }
        }
      }
    }
  }
  return total / n_windows;
}

inline void check_ssim_input(const ImageVolume& a, const ImageVolume& b) {
  require_same_shape(a, b, "ssim");
  if (a.dims() < 2)
    throw std::invalid_argument("ssim: needs a 2-D or 3-D volume");
  const int need = 2 * kSsimWindowRadius + 1;
  if (a.height() < need || a.width() < need)
    throw std::invalid_argument("ssim: image smaller than the " +
                                std::to_string(need) + "x" +
                                std::to_string(need) + " window");
}

}  // namespace detail

/// Mean structural similarity. 3-D volumes are scored slice by slice along
/// the last axis and averaged.
inline double ssim(const ImageVolume& a, const ImageVolume& b, double peak) {
  if (!(peak > 0.0)) throw std::invalid_argument("ssim: peak must be > 0");
  detail::check_ssim_input(a, b);
  if (a.dims() == 2)
    return detail::ssim_plane(a.data(), b.data(), a.height(), a.width(), peak,
                              nullptr);
  const std::int64_t h = a.height(), w = a.width(), d = a.depth();
  std::vector<double> pa(static_cast<std::size_t>(h * w)), pb(pa.size());
  double total = 0.0;
  for (std::int64_t k = 0; k < d; ++k) {
    for (std::int64_t i = 0; i < h; ++i)
      for (std::int64_t j = 0; j < w; ++j) {
        pa[i * w + j] = a.at(i, j, k);
        pb[i * w + j] = b.at(i, j, k);
      }
    total += detail::ssim_plane(pa, pb, h, w, peak, nullptr);
  }
  return total / static_cast<double>(d);
}

/// SSIM together with its gradient with respect to the first argument,
/// for use inside training losses. 2-D only.
inline std::pair<double, ImageVolume> ssim_value_and_grad(const ImageVolume& a,
                                                          const ImageVolume& b,
                                                          double peak) {
  if (!(peak > 0.0)) throw std::invalid_argument("ssim: peak must be > 0");
  detail::check_ssim_input(a, b);
  if (a.dims() != 2)
    throw std::invalid_argument("ssim_value_and_grad: 2-D volumes only");
  std::vector<double> grad(static_cast<std::size_t>(a.size()), 0.0);
  const double value =
      detail::ssim_plane(a.data(), b.data(), a.height(), a.width(), peak, &grad);
  return {value, ImageVolume(a.shape(), std::move(grad))};
}

/// Relative L2 distance between high-pass responses:
/// ||hp(pred) - hp(ref)|| / ||hp(ref)|| with hp = identity - blur(1.5).
/// Larger means more high-frequency content unsupported by the reference.
inline double hf_artifact_score(const ImageVolume& pred, const ImageVolume& ref) {
  require_same_shape(pred, ref, "hf_artifact_score");
  ImageVolume bp = gaussian_blur(pred, kHighpassSigma);
  ImageVolume br = gaussian_blur(ref, kHighpassSigma);
  double num = 0.0, den = 0.0, ref_energy = 0.0;
  for (std::int64_t i = 0; i < pred.size(); ++i) {
    const double hp = pred[i] - bp[i];
    const double hr = ref[i] - br[i];
    num += (hp - hr) * (hp - hr);
    den += hr * hr;
    ref_energy += ref[i] * ref[i];
  }
  // A constant reference leaves only rounding residue in the high-pass band.
  if (den == 0.0 || den <= 1e-18 * ref_energy)
    throw std::invalid_argument(
        "hf_artifact_score: reference has no high-frequency energy");
  return std::sqrt(num) / std::sqrt(den);
}

}  // namespace rgdiff
