#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "rgdiff/rng.hpp"

namespace rgdiff {

/// Dimensions of a scalar grid, (H, W) or (H, W, D). 1-D shapes are allowed
/// for parameter blocks in the volume container.
using Shape = std::vector<std::int64_t>;

inline std::string shape_to_string(const Shape& s) {
  std::ostringstream os;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << 'x';
    os << s[i];
  }
  return os.str();
}

inline std::int64_t shape_elements(const Shape& s) {
  std::int64_t n = 1;
  for (std::int64_t d : s) n *= d;
  return n;
}

/// Immutable row-major scalar grid. All operations return new volumes;
/// instances are safe to share read-only across threads.
class ImageVolume {
 public:
  ImageVolume(Shape shape, std::vector<double> data,
              std::optional<std::pair<double, double>> range_hint = {})
      : shape_(std::move(shape)),
        data_(std::move(data)),
        range_hint_(range_hint) {
    if (shape_.empty() || shape_.size() > 3)
      throw std::invalid_argument("ImageVolume: shape must have 1-3 dims, got " +
                                  std::to_string(shape_.size()));
    for (std::int64_t d : shape_)
      if (d <= 0)
        throw std::invalid_argument("ImageVolume: nonpositive dimension in shape " +
                                    shape_to_string(shape_));
    if (static_cast<std::int64_t>(data_.size()) != shape_elements(shape_))
      throw std::invalid_argument(
          "ImageVolume: data length " + std::to_string(data_.size()) +
          " does not match shape " + shape_to_string(shape_));
  }

  static ImageVolume filled(Shape shape, double value) {
    auto n = shape_elements(shape);
    for (std::int64_t d : shape)
      if (d <= 0)
        throw std::invalid_argument("ImageVolume: nonpositive dimension in shape " +
                                    shape_to_string(shape));
    return ImageVolume(std::move(shape), std::vector<double>(n, value));
  }

  static ImageVolume zeros(Shape shape) { return filled(std::move(shape), 0.0); }
  static ImageVolume ones(Shape shape) { return filled(std::move(shape), 1.0); }

  const Shape& shape() const { return shape_; }
  int dims() const { return static_cast<int>(shape_.size()); }
  std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
  std::span<const double> data() const { return data_; }

  double operator[](std::int64_t i) const { return data_[i]; }

  /// 2-D accessor (row, col); volumes with depth use at(i, j, k).
  double at(std::int64_t i, std::int64_t j) const {
    return data_[i * shape_[1] + j];
  }
  double at(std::int64_t i, std::int64_t j, std::int64_t k) const {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }

  std::int64_t height() const { return shape_[0]; }
  std::int64_t width() const { return shape_.size() > 1 ? shape_[1] : 1; }
  std::int64_t depth() const { return shape_.size() > 2 ? shape_[2] : 1; }

  bool same_shape(const ImageVolume& other) const {
    return shape_ == other.shape_;
  }

  bool all_finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  const std::optional<std::pair<double, double>>& range_hint() const {
    return range_hint_;
  }

  ImageVolume with_range_hint(double lo, double hi) const {
    return ImageVolume(shape_, data_, std::make_pair(lo, hi));
  }

 private:
  Shape shape_;
  std::vector<double> data_;
  std::optional<std::pair<double, double>> range_hint_;
};

inline void require_same_shape(const ImageVolume& a, const ImageVolume& b,
                               const char* op) {
  if (!a.same_shape(b))
    throw std::invalid_argument(std::string(op) + ": shape mismatch (" +
                                shape_to_string(a.shape()) + " vs " +
                                shape_to_string(b.shape()) + ")");
}

/// Per-voxel product.
inline ImageVolume hadamard(const ImageVolume& a, const ImageVolume& b) {
  require_same_shape(a, b, "hadamard");
  std::vector<double> out(static_cast<std::size_t>(a.size()));
  const auto da = a.data();
  const auto db = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = da[i] * db[i];
  return ImageVolume(a.shape(), std::move(out));
}

/// sum_i coeffs[i] * volumes[i], accumulated left to right per voxel so the
/// result is bit-reproducible regardless of thread count.
inline ImageVolume axpy_combine(std::span<const double> coeffs,
                                std::span<const ImageVolume* const> volumes) {
  if (volumes.empty() || coeffs.size() != volumes.size())
    throw std::invalid_argument("axpy_combine: needs one coefficient per volume, at least one term");
  for (std::size_t i = 1; i < volumes.size(); ++i)
    require_same_shape(*volumes[0], *volumes[i], "axpy_combine");
  std::vector<double> out(static_cast<std::size_t>(volumes[0]->size()));
  for (std::size_t i = 0; i < out.size(); ++i) {
    double acc = coeffs[0] * volumes[0]->data()[i];
    for (std::size_t k = 1; k < volumes.size(); ++k)
      acc += coeffs[k] * volumes[k]->data()[i];
    out[i] = acc;
  }
  return ImageVolume(volumes[0]->shape(), std::move(out));
}

inline ImageVolume axpy_combine(std::initializer_list<double> coeffs,
                                std::initializer_list<const ImageVolume*> volumes) {
  std::vector<double> c(coeffs);
  std::vector<const ImageVolume*> v(volumes);
  return axpy_combine(std::span<const double>(c),
                      std::span<const ImageVolume* const>(v));
}

/// i.i.d. N(mean, std^2) samples in row-major order. std == 0 returns the
/// constant `mean` volume without consuming the generator.
inline ImageVolume gaussian_volume(Shape shape, SeededRng& rng, double mean,
                                   double std) {
  if (!(std >= 0.0))
    throw std::invalid_argument("gaussian_volume: std must be >= 0");
  if (!std::isfinite(mean) || !std::isfinite(std))
    throw std::invalid_argument("gaussian_volume: non-finite parameters");
  if (std == 0.0) return ImageVolume::filled(std::move(shape), mean);
  auto vol = ImageVolume::zeros(std::move(shape));
  std::vector<double> out(static_cast<std::size_t>(vol.size()));
  for (double& v : out) v = mean + std * rng.next_normal();
  return ImageVolume(vol.shape(), std::move(out));
}

inline double mean_value(const ImageVolume& v) {
  double acc = 0.0;
  for (double x : v.data()) acc += x;
  return acc / static_cast<double>(v.size());
}

/// Population standard deviation, two-pass.
inline double stddev_value(const ImageVolume& v) {
  const double m = mean_value(v);
  double acc = 0.0;
  for (double x : v.data()) acc += (x - m) * (x - m);
  return std::sqrt(acc / static_cast<double>(v.size()));
}

inline double min_value(const ImageVolume& v) {
  return *std::min_element(v.data().begin(), v.data().end());
}

inline double max_value(const ImageVolume& v) {
  return *std::max_element(v.data().begin(), v.data().end());
}

inline bool bit_equal(const ImageVolume& a, const ImageVolume& b) {
  if (!a.same_shape(b)) return false;
  for (std::int64_t i = 0; i < a.size(); ++i)
    if (a[i] != b[i] || std::signbit(a[i]) != std::signbit(b[i])) return false;
  return true;
}

}  // namespace rgdiff
