#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "rgdiff/rng.hpp"
#include "rgdiff/volume.hpp"

namespace rgdiff {

/// One ellipse (2-D) or ellipsoid (3-D, rotated about the depth axis only).
/// Coordinates and axes are in voxel units; membership at voxel (i,j[,k]) is
/// the standard ellipse inequality evaluated at integer coordinates.
struct Ellipse {
  double center_y = 0.0;
  double center_x = 0.0;
  double center_z = 0.0;
  double axis_y = 1.0;
  double axis_x = 1.0;
  double axis_z = 1.0;
  double rotation = 0.0;  // radians, in the y-x plane
  double intensity = 1.0;
};

/// Distribution parameters for random phantoms. The first ellipse is a large
/// centered "body"; the rest are smaller interior structures with sharp
/// boundaries, which is enough piecewise-smooth anatomy for metric work.
struct PhantomSpec {
  int n_ellipses = 6;
  double body_intensity_lo = 0.25;
  double body_intensity_hi = 0.45;
  double detail_intensity_lo = 0.05;
  double detail_intensity_hi = 0.95;
  double detail_axis_frac_lo = 0.04;
  double detail_axis_frac_hi = 0.18;
};

/// Deterministic rendering: later ellipses overwrite earlier ones where they
/// overlap; values are clamped to [0,1]; background is 0.
inline ImageVolume render_phantom(const Shape& size,
                                  const std::vector<Ellipse>& ellipses) {
  if (size.size() != 2 && size.size() != 3)
    throw std::invalid_argument("render_phantom: size must be 2-D or 3-D");
  for (const auto& e : ellipses)
    if (!(e.axis_y > 0.0) || !(e.axis_x > 0.0) ||
        (size.size() == 3 && !(e.axis_z > 0.0)))
      throw std::invalid_argument("render_phantom: degenerate ellipse axes");

  const std::int64_t h = size[0];
  const std::int64_t w = size[1];
  const std::int64_t d = size.size() == 3 ? size[2] : 1;
  std::vector<double> img(static_cast<std::size_t>(h * w * d), 0.0);

  for (const auto& e : ellipses) {
    const double c = std::cos(e.rotation);
    const double s = std::sin(e.rotation);
    const double value = std::clamp(e.intensity, 0.0, 1.0);
    for (std::int64_t i = 0; i < h; ++i) {
      for (std::int64_t j = 0; j < w; ++j) {
        const double dy = static_cast<double>(i) - e.center_y;
        const double dx = static_cast<double>(j) - e.center_x;
        const double u = (dy * c + dx * s) / e.axis_y;
        const double v = (-dy * s + dx * c) / e.axis_x;
        const double planar = u * u + v * v;
        for (std::int64_t k = 0; k < d; ++k) {
          double q = planar;
          if (size.size() == 3) {
            const double dz = (static_cast<double>(k) - e.center_z) / e.axis_z;
            q += dz * dz;
          }
          if (q <= 1.0)
            img[static_cast<std::size_t>((i * w + j) * d + k)] = value;
        }
      }
    }
  }
  Shape out_shape = size;
  return ImageVolume(std::move(out_shape), std::move(img));
}

/// Random phantom: one body ellipse plus spec.n_ellipses - 1 interior
/// details, all drawn from the given generator. Identical (spec, size,
/// stream) reproduce the phantom bit for bit.
inline ImageVolume generate_phantom(const PhantomSpec& spec, const Shape& size,
                                    SeededRng& rng) {
  if (size.size() != 2 && size.size() != 3)
    throw std::invalid_argument("generate_phantom: size must be 2-D or 3-D");
  for (std::int64_t dim : size)
    if (dim < 32)
      throw std::invalid_argument("generate_phantom: each dimension must be >= 32");
  if (spec.n_ellipses < 0)
    throw std::invalid_argument("generate_phantom: n_ellipses must be >= 0");

  const bool is3d = size.size() == 3;
  const double h = static_cast<double>(size[0]);
  const double w = static_cast<double>(size[1]);
  const double dz = is3d ? static_cast<double>(size[2]) : 1.0;
  const double min_hw = std::min(h, w);

  std::vector<Ellipse> ellipses;
  ellipses.reserve(static_cast<std::size_t>(spec.n_ellipses));
  if (spec.n_ellipses > 0) {
    Ellipse body;
    body.center_y = (h - 1.0) / 2.0 + rng.uniform_in(-0.02, 0.02) * h;
    body.center_x = (w - 1.0) / 2.0 + rng.uniform_in(-0.02, 0.02) * w;
    body.center_z = (dz - 1.0) / 2.0;
    body.axis_y = rng.uniform_in(0.38, 0.44) * h;
    body.axis_x = rng.uniform_in(0.34, 0.42) * w;
    body.axis_z = 0.45 * dz;
    body.rotation = rng.uniform_in(-0.15, 0.15);
    body.intensity = rng.uniform_in(spec.body_intensity_lo, spec.body_intensity_hi);
    ellipses.push_back(body);

    for (int n = 1; n < spec.n_ellipses; ++n) {
      Ellipse e;
      e.center_y = body.center_y + rng.uniform_in(-0.55, 0.55) * body.axis_y;
      e.center_x = body.center_x + rng.uniform_in(-0.55, 0.55) * body.axis_x;
      e.center_z = body.center_z + (is3d ? rng.uniform_in(-0.5, 0.5) * body.axis_z : 0.0);
      e.axis_y = rng.uniform_in(spec.detail_axis_frac_lo, spec.detail_axis_frac_hi) * min_hw;
      e.axis_x = rng.uniform_in(spec.detail_axis_frac_lo, spec.detail_axis_frac_hi) * min_hw;
      e.axis_z = is3d ? rng.uniform_in(spec.detail_axis_frac_lo,
                                       spec.detail_axis_frac_hi) * dz
                      : 1.0;
      e.rotation = rng.uniform_in(0.0, 3.141592653589793);
      e.intensity = rng.uniform_in(spec.detail_intensity_lo, spec.detail_intensity_hi);
      ellipses.push_back(e);
    }
  }
  return render_phantom(size, ellipses).with_range_hint(0.0, 1.0);
}

}  // namespace rgdiff
