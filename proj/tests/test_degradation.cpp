#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "rgdiff/degradation.hpp"
#include "rgdiff/metrics.hpp"
#include "rgdiff/phantom.hpp"
#include "rgdiff/rng.hpp"
#include "rgdiff/volume.hpp"

using namespace rgdiff;

namespace {

double total_variation(const ImageVolume& v) {
  double tv = 0.0;
  for (std::int64_t i = 0; i < v.height(); ++i)
    for (std::int64_t j = 0; j < v.width(); ++j) {
      if (i + 1 < v.height()) tv += std::abs(v.at(i + 1, j) - v.at(i, j));
      if (j + 1 < v.width()) tv += std::abs(v.at(i, j + 1) - v.at(i, j));
    }
  return tv;
}

}  // namespace

TEST_CASE("identity config is bit-exact and leaves the generator untouched") {
  SeededRng prng(3, 0);
  const ImageVolume y = generate_phantom(PhantomSpec{}, Shape{48, 48}, prng);
  DegradationConfig cfg;
  cfg.blur_sigma = 0.0;
  cfg.contrast_gamma = 1.0;
  cfg.contrast_scale = 1.0;
  cfg.noise_std = 0.0;
  SeededRng rng(8, 1), fresh(8, 1);
  const ImageVolume x = degrade(y, cfg, rng);
  CHECK(bit_equal(x, y));
  CHECK(rng.next_u64() == fresh.next_u64());
}

TEST_CASE("blur of a unit impulse reproduces the truncated normalized kernel") {
  const double sigma = 1.5;
  const auto radius = static_cast<std::int64_t>(std::ceil(3.0 * sigma));
  std::vector<double> data(32 * 32, 0.0);
  data[16 * 32 + 16] = 1.0;
  const ImageVolume impulse(Shape{32, 32}, std::move(data));
  const ImageVolume blurred = gaussian_blur(impulse, sigma);

  // Direct evaluation of the separable kernel.
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0.0;
  for (std::int64_t i = -radius; i <= radius; ++i) {
    k[static_cast<std::size_t>(i + radius)] =
        std::exp(-0.5 * static_cast<double>(i * i) / (sigma * sigma));
    sum += k[static_cast<std::size_t>(i + radius)];
  }
  for (double& w : k) w /= sum;

  for (std::int64_t i = 0; i < 32; ++i)
    for (std::int64_t j = 0; j < 32; ++j) {
      const std::int64_t di = i - 16, dj = j - 16;
      const double expected =
          (std::abs(di) <= radius && std::abs(dj) <= radius)
              ? k[static_cast<std::size_t>(di + radius)] *
                    k[static_cast<std::size_t>(dj + radius)]
              : 0.0;
      CHECK(std::abs(blurred.at(i, j) - expected) <= 1e-15);
    }
}

TEST_CASE("blur: sigma 0 is identity, constants are preserved, mean is kept") {
  SeededRng prng(4, 0);
  const ImageVolume y = generate_phantom(PhantomSpec{}, Shape{40, 40}, prng);
  CHECK(bit_equal(gaussian_blur(y, 0.0), y));

  const ImageVolume c = ImageVolume::filled(Shape{20, 20}, 0.37);
  const ImageVolume bc = gaussian_blur(c, 2.0);
  for (std::int64_t i = 0; i < bc.size(); ++i)
    CHECK(std::abs(bc[i] - 0.37) <= 1e-12);

  const ImageVolume by = gaussian_blur(y, 1.7);
  CHECK(std::abs(mean_value(by) - mean_value(y)) <= 1e-6);
}

TEST_CASE("blur never increases total variation on phantoms") {
  for (std::uint64_t s = 0; s < 5; ++s) {
    SeededRng prng(11, s);
    const ImageVolume y = generate_phantom(PhantomSpec{}, Shape{48, 48}, prng);
    const ImageVolume b = gaussian_blur(y, 1.2);
    CHECK(total_variation(b) <= total_variation(y));
  }
}

TEST_CASE("noise std is calibrated") {
  const ImageVolume c = ImageVolume::filled(Shape{100, 100}, 0.5);
  DegradationConfig cfg;
  cfg.blur_sigma = 0.0;
  cfg.contrast_gamma = 1.0;
  cfg.contrast_scale = 1.0;
  cfg.noise_std = 0.05;
  SeededRng rng(12, 0);
  const ImageVolume x = degrade(c, cfg, rng);
  const ImageVolume residual = axpy_combine({1.0, -1.0}, {&x, &c});
  const double sd = stddev_value(residual);
  CHECK(sd >= 0.045);
  CHECK(sd <= 0.055);
}

TEST_CASE("degradation lowers PSNR against the clean phantom") {
  SeededRng prng(13, 0);
  const ImageVolume y = generate_phantom(PhantomSpec{}, Shape{48, 48}, prng);
  DegradationConfig cfg;  // defaults: blur + gamma + noise
  SeededRng rng(13, 1);
  const ImageVolume x = degrade(y, cfg, rng);
  CHECK(psnr(x, y, 1.0) < psnr(y, y, 1.0));
  CHECK(std::isfinite(psnr(x, y, 1.0)));
}

TEST_CASE("degradation is deterministic in (y, cfg, seed)") {
  SeededRng prng(14, 0);
  const ImageVolume y = generate_phantom(PhantomSpec{}, Shape{40, 40}, prng);
  DegradationConfig cfg;
  SeededRng a(15, 2), b(15, 2);
  CHECK(bit_equal(degrade(y, cfg, a), degrade(y, cfg, b)));
}

TEST_CASE("degradation rejects invalid parameters and inputs") {
  const ImageVolume y = ImageVolume::filled(Shape{32, 32}, 0.5);
  SeededRng rng(1, 0);
  DegradationConfig bad;
  bad.contrast_gamma = 0.0;
  CHECK_THROWS_AS(degrade(y, bad, rng), std::invalid_argument);
  bad = DegradationConfig{};
  bad.contrast_scale = -1.0;
  CHECK_THROWS_AS(degrade(y, bad, rng), std::invalid_argument);
  CHECK_THROWS_AS(gaussian_blur(y, -0.5), std::invalid_argument);
  // Gamma contrast needs nonnegative input.
  const ImageVolume neg = ImageVolume::filled(Shape{32, 32}, -0.25);
  DegradationConfig gamma_only;
  gamma_only.blur_sigma = 0.0;
  gamma_only.noise_std = 0.0;
  gamma_only.contrast_gamma = 0.9;
  CHECK_THROWS_AS(degrade(neg, gamma_only, rng), std::invalid_argument);
}
