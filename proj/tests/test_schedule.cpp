#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "rgdiff/rng.hpp"
#include "rgdiff/schedule.hpp"
#include "rgdiff/volume.hpp"

using namespace rgdiff;

TEST_CASE("single-step schedule") {
  const NoiseSchedule s = linear_schedule(1, 0.1, 0.1);
  CHECK(s.T() == 1);
  CHECK(s.beta(1) == 0.1);
  CHECK(s.alpha(1) == 0.9);
  CHECK(s.alpha_bar(1) == 0.9);
  CHECK(s.sigma(1) == 0.0);  // posterior rule, alpha_bar(0) = 1
}

TEST_CASE("schedule table invariants") {
  const NoiseSchedule s = linear_schedule(200, 1e-3, 0.1);
  double bar = 1.0;
  for (int t = 1; t <= s.T(); ++t) {
    CHECK(s.beta(t) > 0.0);
    CHECK(s.beta(t) < 1.0);
    CHECK(s.alpha(t) == 1.0 - s.beta(t));
    CHECK(s.alpha_bar(t) == bar * s.alpha(t));  // same accumulation order
    bar = s.alpha_bar(t);
    CHECK(s.alpha_bar(t) < s.alpha_bar(t - 1));  // strictly decreasing
    CHECK(s.alpha_bar(s.T()) <= s.alpha_bar(t));
  }
  CHECK(s.alpha_bar(s.T()) < s.alpha_bar(1));
  CHECK(s.alpha_bar(1) < 1.0);
}

TEST_CASE("sigma follows the configured variance rule") {
  const NoiseSchedule post = linear_schedule(64, 1e-3, 0.2, SigmaRule::kPosterior);
  for (int t = 1; t <= post.T(); ++t) {
    const double expected = std::sqrt(post.beta(t) * (1.0 - post.alpha_bar(t - 1)) /
                                      (1.0 - post.alpha_bar(t)));
    CHECK(post.sigma(t) == Catch::Approx(expected).margin(0.0));
  }
  CHECK(post.sigma(1) == 0.0);

  const NoiseSchedule beta = linear_schedule(64, 1e-3, 0.2, SigmaRule::kBeta);
  CHECK(beta.sigma(1) == 0.0);  // final update stays deterministic
  for (int t = 2; t <= beta.T(); ++t)
    CHECK(beta.sigma(t) == std::sqrt(beta.beta(t)));
}

TEST_CASE("canonical 1000-step schedule regression") {
  const NoiseSchedule s = linear_schedule(1000, 1e-4, 0.02);
  // Direct product over all t, computed independently at 40-digit precision.
  const double expected = 4.0358297653756833e-05;
  CHECK(std::abs(s.alpha_bar(1000) - expected) <= 1e-12 * expected);
  CHECK(s.beta(1) == 1e-4);
  CHECK(s.beta(1000) == 0.02);
}

TEST_CASE("schedules are pure functions of their inputs") {
  const NoiseSchedule a = linear_schedule(128, 2e-4, 0.05);
  const NoiseSchedule b = linear_schedule(128, 2e-4, 0.05);
  CHECK(a.beta_table() == b.beta_table());
  CHECK(a.alpha_bar_table() == b.alpha_bar_table());
  CHECK(a.sigma_table() == b.sigma_table());
}

TEST_CASE("schedule construction rejects bad parameters") {
  CHECK_THROWS_AS(linear_schedule(0, 1e-4, 0.02), std::invalid_argument);
  CHECK_THROWS_AS(linear_schedule(10, 0.0, 0.02), std::invalid_argument);
  CHECK_THROWS_AS(linear_schedule(10, 0.1, 0.05), std::invalid_argument);
  CHECK_THROWS_AS(linear_schedule(10, 1e-4, 1.0), std::invalid_argument);
}

TEST_CASE("q_sample at alpha_bar = 0.25 matches the closed form") {
  // beta = (0.5, 0.5) gives alpha_bar(2) = 0.25 exactly.
  const NoiseSchedule s(std::vector<double>{0.5, 0.5}, SigmaRule::kPosterior);
  REQUIRE(s.alpha_bar(2) == 0.25);
  SeededRng rng(21, 0);
  const ImageVolume y0 = gaussian_volume(Shape{8, 8}, rng, 0.3, 0.2);
  SeededRng qrng(22, 0);
  const auto [y_t, eps] = q_sample(y0, 2, s, qrng);
  const ImageVolume expected =
      axpy_combine({0.5, std::sqrt(0.75)}, {&y0, &eps});
  CHECK(bit_equal(y_t, expected));
}

TEST_CASE("q_sample round-trips y0 at every timestep") {
  const NoiseSchedule s = linear_schedule(100, 1e-3, 0.2);
  SeededRng rng(33, 0);
  const ImageVolume y0 = gaussian_volume(Shape{12, 12}, rng, 0.5, 0.25);
  for (int t = 1; t <= s.T(); t += 7) {
    SeededRng qrng(34, static_cast<std::uint64_t>(t));
    const auto [y_t, eps] = q_sample(y0, t, s, qrng);
    const double bar = s.alpha_bar(t);
    const ImageVolume rec = axpy_combine(
        {1.0 / std::sqrt(bar), -std::sqrt(1.0 - bar) / std::sqrt(bar)},
        {&y_t, &eps});
    double worst = 0.0;
    for (std::int64_t i = 0; i < y0.size(); ++i)
      worst = std::max(worst,
                       std::abs(rec[i] - y0[i]) / std::max(1.0, std::abs(y0[i])));
    CHECK(worst <= 1e-5);
  }
  SeededRng qrng(35, 0);
  CHECK_THROWS_AS(q_sample(y0, 0, s, qrng), std::invalid_argument);
  CHECK_THROWS_AS(q_sample(y0, 101, s, qrng), std::invalid_argument);
}

TEST_CASE("q_sample marginal statistics: mean and variance laws") {
  const NoiseSchedule s = linear_schedule(50, 1e-3, 0.2);
  const int t = 30;
  const double bar = s.alpha_bar(t);
  const double c = 0.7;
  const ImageVolume y0 = ImageVolume::filled(Shape{100, 100}, c);
  SeededRng rng(77, 0);
  const auto [y_t, eps] = q_sample(y0, t, s, rng);
  // CLT bound: 3 sqrt((1-bar)/1e4)
  CHECK(std::abs(mean_value(y_t) - std::sqrt(bar) * c) <=
        3.0 * std::sqrt((1.0 - bar) / 1e4));
  // Per-voxel variance of y_t - sqrt(bar) y0 converges to (1 - bar):
  // the sample variance over 1e4 voxels has relative sd ~ sqrt(2/N).
  const ImageVolume noise_part =
      axpy_combine({1.0, -std::sqrt(bar)}, {&y_t, &y0});
  const double sd = stddev_value(noise_part);
  CHECK(std::abs(sd * sd - (1.0 - bar)) <=
        4.0 * std::sqrt(2.0 / 1e4) * (1.0 - bar));
}
