#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <vector>

#include "rgdiff/degradation.hpp"
#include "rgdiff/phantom.hpp"
#include "rgdiff/rng.hpp"
#include "rgdiff/schedule.hpp"
#include "rgdiff/tiny_denoiser.hpp"
#include "rgdiff/volume.hpp"
#include "rgdiff/volume_io.hpp"

using namespace rgdiff;

namespace {

TinyDenoiserConfig small_config() {
  TinyDenoiserConfig cfg;
  cfg.patch_radius_state = 1;
  cfg.patch_radius_cond = 1;
  cfg.hidden = 8;
  return cfg;
}

std::pair<ImageVolume, ImageVolume> make_pair_xy(std::uint64_t stream) {
  SeededRng prng(31, stream);
  ImageVolume y0 = generate_phantom(PhantomSpec{}, Shape{32, 32}, prng);
  DegradationConfig dcfg;
  SeededRng drng(32, stream);
  ImageVolume x = degrade(y0, dcfg, drng);
  return {std::move(x), std::move(y0)};
}

}  // namespace

TEST_CASE("tiny denoiser predictions are shaped, finite, and pure") {
  const NoiseSchedule s = linear_schedule(50, 1e-3, 0.2);
  const TinyDenoiser model(small_config(), SeededRng(1, 0));
  auto [x, y0] = make_pair_xy(0);
  SeededRng qrng(2, 0);
  const auto [y_t, eps] = q_sample(y0, 25, s, qrng);
  const ImageVolume p1 = model.predict(y_t, x, 25, s);
  const ImageVolume p2 = model.predict(y_t, x, 25, s);
  CHECK(p1.shape() == y_t.shape());
  CHECK(p1.all_finite());
  CHECK(bit_equal(p1, p2));
  CHECK_THROWS_AS(model.predict(ImageVolume::zeros(Shape{8, 8, 8}),
                                ImageVolume::zeros(Shape{8, 8, 8}), 1, s),
                  std::invalid_argument);
}

TEST_CASE("analytic parameter gradient matches central differences") {
  const NoiseSchedule s = linear_schedule(50, 1e-3, 0.2);
  TinyDenoiser model(small_config(), SeededRng(3, 0));
  auto [x, y0] = make_pair_xy(1);
  SeededRng erng(4, 0);
  const ImageVolume eps = gaussian_volume(y0.shape(), erng, 0.0, 1.0);
  const int t = 20;
  LossWeights weights;  // lambda1 = 1, lambda2 = 0.2

  const auto [loss, grad] = model.loss_and_gradient(x, y0, eps, t, s, weights);
  REQUIRE(std::isfinite(loss));

  const double h = 1e-5;
  SeededRng pick(5, 0);
  const auto n_params = static_cast<std::uint64_t>(model.param_count());
  for (int trial = 0; trial < 10; ++trial) {
    const auto p = static_cast<std::size_t>(pick.next_below(n_params));
    std::vector<double> params = model.params();
    const double original = params[p];
    params[p] = original + h;
    TinyDenoiser plus(small_config(), params);
    params[p] = original - h;
    TinyDenoiser minus(small_config(), params);
    const double lp = plus.loss_and_gradient(x, y0, eps, t, s, weights).first;
    const double lm = minus.loss_and_gradient(x, y0, eps, t, s, weights).first;
    const double fd = (lp - lm) / (2.0 * h);
    const double scale = std::max({std::abs(fd), std::abs(grad[p]), 1e-8});
    CHECK(std::abs(fd - grad[p]) / scale <= 1e-4);
  }
}

TEST_CASE("training beats the zero predictor on identical pairs") {
  const NoiseSchedule s = linear_schedule(40, 1e-3, 0.25);
  std::vector<std::pair<ImageVolume, ImageVolume>> pairs;
  for (std::uint64_t i = 0; i < 4; ++i) {
    auto [x, y0] = make_pair_xy(10 + i);
    pairs.emplace_back(y0, y0);  // x = y0
  }
  TrainingOptions opts;
  opts.epochs = 8;
  opts.steps_per_pair = 2;
  opts.model = small_config();
  const TrainingResult trained = train_tiny_denoiser(pairs, s, opts, SeededRng(6, 0));

  // Evaluation batch held fixed; the zero predictor is the all-zero model.
  TinyDenoiserConfig cfg = small_config();
  const TinyDenoiser zero(cfg, std::vector<double>(
                                   static_cast<std::size_t>(
                                       trained.denoiser.param_count()),
                                   0.0));
  double fitted_loss = 0.0, zero_loss = 0.0;
  LossWeights weights;
  for (std::uint64_t i = 0; i < pairs.size(); ++i) {
    SeededRng erng(7, i);
    const ImageVolume eps = gaussian_volume(pairs[i].second.shape(), erng, 0.0, 1.0);
    const int t = 10 + 7 * static_cast<int>(i);
    fitted_loss += trained.denoiser
                       .loss_and_gradient(pairs[i].first, pairs[i].second, eps, t,
                                          s, weights)
                       .first;
    zero_loss += zero.loss_and_gradient(pairs[i].first, pairs[i].second, eps, t, s,
                                        weights)
                     .first;
  }
  CHECK(fitted_loss < zero_loss);
}

TEST_CASE("L1-only training on a constant pair approaches the constant") {
  const NoiseSchedule s = linear_schedule(30, 1e-3, 0.2);
  const double c = 0.6;
  const ImageVolume constant = ImageVolume::filled(Shape{32, 32}, c);
  std::vector<std::pair<ImageVolume, ImageVolume>> pairs;
  pairs.emplace_back(constant, constant);
  TrainingOptions opts;
  opts.epochs = 200;
  opts.steps_per_pair = 4;
  opts.learning_rate = 1e-2;
  opts.model = small_config();
  opts.loss.lambda1 = 1.0;
  opts.loss.lambda2 = 0.0;
  const TrainingResult trained =
      train_tiny_denoiser(pairs, s, opts, SeededRng(8, 0));

  // Mean |implied y0 - c| on fresh draws, fitted vs untrained.
  auto eval_error = [&](const TinyDenoiser& model) {
    double err = 0.0;
    int n = 0;
    for (int t : {5, 15, 25}) {
      SeededRng qrng(9, static_cast<std::uint64_t>(t));
      const auto [y_t, eps] = q_sample(constant, t, s, qrng);
      const ImageVolume eps_hat = model.predict(y_t, constant, t, s);
      const ImageVolume y0_hat = implied_y0(y_t, eps_hat, t, s);
      for (std::int64_t i = 0; i < y0_hat.size(); ++i) {
        err += std::abs(y0_hat[i] - c);
        ++n;
      }
    }
    return err / n;
  };
  const TinyDenoiser untrained(small_config(),
                               SeededRng(8, 0).substream(0x696E6974ull));
  const double fitted_err = eval_error(trained.denoiser);
  CHECK(fitted_err < 0.1);
  CHECK(fitted_err < 0.1 * eval_error(untrained));
}

TEST_CASE("training loss decreases by at least 20 percent") {
  const NoiseSchedule s = linear_schedule(40, 1e-3, 0.25);
  std::vector<std::pair<ImageVolume, ImageVolume>> pairs;
  for (std::uint64_t i = 0; i < 6; ++i) pairs.push_back(make_pair_xy(40 + i));
  TrainingOptions opts;
  opts.epochs = 10;
  opts.steps_per_pair = 2;
  opts.model = small_config();
  const TrainingResult r = train_tiny_denoiser(pairs, s, opts, SeededRng(10, 0));
  REQUIRE(r.epoch_losses.size() == 10);
  CHECK(r.epoch_losses.back() <= 0.8 * r.epoch_losses.front());
  for (double l : r.epoch_losses) CHECK(std::isfinite(l));
}

TEST_CASE("training input contracts") {
  const NoiseSchedule s = linear_schedule(10, 1e-3, 0.2);
  TrainingOptions opts;
  CHECK_THROWS_AS(train_tiny_denoiser({}, s, opts, SeededRng(1, 0)),
                  std::invalid_argument);
  std::vector<std::pair<ImageVolume, ImageVolume>> pairs;
  pairs.push_back(make_pair_xy(0));
  opts.learning_rate = 0.0;
  CHECK_THROWS_AS(train_tiny_denoiser(pairs, s, opts, SeededRng(1, 0)),
                  std::invalid_argument);
  opts = TrainingOptions{};
  opts.loss.lambda1 = 0.0;
  opts.loss.lambda2 = 0.0;
  CHECK_THROWS_AS(train_tiny_denoiser(pairs, s, opts, SeededRng(1, 0)),
                  std::invalid_argument);
}

TEST_CASE("parameters survive the container round trip") {
  const NoiseSchedule s = linear_schedule(30, 1e-3, 0.2);
  const TinyDenoiser model(small_config(), SeededRng(11, 0));
  const auto path = (std::filesystem::temp_directory_path() / "tiny_params.bin").string();
  save_named_volumes(model.to_blocks(), path);
  const TinyDenoiser loaded = TinyDenoiser::from_blocks(load_named_volumes(path));
  CHECK(loaded.config().hidden == model.config().hidden);
  CHECK(loaded.param_count() == model.param_count());
  for (std::size_t i = 0; i < model.params().size(); ++i)
    CHECK(loaded.params()[i] ==
          static_cast<double>(static_cast<float>(model.params()[i])));
  auto [x, y0] = make_pair_xy(2);
  SeededRng qrng(12, 0);
  const auto [y_t, eps] = q_sample(y0, 15, s, qrng);
  const ImageVolume a = model.predict(y_t, x, 15, s);
  const ImageVolume b = loaded.predict(y_t, x, 15, s);
  for (std::int64_t i = 0; i < a.size(); ++i)
    CHECK(std::abs(a[i] - b[i]) <= 1e-4 * std::max(1.0, std::abs(a[i])));
}
