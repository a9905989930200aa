#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "rgdiff/denoiser.hpp"
#include "rgdiff/errors.hpp"
#include "rgdiff/metrics.hpp"
#include "rgdiff/rng.hpp"
#include "rgdiff/schedule.hpp"
#include "rgdiff/volume.hpp"

namespace rgdiff {

/// Weights of the image-domain training loss
/// lambda1 ||y0_hat - y0||_1 + lambda2 (1 - SSIM(y0_hat, y0)).
struct LossWeights {
  double lambda1 = 1.0;
  double lambda2 = 0.2;

  void validate() const {
    if (!(lambda1 >= 0.0) || !(lambda2 >= 0.0))
      throw std::invalid_argument("loss weights must be >= 0");
    if (lambda1 == 0.0 && lambda2 == 0.0)
      throw std::invalid_argument("at least one loss weight must be positive");
  }
};

struct TinyDenoiserConfig {
  int patch_radius_state = 1;  // y_t patch, (2r+1)^2 features
  int patch_radius_cond = 2;   // x patch
  int hidden = 24;

  int state_patch() const { return (2 * patch_radius_state + 1) * (2 * patch_radius_state + 1); }
  int cond_patch() const { return (2 * patch_radius_cond + 1) * (2 * patch_radius_cond + 1); }
  int features() const { return state_patch() + cond_patch() + 3; }

  void validate() const {
    if (patch_radius_state < 0 || patch_radius_cond < 0)
      throw std::invalid_argument("tiny denoiser: patch radii must be >= 0");
    if (hidden < 1) throw std::invalid_argument("tiny denoiser: hidden must be >= 1");
  }
};

/// Per-voxel-shared two-hidden-layer tanh map over a local patch of y_t,
/// a local patch of x, and a timestep embedding
/// (sqrt(alpha_bar), sqrt(1-alpha_bar), 2t/T - 1). A few thousand
/// parameters at the default sizes; 2-D volumes only.
///
/// The network estimates the clean image g(y_t, x, t); predict() converts
/// it to the noise estimate eps = (y_t - sqrt(ab) g) / sqrt(1-ab). The
/// conversion supplies the 1/sqrt(1-ab) gain that raw noise prediction
/// would demand of the network at small t, far beyond what a bounded tanh
/// map can express, and it keeps the image-domain training loss uniformly
/// scaled across timesteps.
///
/// Parameter layout: W1[h x F], b1[h], W2[h x h], b2[h], w3[h], b3.
class TinyDenoiser final : public Denoiser {
 public:
  TinyDenoiser(TinyDenoiserConfig cfg, SeededRng init_rng) : cfg_(cfg) {
    cfg_.validate();
    params_.resize(static_cast<std::size_t>(param_count()));
    const int f = cfg_.features();
    const int h = cfg_.hidden;
    // Uniform(-s, s) with s = 1/sqrt(fan_in), biases zero.
    std::size_t p = 0;
    const double s1 = 1.0 / std::sqrt(static_cast<double>(f));
    for (int i = 0; i < h * f; ++i) params_[p++] = init_rng.uniform_in(-s1, s1);
    for (int i = 0; i < h; ++i) params_[p++] = 0.0;
    const double s2 = 1.0 / std::sqrt(static_cast<double>(h));
    for (int i = 0; i < h * h; ++i) params_[p++] = init_rng.uniform_in(-s2, s2);
    for (int i = 0; i < h; ++i) params_[p++] = 0.0;
    for (int i = 0; i < h; ++i) params_[p++] = init_rng.uniform_in(-s2, s2);
    params_[p++] = 0.0;
  }

  TinyDenoiser(TinyDenoiserConfig cfg, std::vector<double> params)
      : cfg_(cfg), params_(std::move(params)) {
    cfg_.validate();
    if (static_cast<std::int64_t>(params_.size()) != param_count())
      throw std::invalid_argument("tiny denoiser: parameter count mismatch");
  }

  const TinyDenoiserConfig& config() const { return cfg_; }

  std::int64_t param_count() const {
    const std::int64_t f = cfg_.features();
    const std::int64_t h = cfg_.hidden;
    return h * f + h + h * h + h + h + 1;
  }

  const std::vector<double>& params() const { return params_; }
  void set_params(std::vector<double> p) {
    if (static_cast<std::int64_t>(p.size()) != param_count())
      throw std::invalid_argument("tiny denoiser: parameter count mismatch");
    params_ = std::move(p);
  }

  ImageVolume predict(const ImageVolume& y_t, const ImageVolume& x, int t,
                      const NoiseSchedule& schedule) const override {
    check_inputs(y_t, x);
    schedule.check_timestep(t);
    std::vector<double> clean(static_cast<std::size_t>(y_t.size()));
    forward(y_t, x, t, schedule, clean, nullptr, nullptr);
    const double bar = schedule.alpha_bar(t);
    const double inv = 1.0 / std::sqrt(1.0 - bar);
    const double scale = std::sqrt(bar) * inv;
    std::vector<double> eps(clean.size());
    for (std::size_t i = 0; i < eps.size(); ++i)
      eps[i] = y_t[static_cast<std::int64_t>(i)] * inv - scale * clean[i];
    return ImageVolume(y_t.shape(), std::move(eps));
  }

  std::string id() const override { return "tiny"; }

  /// Loss and parameter gradient for one (x, y0) pair at a fixed (t, eps)
  /// draw. y_t is rebuilt from the forward marginal, the prediction is
  /// converted to the implied clean image, and the loss is evaluated there.
  std::pair<double, std::vector<double>> loss_and_gradient(
      const ImageVolume& x, const ImageVolume& y0, const ImageVolume& eps,
      int t, const NoiseSchedule& schedule, const LossWeights& weights) const {
    weights.validate();
    check_inputs(y0, x);
    require_same_shape(y0, eps, "tiny denoiser loss");
    schedule.check_timestep(t);

    const double bar = schedule.alpha_bar(t);
    const double sqrt_bar = std::sqrt(bar);
    const double sqrt_om = std::sqrt(1.0 - bar);
    ImageVolume y_t = axpy_combine({sqrt_bar, sqrt_om}, {&y0, &eps});

    const auto n = static_cast<std::size_t>(y0.size());
    const int h = cfg_.hidden;
    std::vector<double> clean(n);
    std::vector<double> a1(n * static_cast<std::size_t>(h));
    std::vector<double> a2(n * static_cast<std::size_t>(h));
    forward(y_t, x, t, schedule, clean, &a1, &a2);

    // eps_hat = (y_t - sqrt(ab) g) / sqrt(1-ab), then
    // y0_hat = (y_t - sqrt(1-ab) eps_hat) / sqrt(ab), the same conversion
    // predict() applies.
    const double inv_om = 1.0 / sqrt_om;
    std::vector<double> y0_hat(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double eps_hat = y_t[static_cast<std::int64_t>(i)] * inv_om -
                             sqrt_bar * inv_om * clean[i];
      y0_hat[i] =
          (y_t[static_cast<std::int64_t>(i)] - sqrt_om * eps_hat) / sqrt_bar;
    }
    ImageVolume y0_hat_vol(y0.shape(), y0_hat);

    double loss = 0.0;
    std::vector<double> dl_dy0hat(n, 0.0);
    if (weights.lambda1 > 0.0) {
      double l1 = 0.0;
      const double inv_n = 1.0 / static_cast<double>(n);
      for (std::size_t i = 0; i < n; ++i) {
        const double d = y0_hat[i] - y0[static_cast<std::int64_t>(i)];
        l1 += std::abs(d);
        dl_dy0hat[i] += weights.lambda1 * inv_n * (d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0));
      }
      loss += weights.lambda1 * l1 * inv_n;
    }
    if (weights.lambda2 > 0.0) {
      auto [ssim_value, ssim_grad] = ssim_value_and_grad(y0_hat_vol, y0, 1.0);
      loss += weights.lambda2 * (1.0 - ssim_value);
      for (std::size_t i = 0; i < n; ++i)
        dl_dy0hat[i] -= weights.lambda2 * ssim_grad[static_cast<std::int64_t>(i)];
    }

    // d y0_hat / d eps_hat = -sqrt(1-ab)/sqrt(ab) and
    // d eps_hat / d g = -sqrt(ab)/sqrt(1-ab); their product is 1, so the
    // image loss reaches the network output unscaled at every timestep.
    const double chain = (-sqrt_om / sqrt_bar) * (-sqrt_bar * inv_om);
    std::vector<double> dl_dg(n);
    for (std::size_t i = 0; i < n; ++i) dl_dg[i] = chain * dl_dy0hat[i];

    std::vector<double> grad(params_.size(), 0.0);
    backward(y_t, x, t, schedule, a1, a2, dl_dg, grad);
    return {loss, std::move(grad)};
  }

  std::vector<std::pair<std::string, ImageVolume>> to_blocks() const {
    const int f = cfg_.features();
    const int h = cfg_.hidden;
    std::vector<std::pair<std::string, ImageVolume>> blocks;
    ImageVolume meta(Shape{3},
                     {static_cast<double>(cfg_.patch_radius_state),
                      static_cast<double>(cfg_.patch_radius_cond),
                      static_cast<double>(cfg_.hidden)});
    blocks.emplace_back("meta", std::move(meta));
    std::size_t p = 0;
    auto take = [&](const std::string& name, Shape shape) {
      const auto count = static_cast<std::size_t>(shape_elements(shape));
      std::vector<double> v(params_.begin() + static_cast<std::ptrdiff_t>(p),
                            params_.begin() + static_cast<std::ptrdiff_t>(p + count));
      p += count;
      blocks.emplace_back(name, ImageVolume(std::move(shape), std::move(v)));
    };
    take("W1", Shape{h, f});
    take("b1", Shape{h});
    take("W2", Shape{h, h});
    take("b2", Shape{h});
    take("w3", Shape{h});
    take("b3", Shape{1});
    return blocks;
  }

  static TinyDenoiser from_blocks(
      const std::vector<std::pair<std::string, ImageVolume>>& blocks) {
    auto find = [&](const std::string& name) -> const ImageVolume& {
      for (const auto& [n, v] : blocks)
        if (n == name) return v;
      throw ConfigError("tiny denoiser parameters: missing block '" + name + "'");
    };
    const ImageVolume& meta = find("meta");
    if (meta.size() != 3)
      throw ConfigError("tiny denoiser parameters: malformed meta block");
    TinyDenoiserConfig cfg;
    cfg.patch_radius_state = static_cast<int>(meta[0]);
    cfg.patch_radius_cond = static_cast<int>(meta[1]);
    cfg.hidden = static_cast<int>(meta[2]);
    cfg.validate();
    std::vector<double> params;
    for (const char* name : {"W1", "b1", "W2", "b2", "w3", "b3"}) {
      const ImageVolume& v = find(name);
      params.insert(params.end(), v.data().begin(), v.data().end());
    }
    return TinyDenoiser(cfg, std::move(params));
  }

 private:
  static void check_inputs(const ImageVolume& y_t, const ImageVolume& x) {
    if (y_t.dims() != 2)
      throw std::invalid_argument("tiny denoiser: 2-D volumes only");
    require_same_shape(y_t, x, "tiny denoiser");
  }

  static std::int64_t reflect(std::int64_t i, std::int64_t n) {
    while (i < 0 || i >= n) {
      if (i < 0) i = -i - 1;
      if (i >= n) i = 2 * n - i - 1;
    }
    return i;
  }

  // The y_t patch enters scaled by sqrt(alpha_bar): the scaled values match
  // the clean-image range at every timestep (~y0 near t = 0, ~0 at t = T),
  // so the network can blend state and conditioning without the t-dependent
  // gain swings raw y_t values would need.
  void gather_features(const ImageVolume& y_t, const ImageVolume& x,
                       double f0, double f1, double f2, std::int64_t i,
                       std::int64_t j, double* f) const {
    const std::int64_t h = y_t.height(), w = y_t.width();
    int p = 0;
    const int rs = cfg_.patch_radius_state;
    for (int di = -rs; di <= rs; ++di) {
      const std::int64_t row = reflect(i + di, h) * w;
      for (int dj = -rs; dj <= rs; ++dj)
        f[p++] = f0 * y_t[row + reflect(j + dj, w)];
    }
    const int rc = cfg_.patch_radius_cond;
    for (int di = -rc; di <= rc; ++di) {
      const std::int64_t row = reflect(i + di, h) * w;
      for (int dj = -rc; dj <= rc; ++dj)
        f[p++] = x[row + reflect(j + dj, w)];
    }
    f[p++] = f0;
    f[p++] = f1;
    f[p++] = f2;
  }

  // Forward over all voxels; optionally captures hidden activations for the
  // backward pass.
  void forward(const ImageVolume& y_t, const ImageVolume& x, int t,
               const NoiseSchedule& schedule, std::vector<double>& out,
               std::vector<double>* a1_out, std::vector<double>* a2_out) const {
    const double bar = schedule.alpha_bar(t);
    const double f0 = std::sqrt(bar);
    const double f1 = std::sqrt(1.0 - bar);
    const double f2 = 2.0 * static_cast<double>(t) / schedule.T() - 1.0;
    const int nf = cfg_.features();
    const int h = cfg_.hidden;
    const double* w1 = params_.data();
    const double* b1 = w1 + h * nf;
    const double* w2 = b1 + h;
    const double* b2 = w2 + h * h;
    const double* w3 = b2 + h;
    const double b3 = *(w3 + h);

    std::vector<double> f(static_cast<std::size_t>(nf));
    std::vector<double> z1(static_cast<std::size_t>(h)), z2(static_cast<std::size_t>(h));
    const std::int64_t rows = y_t.height(), cols = y_t.width();
    for (std::int64_t i = 0; i < rows; ++i) {
      for (std::int64_t j = 0; j < cols; ++j) {
        const std::size_t voxel = static_cast<std::size_t>(i * cols + j);
        gather_features(y_t, x, f0, f1, f2, i, j, f.data());
        for (int u = 0; u < h; ++u) {
          double acc = b1[u];
          const double* row = w1 + u * nf;
          for (int v = 0; v < nf; ++v) acc += row[v] * f[static_cast<std::size_t>(v)];
          z1[static_cast<std::size_t>(u)] = std::tanh(acc);
        }
        for (int u = 0; u < h; ++u) {
          double acc = b2[u];
          const double* row = w2 + u * h;
          for (int v = 0; v < h; ++v) acc += row[v] * z1[static_cast<std::size_t>(v)];
          z2[static_cast<std::size_t>(u)] = std::tanh(acc);
        }
        double acc_out = b3;
        for (int u = 0; u < h; ++u) acc_out += w3[u] * z2[static_cast<std::size_t>(u)];
        out[voxel] = acc_out;
        if (a1_out)
          std::copy(z1.begin(), z1.end(),
                    a1_out->begin() + static_cast<std::ptrdiff_t>(voxel) * h);
        if (a2_out)
          std::copy(z2.begin(), z2.end(),
                    a2_out->begin() + static_cast<std::ptrdiff_t>(voxel) * h);
      }
    }
  }

  void backward(const ImageVolume& y_t, const ImageVolume& x, int t,
                const NoiseSchedule& schedule, const std::vector<double>& a1,
                const std::vector<double>& a2, const std::vector<double>& dl_dout,
                std::vector<double>& grad) const {
    const double bar = schedule.alpha_bar(t);
    const double f0 = std::sqrt(bar);
    const double f1 = std::sqrt(1.0 - bar);
    const double f2 = 2.0 * static_cast<double>(t) / schedule.T() - 1.0;
    const int nf = cfg_.features();
    const int h = cfg_.hidden;
    const double* w2 = params_.data() + h * nf + h;
    const double* w3 = w2 + h * h + h;
    double* gw1 = grad.data();
    double* gb1 = gw1 + h * nf;
    double* gw2 = gb1 + h;
    double* gb2 = gw2 + h * h;
    double* gw3 = gb2 + h;
    double* gb3 = gw3 + h;

    std::vector<double> f(static_cast<std::size_t>(nf));
    std::vector<double> dz1(static_cast<std::size_t>(h)), dz2(static_cast<std::size_t>(h));
    const std::int64_t rows = y_t.height(), cols = y_t.width();
    for (std::int64_t i = 0; i < rows; ++i) {
      for (std::int64_t j = 0; j < cols; ++j) {
        const std::size_t voxel = static_cast<std::size_t>(i * cols + j);
        const double g = dl_dout[voxel];
        if (g == 0.0) continue;
        const double* a1v = a1.data() + voxel * h;
        const double* a2v = a2.data() + voxel * h;
        gather_features(y_t, x, f0, f1, f2, i, j, f.data());

        *gb3 += g;
        for (int u = 0; u < h; ++u) {
          gw3[u] += g * a2v[u];
          dz2[static_cast<std::size_t>(u)] = g * w3[u] * (1.0 - a2v[u] * a2v[u]);
        }
        for (int u = 0; u < h; ++u) {
          const double d = dz2[static_cast<std::size_t>(u)];
          gb2[u] += d;
          double* row = gw2 + u * h;
          for (int v = 0; v < h; ++v) row[v] += d * a1v[v];
        }
        for (int v = 0; v < h; ++v) {
          double acc = 0.0;
          for (int u = 0; u < h; ++u)
            acc += dz2[static_cast<std::size_t>(u)] * w2[u * h + v];
          dz1[static_cast<std::size_t>(v)] = acc * (1.0 - a1v[v] * a1v[v]);
        }
        for (int u = 0; u < h; ++u) {
          const double d = dz1[static_cast<std::size_t>(u)];
          gb1[u] += d;
          double* row = gw1 + u * nf;
          for (int v = 0; v < nf; ++v) row[v] += d * f[static_cast<std::size_t>(v)];
        }
      }
    }
  }

  TinyDenoiserConfig cfg_;
  std::vector<double> params_;
};

struct TrainingOptions {
  int epochs = 20;
  double learning_rate = 2e-3;     // initial Adam step size
  double lr_final_fraction = 0.1;  // linear decay target, 1 = constant rate
  int steps_per_pair = 2;          // timestep draws per pair per epoch
  // The implied-clean-image loss scales like sqrt(1-ab)/sqrt(ab), which
  // spans several orders of magnitude across timesteps; clipping each
  // sample's gradient norm keeps late timesteps from drowning early ones.
  double grad_clip_norm = 5.0;  // 0 disables clipping
  // Fraction of draws taken from the smallest T/10 timesteps, where the
  // final reconstruction forms; uniform draws alone visit them too rarely
  // for the state-vs-conditioning blend to be learned.
  double small_t_bias = 0.25;
  TinyDenoiserConfig model;
  LossWeights loss;
};

struct TrainingResult {
  TinyDenoiser denoiser;
  std::vector<double> epoch_losses;  // mean loss per epoch
};

/// Fits the tiny denoiser with Adam on the implied-clean-image loss.
/// Deterministic given (pairs, options, rng). A non-finite loss aborts as a
/// training failure rather than being clamped.
inline TrainingResult train_tiny_denoiser(
    const std::vector<std::pair<ImageVolume, ImageVolume>>& pairs,  // (x, y0)
    const NoiseSchedule& schedule, const TrainingOptions& opts, SeededRng rng) {
  if (pairs.empty())
    throw std::invalid_argument("train_tiny_denoiser: empty training set");
  if (!(opts.learning_rate > 0.0))
    throw std::invalid_argument("train_tiny_denoiser: learning rate must be > 0");
  if (!(opts.lr_final_fraction > 0.0 && opts.lr_final_fraction <= 1.0))
    throw std::invalid_argument(
        "train_tiny_denoiser: lr_final_fraction must be in (0,1]");
  if (opts.epochs < 1)
    throw std::invalid_argument("train_tiny_denoiser: epochs must be >= 1");
  if (opts.steps_per_pair < 1)
    throw std::invalid_argument("train_tiny_denoiser: steps_per_pair must be >= 1");
  opts.loss.validate();
  for (const auto& [x, y0] : pairs) require_same_shape(x, y0, "training pair");

  TinyDenoiser model(opts.model, rng.substream(0x696E6974ull));
  const auto n_params = static_cast<std::size_t>(model.param_count());
  std::vector<double> m(n_params, 0.0), v(n_params, 0.0);
  const double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
  std::int64_t step = 0;

  std::vector<std::size_t> order(pairs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  TrainingResult result{std::move(model), {}};
  result.epoch_losses.reserve(static_cast<std::size_t>(opts.epochs));
  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    const double progress =
        opts.epochs == 1 ? 0.0 : static_cast<double>(epoch) / (opts.epochs - 1);
    const double lr = opts.learning_rate *
                      (1.0 - (1.0 - opts.lr_final_fraction) * progress);
    // Fisher-Yates with the training stream keeps the visit order seeded.
    for (std::size_t i = order.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(rng.next_below(i));
      std::swap(order[i - 1], order[j]);
    }
    double epoch_loss = 0.0;
    std::int64_t count = 0;
    for (std::size_t idx : order) {
      const auto& [x, y0] = pairs[idx];
      for (int s = 0; s < opts.steps_per_pair; ++s) {
        const int t_cap = rng.next_uniform() < opts.small_t_bias
                              ? std::max(1, schedule.T() / 10)
                              : schedule.T();
        const int t = 1 + static_cast<int>(rng.next_below(
                              static_cast<std::uint64_t>(t_cap)));
        ImageVolume eps = gaussian_volume(y0.shape(), rng, 0.0, 1.0);
        auto [loss, grad] =
            result.denoiser.loss_and_gradient(x, y0, eps, t, schedule, opts.loss);
        if (!std::isfinite(loss))
          throw NumericError("train_tiny_denoiser: non-finite loss at epoch " +
                             std::to_string(epoch));
        if (opts.grad_clip_norm > 0.0) {
          double norm_sq = 0.0;
          for (double g : grad) norm_sq += g * g;
          const double norm = std::sqrt(norm_sq);
          if (norm > opts.grad_clip_norm) {
            const double scale = opts.grad_clip_norm / norm;
            for (double& g : grad) g *= scale;
          }
        }
        ++step;
        const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
        const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
        std::vector<double> params = result.denoiser.params();
        for (std::size_t p = 0; p < n_params; ++p) {
          m[p] = beta1 * m[p] + (1.0 - beta1) * grad[p];
          v[p] = beta2 * v[p] + (1.0 - beta2) * grad[p] * grad[p];
          params[p] -= lr * (m[p] / bc1) / (std::sqrt(v[p] / bc2) + adam_eps);
        }
        result.denoiser.set_params(std::move(params));
        epoch_loss += loss;
        ++count;
      }
    }
    result.epoch_losses.push_back(epoch_loss / static_cast<double>(count));
  }
  return result;
}

}  // namespace rgdiff
