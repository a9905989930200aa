#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "rgdiff/config.hpp"
#include "rgdiff/degradation.hpp"
#include "rgdiff/denoiser.hpp"
#include "rgdiff/errors.hpp"
#include "rgdiff/metrics.hpp"
#include "rgdiff/phantom.hpp"
#include "rgdiff/rgs.hpp"
#include "rgdiff/schedule.hpp"
#include "rgdiff/tiny_denoiser.hpp"
#include "rgdiff/ucs.hpp"
#include "rgdiff/volume.hpp"
#include "rgdiff/volume_io.hpp"

namespace rgdiff {

// Stream tags. Per-case streams derive from (tag, corpus seed, case index),
// so cases are independent and concurrency cannot change any result.
namespace streams {
inline constexpr std::uint64_t kPhantom = 1;
inline constexpr std::uint64_t kDegrade = 2;
inline constexpr std::uint64_t kChain = 3;
inline constexpr std::uint64_t kTrainPhantom = 4;
inline constexpr std::uint64_t kTrainDegrade = 5;
inline constexpr std::uint64_t kTraining = 6;

inline std::uint64_t for_case(std::uint64_t tag, std::uint64_t base,
                              std::uint64_t index) {
  return derive_stream(derive_stream(tag, base), index);
}
}  // namespace streams

inline constexpr const char* kMetricsCsvHeader =
    "method,contrast,case_id,psnr_db,ssim,hf_artifact,lpips";

inline std::string csv_number(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

/// One CSV line; the trailing empty field is the LPIPS column, kept in the
/// schema although it is never computed here.
inline std::string metrics_csv_row(const MetricsReport& r) {
  return r.method + "," + r.contrast + "," + r.case_id + "," +
         csv_number(r.psnr_db) + "," + csv_number(r.ssim) + "," +
         csv_number(r.hf_artifact) + ",";
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path);
  out << text;
  if (!out) throw ConfigError("write failed for " + path);
}

/// Appends one row, creating the file with a header first if needed.
inline void append_metrics_csv(const std::string& path, const MetricsReport& r) {
  const bool fresh = !std::filesystem::exists(path);
  std::ofstream out(path, std::ios::app);
  if (!out) throw ConfigError("cannot open " + path);
  if (fresh) out << kMetricsCsvHeader << "\n";
  out << metrics_csv_row(r) << "\n";
  if (!out) throw ConfigError("write failed for " + path);
}

inline void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
  if (threads <= 0) {
    const unsigned hw = std::thread::hardware_concurrency();
    threads = hw == 0 ? 1 : static_cast<int>(hw);
  }
  threads = std::min(threads, std::max(1, n));
  if (threads <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(threads));
  for (int w = 0; w < threads; ++w)
    pool.emplace_back([&] {
      for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
    });
  for (auto& th : pool) th.join();
}

struct CasePair {
  ImageVolume y0;
  ImageVolume x;
};

inline PhantomSpec phantom_spec_from(const ExperimentConfig& cfg) {
  PhantomSpec spec;
  spec.n_ellipses = cfg.n_ellipses;
  return spec;
}

inline CasePair make_case_pair(const ExperimentConfig& cfg,
                               std::uint64_t phantom_stream,
                               std::uint64_t degrade_stream) {
  SeededRng phantom_rng(cfg.seed, phantom_stream);
  ImageVolume y0 =
      generate_phantom(phantom_spec_from(cfg), cfg.corpus_shape(), phantom_rng);
  SeededRng degrade_rng(cfg.seed, degrade_stream);
  ImageVolume x = degrade(y0, cfg.degradation, degrade_rng);
  return CasePair{std::move(y0), std::move(x)};
}

inline CasePair make_eval_case(const ExperimentConfig& cfg, int index) {
  const auto i = static_cast<std::uint64_t>(index);
  return make_case_pair(cfg, streams::for_case(streams::kPhantom, cfg.phantom_seed, i),
                        streams::for_case(streams::kDegrade, cfg.phantom_seed, i));
}

/// Denoiser selected by the config. The oracle variant is case-dependent
/// (it needs the case's own clean image), so callers go through
/// denoiser_for_case().
struct PreparedDenoiser {
  std::shared_ptr<const Denoiser> fixed;  // null for the oracle
  bool per_case_oracle = false;
  std::vector<double> training_losses;    // nonempty when training happened
};

inline PreparedDenoiser prepare_denoiser(const ExperimentConfig& cfg,
                                         const NoiseSchedule& schedule) {
  PreparedDenoiser out;
  if (cfg.denoiser_kind == "oracle") {
    out.per_case_oracle = true;
    return out;
  }
  if (cfg.denoiser_kind == "gaussian") {
    out.fixed = std::make_shared<GaussianAnalyticDenoiser>(
        ImageVolume::filled(cfg.corpus_shape(), cfg.gaussian_mu),
        ImageVolume::filled(cfg.corpus_shape(), cfg.gaussian_var));
    return out;
  }
  if (cfg.denoiser_kind == "linear") {
    out.fixed = std::make_shared<LinearDenoiser>(
        ImageVolume::filled(cfg.corpus_shape(), cfg.linear_gain),
        ImageVolume::filled(cfg.corpus_shape(), cfg.linear_bias));
    return out;
  }
  // tiny
  if (!cfg.tiny_params_path.empty()) {
    out.fixed = std::make_shared<TinyDenoiser>(
        TinyDenoiser::from_blocks(load_named_volumes(cfg.tiny_params_path)));
    return out;
  }
  std::vector<std::pair<ImageVolume, ImageVolume>> pairs;
  pairs.reserve(static_cast<std::size_t>(cfg.tiny_train_cases));
  for (int j = 0; j < cfg.tiny_train_cases; ++j) {
    const auto idx = static_cast<std::uint64_t>(j);
    CasePair pair = make_case_pair(
        cfg, streams::for_case(streams::kTrainPhantom, cfg.tiny_train_seed, idx),
        streams::for_case(streams::kTrainDegrade, cfg.tiny_train_seed, idx));
    pairs.emplace_back(std::move(pair.x), std::move(pair.y0));
  }
  TrainingOptions opts;
  opts.epochs = cfg.tiny_epochs;
  opts.learning_rate = cfg.tiny_lr;
  opts.lr_final_fraction = cfg.tiny_lr_final_fraction;
  opts.steps_per_pair = cfg.tiny_steps_per_pair;
  opts.model.hidden = cfg.tiny_hidden;
  opts.model.patch_radius_state = cfg.tiny_patch_radius_state;
  opts.model.patch_radius_cond = cfg.tiny_patch_radius_cond;
  opts.loss.lambda1 = cfg.tiny_lambda1;
  opts.loss.lambda2 = cfg.tiny_lambda2;
  SeededRng train_rng(cfg.seed,
                      streams::for_case(streams::kTraining, cfg.tiny_train_seed, 0));
  TrainingResult trained = train_tiny_denoiser(pairs, schedule, opts, train_rng);
  out.training_losses = trained.epoch_losses;
  out.fixed = std::make_shared<TinyDenoiser>(std::move(trained.denoiser));
  return out;
}

inline std::shared_ptr<const Denoiser> denoiser_for_case(
    const PreparedDenoiser& prepared, const ImageVolume& y0) {
  if (prepared.per_case_oracle) return std::make_shared<OracleDenoiser>(y0);
  return prepared.fixed;
}

inline RgsConfig rgs_config_from(const ExperimentConfig& cfg, bool rgs_on) {
  RgsConfig rgs;
  rgs.gamma = rgs_on ? cfg.rgs_gamma : 0.0;
  rgs.probe_std = cfg.rgs_probe_std;
  rgs.n_probes = cfg.rgs_n_probes;
  rgs.probe_every = cfg.rgs_probe_every;
  rgs.rng_stream = 0;
  return rgs;
}

inline std::string method_name(bool rgs_on, bool ucs_on) {
  if (rgs_on && ucs_on) return "rgs+ucs";
  if (rgs_on) return "rgs";
  if (ucs_on) return "ucs";
  return "plain";
}

inline std::string case_name(int index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "case_%03d", index);
  return buf;
}

/// Runs the configured pipeline variant on one prepared case. The candidate
/// base stream depends only on the case index, so every ablation row reuses
/// the same chain randomness (paired design).
inline ImageVolume synthesize_case(const ExperimentConfig& cfg,
                                   const NoiseSchedule& schedule,
                                   const Denoiser& denoiser, const CasePair& pair,
                                   int index, bool rgs_on, bool ucs_on) {
  const RgsConfig rgs = rgs_config_from(cfg, rgs_on);
  const std::uint64_t base =
      streams::for_case(streams::kChain, cfg.phantom_seed, static_cast<std::uint64_t>(index));
  if (ucs_on) {
    UcsConfig ucs{cfg.ucs_k, cfg.ucs_m, cfg.ucs_beta, base};
    return ucs_pipeline(pair.x, denoiser, schedule, rgs, ucs, cfg.seed).y_hat;
  }
  return sample_chain(pair.x, denoiser, schedule, rgs, SeededRng(cfg.seed, base));
}

struct CaseOutcome {
  int case_id = 0;
  bool ok = false;
  bool numeric_failure = false;
  std::string error;
  MetricsReport method;
  MetricsReport lowfield;
};

inline MetricsReport score_pair(const ImageVolume& pred, const ImageVolume& ref,
                                const std::string& method,
                                const std::string& contrast,
                                const std::string& case_id) {
  MetricsReport r;
  r.method = method;
  r.contrast = contrast;
  r.case_id = case_id;
  r.psnr_db = psnr(pred, ref, 1.0);
  r.ssim = ssim(pred, ref, 1.0);
  r.hf_artifact = hf_artifact_score(pred, ref);
  return r;
}

struct ExperimentResult {
  std::vector<CaseOutcome> cases;
  std::string results_csv;
  bool any_failure = false;
  bool any_numeric_failure = false;
  std::vector<double> training_losses;
};

namespace detail {

inline CaseOutcome run_single_case(const ExperimentConfig& cfg,
                                   const NoiseSchedule& schedule,
                                   const PreparedDenoiser& prepared, int index,
                                   bool rgs_on, bool ucs_on,
                                   ImageVolume* y_hat_out) {
  CaseOutcome outcome;
  outcome.case_id = index;
  try {
    CasePair pair = make_eval_case(cfg, index);
    auto denoiser = denoiser_for_case(prepared, pair.y0);
    ImageVolume y_hat = synthesize_case(cfg, schedule, *denoiser, pair, index,
                                        rgs_on, ucs_on);
    const std::string id = case_name(index);
    outcome.method = score_pair(y_hat, pair.y0, method_name(rgs_on, ucs_on),
                                cfg.contrast, id);
    outcome.lowfield = score_pair(pair.x, pair.y0, "lowfield", cfg.contrast, id);
    outcome.ok = true;
    if (y_hat_out) *y_hat_out = std::move(y_hat);
  } catch (const NumericError& e) {
    outcome.numeric_failure = true;
    outcome.error = e.what();
  } catch (const std::exception& e) {
    outcome.error = e.what();
  }
  return outcome;
}

inline void save_case_volumes(const ExperimentConfig& cfg, int index,
                              const ImageVolume& y_hat) {
  namespace fs = std::filesystem;
  const fs::path dir = fs::path(cfg.output_dir) / "volumes";
  fs::create_directories(dir);
  CasePair pair = make_eval_case(cfg, index);
  const std::string id = case_name(index);
  save_volume(pair.y0, (dir / (id + "_ref.vol")).string());
  save_volume(pair.x, (dir / (id + "_lowfield.vol")).string());
  save_volume(y_hat, (dir / (id + "_pred.vol")).string());
  if (cfg.save_pgm && cfg.depth == 0) {
    save_pgm16(pair.y0, (dir / (id + "_ref.pgm")).string());
    save_pgm16(pair.x, (dir / (id + "_lowfield.pgm")).string());
    save_pgm16(y_hat, (dir / (id + "_pred.pgm")).string());
  }
}

}  // namespace detail

/// Full experiment: corpus -> degrade -> synthesize -> metrics. One CSV row
/// per (case, method) plus the low-field baseline row per case. A failing
/// case is logged and skipped; the remaining cases still run.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  namespace fs = std::filesystem;
  fs::create_directories(cfg.output_dir);
  const NoiseSchedule schedule =
      linear_schedule(cfg.T, cfg.beta_start, cfg.beta_end, cfg.sigma_rule);
  const PreparedDenoiser prepared = prepare_denoiser(cfg, schedule);

  ExperimentResult result;
  result.training_losses = prepared.training_losses;
  result.cases.resize(static_cast<std::size_t>(cfg.n_cases));
  std::vector<ImageVolume> y_hats;
  if (cfg.save_volumes)
    y_hats.assign(static_cast<std::size_t>(cfg.n_cases),
                  ImageVolume::zeros(Shape{1}));

  parallel_for(cfg.n_cases, cfg.threads, [&](int i) {
    result.cases[static_cast<std::size_t>(i)] = detail::run_single_case(
        cfg, schedule, prepared, i, cfg.rgs_enabled, cfg.ucs_enabled,
        cfg.save_volumes ? &y_hats[static_cast<std::size_t>(i)] : nullptr);
  });

  std::string csv = std::string(kMetricsCsvHeader) + "\n";
  for (const auto& outcome : result.cases) {
    if (!outcome.ok) {
      result.any_failure = true;
      result.any_numeric_failure |= outcome.numeric_failure;
      continue;
    }
    csv += metrics_csv_row(outcome.lowfield) + "\n";
    csv += metrics_csv_row(outcome.method) + "\n";
    if (cfg.save_volumes)
      detail::save_case_volumes(cfg, outcome.case_id,
                                y_hats[static_cast<std::size_t>(outcome.case_id)]);
  }
  result.results_csv = csv;
  write_text_file((fs::path(cfg.output_dir) / "results.csv").string(), csv);
  write_text_file((fs::path(cfg.output_dir) / "effective.ini").string(),
                  cfg.serialize());
  if (!prepared.training_losses.empty() && prepared.fixed) {
    const auto* tiny = dynamic_cast<const TinyDenoiser*>(prepared.fixed.get());
    if (tiny)
      save_named_volumes(tiny->to_blocks(),
                         (fs::path(cfg.output_dir) / "tiny_params.bin").string());
  }
  return result;
}

struct AblationRow {
  bool rgs_on = false;
  bool ucs_on = false;
  std::string method;
  int n_ok = 0;
  double psnr_mean = 0.0, psnr_std = 0.0;
  double ssim_mean = 0.0, ssim_std = 0.0;
  double hf_mean = 0.0, hf_std = 0.0;
  std::vector<CaseOutcome> cases;
};

struct AblationResult {
  std::vector<AblationRow> rows;  // (off,off), (on,off), (off,on), (on,on)
  std::string cases_csv;
  std::string summary_csv;
  bool any_failure = false;
  bool any_numeric_failure = false;
  std::vector<double> training_losses;
};

inline constexpr const char* kAblationSummaryHeader =
    "rgs,ucs,n_cases,psnr_mean,psnr_std,ssim_mean,ssim_std,hf_artifact_mean,hf_artifact_std";

/// 2x2 grid {RGS off/on} x {UCS off/on} with shared corpus, shared trained
/// denoiser, and shared chain streams, so the four rows form a paired
/// comparison. Emits per-case rows and a four-row mean/std summary.
inline AblationResult run_ablation(const ExperimentConfig& cfg) {
  cfg.validate();
  namespace fs = std::filesystem;
  fs::create_directories(cfg.output_dir);
  const NoiseSchedule schedule =
      linear_schedule(cfg.T, cfg.beta_start, cfg.beta_end, cfg.sigma_rule);
  const PreparedDenoiser prepared = prepare_denoiser(cfg, schedule);

  AblationResult result;
  result.training_losses = prepared.training_losses;
  const bool grid[4][2] = {{false, false}, {true, false}, {false, true}, {true, true}};

  for (const auto& flags : grid) {
    AblationRow row;
    row.rgs_on = flags[0];
    row.ucs_on = flags[1];
    row.method = method_name(row.rgs_on, row.ucs_on);
    row.cases.resize(static_cast<std::size_t>(cfg.n_cases));
    parallel_for(cfg.n_cases, cfg.threads, [&](int i) {
      row.cases[static_cast<std::size_t>(i)] = detail::run_single_case(
          cfg, schedule, prepared, i, row.rgs_on, row.ucs_on, nullptr);
    });
    double sp = 0, ss = 0, sh = 0;
    for (const auto& c : row.cases) {
      if (!c.ok) {
        result.any_failure = true;
        result.any_numeric_failure |= c.numeric_failure;
        continue;
      }
      ++row.n_ok;
      sp += c.method.psnr_db;
      ss += c.method.ssim;
      sh += c.method.hf_artifact;
    }
    if (row.n_ok > 0) {
      row.psnr_mean = sp / row.n_ok;
      row.ssim_mean = ss / row.n_ok;
      row.hf_mean = sh / row.n_ok;
      double vp = 0, vs = 0, vh = 0;
      for (const auto& c : row.cases) {
        if (!c.ok) continue;
        vp += (c.method.psnr_db - row.psnr_mean) * (c.method.psnr_db - row.psnr_mean);
        vs += (c.method.ssim - row.ssim_mean) * (c.method.ssim - row.ssim_mean);
        vh += (c.method.hf_artifact - row.hf_mean) * (c.method.hf_artifact - row.hf_mean);
      }
      row.psnr_std = std::sqrt(vp / row.n_ok);
      row.ssim_std = std::sqrt(vs / row.n_ok);
      row.hf_std = std::sqrt(vh / row.n_ok);
    }
    result.rows.push_back(std::move(row));
  }

  // Per-case CSV: the low-field baseline once per case, then each variant.
  std::string cases_csv = std::string(kMetricsCsvHeader) + "\n";
  for (const auto& c : result.rows[0].cases)
    if (c.ok) cases_csv += metrics_csv_row(c.lowfield) + "\n";
  for (const auto& row : result.rows)
    for (const auto& c : row.cases)
      if (c.ok) cases_csv += metrics_csv_row(c.method) + "\n";
  result.cases_csv = cases_csv;

  std::string summary_csv = std::string(kAblationSummaryHeader) + "\n";
  for (const auto& row : result.rows) {
    summary_csv += std::string(row.rgs_on ? "1" : "0") + "," +
                   (row.ucs_on ? "1" : "0") + "," + std::to_string(row.n_ok) +
                   "," + csv_number(row.psnr_mean) + "," +
                   csv_number(row.psnr_std) + "," + csv_number(row.ssim_mean) +
                   "," + csv_number(row.ssim_std) + "," +
                   csv_number(row.hf_mean) + "," + csv_number(row.hf_std) + "\n";
  }
  result.summary_csv = summary_csv;

  write_text_file((fs::path(cfg.output_dir) / "ablation_cases.csv").string(),
                  cases_csv);
  write_text_file((fs::path(cfg.output_dir) / "ablation_summary.csv").string(),
                  summary_csv);
  write_text_file((fs::path(cfg.output_dir) / "effective.ini").string(),
                  cfg.serialize());
  if (!prepared.training_losses.empty() && prepared.fixed) {
    const auto* tiny = dynamic_cast<const TinyDenoiser*>(prepared.fixed.get());
    if (tiny)
      save_named_volumes(tiny->to_blocks(),
                         (fs::path(cfg.output_dir) / "tiny_params.bin").string());
  }
  return result;
}

}  // namespace rgdiff
