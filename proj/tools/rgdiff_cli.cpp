// Command-line front end: phantom corpus generation, degradation, sampling,
// candidate selection, metric evaluation, full experiments, and the 2x2
// ablation grid. Exit codes: 0 success, 1 usage/config error, 2 numerical
// failure.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rgdiff/rgdiff.hpp"

namespace fs = std::filesystem;
using namespace rgdiff;

namespace {

struct ScheduleFlags {
  int timesteps = 1000;
  double beta_start = 1e-4;
  double beta_end = 0.02;
  std::string sigma_rule = "posterior";

  NoiseSchedule build() const {
    if (sigma_rule != "posterior" && sigma_rule != "beta")
      throw ConfigError("--sigma-rule must be posterior|beta");
    return linear_schedule(timesteps, beta_start, beta_end,
                           sigma_rule == "posterior" ? SigmaRule::kPosterior
                                                     : SigmaRule::kBeta);
  }

  void attach(CLI::App* cmd) {
    cmd->add_option("--timesteps", timesteps, "diffusion steps T");
    cmd->add_option("--beta-start", beta_start, "linear schedule start");
    cmd->add_option("--beta-end", beta_end, "linear schedule end");
    cmd->add_option("--sigma-rule", sigma_rule, "posterior|beta");
  }
};

struct DenoiserFlags {
  std::string kind = "oracle";
  std::string oracle_y0;
  double gaussian_mu = 0.0;
  double gaussian_var = 1.0;
  double linear_gain = 0.0;
  double linear_bias = 0.0;
  std::string tiny_params;

  void attach(CLI::App* cmd) {
    cmd->add_option("--denoiser", kind, "oracle|gaussian|linear|tiny")
        ->default_val("oracle");
    cmd->add_option("--oracle-y0", oracle_y0, "clean volume for the oracle");
    cmd->add_option("--gaussian-mu", gaussian_mu, "gaussian prior mean");
    cmd->add_option("--gaussian-var", gaussian_var, "gaussian prior variance");
    cmd->add_option("--linear-gain", linear_gain, "linear denoiser gain");
    cmd->add_option("--linear-bias", linear_bias, "linear denoiser bias");
    cmd->add_option("--tiny-params", tiny_params, "trained parameter file");
  }

  std::shared_ptr<const Denoiser> build(const Shape& shape) const {
    if (kind == "oracle") {
      if (oracle_y0.empty())
        throw ConfigError("--denoiser oracle requires --oracle-y0");
      return std::make_shared<OracleDenoiser>(load_volume(oracle_y0));
    }
    if (kind == "gaussian")
      return std::make_shared<GaussianAnalyticDenoiser>(
          ImageVolume::filled(shape, gaussian_mu),
          ImageVolume::filled(shape, gaussian_var));
    if (kind == "linear")
      return std::make_shared<LinearDenoiser>(
          ImageVolume::filled(shape, linear_gain),
          ImageVolume::filled(shape, linear_bias));
    if (kind == "tiny") {
      if (tiny_params.empty())
        throw ConfigError("--denoiser tiny requires --tiny-params");
      return std::make_shared<TinyDenoiser>(
          TinyDenoiser::from_blocks(load_named_volumes(tiny_params)));
    }
    throw ConfigError("unknown denoiser kind '" + kind + "'");
  }
};

struct RgsFlags {
  double gamma = 0.0;
  std::string probe_std = "adaptive";
  int n_probes = 8;
  int probe_every = 50;
  std::uint64_t stream = 0;

  void attach(CLI::App* cmd) {
    cmd->add_option("--gamma", gamma, "reliability attenuation strength");
    cmd->add_option("--probe-std", probe_std, "perturbation scale or 'adaptive'");
    cmd->add_option("--n-probes", n_probes, "Monte-Carlo probes per estimate");
    cmd->add_option("--probe-every", probe_every, "recompute interval in steps");
    cmd->add_option("--stream", stream, "chain RNG stream id");
  }

  RgsConfig build() const {
    RgsConfig cfg;
    cfg.gamma = gamma;
    if (probe_std == "adaptive") {
      cfg.probe_std = 0.0;
    } else {
      cfg.probe_std = detail::parse_double(probe_std, "--probe-std");
      if (!(cfg.probe_std > 0.0))
        throw ConfigError("--probe-std must be positive or 'adaptive'");
    }
    cfg.n_probes = n_probes;
    cfg.probe_every = probe_every;
    cfg.rng_stream = 0;
    return cfg;
  }
};

int cmd_phantom(const std::string& out_dir, int cases, std::int64_t height,
                std::int64_t width, std::int64_t depth, int n_ellipses,
                std::uint64_t seed, std::uint64_t phantom_seed, bool pgm) {
  ExperimentConfig cfg;
  cfg.n_cases = cases;
  cfg.height = height;
  cfg.width = width;
  cfg.depth = depth;
  cfg.n_ellipses = n_ellipses;
  cfg.seed = seed;
  cfg.phantom_seed = phantom_seed;
  fs::create_directories(out_dir);
  for (int i = 0; i < cases; ++i) {
    SeededRng rng(cfg.seed, streams::for_case(streams::kPhantom, cfg.phantom_seed,
                                              static_cast<std::uint64_t>(i)));
    ImageVolume y = generate_phantom(phantom_spec_from(cfg), cfg.corpus_shape(), rng);
    const std::string base = (fs::path(out_dir) / case_name(i)).string();
    save_volume(y, base + ".vol");
    if (pgm && depth == 0) save_pgm16(y, base + ".pgm");
  }
  std::cout << "wrote " << cases << " phantoms to " << out_dir << "\n";
  return 0;
}

int cmd_degrade(const std::string& in, const std::string& out,
                const DegradationConfig& dcfg, std::uint64_t seed,
                std::uint64_t stream) {
  ImageVolume y = load_volume(in);
  SeededRng rng(seed, stream);
  ImageVolume x = degrade(y, dcfg, rng);
  save_volume(x, out);
  // Sidecar with the exact parameters used, so the output is reproducible.
  std::string sidecar = "[degradation]\n";
  sidecar += "blur_sigma = " + detail::format_double(dcfg.blur_sigma) + "\n";
  sidecar += "contrast_gamma = " + detail::format_double(dcfg.contrast_gamma) + "\n";
  sidecar += "contrast_scale = " + detail::format_double(dcfg.contrast_scale) + "\n";
  sidecar += "noise_std = " + detail::format_double(dcfg.noise_std) + "\n";
  sidecar += "seed = " + std::to_string(seed) + "\n";
  sidecar += "stream = " + std::to_string(stream) + "\n";
  write_text_file(out + ".degrade.ini", sidecar);
  std::cout << "degraded " << in << " -> " << out << "\n";
  return 0;
}

int cmd_sample(const std::string& in, const std::string& out,
               const ScheduleFlags& sflags, const DenoiserFlags& dflags,
               const RgsFlags& rflags, std::uint64_t seed,
               const std::string& r_map_path) {
  ImageVolume x = load_volume(in);
  const NoiseSchedule schedule = sflags.build();
  auto denoiser = dflags.build(x.shape());
  RgsConfig rgs = rflags.build();
  ChainTrace trace;
  ImageVolume y_hat = sample_chain(x, *denoiser, schedule, rgs,
                                   SeededRng(seed, rflags.stream), &trace);
  save_volume(y_hat, out);
  if (!r_map_path.empty()) {
    if (trace.last_reliability)
      save_pgm16(trace.last_reliability->reliability, r_map_path);
    else
      std::cerr << "note: no reliability map was computed (gamma == 0)\n";
  }
  std::cout << "sampled " << out << " (" << shape_to_string(y_hat.shape())
            << ", T=" << schedule.T() << ")\n";
  return 0;
}

int cmd_ucs(const std::string& in, const std::string& out,
            const ScheduleFlags& sflags, const DenoiserFlags& dflags,
            const RgsFlags& rflags, int k, int m, double beta,
            std::uint64_t seed, const std::string& export_dir) {
  ImageVolume x = load_volume(in);
  const NoiseSchedule schedule = sflags.build();
  auto denoiser = dflags.build(x.shape());
  RgsConfig rgs = rflags.build();
  UcsConfig ucs{k, m, beta, rflags.stream};
  UcsResult result = ucs_pipeline(x, *denoiser, schedule, rgs, ucs, seed);
  save_volume(result.y_hat, out);
  if (!export_dir.empty()) {
    fs::create_directories(export_dir);
    save_volume(result.set.mean, (fs::path(export_dir) / "mean.vol").string());
    save_volume(result.set.variance,
                (fs::path(export_dir) / "variance.vol").string());
    for (std::size_t i = 0; i < result.set.candidates.size(); ++i) {
      char name[32];
      std::snprintf(name, sizeof(name), "candidate_%02zu.vol", i);
      save_volume(result.set.candidates[i], (fs::path(export_dir) / name).string());
    }
  }
  std::cout << "aggregated " << k << " candidates (retained " << m << ") -> "
            << out << "\n";
  return 0;
}

int cmd_eval(const std::string& pred, const std::string& ref, double peak,
             const std::string& method, const std::string& contrast,
             const std::string& case_id, const std::string& csv) {
  ImageVolume p = load_volume(pred);
  ImageVolume r = load_volume(ref);
  MetricsReport report;
  report.method = method;
  report.contrast = contrast;
  report.case_id = case_id;
  report.psnr_db = psnr(p, r, peak);
  report.ssim = ssim(p, r, peak);
  report.hf_artifact = hf_artifact_score(p, r);
  if (!csv.empty()) append_metrics_csv(csv, report);
  std::cout << metrics_csv_row(report) << "\n";
  return 0;
}

void apply_overrides(CLI::App* cmd, ExperimentConfig& cfg,
                     const std::string& out_dir, int cases, int threads,
                     std::uint64_t seed) {
  if (cmd->count("--out")) cfg.output_dir = out_dir;
  if (cmd->count("--cases")) cfg.n_cases = cases;
  if (cmd->count("--threads")) cfg.threads = threads;
  if (cmd->count("--seed")) cfg.seed = seed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"reliability-guided diffusion sampling and uncertainty-aware "
               "candidate selection on synthetic phantoms"};
  app.require_subcommand(1);

  // phantom
  auto* phantom = app.add_subcommand("phantom", "generate a phantom corpus");
  std::string ph_out = "phantoms";
  int ph_cases = 20;
  std::int64_t ph_h = 64, ph_w = 64, ph_d = 0;
  int ph_ellipses = 6;
  std::uint64_t ph_seed = 1, ph_corpus_seed = 1;
  bool ph_pgm = false;
  phantom->add_option("--out", ph_out, "output directory");
  phantom->add_option("--cases", ph_cases, "number of phantoms");
  phantom->add_option("--height", ph_h, "image height");
  phantom->add_option("--width", ph_w, "image width");
  phantom->add_option("--depth", ph_d, "depth (0 = 2-D)");
  phantom->add_option("--ellipses", ph_ellipses, "ellipses per phantom");
  phantom->add_option("--seed", ph_seed, "experiment seed");
  phantom->add_option("--phantom-seed", ph_corpus_seed, "corpus stream base");
  phantom->add_flag("--pgm", ph_pgm, "also write 16-bit PGM previews");

  // degrade
  auto* degrade_cmd = app.add_subcommand("degrade", "apply the low-field observation model");
  std::string dg_in, dg_out;
  DegradationConfig dg_cfg;
  std::uint64_t dg_seed = 1, dg_stream = 0;
  degrade_cmd->add_option("--in", dg_in, "input volume")->required();
  degrade_cmd->add_option("--out", dg_out, "output volume")->required();
  degrade_cmd->add_option("--blur-sigma", dg_cfg.blur_sigma, "low-pass sigma (voxels)");
  degrade_cmd->add_option("--contrast-gamma", dg_cfg.contrast_gamma, "intensity exponent");
  degrade_cmd->add_option("--contrast-scale", dg_cfg.contrast_scale, "intensity gain");
  degrade_cmd->add_option("--noise-std", dg_cfg.noise_std, "additive noise std");
  degrade_cmd->add_option("--seed", dg_seed, "rng seed");
  degrade_cmd->add_option("--stream", dg_stream, "rng stream id");

  // sample
  auto* sample_cmd = app.add_subcommand("sample", "run one reliability-guided chain");
  std::string sm_in, sm_out, sm_rmap;
  ScheduleFlags sm_sched;
  DenoiserFlags sm_den;
  RgsFlags sm_rgs;
  std::uint64_t sm_seed = 1;
  sample_cmd->add_option("--in", sm_in, "conditioning (low-field) volume")->required();
  sample_cmd->add_option("--out", sm_out, "output volume")->required();
  sample_cmd->add_option("--seed", sm_seed, "rng seed");
  sample_cmd->add_option("--r-map", sm_rmap, "export final reliability map as PGM");
  sm_sched.attach(sample_cmd);
  sm_den.attach(sample_cmd);
  sm_rgs.attach(sample_cmd);

  // ucs
  auto* ucs_cmd = app.add_subcommand("ucs", "multi-candidate sampling and aggregation");
  std::string uc_in, uc_out, uc_export;
  ScheduleFlags uc_sched;
  DenoiserFlags uc_den;
  RgsFlags uc_rgs;
  int uc_k = 8, uc_m = 6;
  double uc_beta = 1.0;
  std::uint64_t uc_seed = 1;
  ucs_cmd->add_option("--in", uc_in, "conditioning (low-field) volume")->required();
  ucs_cmd->add_option("--out", uc_out, "output volume")->required();
  ucs_cmd->add_option("--k", uc_k, "candidate count");
  ucs_cmd->add_option("--m", uc_m, "retained count");
  ucs_cmd->add_option("--beta", uc_beta, "uncertainty suppression strength");
  ucs_cmd->add_option("--seed", uc_seed, "rng seed");
  ucs_cmd->add_option("--export-dir", uc_export, "export mean/variance/candidates");
  uc_sched.attach(ucs_cmd);
  uc_den.attach(ucs_cmd);
  uc_rgs.attach(ucs_cmd);

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "score a prediction against a reference");
  std::string ev_pred, ev_ref, ev_csv, ev_method = "unknown", ev_contrast = "synth",
              ev_case = "case_000";
  double ev_peak = 1.0;
  eval_cmd->add_option("--pred", ev_pred, "prediction volume")->required();
  eval_cmd->add_option("--ref", ev_ref, "reference volume")->required();
  eval_cmd->add_option("--peak", ev_peak, "dynamic range for PSNR/SSIM");
  eval_cmd->add_option("--method", ev_method, "method label");
  eval_cmd->add_option("--contrast", ev_contrast, "contrast label");
  eval_cmd->add_option("--case-id", ev_case, "case label");
  eval_cmd->add_option("--csv", ev_csv, "append one row to this CSV");

  // run / ablate
  auto* run_cmd = app.add_subcommand("run", "full experiment from a config file");
  auto* ablate_cmd = app.add_subcommand("ablate", "2x2 RGS/UCS ablation grid");
  std::string rn_config, rn_out = "out";
  int rn_cases = 20, rn_threads = 0;
  std::uint64_t rn_seed = 1;
  bool rn_print = false;
  for (CLI::App* cmd : {run_cmd, ablate_cmd}) {
    cmd->add_option("--config", rn_config, "experiment config file");
    cmd->add_option("--out", rn_out, "override output directory");
    cmd->add_option("--cases", rn_cases, "override corpus size");
    cmd->add_option("--threads", rn_threads, "worker threads (0 = auto)");
    cmd->add_option("--seed", rn_seed, "override experiment seed");
    cmd->add_flag("--print-config", rn_print, "print the effective config and exit");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (phantom->parsed())
      return cmd_phantom(ph_out, ph_cases, ph_h, ph_w, ph_d, ph_ellipses, ph_seed,
                         ph_corpus_seed, ph_pgm);
    if (degrade_cmd->parsed())
      return cmd_degrade(dg_in, dg_out, dg_cfg, dg_seed, dg_stream);
    if (sample_cmd->parsed())
      return cmd_sample(sm_in, sm_out, sm_sched, sm_den, sm_rgs, sm_seed, sm_rmap);
    if (ucs_cmd->parsed())
      return cmd_ucs(uc_in, uc_out, uc_sched, uc_den, uc_rgs, uc_k, uc_m, uc_beta,
                     uc_seed, uc_export);
    if (eval_cmd->parsed())
      return cmd_eval(ev_pred, ev_ref, ev_peak, ev_method, ev_contrast, ev_case,
                      ev_csv);
    if (run_cmd->parsed() || ablate_cmd->parsed()) {
      CLI::App* cmd = run_cmd->parsed() ? run_cmd : ablate_cmd;
      ExperimentConfig cfg = rn_config.empty() ? ExperimentConfig{}
                                               : ExperimentConfig::load(rn_config);
      apply_overrides(cmd, cfg, rn_out, rn_cases, rn_threads, rn_seed);
      cfg.validate();
      if (rn_print) {
        std::cout << cfg.serialize();
        return 0;
      }
      if (run_cmd->parsed()) {
        ExperimentResult result = run_experiment(cfg);
        int ok = 0;
        for (const auto& c : result.cases)
          if (c.ok) ++ok;
          else std::cerr << case_name(c.case_id) << " failed: " << c.error << "\n";
        std::cout << ok << "/" << cfg.n_cases << " cases completed; results in "
                  << cfg.output_dir << "\n";
        if (result.any_numeric_failure) return 2;
        return result.any_failure ? 1 : 0;
      }
      AblationResult result = run_ablation(cfg);
      std::cout << result.summary_csv;
      std::cout << "summary written to " << cfg.output_dir << "\n";
      if (result.any_numeric_failure) return 2;
      return result.any_failure ? 1 : 0;
    }
  } catch (const NumericError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
