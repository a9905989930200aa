#pragma once

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "rgdiff/degradation.hpp"
#include "rgdiff/errors.hpp"
#include "rgdiff/schedule.hpp"
#include "rgdiff/tiny_denoiser.hpp"

namespace rgdiff {

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline double parse_double(const std::string& v, const std::string& where) {
  double out = 0.0;
  const char* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || p != end)
    throw ConfigError(where + ": expected a number, got '" + v + "'");
  return out;
}

inline std::int64_t parse_int(const std::string& v, const std::string& where) {
  std::int64_t out = 0;
  const char* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || p != end)
    throw ConfigError(where + ": expected an integer, got '" + v + "'");
  return out;
}

inline std::uint64_t parse_u64(const std::string& v, const std::string& where) {
  std::uint64_t out = 0;
  const char* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || p != end)
    throw ConfigError(where + ": expected an unsigned integer, got '" + v + "'");
  return out;
}

inline bool parse_bool(const std::string& v, const std::string& where) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw ConfigError(where + ": expected true/false, got '" + v + "'");
}

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

/// Full description of one run. Every field has a value after parsing;
/// serialize() echoes the effective configuration so a run can be
/// reconstructed from its artifacts alone. Unknown sections or keys are
/// errors.
struct ExperimentConfig {
  // [experiment]
  std::string name = "default";
  std::uint64_t seed = 1;
  int threads = 0;  // 0 = hardware concurrency
  std::string contrast = "synth";

  // [corpus]
  int n_cases = 20;
  std::int64_t height = 64;
  std::int64_t width = 64;
  std::int64_t depth = 0;  // 0 = 2-D
  int n_ellipses = 6;
  std::uint64_t phantom_seed = 1;

  // [schedule]
  int T = 1000;
  double beta_start = 1e-4;
  double beta_end = 0.02;
  SigmaRule sigma_rule = SigmaRule::kPosterior;

  // [degradation]
  DegradationConfig degradation;

  // [denoiser]
  std::string denoiser_kind = "oracle";  // oracle | gaussian | linear | tiny
  double gaussian_mu = 0.0;
  double gaussian_var = 1.0;
  double linear_gain = 0.0;
  double linear_bias = 0.0;
  int tiny_hidden = 24;
  int tiny_patch_radius_state = 1;
  int tiny_patch_radius_cond = 2;
  int tiny_epochs = 20;
  double tiny_lr = 2e-3;
  double tiny_lr_final_fraction = 0.1;
  double tiny_lambda1 = 1.0;
  double tiny_lambda2 = 0.2;
  int tiny_steps_per_pair = 2;
  int tiny_train_cases = 24;
  std::uint64_t tiny_train_seed = 7;
  std::string tiny_params_path;  // load instead of training when nonempty

  // [rgs]
  bool rgs_enabled = true;
  double rgs_gamma = 2.0;
  double rgs_probe_std = 0.0;  // 0 = adaptive
  int rgs_n_probes = 8;
  int rgs_probe_every = 50;

  // [ucs]
  bool ucs_enabled = true;
  int ucs_k = 8;
  int ucs_m = 6;
  double ucs_beta = 1.0;

  // [output]
  std::string output_dir = "out";
  bool save_volumes = false;
  bool save_pgm = false;

  void validate() const {
    if (n_cases < 1) throw ConfigError("corpus.n_cases must be >= 1");
    if (height < 32 || width < 32)
      throw ConfigError("corpus dimensions must be >= 32");
    if (depth != 0 && depth < 32)
      throw ConfigError("corpus.depth must be 0 (2-D) or >= 32");
    if (n_ellipses < 0) throw ConfigError("corpus.n_ellipses must be >= 0");
    if (T < 1) throw ConfigError("schedule.T must be >= 1");
    if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0))
      throw ConfigError("schedule betas must satisfy 0 < beta_start <= beta_end < 1");
    try {
      degradation.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
    if (denoiser_kind != "oracle" && denoiser_kind != "gaussian" &&
        denoiser_kind != "linear" && denoiser_kind != "tiny")
      throw ConfigError("denoiser.kind must be oracle|gaussian|linear|tiny");
    if (gaussian_var <= 0.0) throw ConfigError("denoiser.gaussian_var must be > 0");
    if (denoiser_kind == "tiny" && depth != 0)
      throw ConfigError("the tiny denoiser supports 2-D corpora only");
    if (tiny_hidden < 1 || tiny_epochs < 1 || tiny_steps_per_pair < 1 ||
        tiny_train_cases < 1)
      throw ConfigError("denoiser tiny counts must be >= 1");
    if (tiny_patch_radius_state < 0 || tiny_patch_radius_cond < 0)
      throw ConfigError("denoiser patch radii must be >= 0");
    if (!(tiny_lr > 0.0)) throw ConfigError("denoiser.lr must be > 0");
    if (!(tiny_lr_final_fraction > 0.0 && tiny_lr_final_fraction <= 1.0))
      throw ConfigError("denoiser.lr_final_fraction must be in (0,1]");
    if (tiny_lambda1 < 0.0 || tiny_lambda2 < 0.0 ||
        (tiny_lambda1 == 0.0 && tiny_lambda2 == 0.0))
      throw ConfigError("denoiser loss weights must be >= 0 and not both zero");
    if (!(rgs_gamma >= 0.0)) throw ConfigError("rgs.gamma must be >= 0");
    if (!(rgs_probe_std >= 0.0)) throw ConfigError("rgs.probe_std must be >= 0");
    if (rgs_n_probes < 1) throw ConfigError("rgs.n_probes must be >= 1");
    if (rgs_probe_every < 1) throw ConfigError("rgs.probe_every must be >= 1");
    if (ucs_k < 1) throw ConfigError("ucs.k must be >= 1");
    if (ucs_m < 1 || ucs_m > ucs_k) throw ConfigError("ucs needs 1 <= m <= k");
    if (!(ucs_beta >= 0.0)) throw ConfigError("ucs.beta must be >= 0");
    if (threads < 0) throw ConfigError("experiment.threads must be >= 0");
    if (output_dir.empty()) throw ConfigError("output.dir must not be empty");
  }

  Shape corpus_shape() const {
    return depth == 0 ? Shape{height, width} : Shape{height, width, depth};
  }

  std::string serialize() const {
    using detail::format_double;
    std::ostringstream os;
    os << "[experiment]\n";
    os << "name = " << name << "\n";
    os << "seed = " << seed << "\n";
    os << "threads = " << threads << "\n";
    os << "contrast = " << contrast << "\n";
    os << "\n[corpus]\n";
    os << "n_cases = " << n_cases << "\n";
    os << "height = " << height << "\n";
    os << "width = " << width << "\n";
    os << "depth = " << depth << "\n";
    os << "n_ellipses = " << n_ellipses << "\n";
    os << "phantom_seed = " << phantom_seed << "\n";
    os << "\n[schedule]\n";
    os << "T = " << T << "\n";
    os << "beta_start = " << format_double(beta_start) << "\n";
    os << "beta_end = " << format_double(beta_end) << "\n";
    os << "sigma_rule = " << sigma_rule_name(sigma_rule) << "\n";
    os << "\n[degradation]\n";
    os << "blur_sigma = " << format_double(degradation.blur_sigma) << "\n";
    os << "contrast_gamma = " << format_double(degradation.contrast_gamma) << "\n";
    os << "contrast_scale = " << format_double(degradation.contrast_scale) << "\n";
    os << "noise_std = " << format_double(degradation.noise_std) << "\n";
    os << "\n[denoiser]\n";
    os << "kind = " << denoiser_kind << "\n";
    os << "gaussian_mu = " << format_double(gaussian_mu) << "\n";
    os << "gaussian_var = " << format_double(gaussian_var) << "\n";
    os << "linear_gain = " << format_double(linear_gain) << "\n";
    os << "linear_bias = " << format_double(linear_bias) << "\n";
    os << "hidden = " << tiny_hidden << "\n";
    os << "patch_radius_state = " << tiny_patch_radius_state << "\n";
    os << "patch_radius_cond = " << tiny_patch_radius_cond << "\n";
    os << "epochs = " << tiny_epochs << "\n";
    os << "lr = " << format_double(tiny_lr) << "\n";
    os << "lr_final_fraction = " << format_double(tiny_lr_final_fraction) << "\n";
    os << "lambda1 = " << format_double(tiny_lambda1) << "\n";
    os << "lambda2 = " << format_double(tiny_lambda2) << "\n";
    os << "steps_per_pair = " << tiny_steps_per_pair << "\n";
    os << "train_cases = " << tiny_train_cases << "\n";
    os << "train_seed = " << tiny_train_seed << "\n";
    os << "params_path = " << tiny_params_path << "\n";
    os << "\n[rgs]\n";
    os << "enabled = " << (rgs_enabled ? "true" : "false") << "\n";
    os << "gamma = " << format_double(rgs_gamma) << "\n";
    os << "probe_std = "
       << (rgs_probe_std == 0.0 ? std::string("adaptive")
                                : format_double(rgs_probe_std))
       << "\n";
    os << "n_probes = " << rgs_n_probes << "\n";
    os << "probe_every = " << rgs_probe_every << "\n";
    os << "\n[ucs]\n";
    os << "enabled = " << (ucs_enabled ? "true" : "false") << "\n";
    os << "k = " << ucs_k << "\n";
    os << "m = " << ucs_m << "\n";
    os << "beta = " << format_double(ucs_beta) << "\n";
    os << "\n[output]\n";
    os << "dir = " << output_dir << "\n";
    os << "save_volumes = " << (save_volumes ? "true" : "false") << "\n";
    os << "save_pgm = " << (save_pgm ? "true" : "false") << "\n";
    return os.str();
  }

  static ExperimentConfig parse(const std::string& text) {
    ExperimentConfig cfg;
    using Setter = std::function<void(const std::string&, const std::string&)>;
    std::map<std::string, std::map<std::string, Setter>> schema;

    auto dbl = [](double& target) {
      double* p = &target;
      return [p](const std::string& v, const std::string& w) {
        *p = detail::parse_double(v, w);
      };
    };
    auto i32 = [](int& target) {
      int* p = &target;
      return [p](const std::string& v, const std::string& w) {
        *p = static_cast<int>(detail::parse_int(v, w));
      };
    };
    auto i64 = [](std::int64_t& target) {
      std::int64_t* p = &target;
      return [p](const std::string& v, const std::string& w) {
        *p = detail::parse_int(v, w);
      };
    };
    auto u64 = [](std::uint64_t& target) {
      std::uint64_t* p = &target;
      return [p](const std::string& v, const std::string& w) {
        *p = detail::parse_u64(v, w);
      };
    };
    auto boolean = [](bool& target) {
      bool* p = &target;
      return [p](const std::string& v, const std::string& w) {
        *p = detail::parse_bool(v, w);
      };
    };
    auto str = [](std::string& target) {
      std::string* p = &target;
      return [p](const std::string& v, const std::string&) { *p = v; };
    };

    schema["experiment"] = {{"name", str(cfg.name)},
                            {"seed", u64(cfg.seed)},
                            {"threads", i32(cfg.threads)},
                            {"contrast", str(cfg.contrast)}};
    schema["corpus"] = {{"n_cases", i32(cfg.n_cases)},
                        {"height", i64(cfg.height)},
                        {"width", i64(cfg.width)},
                        {"depth", i64(cfg.depth)},
                        {"n_ellipses", i32(cfg.n_ellipses)},
                        {"phantom_seed", u64(cfg.phantom_seed)}};
    schema["schedule"] = {
        {"T", i32(cfg.T)},
        {"beta_start", dbl(cfg.beta_start)},
        {"beta_end", dbl(cfg.beta_end)},
        {"sigma_rule",
         [&cfg](const std::string& v, const std::string& w) {
           if (v == "posterior")
             cfg.sigma_rule = SigmaRule::kPosterior;
           else if (v == "beta")
             cfg.sigma_rule = SigmaRule::kBeta;
           else
             throw ConfigError(w + ": sigma_rule must be posterior|beta");
         }}};
    schema["degradation"] = {{"blur_sigma", dbl(cfg.degradation.blur_sigma)},
                             {"contrast_gamma", dbl(cfg.degradation.contrast_gamma)},
                             {"contrast_scale", dbl(cfg.degradation.contrast_scale)},
                             {"noise_std", dbl(cfg.degradation.noise_std)}};
    schema["denoiser"] = {{"kind", str(cfg.denoiser_kind)},
                          {"gaussian_mu", dbl(cfg.gaussian_mu)},
                          {"gaussian_var", dbl(cfg.gaussian_var)},
                          {"linear_gain", dbl(cfg.linear_gain)},
                          {"linear_bias", dbl(cfg.linear_bias)},
                          {"hidden", i32(cfg.tiny_hidden)},
                          {"patch_radius_state", i32(cfg.tiny_patch_radius_state)},
                          {"patch_radius_cond", i32(cfg.tiny_patch_radius_cond)},
                          {"epochs", i32(cfg.tiny_epochs)},
                          {"lr", dbl(cfg.tiny_lr)},
                          {"lr_final_fraction", dbl(cfg.tiny_lr_final_fraction)},
                          {"lambda1", dbl(cfg.tiny_lambda1)},
                          {"lambda2", dbl(cfg.tiny_lambda2)},
                          {"steps_per_pair", i32(cfg.tiny_steps_per_pair)},
                          {"train_cases", i32(cfg.tiny_train_cases)},
                          {"train_seed", u64(cfg.tiny_train_seed)},
                          {"params_path", str(cfg.tiny_params_path)}};
    schema["rgs"] = {{"enabled", boolean(cfg.rgs_enabled)},
                     {"gamma", dbl(cfg.rgs_gamma)},
                     {"probe_std",
                      [&cfg](const std::string& v, const std::string& w) {
                        if (v == "adaptive") {
                          cfg.rgs_probe_std = 0.0;
                        } else {
                          cfg.rgs_probe_std = detail::parse_double(v, w);
                          if (!(cfg.rgs_probe_std > 0.0))
                            throw ConfigError(w + ": probe_std must be positive or 'adaptive'");
                        }
                      }},
                     {"n_probes", i32(cfg.rgs_n_probes)},
                     {"probe_every", i32(cfg.rgs_probe_every)}};
    schema["ucs"] = {{"enabled", boolean(cfg.ucs_enabled)},
                     {"k", i32(cfg.ucs_k)},
                     {"m", i32(cfg.ucs_m)},
                     {"beta", dbl(cfg.ucs_beta)}};
    schema["output"] = {{"dir", str(cfg.output_dir)},
                        {"save_volumes", boolean(cfg.save_volumes)},
                        {"save_pgm", boolean(cfg.save_pgm)}};

    std::istringstream in(text);
    std::string line;
    std::string section;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const std::string where = "config line " + std::to_string(lineno);
      const std::string t = detail::trim(line);
      if (t.empty() || t[0] == '#' || t[0] == ';') continue;
      if (t.front() == '[') {
        if (t.back() != ']') throw ConfigError(where + ": malformed section header");
        section = detail::trim(t.substr(1, t.size() - 2));
        if (schema.find(section) == schema.end())
          throw ConfigError(where + ": unknown section [" + section + "]");
        continue;
      }
      const auto eq = t.find('=');
      if (eq == std::string::npos)
        throw ConfigError(where + ": expected 'key = value'");
      if (section.empty())
        throw ConfigError(where + ": key outside of any section");
      const std::string key = detail::trim(t.substr(0, eq));
      const std::string value = detail::trim(t.substr(eq + 1));
      auto& keys = schema[section];
      auto it = keys.find(key);
      if (it == keys.end())
        throw ConfigError(where + ": unknown key '" + key + "' in [" + section + "]");
      it->second(value, where + " (" + section + "." + key + ")");
    }
    cfg.validate();
    return cfg;
  }

  static ExperimentConfig load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
  }
};

}  // namespace rgdiff
