#include <catch2/catch_amalgamated.hpp>

#include <string>

#include "rgdiff/config.hpp"
#include "rgdiff/errors.hpp"

using namespace rgdiff;

TEST_CASE("defaults round-trip through serialize/parse") {
  const ExperimentConfig cfg;
  const std::string text = cfg.serialize();
  const ExperimentConfig parsed = ExperimentConfig::parse(text);
  CHECK(parsed.serialize() == text);
}

TEST_CASE("non-default values round-trip exactly") {
  ExperimentConfig cfg;
  cfg.name = "ablation-a";
  cfg.seed = 987654321;
  cfg.n_cases = 7;
  cfg.T = 123;
  cfg.beta_start = 3.5e-4;
  cfg.beta_end = 0.17;
  cfg.sigma_rule = SigmaRule::kBeta;
  cfg.degradation.blur_sigma = 2.25;
  cfg.denoiser_kind = "tiny";
  cfg.tiny_lr = 1.25e-3;
  cfg.rgs_gamma = 0.75;
  cfg.rgs_probe_std = 0.2;  // non-adaptive
  cfg.ucs_k = 5;
  cfg.ucs_m = 4;
  cfg.output_dir = "runs/x";
  const ExperimentConfig parsed = ExperimentConfig::parse(cfg.serialize());
  CHECK(parsed.serialize() == cfg.serialize());
  CHECK(parsed.beta_start == cfg.beta_start);
  CHECK(parsed.rgs_probe_std == 0.2);
  CHECK(parsed.sigma_rule == SigmaRule::kBeta);
}

TEST_CASE("probe_std accepts 'adaptive' and positive numbers only") {
  ExperimentConfig cfg;
  std::string text = cfg.serialize();
  CHECK(ExperimentConfig::parse(text).rgs_probe_std == 0.0);
  text.replace(text.find("probe_std = adaptive"),
               std::string("probe_std = adaptive").size(), "probe_std = 0.25");
  CHECK(ExperimentConfig::parse(text).rgs_probe_std == 0.25);
  text.replace(text.find("probe_std = 0.25"),
               std::string("probe_std = 0.25").size(), "probe_std = -1.0");
  CHECK_THROWS_AS(ExperimentConfig::parse(text), ConfigError);
}

TEST_CASE("unknown keys and sections are rejected with line context") {
  const std::string unknown_key = "[experiment]\nnam = typo\n";
  try {
    (void)ExperimentConfig::parse(unknown_key);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("line 2") != std::string::npos);
    CHECK(msg.find("nam") != std::string::npos);
  }
  CHECK_THROWS_AS(ExperimentConfig::parse("[nope]\nx = 1\n"), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::parse("key_without_section = 1\n"), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::parse("[experiment\nname = a\n"), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::parse("[experiment]\nseed == 3\n"), ConfigError);
}

TEST_CASE("comments and blank lines are allowed") {
  const std::string text =
      "# top comment\n\n[experiment]\n; alt comment\nname = ok\n\n"
      "[ucs]\nk = 4\nm = 2\n";
  const ExperimentConfig cfg = ExperimentConfig::parse(text);
  CHECK(cfg.name == "ok");
  CHECK(cfg.ucs_k == 4);
  CHECK(cfg.ucs_m == 2);
}

TEST_CASE("value validation") {
  CHECK_THROWS_AS(ExperimentConfig::parse("[ucs]\nk = 2\nm = 5\n"), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::parse("[schedule]\nT = 0\n"), ConfigError);
  CHECK_THROWS_AS(
      ExperimentConfig::parse("[schedule]\nbeta_start = 0.5\nbeta_end = 0.1\n"),
      ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::parse("[denoiser]\nkind = resnet\n"),
                  ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::parse("[corpus]\nheight = 8\n"), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::parse("[schedule]\nT = ten\n"), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::parse("[rgs]\nenabled = yes\n"), ConfigError);
  // The tiny denoiser is 2-D only.
  CHECK_THROWS_AS(
      ExperimentConfig::parse("[corpus]\ndepth = 32\n[denoiser]\nkind = tiny\n"),
      ConfigError);
}
