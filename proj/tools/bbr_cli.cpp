#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "bbr/error.hpp"
#include "bbr/experiment.hpp"

namespace {

enum Exit { kOk = 0, kFailure = 1, kConfig = 2, kStageOrder = 3, kDivergence = 4 };

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool deterministic = false;
  bool quiet = false;
};

void add_common(CLI::App* cmd, Common& common) {
  cmd->add_option("--config", common.config, "Configuration file (defaults apply when omitted)");
  cmd->add_option("--seed", common.seed, "Global seed, overrides [experiment] seed");
  cmd->add_option("--out", common.out, "Output directory, overrides [experiment] output_dir");
  cmd->add_flag("--deterministic", common.deterministic, "Sequential evaluation, no wall-clock fields in outputs");
  cmd->add_flag("-q,--quiet", common.quiet, "No progress messages");
}

int run(bbr::Stage stage, const Common& common) {
  bbr::ExperimentConfig cfg = common.config.empty() ? bbr::ExperimentConfig{} : bbr::parse_config(common.config);
  if (common.seed) cfg.seed = *common.seed;
  if (!common.out.empty()) cfg.output_dir = common.out;
  bbr::StageOptions opts;
  opts.out_dir = cfg.output_dir;
  opts.deterministic = common.deterministic;
  opts.verbose = !common.quiet;
  bbr::run_stage(stage, cfg, opts);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Black-box model extraction experiments on synthetic data"};
  app.require_subcommand(1);

  Common common;
  std::string mode = "knockoff";
  std::optional<bbr::Stage> stage;

  auto stage_cmd = [&](const char* name, const char* help, bbr::Stage s) {
    CLI::App* cmd = app.add_subcommand(name, help);
    add_common(cmd, common);
    cmd->callback([&stage, s] { stage = s; });
    return cmd;
  };
  stage_cmd("data", "Generate the true and proxy datasets", bbr::Stage::kData);
  stage_cmd("teacher", "Train the black-box teacher on the true training split", bbr::Stage::kTeacher);
  stage_cmd("generator", "Train the VAE generator on the proxy data", bbr::Stage::kGenerator);
  stage_cmd("rip", "Distill a student from evolved generator samples", bbr::Stage::kRip);
  CLI::App* baseline = app.add_subcommand("baseline", "Distill a student with a baseline method");
  add_common(baseline, common);
  baseline->add_option("--mode", mode, "knockoff or gen-random")
      ->check(CLI::IsMember({"knockoff", "gen-random"}))
      ->capture_default_str();
  baseline->callback([&] { stage = mode == "knockoff" ? bbr::Stage::kKnockoff : bbr::Stage::kGenRandom; });
  stage_cmd("evaluate", "Score every student on the true test split and write report.json", bbr::Stage::kEvaluate);
  stage_cmd("report", "Print the comparison table from report.json", bbr::Stage::kReport);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfig;
  }

  try {
    return run(*stage, common);
  } catch (const bbr::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const bbr::StageOrderError& e) {
    std::cerr << "stage order error: " << e.what() << "\n";
    return kStageOrder;
  } catch (const bbr::DivergenceError& e) {
    std::cerr << "training diverged: " << e.what() << "\n";
    return kDivergence;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
}
