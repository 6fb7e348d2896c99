#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "lcmia/lcmia.hpp"

namespace pl = lcmia::pipeline;

int main(int argc, char** argv) {
  CLI::App app{"Membership inference against long-context prompts"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::size_t> limit;
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "debug logging");

  auto with_config = [&](CLI::App* sub) {
    sub->add_option("-c,--config", config_path, "run configuration (JSON)")->required()->check(CLI::ExistingFile);
    return sub;
  };
  auto* build = with_config(app.add_subcommand("build-context", "assemble contexts, prompts and target sets"));
  auto* run = with_config(app.add_subcommand("run-attacks", "score every target with the configured attacks"));
  run->add_option("--limit", limit, "compute at most N new outcomes");
  auto* feats = with_config(app.add_subcommand("extract-features", "15-dim meta features per target"));
  feats->add_option("--limit", limit, "compute at most N new vectors");
  auto* trainc = with_config(app.add_subcommand("train-meta", "fit the meta-classifier on reference features"));
  auto* eval = with_config(app.add_subcommand("evaluate", "calibrate, classify and write reports"));
  auto* all = with_config(app.add_subcommand("run-all", "every stage in order"));

  std::string demo_dir = "demo";
  std::uint64_t demo_seed = 7;
  std::size_t demo_ref = 1000, demo_test = 1000;
  std::string demo_preset = "nq-30-mid";
  auto* demo = app.add_subcommand("simulate-demo", "synthetic corpora + simulator, end to end");
  demo->add_option("--dir", demo_dir, "working directory");
  demo->add_option("--seed", demo_seed);
  demo->add_option("--n-reference", demo_ref);
  demo->add_option("--n-test", demo_test);
  demo->add_option("--preset", demo_preset)->check(CLI::IsMember({"nq-10-mid", "nq-20-mid", "nq-30-mid"}));

  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::info);

  try {
    if (demo->parsed()) {
      auto cfg = pl::load_config(pl::write_demo(demo_dir, demo_seed, demo_ref, demo_test, demo_preset));
      std::cout << pl::format_table(pl::run_all(cfg));
      return 0;
    }
    auto cfg = pl::load_config(config_path);
    if (build->parsed()) pl::cmd_build_context(cfg);
    else if (run->parsed()) {
      auto s = pl::cmd_run_attacks(cfg, limit);
      return s.failed ? 3 : 0;
    } else if (feats->parsed()) {
      auto s = pl::cmd_extract_features(cfg, limit);
      return s.failed ? 3 : 0;
    } else if (trainc->parsed()) pl::cmd_train_meta(cfg);
    else if (eval->parsed()) std::cout << pl::format_table(pl::cmd_evaluate(cfg));
    else if (all->parsed()) std::cout << pl::format_table(pl::run_all(cfg));
  } catch (const lcmia::AttackDowngrade& e) {
    spdlog::error("{}", e.what());
    return 4;
  } catch (const lcmia::ValidationError& e) {
    spdlog::error("invalid input: {}", e.what());
    return 2;
  } catch (const lcmia::Error& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
