#include <CLI11.hpp>
#include <cstdio>
#include <exception>
#include <thread>

#include "kacsim/experiment.hpp"
#include "kacsim/report.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  std::uint64_t seed = 0;
  bool seed_given = false;
  int workers = 0;
  std::string out_dir;
  bool dump_velocities = false;
  bool svg = false;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool needs_config = true) {
  auto* config = cmd->add_option("--config", args.config_path,
                                 "experiment config file");
  config->envname("KACSIM_CONFIG");
  if (needs_config) config->required();
  cmd->add_option("--seed", args.seed, "override run.master_seed")
      ->envname("KACSIM_SEED")
      ->each([&](const std::string&) { args.seed_given = true; });
  cmd->add_option("--workers", args.workers,
                  "worker threads (0 = hardware concurrency)")
      ->envname("KACSIM_WORKERS");
  cmd->add_option("--out", args.out_dir, "override output.directory")
      ->envname("KACSIM_OUT");
  cmd->add_flag("--dump-velocities", args.dump_velocities,
                "write raw velocity snapshots")
      ->envname("KACSIM_DUMP_VELOCITIES");
  cmd->add_flag("--svg", args.svg, "emit SVG figures")->envname("KACSIM_SVG");
}

kacsim::SimConfig load(const CommonArgs& args) {
  kacsim::SimConfig config = kacsim::load_config_file(args.config_path);
  if (args.seed_given) config.master_seed = args.seed;
  if (!args.out_dir.empty()) config.out_dir = args.out_dir;
  if (args.dump_velocities) config.dump_velocities = true;
  if (args.svg) config.emit_svg = true;
  return config;
}

int effective_workers(int requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? int(hw) : 1;
}

constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "kacsim: event-driven simulator for the Kac N-particle collision "
      "process with chaoticity, relaxation and entropy estimators"};
  app.require_subcommand(1);

  CommonArgs run_args, sweep_args, relax_args, cutoff_args, validate_args;
  std::vector<int> n_list{50, 200, 800, 3200};
  std::vector<double> eps_list{0.4, 0.2, 0.1, 0.05};
  std::string manifest_path, replay_dir = "replay_out";
  int replay_workers = 0;

  auto* cmd_run = app.add_subcommand("run", "single ensemble + metrics");
  add_common(cmd_run, run_args);

  auto* cmd_sweep =
      app.add_subcommand("sweep-n", "chaoticity distance across particle counts");
  add_common(cmd_sweep, sweep_args);
  cmd_sweep->add_option("--n-list", n_list, "particle counts")->delimiter(',');

  auto* cmd_relax =
      app.add_subcommand("relaxation", "distance-to-equilibrium study");
  add_common(cmd_relax, relax_args);

  auto* cmd_cutoff =
      app.add_subcommand("cutoff-study", "angular-cutoff refinement study");
  add_common(cmd_cutoff, cutoff_args);
  cmd_cutoff->add_option("--eps-list", eps_list, "angular cutoffs")
      ->delimiter(',');

  auto* cmd_replay =
      app.add_subcommand("replay", "re-run a manifest and verify byte-identity");
  cmd_replay->add_option("--manifest", manifest_path, "manifest.json path")
      ->required();
  cmd_replay->add_option("--work-dir", replay_dir, "scratch output directory");
  cmd_replay->add_option("--workers", replay_workers, "worker threads")
      ->envname("KACSIM_WORKERS");

  auto* cmd_validate =
      app.add_subcommand("validate", "parse and validate a config");
  add_common(cmd_validate, validate_args);

  CLI11_PARSE(app, argc, argv);

  try {
    if (cmd_run->parsed()) {
      const auto config = load(run_args);
      const auto result = kacsim::run_experiment(
          config, effective_workers(run_args.workers));
      std::printf("wrote %s (%llu accepted events, %.2fs)\n",
                  result.out_path.c_str(),
                  static_cast<unsigned long long>(result.telemetry.accepted),
                  result.telemetry.wall_seconds);
      return 0;
    }
    if (cmd_sweep->parsed()) {
      const auto config = load(sweep_args);
      const auto result =
          kacsim::sweep_n(config, n_list, effective_workers(sweep_args.workers));
      for (const auto& row : result.rows)
        std::printf("N=%-6d ell=%d alpha=%.6g +- %.2g (argmax t=%g)\n",
                    row.n_particles, row.ell, row.alpha, row.se,
                    row.argmax_time);
      std::printf("wrote %s\n", result.out_path.c_str());
      return 0;
    }
    if (cmd_relax->parsed()) {
      const auto config = load(relax_args);
      const auto result = kacsim::relaxation_study(
          config, effective_workers(relax_args.workers));
      for (const auto& row : result.rows)
        std::printf("t=%-8g beta_l1=%.6g +- %.2g entropy=%.6g +- %.2g\n",
                    row.time, row.beta.empty() ? 0.0 : row.beta[0],
                    row.beta_se.empty() ? 0.0 : row.beta_se[0], row.entropy,
                    row.entropy_se);
      std::printf("wrote %s\n", result.out_path.c_str());
      return 0;
    }
    if (cmd_cutoff->parsed()) {
      const auto config = load(cutoff_args);
      const auto result = kacsim::cutoff_study(
          config, eps_list, effective_workers(cutoff_args.workers));
      for (const auto& row : result.rows)
        std::printf("eps=%-8g events=%llu m4=%.6g +- %.2g beta1=%.6g +- %.2g\n",
                    row.epsilon,
                    static_cast<unsigned long long>(row.accepted), row.m4,
                    row.m4_se, row.beta1, row.beta1_se);
      std::printf("wrote %s\n", result.out_path.c_str());
      return 0;
    }
    if (cmd_replay->parsed()) {
      std::string detail;
      const bool ok = kacsim::replay_manifest(
          manifest_path, replay_dir, effective_workers(replay_workers), &detail);
      std::fputs(detail.c_str(), stdout);
      std::printf("replay: %s\n", ok ? "bit-identical" : "MISMATCH");
      return ok ? 0 : kExitNumerical;
    }
    if (cmd_validate->parsed()) {
      const auto config = load(validate_args);
      std::fputs(kacsim::canonical_text(config).c_str(), stdout);
      std::printf("# valid\n");
      return 0;
    }
  } catch (const kacsim::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const kacsim::SimulationError& e) {
    std::fprintf(stderr, "numerical failure: %s (event %llu, run %d)\n",
                 e.what(), static_cast<unsigned long long>(e.event_index),
                 e.run_index);
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitNumerical;
  }
  return 0;
}
