// Command-line experiment runner.
//
//   vrer run --env cartpole --algo ac --vrer on --macro-reps 30 --out results/ac_vrer
//   vrer sweep-c --values 1.2,1.5,2,4 --env cartpole --algo ac --out results/sweep
//   vrer compare --a results/ac_vrer/curve.csv --b results/ac/curve.csv
//   vrer aggregate --dir results/ac_vrer

#include <cstdlib>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "vrer/errors.hpp"
#include "vrer/harness.hpp"

namespace {

struct RunOptions {
  std::string env = "cartpole";
  std::string algo = "ac";
  std::string vrer = "on";
  double c = 1.5;
  int iters = 100;
  int n = 500;
  int koff = 10;
  // Unset: calibrated default for the environment and algorithm.
  std::optional<double> gamma;
  std::optional<double> lr_actor;
  std::optional<double> lr_critic;
  int minibatch = 64;
  int macro_reps = 30;
  std::uint64_t seed = 0;
  int jobs = 1;
  std::string out;
  std::string adv_norm;  // empty: on for ppo, off for ac
  std::size_t n_eval = 0;
  double clip_eps = 0.2;
  double kl_stop = 0.015;
  std::optional<double> reward_scale;
  std::size_t max_snapshots = 0;
  std::string walltime = "on";
};

void add_run_options(CLI::App* cmd, RunOptions& o) {
  const auto on_off = CLI::IsMember({"on", "off"});
  cmd->add_option("--env", o.env, "cartpole | acrobot | fermentation")
      ->check(CLI::IsMember({"cartpole", "acrobot", "fermentation"}))
      ->capture_default_str();
  cmd->add_option("--algo", o.algo, "ac | ppo")->check(CLI::IsMember({"ac", "ppo"}))->capture_default_str();
  cmd->add_option("--vrer", o.vrer, "variance-reduced experience replay")->check(on_off)->capture_default_str();
  cmd->add_option("--c", o.c, "selection threshold constant (> 1)")->capture_default_str();
  cmd->add_option("--iters", o.iters, "outer iterations")->capture_default_str();
  cmd->add_option("--n", o.n, "transitions per iteration")->capture_default_str();
  cmd->add_option("--koff", o.koff, "offline epochs per iteration")->capture_default_str();
  cmd->add_option("--gamma", o.gamma, "discount factor (default per env)");
  cmd->add_option("--lr-actor", o.lr_actor, "actor learning rate (default per env/algo)");
  cmd->add_option("--lr-critic", o.lr_critic, "critic learning rate (default per env/algo)");
  cmd->add_option("--minibatch", o.minibatch, "minibatch size")->capture_default_str();
  cmd->add_option("--macro-reps", o.macro_reps, "independent replications")->capture_default_str();
  cmd->add_option("--seed", o.seed, "base seed; replication r uses seed + r")->capture_default_str();
  cmd->add_option("--jobs", o.jobs, "concurrent replications")->capture_default_str();
  cmd->add_option("--out", o.out, "output directory")->required();
  cmd->add_option("--adv-norm", o.adv_norm, "standardize advantages (default: on for ppo)")->check(on_off);
  cmd->add_option("--n-eval", o.n_eval, "screening sample cap per snapshot, 0 = all")->capture_default_str();
  cmd->add_option("--clip-eps", o.clip_eps, "PPO clip range")->capture_default_str();
  cmd->add_option("--kl-stop", o.kl_stop, "PPO KL early-stop threshold")->capture_default_str();
  cmd->add_option("--reward-scale", o.reward_scale, "scale applied to learning rewards (default per env)");
  cmd->add_option("--max-snapshots", o.max_snapshots, "replay snapshot cap, 0 = unlimited")->capture_default_str();
  cmd->add_option("--walltime", o.walltime, "record wall time in curve files")->check(on_off)->capture_default_str();
  // --config belongs to the top-level app; fallthrough lets it follow the subcommand.
  cmd->fallthrough();
}

vrer::ExperimentSpec to_spec(const RunOptions& o) {
  vrer::ExperimentSpec spec;
  spec.env = o.env;
  spec.algo = o.algo;
  spec.macro_reps = o.macro_reps;
  spec.seed = o.seed;
  spec.jobs = o.jobs;
  spec.out = o.out;
  spec.record_walltime = o.walltime == "on";

  auto& a = spec.agent;
  a = vrer::default_agent_config(o.env, o.algo);
  a.vrer = o.vrer == "on";
  a.c = o.c;
  a.iterations = o.iters;
  a.n = o.n;
  a.offline_epochs = o.koff;
  if (o.gamma) a.gamma = *o.gamma;
  a.minibatch = o.minibatch;
  a.n_eval = o.n_eval;
  a.ppo.clip_eps = o.clip_eps;
  a.ppo.kl_stop = o.kl_stop;
  if (o.reward_scale) a.reward_scale = *o.reward_scale;
  a.max_snapshots = o.max_snapshots;
  if (!o.adv_norm.empty()) a.adv_norm = o.adv_norm == "on";
  if (o.lr_actor) a.lr_actor = *o.lr_actor;
  if (o.lr_critic) a.lr_critic = *o.lr_critic;
  return spec;
}

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> values;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      values.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw vrer::UsageError("bad value '" + item + "' in list");
    }
  }
  if (values.empty()) throw vrer::UsageError("empty value list");
  return values;
}

void configure_logging() {
  spdlog::set_level(spdlog::level::info);
  if (const char* level = std::getenv("VRER_LOG")) {
    const std::string l = level;
    if (l == "error") {
      spdlog::set_level(spdlog::level::err);
    } else if (l == "debug") {
      spdlog::set_level(spdlog::level::debug);
    } else if (l != "info") {
      spdlog::warn("VRER_LOG={} not recognised; using info", l);
    }
  }
}

}  // namespace

int main(int argc, char** argv) {
  configure_logging();
  CLI::App app{"Variance-reduced experience replay for policy-gradient agents"};
  app.require_subcommand(1);
  app.set_config("--config", "",
                 "key = value file with a [run] or [sweep-c] section; flags override it");

  RunOptions run_opts;
  auto* run = app.add_subcommand("run", "train and aggregate macro-replications");
  add_run_options(run, run_opts);

  RunOptions sweep_opts;
  std::string sweep_values;
  auto* sweep = app.add_subcommand("sweep-c", "repeat a VRER experiment for several values of c");
  add_run_options(sweep, sweep_opts);
  sweep->add_option("--values", sweep_values, "comma-separated values of c")->required();

  std::string file_a, file_b;
  double target = 400.0;
  auto* cmp = app.add_subcommand("compare", "compare two curve files");
  cmp->add_option("--a", file_a, "curve CSV")->required()->check(CLI::ExistingFile);
  cmp->add_option("--b", file_b, "curve CSV")->required()->check(CLI::ExistingFile);
  cmp->add_option("--target", target, "return threshold for crossing iterations")
      ->capture_default_str();

  std::string agg_dir;
  std::string agg_walltime = "on";
  auto* agg = app.add_subcommand("aggregate", "rebuild curve.csv from per-run logs");
  agg->add_option("--dir", agg_dir, "experiment output directory")->required();
  agg->add_option("--walltime", agg_walltime)->check(CLI::IsMember({"on", "off"}));

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      vrer::run_experiment(to_spec(run_opts));
    } else if (sweep->parsed()) {
      vrer::sweep_c(to_spec(sweep_opts), parse_list(sweep_values));
    } else if (cmp->parsed()) {
      const auto cmp_result =
          vrer::compare(vrer::load_curve(file_a), vrer::load_curve(file_b), target);
      std::cout << vrer::format_comparison(cmp_result);
    } else if (agg->parsed()) {
      vrer::reaggregate(agg_dir, agg_walltime == "on");
    }
  } catch (const vrer::UsageError& e) {
    spdlog::error("{}", e.what());
    return 2;
  } catch (const vrer::IoError& e) {
    spdlog::error("{}", e.what());
    return 3;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
