// dlo-r2s2r: run the full real-to-sim-to-real pipeline or one of its stages.
//
//   dlo-r2s2r <subcommand> --config <file.json> [--seed N] [--out DIR]
//
// Exit codes: 0 success, 2 usage error, 1 runtime failure.

#include <cstdint>
#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "dlo/io.hpp"
#include "dlo/pipeline.hpp"

namespace {

using namespace dlo;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<int> dlo;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "JSON run config (omitted keys take the preset defaults)")
      ->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "Run seed (overrides the config)");
  cmd->add_option("--out", c.out, "Run directory (overrides the config)");
  cmd->add_option("--dlo", c.dlo, "Emulated real DLO index 0..3 (overrides run.dlo_index)");
}

RunConfig load_config(const Common& c) {
  Json j = Json::object();
  if (!c.config.empty()) {
    try {
      j = Json::parse(read_text(c.config));
    } catch (const Json::parse_error& e) {
      throw UsageError("cannot parse " + c.config + ": " + e.what());
    }
  }
  if (c.seed) j["seed"] = *c.seed;
  if (c.out) j["out_dir"] = *c.out;
  if (c.dlo) j["run"]["dlo_index"] = *c.dlo;
  return run_config_from_json(j);
}

std::string resume_token(const std::string& sub, const RunConfig& cfg, const Common& c) {
  std::string cmd = "dlo-r2s2r " + sub;
  if (!c.config.empty()) cmd += " --config " + c.config;
  cmd += " --seed " + std::to_string(cfg.seed) + " --out " + cfg.out_dir.string();
  if (c.dlo) cmd += " --dlo " + std::to_string(*c.dlo);
  return cmd;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Physical parameter inference and policy training for deformable linear objects"};
  app.require_subcommand(1);

  Common common;

  auto* simulate = app.add_subcommand("simulate", "Dump one rollout of a policy");
  add_common(simulate, common);
  std::string sim_policy;
  std::optional<double> sim_length, sim_modulus;
  std::string sim_output = "simulate.jsonl";
  simulate->add_option("--policy", sim_policy, "Policy checkpoint (default: zero actions)")
      ->check(CLI::ExistingFile);
  simulate->add_option("--length", sim_length, "Simulated DLO length in metres");
  simulate->add_option("--modulus", sim_modulus, "Simulated Young's modulus in Pa");
  simulate->add_option("--output", sim_output, "File name inside the run directory");

  auto* collect = app.add_subcommand("collect", "Simulate trajectories under the uniform prior");
  add_common(collect, common);
  int collect_n = 200;
  collect->add_option("-n,--trajectories", collect_n, "Number of trajectories")
      ->check(CLI::PositiveNumber);

  auto* infer_cmd = app.add_subcommand("infer", "Infer the parameter posterior for one DLO");
  add_common(infer_cmd, common);

  auto* train_cmd = app.add_subcommand("train-policy", "Train a PPO policy");
  add_common(train_cmd, common);
  std::string prior = "uniform";
  train_cmd->add_option("--prior", prior, "Domain randomization prior")
      ->check(CLI::IsMember({"uniform", "posterior", "median"}));

  auto* evaluate_cmd = app.add_subcommand("evaluate", "Evaluate the policies on all emulated DLOs");
  add_common(evaluate_cmd, common);

  auto* heatmap_cmd = app.add_subcommand("heatmap", "Export density heatmaps of a posterior");
  add_common(heatmap_cmd, common);
  std::string heatmap_posterior;
  heatmap_cmd->add_option("--posterior", heatmap_posterior, "Posterior JSON (default: run posterior)")
      ->check(CLI::ExistingFile);

  auto* pipeline_cmd = app.add_subcommand("pipeline", "Run every stage end to end");
  add_common(pipeline_cmd, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  const std::string sub = app.get_subcommands().front()->get_name();
  RunConfig cfg;
  try {
    cfg = load_config(common);
  } catch (const std::exception& e) {
    std::cerr << "dlo-r2s2r: " << e.what() << '\n';
    return 2;
  }

  try {
    Pipeline run(cfg);
    if (sub == "simulate") {
      const SystemParams p{sim_length.value_or(cfg.box.median().length),
                           sim_modulus.value_or(cfg.box.median().youngs_modulus)};
      if (!cfg.box.contains(p)) throw UsageError("simulate: parameters outside the box");
      ReachEnv env(p, cfg.env, stage_seed(cfg, Stage::kRealRollout));
      PolicyFn policy = [](const Observation&) { return Vec2::Zero().eval(); };
      if (!sim_policy.empty()) policy = policy_from_json(read_json(sim_policy, "policy")).deterministic_fn();
      const EpisodeRecord rec = run_episode(env, policy);
      write_records_jsonl(run.path(sim_output), run.meta("simulate"), std::span(&rec, 1));
    } else if (sub == "collect") {
      const PolicyModel b0 = run.policy_b0();
      const auto data = collect_trajectories(b0.deterministic_fn(), Density(UniformBox{cfg.box}),
                                             collect_n, cfg.env, stage_seed(cfg, Stage::kInference),
                                             cfg.lfi.n_envs);
      write_dataset_jsonl(run.path("dataset.jsonl"), run.meta("collect"), data);
    } else if (sub == "infer") {
      run.posterior();
    } else if (sub == "train-policy") {
      if (prior == "uniform") run.policy_b0();
      else if (prior == "posterior") run.policy_b1();
      else run.policy_median();
    } else if (sub == "evaluate") {
      run.evaluate();
    } else if (sub == "heatmap") {
      const auto file = heatmap_posterior.empty() ? run.path("posterior.json")
                                                  : std::filesystem::path(heatmap_posterior);
      run.heatmaps(mog_from_json(read_json(file, "posterior")));
    } else {
      run.run_all();
    }
  } catch (const UsageError& e) {
    std::cerr << "dlo-r2s2r: " << e.what() << '\n';
    return 2;
  } catch (const DomainError& e) {
    std::cerr << "dlo-r2s2r: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "dlo-r2s2r: " << sub << " failed: " << e.what() << '\n'
              << "resume: " << resume_token(sub, cfg, common) << '\n';
    return 1;
  }
  return 0;
}
