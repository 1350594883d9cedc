#pragma once

// End-to-end run: train a data-collection policy under uniform
// domain randomization, roll it once on an emulated real DLO, infer a
// parameter posterior, retrain under posterior randomization and evaluate
// against baselines. Each stage writes its artifacts to the run directory and
// is skipped on rerun when its marker matches the config hash and seed.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>

#include "dlo/eval.hpp"
#include "dlo/io.hpp"
#include "dlo/lfi.hpp"
#include "dlo/ppo.hpp"

namespace dlo {

struct RunConfig {
  std::string preset = "desk";
  std::uint64_t seed = 0;
  std::filesystem::path out_dir = "run";
  int dlo_index = 1;
  EnvConfig env;
  ParamBox box;
  LfiConfig lfi;
  PpoConfig ppo;
  int n_envs = 12;
  int eval_repetitions = 4;
  int heatmap_resolution = 100;

  void validate() const;
};

/// "desk" or "paper"; anything else is a UsageError.
RunConfig preset_config(const std::string& name);

/// Starts from j["preset"] (default "desk") and applies section overrides
/// ("sim", "perception", "task", "lfi", "mdnn", "mdnn_train", "ppo", "run").
/// Unknown keys are rejected.
RunConfig run_config_from_json(const Json& j);
Json to_json(const RunConfig& cfg);

/// Hash of the resolved config, excluding seed and output directory.
std::string config_hash(const RunConfig& cfg);

// Stage seeds, derived from the run seed.
enum class Stage : std::uint64_t {
  kPolicyB0 = 1,
  kRealRollout = 2,
  kInference = 3,
  kPolicyB1 = 4,
  kPolicyMedian = 5,
  kEvaluate = 6,
};
std::uint64_t stage_seed(const RunConfig& cfg, Stage stage);

/// PPO on `n_envs` environments whose parameters are drawn once from `prior`.
TrainResult train_policy(const RunConfig& cfg, const Density& prior, std::uint64_t seed);

/// One deterministic rollout of `policy` on the emulated real DLO.
EpisodeRecord real_rollout(const RunConfig& cfg, const PolicyModel& policy, int dlo_index,
                           std::uint64_t seed);

InferenceResult infer(const RunConfig& cfg, const EpisodeRecord& real, const PolicyModel& policy);

/// Four emulated real DLOs plus the median-parameter simulation.
std::vector<NamedEnv> evaluation_envs(const RunConfig& cfg);

class Pipeline {
 public:
  explicit Pipeline(RunConfig cfg);

  const RunConfig& config() const { return cfg_; }
  const std::string& hash() const { return hash_; }
  std::filesystem::path path(const std::string& name) const { return cfg_.out_dir / name; }
  ArtifactMeta meta(const std::string& stage) const { return {hash_, cfg_.seed, stage}; }

  PolicyModel policy_b0();
  EpisodeRecord real_trajectory();
  MixtureOfGaussians posterior();
  PolicyModel policy_b1();
  PolicyModel policy_median();
  EvalGrid evaluate();
  void heatmaps(const MixtureOfGaussians& posterior);

  void run_all();

 private:
  bool stage_done(const std::string& stage) const;
  void mark_done(const std::string& stage) const;
  PolicyModel train_and_save(const std::string& stage, const std::string& stem,
                             const std::function<Density()>& prior, Stage seed_stage);

  RunConfig cfg_;
  std::string hash_;
};

}  // namespace dlo
