#pragma once

// Iterative likelihood-free parameter inference: simulate under the current
// reference prior with a frozen data-collection policy, fit the conditional
// density network on the accumulated data, condition on the real trajectory,
// correct for the proposal, repeat.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "dlo/mdnn.hpp"
#include "dlo/mog.hpp"
#include "dlo/task_env.hpp"

namespace dlo {

/// Which density the accumulated training set is treated as drawn from.
enum class ProposalModel {
  kDataset,  // count-weighted mixture of every iteration's sampling prior
  kLatest    // the current iteration's sampling prior only
};

ProposalModel parse_proposal_model(const std::string& s);
std::string to_string(ProposalModel m);

struct LfiConfig {
  int n_iterations = 5;
  int first_iteration_trajectories = 200;
  int trajectories_per_iter = 50;
  int first_iteration_epochs = 100;
  int epochs_per_iter = 50;
  CorrectionMode correction_mode = CorrectionMode::kEq1;
  ProposalModel proposal_model = ProposalModel::kDataset;
  MdnnConfig mdnn;
  TrainConfig train;  // epochs are taken from the fields above
  int n_envs = 12;
  std::uint64_t seed = 0;

  void validate() const;
  int trajectories_at(int iteration) const {
    return iteration == 0 ? first_iteration_trajectories : trajectories_per_iter;
  }
};

struct SimTrajectory {
  SystemParams theta;
  EpisodeRecord record;
};

/// One episode per theta, with theta drawn in low-variance batches of `n_envs`.
/// Failed episodes are skipped; fewer than n/2 successes throws IntegrationError.
std::vector<SimTrajectory> collect_trajectories(const PolicyFn& policy, const Density& prior, int n,
                                                const EnvConfig& env_cfg, std::uint64_t seed,
                                                int n_envs = 12);

struct InferenceResult {
  std::vector<MixtureOfGaussians> posterior_per_iteration;
  std::vector<MixtureOfGaussians> raw_per_iteration;  // q before correction
  std::vector<std::vector<double>> loss_curves;
  std::vector<std::size_t> dataset_sizes;
  bool halted = false;  // degenerate posterior; remaining entries repeat the fallback
  MdnnModel model;      // conditional density after the last fit
};

/// Optional per-iteration hook (iteration index, result so far).
using IterationCallback = std::function<void(int, const InferenceResult&)>;

InferenceResult run_inference(const EpisodeRecord& real_traj, const PolicyFn& policy,
                              const LfiConfig& cfg, const EnvConfig& env_cfg,
                              const ParamBox& box = {}, const IterationCallback& on_iteration = {});

/// Dominant component with a covariance that is not positive definite, or any
/// non-finite entry.
bool is_degenerate(const MixtureOfGaussians& mog);

}  // namespace dlo
