#pragma once

// Behavioural comparison of deployed policies: accumulated commanded-action
// paths, dynamic time warping between them, and the policy x environment grid.

#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "dlo/ppo.hpp"
#include "dlo/task_env.hpp"

namespace dlo {

/// Prefix sums of executed actions starting at the origin (metres).
struct ActionPath {
  std::vector<Vec2> points;
};

ActionPath accumulate_actions(const EpisodeRecord& rec);

/// Unnormalized DTW with Euclidean local cost and match/insert/delete steps.
double dtw(const ActionPath& a, const ActionPath& b);

/// Pointwise mean and population std over repetitions; each path is padded to
/// `horizon + 1` points by holding its last point.
struct MeanPath {
  std::vector<Vec2> mean;
  std::vector<Vec2> stddev;

  ActionPath as_path() const { return {mean}; }
};

MeanPath mean_path(std::span<const ActionPath> paths, int horizon = kHorizon);

struct NamedPolicy {
  std::string name;
  PolicyFn policy;
};

struct NamedEnv {
  std::string name;
  ReachEnv env;  // copied per cell, so every policy meets the same seeds
};

struct EvalCell {
  std::string policy;
  std::string env;
  std::vector<EpisodeRecord> records;
  MeanPath path;
  std::vector<double> mean_step_reward;  // over repetitions still running at that step
  std::vector<int> step_count;
  double mean_episode_reward = 0.0;
  bool complete = true;
  std::string error;

  std::string label() const { return policy + "@" + env; }
};

struct EvalGrid {
  std::vector<EvalCell> cells;  // policy-major
  Eigen::MatrixXd dtw;          // between cell mean paths
};

EvalGrid build_eval_grid(std::span<const NamedPolicy> policies, std::span<const NamedEnv> envs,
                         int repetitions = 4);

}  // namespace dlo
