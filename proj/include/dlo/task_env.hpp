#pragma once

// Gym-style DLO reaching environment.
//
// The gripper starts from a fixed raised pose holding the DLO near one tip.
// Actions are (dx, dz) gripper deltas in metres; observations are the
// gripper position followed by four DLO keypoints and the target keypoint
// in normalized image coordinates.

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "dlo/chain_sim.hpp"
#include "dlo/common.hpp"
#include "dlo/perception.hpp"

namespace dlo {

inline constexpr int kObsDim = 12;
inline constexpr int kActionDim = 2;
inline constexpr int kHorizon = 16;
inline constexpr double kMaxAction = 0.06;
inline constexpr int kNumRealDlos = 4;

/// [eef_x, eef_z, k1u, k1v, ..., k4u, k4v, tgt_u, tgt_v]
using Observation = std::array<double, kObsDim>;

/// Deterministic or stochastic controller returning an action in metres.
using PolicyFn = std::function<Vec2(const Observation&)>;

struct Workspace {
  double x_min = 0.275, x_max = 0.6;
  double z_min = 0.1, z_max = 0.5;

  bool contains(const Vec2& p) const {
    return p.x() >= x_min && p.x() <= x_max && p.y() >= z_min && p.y() <= z_max;
  }
};

struct EnvConfig {
  SimConfig sim;
  // Keypoint order is randomized in simulation as well: the real detector's
  // output is unordered and the policy must not rely on it.
  PerceptionConfig perception{CameraModel{}, 0.025, 0.005, true};
  Workspace workspace;
  Vec2 grip_start{0.4, 0.45};
  Vec2 target_nominal{0.5, 0.05};
  double target_offset_range = 0.02;
  bool randomize_offsets = true;
  double d_thresh = 1.5;
  double success_reward = 0.75;
  int horizon = kHorizon;
};

struct Reward {
  double distance = 0.0;
  double reward = 0.0;
  bool success = false;
};

/// Frobenius norm of the four keypoint-to-target distances, scaled into a
/// [0, 1] reward inside `d_thresh`.
Reward compute_reward(const KeypointFrame& frame, double d_thresh = 1.5,
                      double success_reward = 0.75);

struct StepInfo {
  double distance = 0.0;
  bool success = false;
  bool out_of_workspace = false;
  bool truncated = false;  // horizon reached without success or failure
  Observation terminal_obs{};
};

struct StepResult {
  Observation obs{};
  double reward = 0.0;
  bool done = false;
  StepInfo info;
};

/// One (observation, action, reward, done) tuple; `obs` is the observation the
/// action was chosen from, `action` the clamped command in metres.
struct EpisodeStep {
  Observation obs{};
  Vec2 action = Vec2::Zero();
  double reward = 0.0;
  bool done = false;
};

struct EpisodeRecord {
  std::vector<EpisodeStep> steps;
  std::optional<SystemParams> params;  // absent for real-emulator rollouts

  double total_reward() const;
};

class ReachEnv {
 public:
  ReachEnv(const SystemParams& params, const EnvConfig& cfg, std::uint64_t seed,
           bool hide_params = false);

  Observation reset();
  StepResult step(const Vec2& action);

  bool done() const { return done_; }
  int step_index() const { return step_; }
  const ChainState& chain() const { return chain_; }
  const EnvConfig& config() const { return cfg_; }
  const Vec2& target_world() const { return target_; }
  const CameraModel& camera() const { return camera_; }
  const Observation& last_observation() const { return obs_; }

  /// Ground-truth parameters, or nullopt for an emulated real DLO.
  std::optional<SystemParams> params() const;

 private:
  Observation observe(Reward* reward);

  SystemParams params_;
  EnvConfig cfg_;
  bool hide_params_;
  Rng rng_;
  ChainState chain_;
  CameraModel camera_;
  Vec2 target_ = Vec2::Zero();
  Observation obs_{};
  int step_ = 0;
  bool done_ = true;
};

/// Resets `env` and rolls `policy` until the episode ends.
EpisodeRecord run_episode(ReachEnv& env, const PolicyFn& policy);

struct VecStepResult {
  std::vector<Observation> obs;
  std::vector<double> rewards;
  std::vector<std::uint8_t> dones;
  std::vector<StepInfo> infos;
};

/// Synchronous set of independent environments with auto-reset: when a member
/// finishes, its returned observation is the next episode's first observation
/// and the terminal one is kept in `infos[i].terminal_obs`.
class VecEnv {
 public:
  VecEnv(std::vector<SystemParams> params, const EnvConfig& cfg, std::uint64_t seed,
         const ParamBox& box = {});

  std::size_t size() const { return envs_.size(); }
  std::vector<Observation> reset();
  VecStepResult step(std::span<const Vec2> actions);

  ReachEnv& env(std::size_t i) { return envs_[i]; }
  const std::vector<SystemParams>& params() const { return params_; }

 private:
  std::vector<SystemParams> params_;
  std::vector<ReachEnv> envs_;
};

/// Requires exactly `n_envs` samples, all inside `box`.
VecEnv make_vector_env(std::span<const SystemParams> samples, const EnvConfig& cfg,
                       std::uint64_t seed, std::size_t n_envs = 12, const ParamBox& box = {});

/// Ground-truth parameters of the emulated real DLOs (lengths from the
/// manufactured set; moduli ordered by Shore hardness).
SystemParams real_dlo_params(int dlo_index);

/// Reality-gap perturbations applied on top of the simulation config.
EnvConfig apply_reality_gap(EnvConfig cfg);

ReachEnv make_real_emulator(int dlo_index, const EnvConfig& base, std::uint64_t seed);

}  // namespace dlo
