#pragma once

// Proximal policy optimisation with a diagonal Gaussian policy, GAE and a
// clipped surrogate objective, trained on a synchronous VecEnv.
//
// The policy acts in a normalized action space; the environment receives
// clamp(a, -1, 1) * kMaxAction metres. Log-probabilities are computed on the
// unclamped sample.

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "dlo/nn.hpp"
#include "dlo/task_env.hpp"

namespace dlo {

struct PpoConfig {
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double clip = 0.2;
  int epochs = 10;
  int n_steps = 16;  // per env per update
  int batch_size = 16;
  long total_steps = 30000;
  double ent_coef = 0.0;
  double vf_coef = 0.5;
  double learning_rate = 3e-4;
  double max_grad_norm = 0.5;
  double adam_epsilon = 1e-5;
  int hidden = 64;
  double init_log_std = 0.0;
  bool normalize_advantage = true;
  // Value a successful termination as if the success reward kept accruing
  // until the horizon. Without it, ending the episode early earns less than
  // hovering just outside the success radius.
  bool absorbing_success = true;
  std::uint64_t seed = 0;

  void validate() const;
};

struct PolicyOutput {
  Vec2 mean = Vec2::Zero();
  Vec2 log_std = Vec2::Zero();
  double value = 0.0;
};

class PolicyModel {
 public:
  PolicyModel() : PolicyModel(64) {}
  explicit PolicyModel(int hidden);

  /// Orthogonal init (gains sqrt(2) hidden, 0.01 actor head, 1 critic head).
  static PolicyModel create(const PpoConfig& cfg, Rng& rng);

  PolicyOutput forward(const Observation& obs) const;
  double log_prob(const Observation& obs, const Vec2& action) const;

  /// Executed command in metres for a normalized action.
  static Vec2 to_env_action(const Vec2& normalized);
  /// Mean action, in metres.
  Vec2 act_deterministic(const Observation& obs) const;
  /// Deterministic controller holding a copy of the current weights.
  PolicyFn deterministic_fn() const;

  Mlp& actor() { return actor_; }
  const Mlp& actor() const { return actor_; }
  Mlp& critic() { return critic_; }
  const Mlp& critic() const { return critic_; }
  Eigen::Vector2d& log_std() { return log_std_; }
  const Eigen::Vector2d& log_std() const { return log_std_; }
  int hidden() const { return actor_.sizes()[1]; }

 private:
  Mlp actor_;
  Mlp critic_;
  Eigen::Vector2d log_std_ = Eigen::Vector2d::Zero();
};

double gaussian_log_prob(const Vec2& action, const Vec2& mean, const Vec2& log_std);

/// Column-major observation batch (12 x N).
Eigen::MatrixXd stack_observations(std::span<const Observation> obs);

/// Transitions of one rollout, indexed [t * n_envs + e].
struct RolloutBuffer {
  int n_steps = 0;
  int n_envs = 0;
  std::vector<Observation> obs;
  std::vector<Vec2> actions;  // normalized, unclamped
  std::vector<double> log_probs;
  std::vector<double> rewards;
  std::vector<double> values;
  std::vector<std::uint8_t> dones;
  std::vector<double> advantages;
  std::vector<double> returns;

  RolloutBuffer() = default;
  RolloutBuffer(int steps, int envs);
  std::size_t size() const { return rewards.size(); }
};

/// delta_t = r_t + gamma V(s_{t+1}) (1 - done_t) - V(s_t);
/// A_t = delta_t + gamma lambda (1 - done_t) A_{t+1}; returns = A + V.
/// `last_values` are V of the observations following the final step.
void compute_gae(RolloutBuffer& buffer, std::span<const double> last_values, double gamma,
                 double lambda);

/// Advantages normalized to zero mean and unit std (guard 1e-8).
Eigen::VectorXd normalize_advantages(const Eigen::Ref<const Eigen::VectorXd>& adv);

struct PpoBatch {
  Eigen::MatrixXd obs;  // 12 x B
  std::vector<Vec2> actions;
  Eigen::VectorXd old_log_prob;
  Eigen::VectorXd advantages;  // used as given
  Eigen::VectorXd returns;
};

struct PolicyGradients {
  Eigen::VectorXd actor;
  Eigen::VectorXd critic;
  Eigen::Vector2d log_std = Eigen::Vector2d::Zero();

  double norm() const;
  void scale(double s);
};

struct PpoLoss {
  double total = 0.0;
  double policy = 0.0;
  double value = 0.0;
  double entropy = 0.0;  // mean entropy (positive)
  double clip_fraction = 0.0;
  double max_ratio_deviation = 0.0;  // max |ratio - 1|
};

/// Clipped-surrogate + value + entropy loss; fills `grads` when non-null.
PpoLoss ppo_loss(const PolicyModel& model, const PpoBatch& batch, const PpoConfig& cfg,
                 PolicyGradients* grads);

struct PpoOptimizer {
  Adam actor, critic, log_std;
  PpoOptimizer() = default;
  PpoOptimizer(const PolicyModel& model, const PpoConfig& cfg);
};

struct UpdateStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double clip_fraction = 0.0;
  double first_ratio_deviation = 0.0;  // max |ratio - 1| on the first minibatch
  int gradient_steps = 0;
};

UpdateStats ppo_update(PolicyModel& model, const RolloutBuffer& buffer, const PpoConfig& cfg,
                       PpoOptimizer& opt, Rng& rng);

struct CurvePoint {
  long step = 0;
  double mean_episode_reward = 0.0;
  int episodes = 0;
};

struct TrainResult {
  PolicyModel model;
  std::vector<CurvePoint> curve;
  std::vector<double> episode_rewards;  // in completion order
  std::vector<long> episode_end_steps;
};

TrainResult train(VecEnv& env, const PpoConfig& cfg);

/// Mean episode reward of the first and last `fraction` of episodes.
std::pair<double, double> first_last_fraction_means(std::span<const double> rewards,
                                                    double fraction = 0.1);

struct Evaluation {
  std::vector<EpisodeRecord> records;
  std::vector<std::vector<double>> step_rewards;
};

/// Deterministic mean-action rollouts on a copy of `env`.
Evaluation evaluate(const PolicyFn& policy, ReachEnv env, int repetitions = 4);

}  // namespace dlo
