#include "dlo/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

namespace dlo {
namespace {

const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

}  // namespace

void PpoConfig::validate() const {
  if (!(clip > 0.0)) throw DomainError("PpoConfig: clip must be > 0");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw DomainError("PpoConfig: gamma must be in (0, 1]");
  if (n_steps < 1 || batch_size < 1 || epochs < 0) {
    throw DomainError("PpoConfig: n_steps and batch_size must be >= 1");
  }
  if (!(learning_rate >= 0.0)) throw DomainError("PpoConfig: learning_rate must be >= 0");
}

PolicyModel::PolicyModel(int hidden)
    : actor_({kObsDim, hidden, hidden, kActionDim}, Activation::kTanh, Activation::kIdentity),
      critic_({kObsDim, hidden, hidden, 1}, Activation::kTanh, Activation::kIdentity) {}

PolicyModel PolicyModel::create(const PpoConfig& cfg, Rng& rng) {
  PolicyModel m(cfg.hidden);
  const double s2 = std::sqrt(2.0);
  m.actor_.init_orthogonal(rng, {s2, s2, 0.01});
  m.critic_.init_orthogonal(rng, {s2, s2, 1.0});
  m.log_std_.setConstant(cfg.init_log_std);
  return m;
}

PolicyOutput PolicyModel::forward(const Observation& obs) const {
  const Eigen::Map<const Eigen::VectorXd> x(obs.data(), kObsDim);
  PolicyOutput out;
  out.mean = actor_.forward(x).col(0);
  out.value = critic_.forward(x)(0, 0);
  out.log_std = log_std_;
  return out;
}

double gaussian_log_prob(const Vec2& action, const Vec2& mean, const Vec2& log_std) {
  double lp = 0.0;
  for (int j = 0; j < 2; ++j) {
    const double z = (action[j] - mean[j]) * std::exp(-log_std[j]);
    lp += -0.5 * z * z - log_std[j] - kHalfLog2Pi;
  }
  return lp;
}

double PolicyModel::log_prob(const Observation& obs, const Vec2& action) const {
  const PolicyOutput o = forward(obs);
  return gaussian_log_prob(action, o.mean, o.log_std);
}

Vec2 PolicyModel::to_env_action(const Vec2& normalized) {
  return normalized.cwiseMax(-1.0).cwiseMin(1.0) * kMaxAction;
}

Vec2 PolicyModel::act_deterministic(const Observation& obs) const {
  const Eigen::Map<const Eigen::VectorXd> x(obs.data(), kObsDim);
  return to_env_action(actor_.forward(x).col(0));
}

PolicyFn PolicyModel::deterministic_fn() const {
  return [model = *this](const Observation& obs) { return model.act_deterministic(obs); };
}

Eigen::MatrixXd stack_observations(std::span<const Observation> obs) {
  Eigen::MatrixXd m(kObsDim, static_cast<Eigen::Index>(obs.size()));
  for (std::size_t i = 0; i < obs.size(); ++i) {
    m.col(static_cast<Eigen::Index>(i)) = Eigen::Map<const Eigen::VectorXd>(obs[i].data(), kObsDim);
  }
  return m;
}

RolloutBuffer::RolloutBuffer(int steps, int envs) : n_steps(steps), n_envs(envs) {
  const std::size_t n = static_cast<std::size_t>(steps) * envs;
  obs.resize(n);
  actions.resize(n, Vec2::Zero());
  log_probs.resize(n);
  rewards.resize(n);
  values.resize(n);
  dones.resize(n);
  advantages.resize(n);
  returns.resize(n);
}

void compute_gae(RolloutBuffer& buf, std::span<const double> last_values, double gamma,
                 double lambda) {
  if (static_cast<int>(last_values.size()) != buf.n_envs) {
    throw UsageError("compute_gae: one bootstrap value per env required");
  }
  buf.advantages.assign(buf.size(), 0.0);
  buf.returns.assign(buf.size(), 0.0);
  for (int e = 0; e < buf.n_envs; ++e) {
    double next_adv = 0.0;
    for (int t = buf.n_steps - 1; t >= 0; --t) {
      const std::size_t i = static_cast<std::size_t>(t) * buf.n_envs + e;
      const double next_value =
          t == buf.n_steps - 1 ? last_values[e] : buf.values[i + buf.n_envs];
      const double live = buf.dones[i] ? 0.0 : 1.0;
      const double delta = buf.rewards[i] + gamma * next_value * live - buf.values[i];
      next_adv = delta + gamma * lambda * live * next_adv;
      buf.advantages[i] = next_adv;
      buf.returns[i] = next_adv + buf.values[i];
    }
  }
}

Eigen::VectorXd normalize_advantages(const Eigen::Ref<const Eigen::VectorXd>& adv) {
  const double mean = adv.mean();
  const Eigen::ArrayXd centred = adv.array() - mean;
  // Unbiased std, matching the reference PPO implementation.
  const double denom = adv.size() > 1 ? static_cast<double>(adv.size() - 1) : 1.0;
  const double std = std::sqrt(centred.square().sum() / denom);
  return (centred / (std + 1e-8)).matrix();
}

double PolicyGradients::norm() const {
  return std::sqrt(actor.squaredNorm() + critic.squaredNorm() + log_std.squaredNorm());
}

void PolicyGradients::scale(double s) {
  actor *= s;
  critic *= s;
  log_std *= s;
}

PpoLoss ppo_loss(const PolicyModel& model, const PpoBatch& batch, const PpoConfig& cfg,
                 PolicyGradients* grads) {
  const Eigen::Index n = batch.obs.cols();
  if (n == 0) throw UsageError("ppo_loss: empty batch");
  const double inv_n = 1.0 / static_cast<double>(n);

  Mlp::Tape actor_tape, critic_tape;
  const Eigen::MatrixXd means = model.actor().forward(batch.obs, grads ? &actor_tape : nullptr);
  const Eigen::MatrixXd values = model.critic().forward(batch.obs, grads ? &critic_tape : nullptr);
  const Eigen::Vector2d& log_std = model.log_std();
  const Eigen::Array2d inv_var = (-2.0 * log_std.array()).exp();

  Eigen::MatrixXd d_means = Eigen::MatrixXd::Zero(2, n);
  Eigen::MatrixXd d_values = Eigen::MatrixXd::Zero(1, n);
  Eigen::Vector2d d_log_std = Eigen::Vector2d::Zero();

  PpoLoss loss;
  int clipped = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vec2 mean = means.col(i);
    const Vec2& a = batch.actions[i];
    const double logp = gaussian_log_prob(a, mean, log_std);
    const double ratio = std::exp(logp - batch.old_log_prob[i]);
    const double adv = batch.advantages[i];
    const double clipped_ratio = std::clamp(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip);
    const double unclipped_obj = ratio * adv;
    const double clipped_obj = clipped_ratio * adv;
    loss.policy -= std::min(unclipped_obj, clipped_obj) * inv_n;
    loss.max_ratio_deviation = std::max(loss.max_ratio_deviation, std::abs(ratio - 1.0));
    if (std::abs(ratio - 1.0) > cfg.clip) ++clipped;

    const double err = batch.returns[i] - values(0, i);
    loss.value += err * err * inv_n;

    if (grads != nullptr) {
      // d(policy loss)/d logp; zero when the clipped branch is the minimum.
      const double d_logp = unclipped_obj <= clipped_obj ? -adv * ratio * inv_n : 0.0;
      for (int j = 0; j < 2; ++j) {
        const double diff = a[j] - mean[j];
        d_means(j, i) = d_logp * diff * inv_var[j];
        d_log_std[j] += d_logp * (diff * diff * inv_var[j] - 1.0);
      }
      d_values(0, i) = -2.0 * err * inv_n * cfg.vf_coef;
    }
  }
  loss.entropy = log_std.sum() + 2.0 * (0.5 + kHalfLog2Pi);
  loss.clip_fraction = static_cast<double>(clipped) * inv_n;
  loss.total = loss.policy + cfg.vf_coef * loss.value - cfg.ent_coef * loss.entropy;

  if (grads != nullptr) {
    d_log_std.array() -= cfg.ent_coef;
    grads->actor = Eigen::VectorXd::Zero(model.actor().num_params());
    grads->critic = Eigen::VectorXd::Zero(model.critic().num_params());
    model.actor().backward(actor_tape, d_means, grads->actor);
    model.critic().backward(critic_tape, d_values, grads->critic);
    grads->log_std = d_log_std;
  }
  return loss;
}

PpoOptimizer::PpoOptimizer(const PolicyModel& model, const PpoConfig& cfg)
    : actor(model.actor().num_params(), cfg.learning_rate, 0.9, 0.999, cfg.adam_epsilon),
      critic(model.critic().num_params(), cfg.learning_rate, 0.9, 0.999, cfg.adam_epsilon),
      log_std(2, cfg.learning_rate, 0.9, 0.999, cfg.adam_epsilon) {}

UpdateStats ppo_update(PolicyModel& model, const RolloutBuffer& buf, const PpoConfig& cfg,
                       PpoOptimizer& opt, Rng& rng) {
  UpdateStats stats;
  const std::size_t n = buf.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  PolicyGradients grads;
  int batches = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t end = std::min(n, start + cfg.batch_size);
      const auto b = static_cast<Eigen::Index>(end - start);
      PpoBatch batch;
      batch.obs.resize(kObsDim, b);
      batch.actions.resize(b);
      batch.old_log_prob.resize(b);
      batch.advantages.resize(b);
      batch.returns.resize(b);
      for (Eigen::Index k = 0; k < b; ++k) {
        const std::size_t i = order[start + k];
        batch.obs.col(k) = Eigen::Map<const Eigen::VectorXd>(buf.obs[i].data(), kObsDim);
        batch.actions[k] = buf.actions[i];
        batch.old_log_prob[k] = buf.log_probs[i];
        batch.advantages[k] = buf.advantages[i];
        batch.returns[k] = buf.returns[i];
      }
      if (cfg.normalize_advantage && b > 1) batch.advantages = normalize_advantages(batch.advantages);

      const PpoLoss loss = ppo_loss(model, batch, cfg, &grads);
      if (!std::isfinite(loss.total)) {
        std::ostringstream msg;
        msg << "ppo_update: non-finite loss at epoch " << epoch << " (policy=" << loss.policy
            << ", value=" << loss.value << ", |grad|=" << grads.norm() << ")";
        throw TrainingError(msg.str());
      }
      if (batches == 0) stats.first_ratio_deviation = loss.max_ratio_deviation;

      const double gnorm = grads.norm();
      if (gnorm > cfg.max_grad_norm) grads.scale(cfg.max_grad_norm / (gnorm + 1e-6));
      opt.actor.step(model.actor().params(), grads.actor);
      opt.critic.step(model.critic().params(), grads.critic);
      opt.log_std.step(model.log_std(), grads.log_std);

      stats.policy_loss += loss.policy;
      stats.value_loss += loss.value;
      stats.entropy += loss.entropy;
      stats.clip_fraction += loss.clip_fraction;
      ++batches;
    }
  }
  if (batches > 0) {
    stats.policy_loss /= batches;
    stats.value_loss /= batches;
    stats.entropy /= batches;
    stats.clip_fraction /= batches;
  }
  stats.gradient_steps = batches;
  return stats;
}

TrainResult train(VecEnv& env, const PpoConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  TrainResult result;
  result.model = PolicyModel::create(cfg, rng);
  PolicyModel& model = result.model;
  PpoOptimizer opt(model, cfg);

  const int n_envs = static_cast<int>(env.size());
  std::vector<Observation> obs = env.reset();
  std::vector<double> running(n_envs, 0.0);
  std::normal_distribution<double> noise(0.0, 1.0);
  long steps = 0;
  std::vector<Vec2> env_actions(n_envs);
  std::vector<int> episode_step(n_envs, 0);

  while (steps < cfg.total_steps) {
    RolloutBuffer buf(cfg.n_steps, n_envs);
    double curve_sum = 0.0;
    int curve_count = 0;
    for (int t = 0; t < cfg.n_steps; ++t) {
      const Eigen::MatrixXd x = stack_observations(obs);
      const Eigen::MatrixXd means = model.actor().forward(x);
      const Eigen::MatrixXd values = model.critic().forward(x);
      const Eigen::Array2d std = model.log_std().array().exp();
      for (int e = 0; e < n_envs; ++e) {
        const std::size_t i = static_cast<std::size_t>(t) * n_envs + e;
        const Vec2 mean = means.col(e);
        const Vec2 a(mean[0] + std[0] * noise(rng), mean[1] + std[1] * noise(rng));
        buf.obs[i] = obs[e];
        buf.actions[i] = a;
        buf.log_probs[i] = gaussian_log_prob(a, mean, model.log_std());
        buf.values[i] = values(0, e);
        env_actions[e] = PolicyModel::to_env_action(a);
      }
      VecStepResult r = env.step(env_actions);
      steps += n_envs;
      for (int e = 0; e < n_envs; ++e) {
        const std::size_t i = static_cast<std::size_t>(t) * n_envs + e;
        double reward = r.rewards[e];
        running[e] += reward;
        ++episode_step[e];
        if (cfg.absorbing_success && r.infos[e].success) {
          double tail = 0.0, g = 1.0;
          for (int k = episode_step[e]; k < env.env(e).config().horizon; ++k) {
            g *= cfg.gamma;
            tail += g;
          }
          reward += tail * r.rewards[e];
        } else if (r.infos[e].truncated) {
          // Time-limit truncation: bootstrap from the terminal observation.
          const Eigen::Map<const Eigen::VectorXd> term(r.infos[e].terminal_obs.data(), kObsDim);
          reward += cfg.gamma * model.critic().forward(term)(0, 0);
        }
        buf.rewards[i] = reward;
        buf.dones[i] = r.dones[e];
        if (r.dones[e]) {
          result.episode_rewards.push_back(running[e]);
          result.episode_end_steps.push_back(steps);
          curve_sum += running[e];
          ++curve_count;
          running[e] = 0.0;
          episode_step[e] = 0;
        }
      }
      obs = std::move(r.obs);
    }
    const Eigen::MatrixXd last = model.critic().forward(stack_observations(obs));
    std::vector<double> last_values(last.data(), last.data() + last.size());
    compute_gae(buf, last_values, cfg.gamma, cfg.gae_lambda);
    ppo_update(model, buf, cfg, opt, rng);
    if (curve_count > 0) result.curve.push_back({steps, curve_sum / curve_count, curve_count});
  }
  return result;
}

std::pair<double, double> first_last_fraction_means(std::span<const double> rewards,
                                                    double fraction) {
  if (rewards.empty()) throw DomainError("first_last_fraction_means: no episodes");
  const std::size_t k =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(fraction * rewards.size())));
  const double first = std::accumulate(rewards.begin(), rewards.begin() + k, 0.0) / k;
  const double last = std::accumulate(rewards.end() - k, rewards.end(), 0.0) / k;
  return {first, last};
}

Evaluation evaluate(const PolicyFn& policy, ReachEnv env, int repetitions) {
  Evaluation out;
  for (int r = 0; r < repetitions; ++r) {
    EpisodeRecord rec = run_episode(env, policy);
    std::vector<double> rewards;
    for (const auto& s : rec.steps) rewards.push_back(s.reward);
    out.step_rewards.push_back(std::move(rewards));
    out.records.push_back(std::move(rec));
  }
  return out;
}

}  // namespace dlo
