#include "dlo/task_env.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace dlo {

Reward compute_reward(const KeypointFrame& frame, double d_thresh, double success_reward) {
  double sq = 0.0;
  for (const auto& k : frame.dlo) sq += (k - frame.target).squaredNorm();
  Reward r;
  r.distance = std::sqrt(sq);
  r.reward = r.distance <= d_thresh ? 1.0 - r.distance / d_thresh : 0.0;
  r.success = r.reward >= success_reward;
  return r;
}

double EpisodeRecord::total_reward() const {
  double total = 0.0;
  for (const auto& s : steps) total += s.reward;
  return total;
}

ReachEnv::ReachEnv(const SystemParams& params, const EnvConfig& cfg, std::uint64_t seed,
                   bool hide_params)
    : params_(params), cfg_(cfg), hide_params_(hide_params), rng_(seed) {
  cfg_.sim.validate();
  cfg_.perception.camera.validate();
  if (!(cfg_.d_thresh > 0.0)) throw DomainError("EnvConfig: d_thresh must be > 0");
  if (cfg_.horizon < 1) throw DomainError("EnvConfig: horizon must be >= 1");
}

std::optional<SystemParams> ReachEnv::params() const {
  if (hide_params_) return std::nullopt;
  return params_;
}

Observation ReachEnv::observe(Reward* reward) {
  const KeypointFrame clean = make_frame(chain_, target_, camera_);
  const KeypointFrame frame =
      corrupt(clean, cfg_.perception.noise_std, cfg_.perception.permute, rng_);
  if (reward != nullptr) *reward = compute_reward(frame, cfg_.d_thresh, cfg_.success_reward);

  Observation o{};
  o[0] = chain_.grip_pos.x();
  o[1] = chain_.grip_pos.y();
  for (int i = 0; i < kDloKeypoints; ++i) {
    o[2 + 2 * i] = frame.dlo[i].x();
    o[3 + 2 * i] = frame.dlo[i].y();
  }
  o[10] = frame.target.x();
  o[11] = frame.target.y();
  return o;
}

Observation ReachEnv::reset() {
  std::uniform_real_distribution<double> cam(-cfg_.perception.camera_offset_range,
                                             cfg_.perception.camera_offset_range);
  std::uniform_real_distribution<double> tgt(-cfg_.target_offset_range,
                                             cfg_.target_offset_range);
  camera_ = cfg_.perception.camera;
  target_ = cfg_.target_nominal;
  if (cfg_.randomize_offsets) {
    camera_.offset = Vec2(cam(rng_), cam(rng_));
    target_ += Vec2(tgt(rng_), tgt(rng_));
  }
  chain_ = init_chain(params_, cfg_.grip_start, cfg_.sim);
  step_ = 0;
  done_ = false;
  obs_ = observe(nullptr);
  return obs_;
}

StepResult ReachEnv::step(const Vec2& action) {
  if (done_) throw UsageError("ReachEnv::step called on a finished episode; call reset()");
  const Vec2 a(std::clamp(action.x(), -kMaxAction, kMaxAction),
               std::clamp(action.y(), -kMaxAction, kMaxAction));
  const Vec2 grip_target = chain_.grip_pos + a;

  StepResult out;
  ++step_;
  if (!cfg_.workspace.contains(grip_target)) {
    out.reward = -1.0;
    out.done = true;
    out.info.out_of_workspace = true;
    out.obs = obs_;
  } else {
    chain_ = step_physics(chain_, grip_target, params_, cfg_.sim);
    Reward r;
    obs_ = observe(&r);
    out.obs = obs_;
    out.reward = r.reward;
    out.info.distance = r.distance;
    out.info.success = r.success;
    out.done = r.success;
    if (!out.done && step_ >= cfg_.horizon) {
      out.done = true;
      out.info.truncated = true;
    }
  }
  out.info.terminal_obs = out.obs;
  done_ = out.done;
  return out;
}

EpisodeRecord run_episode(ReachEnv& env, const PolicyFn& policy) {
  EpisodeRecord rec;
  rec.params = env.params();
  Observation obs = env.reset();
  while (!env.done()) {
    const Vec2 raw = policy(obs);
    const Vec2 a(std::clamp(raw.x(), -kMaxAction, kMaxAction),
                 std::clamp(raw.y(), -kMaxAction, kMaxAction));
    const StepResult r = env.step(a);
    rec.steps.push_back({obs, a, r.reward, r.done});
    obs = r.obs;
  }
  return rec;
}

VecEnv::VecEnv(std::vector<SystemParams> params, const EnvConfig& cfg, std::uint64_t seed,
               const ParamBox& box)
    : params_(std::move(params)) {
  if (params_.empty()) throw UsageError("VecEnv: need at least one environment");
  envs_.reserve(params_.size());
  for (std::size_t i = 0; i < params_.size(); ++i) {
    validate_params(params_[i], box);
    envs_.emplace_back(params_[i], cfg, derive_seed(seed, i));
  }
}

std::vector<Observation> VecEnv::reset() {
  std::vector<Observation> obs;
  obs.reserve(envs_.size());
  for (auto& e : envs_) obs.push_back(e.reset());
  return obs;
}

VecStepResult VecEnv::step(std::span<const Vec2> actions) {
  if (actions.size() != envs_.size()) {
    throw UsageError("VecEnv::step: expected " + std::to_string(envs_.size()) + " actions");
  }
  VecStepResult out;
  out.obs.resize(envs_.size());
  out.rewards.resize(envs_.size());
  out.dones.resize(envs_.size());
  out.infos.resize(envs_.size());
  for (std::size_t i = 0; i < envs_.size(); ++i) {
    StepResult r = envs_[i].step(actions[i]);
    out.rewards[i] = r.reward;
    out.dones[i] = r.done ? 1 : 0;
    out.infos[i] = r.info;
    out.obs[i] = r.done ? envs_[i].reset() : r.obs;
  }
  return out;
}

VecEnv make_vector_env(std::span<const SystemParams> samples, const EnvConfig& cfg,
                       std::uint64_t seed, std::size_t n_envs, const ParamBox& box) {
  if (samples.size() != n_envs) {
    throw UsageError("make_vector_env: expected " + std::to_string(n_envs) + " samples, got " +
                     std::to_string(samples.size()));
  }
  return VecEnv(std::vector<SystemParams>(samples.begin(), samples.end()), cfg, seed, box);
}

SystemParams real_dlo_params(int dlo_index) {
  // Shore A-40 (medium soft), 00-20 (extra soft), 00-50 (soft), 00-20 (extra soft).
  static constexpr std::array<SystemParams, kNumRealDlos> kPresets{{
      {0.200, 4.0e4},
      {0.200, 4.0e3},
      {0.270, 1.5e4},
      {0.290, 4.0e3},
  }};
  if (dlo_index < 0 || dlo_index >= kNumRealDlos) {
    throw UsageError("real DLO index must be in [0, 3], got " + std::to_string(dlo_index));
  }
  return kPresets[dlo_index];
}

EnvConfig apply_reality_gap(EnvConfig cfg) {
  cfg.perception.noise_std = 0.01;
  cfg.perception.permute = true;
  cfg.sim.linear_damping *= 1.15;
  cfg.sim.friction = std::min(1.0, cfg.sim.friction * 1.2);
  return cfg;
}

ReachEnv make_real_emulator(int dlo_index, const EnvConfig& base, std::uint64_t seed) {
  return ReachEnv(real_dlo_params(dlo_index), apply_reality_gap(base), seed, true);
}

}  // namespace dlo
