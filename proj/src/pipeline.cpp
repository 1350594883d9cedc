#include "dlo/pipeline.hpp"

#include <cmath>
#include <iostream>
#include <set>

namespace dlo {
namespace {

std::string to_string(RffVariant v) { return v == RffVariant::kCosOnly ? "cos" : "cos-sin"; }

RffVariant parse_rff_variant(const std::string& s) {
  if (s == "cos") return RffVariant::kCosOnly;
  if (s == "cos-sin") return RffVariant::kCosSin;
  throw UsageError("unknown rff_variant '" + s + "' (expected cos|cos-sin)");
}

Json encode(double v) { return v; }
Json encode(int v) { return v; }
Json encode(long v) { return v; }
Json encode(bool v) { return v; }
Json encode(const Vec2& v) { return Json::array({v.x(), v.y()}); }
Json encode(CorrectionMode m) { return to_string(m); }
Json encode(ProposalModel m) { return to_string(m); }
Json encode(RffVariant v) { return to_string(v); }

void decode(const Json& j, double& v) { v = j.get<double>(); }
void decode(const Json& j, int& v) { v = j.get<int>(); }
void decode(const Json& j, long& v) { v = j.get<long>(); }
void decode(const Json& j, bool& v) { v = j.get<bool>(); }
void decode(const Json& j, Vec2& v) {
  if (!j.is_array() || j.size() != 2) throw UsageError("expected a 2-element array");
  v = Vec2(j.at(0).get<double>(), j.at(1).get<double>());
}
void decode(const Json& j, CorrectionMode& m) { m = parse_correction_mode(j.get<std::string>()); }
void decode(const Json& j, ProposalModel& m) { m = parse_proposal_model(j.get<std::string>()); }
void decode(const Json& j, RffVariant& v) { v = parse_rff_variant(j.get<std::string>()); }

/// Calls v(section, key, field) for every configurable field.
template <class C, class V>
void visit_fields(C& c, V&& v) {
  v("run", "dlo_index", c.dlo_index);
  v("run", "n_envs", c.n_envs);
  v("run", "eval_repetitions", c.eval_repetitions);
  v("run", "heatmap_resolution", c.heatmap_resolution);

  v("box", "length_min", c.box.lo.length);
  v("box", "length_max", c.box.hi.length);
  v("box", "youngs_modulus_min", c.box.lo.youngs_modulus);
  v("box", "youngs_modulus_max", c.box.hi.youngs_modulus);

  auto& sim = c.env.sim;
  v("sim", "n_segments", sim.n_segments);
  v("sim", "cross_section", sim.cross_section);
  v("sim", "dt", sim.dt);
  v("sim", "substeps_per_control", sim.substeps_per_control);
  v("sim", "gravity", sim.gravity);
  v("sim", "linear_damping", sim.linear_damping);
  v("sim", "table_height", sim.table_height);
  v("sim", "mass_density", sim.mass_density);
  v("sim", "friction", sim.friction);
  v("sim", "constraint_iterations", sim.constraint_iterations);

  auto& per = c.env.perception;
  v("perception", "camera_window_min", per.camera.window_min);
  v("perception", "camera_window_max", per.camera.window_max);
  v("perception", "camera_offset_range", per.camera_offset_range);
  v("perception", "noise_std", per.noise_std);
  v("perception", "permute", per.permute);

  auto& env = c.env;
  v("task", "workspace_x_min", env.workspace.x_min);
  v("task", "workspace_x_max", env.workspace.x_max);
  v("task", "workspace_z_min", env.workspace.z_min);
  v("task", "workspace_z_max", env.workspace.z_max);
  v("task", "grip_start", env.grip_start);
  v("task", "target_nominal", env.target_nominal);
  v("task", "target_offset_range", env.target_offset_range);
  v("task", "randomize_offsets", env.randomize_offsets);
  v("task", "d_thresh", env.d_thresh);
  v("task", "success_reward", env.success_reward);

  auto& lfi = c.lfi;
  v("lfi", "n_iterations", lfi.n_iterations);
  v("lfi", "first_iteration_trajectories", lfi.first_iteration_trajectories);
  v("lfi", "trajectories_per_iter", lfi.trajectories_per_iter);
  v("lfi", "first_iteration_epochs", lfi.first_iteration_epochs);
  v("lfi", "epochs_per_iter", lfi.epochs_per_iter);
  v("lfi", "correction_mode", lfi.correction_mode);
  v("lfi", "proposal_model", lfi.proposal_model);
  v("lfi", "n_envs", lfi.n_envs);

  auto& md = c.lfi.mdnn;
  v("mdnn", "rff_features", md.rff_features);
  v("mdnn", "rff_variant", md.rff_variant);
  v("mdnn", "rff_sigma", md.rff_sigma);
  v("mdnn", "train_rff", md.train_rff);
  v("mdnn", "include_actions", md.include_actions);
  v("mdnn", "hidden", md.hidden);
  v("mdnn", "hidden_layers", md.hidden_layers);
  v("mdnn", "components", md.components);
  v("mdnn", "init_stddev", md.init_stddev);
  v("mdnn", "min_stddev", md.min_stddev);
  v("mdnn", "head_init_scale", md.head_init_scale);

  auto& tr = c.lfi.train;
  v("mdnn_train", "learning_rate", tr.learning_rate);
  v("mdnn_train", "beta1", tr.beta1);
  v("mdnn_train", "beta2", tr.beta2);
  v("mdnn_train", "epsilon", tr.epsilon);
  v("mdnn_train", "batch_size", tr.batch_size);
  v("mdnn_train", "shuffle", tr.shuffle);

  auto& p = c.ppo;
  v("ppo", "gamma", p.gamma);
  v("ppo", "gae_lambda", p.gae_lambda);
  v("ppo", "clip", p.clip);
  v("ppo", "epochs", p.epochs);
  v("ppo", "n_steps", p.n_steps);
  v("ppo", "batch_size", p.batch_size);
  v("ppo", "total_steps", p.total_steps);
  v("ppo", "ent_coef", p.ent_coef);
  v("ppo", "vf_coef", p.vf_coef);
  v("ppo", "learning_rate", p.learning_rate);
  v("ppo", "max_grad_norm", p.max_grad_norm);
  v("ppo", "adam_epsilon", p.adam_epsilon);
  v("ppo", "hidden", p.hidden);
  v("ppo", "init_log_std", p.init_log_std);
  v("ppo", "normalize_advantage", p.normalize_advantage);
  v("ppo", "absorbing_success", p.absorbing_success);
}

void log(const std::string& msg) { std::cerr << "[dlo-r2s2r] " << msg << '\n'; }

std::string two_digits(int i) { return (i < 10 ? "0" : "") + std::to_string(i); }

}  // namespace

void RunConfig::validate() const {
  if (dlo_index < 0 || dlo_index >= kNumRealDlos) {
    throw UsageError("dlo_index must be in [0, " + std::to_string(kNumRealDlos - 1) + "], got " +
                     std::to_string(dlo_index));
  }
  if (n_envs < 1 || eval_repetitions < 1) throw UsageError("n_envs and eval_repetitions must be >= 1");
  if (heatmap_resolution < 2) throw UsageError("heatmap_resolution must be >= 2");
  try {
    box.validate();
    env.sim.validate();
    env.perception.camera.validate();
    lfi.validate();
    ppo.validate();
    if (!(lfi.train.learning_rate > 0.0)) throw DomainError("mdnn_train.learning_rate must be > 0");
  } catch (const DomainError& e) {
    throw UsageError(std::string("invalid config: ") + e.what());
  }
}

RunConfig preset_config(const std::string& name) {
  RunConfig c;
  c.preset = name;
  if (name == "desk") {
    c.lfi.n_iterations = 5;
    c.lfi.first_iteration_trajectories = 200;
    c.lfi.trajectories_per_iter = 50;
    c.lfi.first_iteration_epochs = 100;
    c.lfi.epochs_per_iter = 50;
    c.lfi.mdnn.rff_features = 128;
    c.lfi.mdnn.hidden = 256;
    c.lfi.train.learning_rate = 1e-3;
    c.ppo.total_steps = 120000;
  } else if (name == "paper") {
    c.lfi.n_iterations = 15;
    c.lfi.first_iteration_trajectories = 100;
    c.lfi.trajectories_per_iter = 100;
    c.lfi.first_iteration_epochs = 100;
    c.lfi.epochs_per_iter = 50;
    c.lfi.mdnn.rff_features = 500;
    c.lfi.mdnn.hidden = 1024;
    c.lfi.train.learning_rate = 1e-6;
    c.ppo.total_steps = 120000;
  } else {
    throw UsageError("unknown preset '" + name + "' (expected desk|paper)");
  }
  return c;
}

RunConfig run_config_from_json(const Json& j) {
  if (!j.is_object()) throw UsageError("config must be a JSON object");
  RunConfig c = preset_config(j.value("preset", std::string("desk")));
  if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("out_dir")) c.out_dir = j.at("out_dir").get<std::string>();

  std::set<std::string> known{"preset", "seed", "out_dir"};
  std::set<std::pair<std::string, std::string>> used;
  try {
    visit_fields(c, [&](const char* section, const char* key, auto& field) {
      known.insert(section);
      if (j.contains(section) && j.at(section).contains(key)) {
        decode(j.at(section).at(key), field);
        used.emplace(section, key);
      }
    });
  } catch (const Json::exception& e) {
    throw UsageError(std::string("config: ") + e.what());
  }
  for (const auto& [section, value] : j.items()) {
    if (!known.count(section)) throw UsageError("config: unknown key '" + section + "'");
    if (section == "preset" || section == "seed" || section == "out_dir") continue;
    if (!value.is_object()) throw UsageError("config: '" + section + "' must be an object");
    for (const auto& [key, unused] : value.items()) {
      if (!used.count({section, key})) {
        throw UsageError("config: unknown key '" + section + "." + key + "'");
      }
    }
  }
  c.validate();
  return c;
}

Json to_json(const RunConfig& cfg) {
  Json j = {{"preset", cfg.preset}, {"seed", cfg.seed}, {"out_dir", cfg.out_dir.string()}};
  visit_fields(cfg, [&](const char* section, const char* key, const auto& field) {
    j[section][key] = encode(field);
  });
  return j;
}

std::string config_hash(const RunConfig& cfg) {
  Json j = to_json(cfg);
  j.erase("seed");
  j.erase("out_dir");
  return fnv1a_hex(j.dump());
}

std::uint64_t stage_seed(const RunConfig& cfg, Stage stage) {
  return derive_seed(cfg.seed, static_cast<std::uint64_t>(stage));
}

namespace {

TrainResult train_on(const RunConfig& cfg, std::vector<SystemParams> thetas, std::uint64_t seed) {
  VecEnv env(std::move(thetas), cfg.env, derive_seed(seed, 1), cfg.box);
  PpoConfig p = cfg.ppo;
  p.seed = derive_seed(seed, 2);
  return train(env, p);
}

}  // namespace

TrainResult train_policy(const RunConfig& cfg, const Density& prior, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0));
  return train_on(cfg, prior.sample_batch(cfg.n_envs, rng), seed);
}

EpisodeRecord real_rollout(const RunConfig& cfg, const PolicyModel& policy, int dlo_index,
                           std::uint64_t seed) {
  ReachEnv env = make_real_emulator(dlo_index, cfg.env, seed);
  return run_episode(env, policy.deterministic_fn());
}

InferenceResult infer(const RunConfig& cfg, const EpisodeRecord& real, const PolicyModel& policy) {
  LfiConfig l = cfg.lfi;
  l.seed = stage_seed(cfg, Stage::kInference);
  return run_inference(real, policy.deterministic_fn(), l, cfg.env, cfg.box,
                       [](int it, const InferenceResult& r) {
                         const MixtureOfGaussians& p = r.posterior_per_iteration.back();
                         const SystemParams m = p.box().denormalize(p.mean());
                         log("lfi iteration " + std::to_string(it) + ": dataset " +
                             std::to_string(r.dataset_sizes.back()) + ", final loss " +
                             format_double(r.loss_curves.back().empty() ? 0.0 : r.loss_curves.back().back()) +
                             ", mean L=" + format_double(m.length) +
                             " E=" + format_double(m.youngs_modulus));
                       });
}

std::vector<NamedEnv> evaluation_envs(const RunConfig& cfg) {
  const std::uint64_t seed = stage_seed(cfg, Stage::kEvaluate);
  std::vector<NamedEnv> envs;
  for (int i = 0; i < kNumRealDlos; ++i) {
    envs.push_back({"real" + std::to_string(i), make_real_emulator(i, cfg.env, derive_seed(seed, i))});
  }
  envs.push_back({"sim_median", ReachEnv(cfg.box.median(), cfg.env, derive_seed(seed, kNumRealDlos))});
  return envs;
}

Pipeline::Pipeline(RunConfig cfg) : cfg_(std::move(cfg)), hash_(config_hash(cfg_)) {
  cfg_.validate();
  std::filesystem::create_directories(cfg_.out_dir / "stages");
}

bool Pipeline::stage_done(const std::string& stage) const {
  const auto marker = path("stages/" + stage + ".json");
  if (!std::filesystem::exists(marker)) return false;
  ArtifactMeta m;
  try {
    read_json(marker, "done", &m);
  } catch (const std::exception&) {
    return false;
  }
  if (m == meta(stage)) return true;
  log("stage " + stage + " was produced by another config or seed; recomputing");
  return false;
}

void Pipeline::mark_done(const std::string& stage) const {
  write_json(path("stages/" + stage + ".json"), meta(stage), "done", true);
}

PolicyModel Pipeline::train_and_save(const std::string& stage, const std::string& stem,
                                     const std::function<Density()>& prior, Stage seed_stage) {
  const std::string file = "policy_" + stem + ".json";
  if (stage_done(stage)) return policy_from_json(read_json(path(file), "policy"));
  log("training " + stem + " policy (" + std::to_string(cfg_.ppo.total_steps) + " steps)");
  TrainResult tr;
  if (seed_stage == Stage::kPolicyMedian) {
    tr = train_on(cfg_, std::vector<SystemParams>(cfg_.n_envs, cfg_.box.median()),
                  stage_seed(cfg_, seed_stage));
  } else {
    tr = train_policy(cfg_, prior(), stage_seed(cfg_, seed_stage));
  }
  write_json(path(file), meta(stage), "policy", to_json(tr.model));
  write_learning_curve_csv(path("learning_curve_" + stem + ".csv"), meta(stage), tr.curve);
  write_episode_rewards_csv(path("episode_rewards_" + stem + ".csv"), meta(stage),
                            tr.episode_rewards, tr.episode_end_steps);
  mark_done(stage);
  return tr.model;
}

PolicyModel Pipeline::policy_b0() {
  return train_and_save("policy_b0", "b0", [&] { return Density(UniformBox{cfg_.box}); },
                        Stage::kPolicyB0);
}

EpisodeRecord Pipeline::real_trajectory() {
  const std::string stage = "real_rollout";
  if (stage_done(stage)) {
    const auto recs = read_records_jsonl(path("real_trajectory.jsonl"));
    if (recs.size() != 1) throw DomainError("real_trajectory.jsonl must hold exactly one record");
    return recs.front();
  }
  const PolicyModel b0 = policy_b0();
  log("rolling the data-collection policy on emulated DLO " + std::to_string(cfg_.dlo_index));
  const EpisodeRecord rec = real_rollout(cfg_, b0, cfg_.dlo_index, stage_seed(cfg_, Stage::kRealRollout));
  write_records_jsonl(path("real_trajectory.jsonl"), meta(stage), std::span(&rec, 1));
  mark_done(stage);
  return rec;
}

MixtureOfGaussians Pipeline::posterior() {
  const std::string stage = "inference";
  if (stage_done(stage)) return mog_from_json(read_json(path("posterior.json"), "posterior"));
  const PolicyModel b0 = policy_b0();
  const EpisodeRecord real = real_trajectory();
  log("running inference");
  const InferenceResult res = infer(cfg_, real, b0);
  const ArtifactMeta m = meta(stage);
  Json summary = Json::array();
  for (std::size_t i = 0; i < res.posterior_per_iteration.size(); ++i) {
    const MixtureOfGaussians& p = res.posterior_per_iteration[i];
    write_json(path("posterior_iter_" + two_digits(static_cast<int>(i)) + ".json"), m, "posterior",
               to_json(p));
    const SystemParams mean = cfg_.box.denormalize(p.mean());
    const Eigen::Matrix2d cov = p.mixture_covariance();
    summary.push_back({{"iteration", i},
                       {"dataset_size", i < res.dataset_sizes.size() ? res.dataset_sizes[i] : 0},
                       {"mean", to_json(mean)},
                       {"std_normalized", {std::sqrt(cov(0, 0)), std::sqrt(cov(1, 1))}},
                       {"component_cov_trace", p.weighted_component_covariance().trace()}});
  }
  write_json(path("lfi_summary.json"), m, "iterations", summary);
  write_loss_curves_csv(path("lfi_loss.csv"), m, res.loss_curves);
  write_json(path("mdnn.json"), m, "model", to_json(res.model));
  const MixtureOfGaussians& final_posterior = res.posterior_per_iteration.back();
  write_json(path("posterior.json"), m, "posterior", to_json(final_posterior));
  heatmaps(final_posterior);
  for (std::size_t i = 0; i < res.posterior_per_iteration.size(); ++i) {
    write_heatmap(path("heatmaps"), "posterior_iter_" + two_digits(static_cast<int>(i)), m,
                  grid_density(res.posterior_per_iteration[i], cfg_.heatmap_resolution,
                               cfg_.heatmap_resolution));
  }
  mark_done(stage);
  return final_posterior;
}

void Pipeline::heatmaps(const MixtureOfGaussians& posterior) {
  write_heatmap(path("heatmaps"), "posterior", meta("heatmap"),
                grid_density(posterior, cfg_.heatmap_resolution, cfg_.heatmap_resolution));
}

PolicyModel Pipeline::policy_b1() {
  return train_and_save("policy_b1", "b1", [&] { return Density(posterior()); }, Stage::kPolicyB1);
}

PolicyModel Pipeline::policy_median() {
  return train_and_save("policy_mu", "mu", {}, Stage::kPolicyMedian);
}

EvalGrid Pipeline::evaluate() {
  const std::string stage = "evaluate";
  const std::vector<NamedPolicy> policies{{"ppo_posterior", policy_b1().deterministic_fn()},
                                          {"ppo_uniform", policy_b0().deterministic_fn()},
                                          {"ppo_median", policy_median().deterministic_fn()}};
  log("evaluating " + std::to_string(policies.size()) + " policies");
  const EvalGrid grid = build_eval_grid(policies, evaluation_envs(cfg_), cfg_.eval_repetitions);
  write_eval_grid(path("eval_grid"), meta(stage), grid);
  mark_done(stage);
  return grid;
}

void Pipeline::run_all() {
  write_json(path("config.json"), meta("config"), "config", to_json(cfg_));
  policy_b0();
  real_trajectory();
  posterior();
  policy_b1();
  policy_median();
  if (!stage_done("evaluate")) evaluate();
  log("done: " + cfg_.out_dir.string());
}

}  // namespace dlo
