#include "dlo/lfi.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

#include <Eigen/LU>

namespace dlo {

ProposalModel parse_proposal_model(const std::string& s) {
  if (s == "dataset") return ProposalModel::kDataset;
  if (s == "latest") return ProposalModel::kLatest;
  throw DomainError("unknown proposal model '" + s + "' (expected dataset|latest)");
}

std::string to_string(ProposalModel m) {
  return m == ProposalModel::kDataset ? "dataset" : "latest";
}

void LfiConfig::validate() const {
  if (n_iterations < 1) throw DomainError("LfiConfig: n_iterations must be >= 1");
  if (first_iteration_trajectories < 1 || trajectories_per_iter < 1) {
    throw DomainError("LfiConfig: trajectories_per_iter must be >= 1");
  }
  if (n_envs < 1) throw DomainError("LfiConfig: n_envs must be >= 1");
  if (first_iteration_epochs < 0 || epochs_per_iter < 0) {
    throw DomainError("LfiConfig: epochs must be >= 0");
  }
}

std::vector<SimTrajectory> collect_trajectories(const PolicyFn& policy, const Density& prior, int n,
                                                const EnvConfig& env_cfg, std::uint64_t seed,
                                                int n_envs) {
  if (n < 1) throw DomainError("collect_trajectories: n must be >= 1");
  Rng rng(derive_seed(seed, 0));
  std::vector<SimTrajectory> out;
  out.reserve(n);
  int index = 0;
  while (index < n) {
    const int group = std::min(n_envs, n - index);
    const std::vector<SystemParams> thetas = prior.sample_batch(group, rng);
    for (const SystemParams& theta : thetas) {
      const std::uint64_t env_seed = derive_seed(seed, 1 + static_cast<std::uint64_t>(index));
      ++index;
      try {
        ReachEnv env(theta, env_cfg, env_seed);
        out.push_back({theta, run_episode(env, policy)});
      } catch (const IntegrationError& e) {
        std::cerr << "collect: skipping trajectory " << index - 1 << " (L=" << theta.length
                  << ", E=" << theta.youngs_modulus << "): " << e.what() << '\n';
      }
    }
  }
  if (2 * static_cast<int>(out.size()) < n) {
    throw IntegrationError("collect_trajectories: only " + std::to_string(out.size()) + " of " +
                           std::to_string(n) + " episodes completed");
  }
  return out;
}

bool is_degenerate(const MixtureOfGaussians& mog) {
  for (int k = 0; k < mog.size(); ++k) {
    if (!std::isfinite(mog.weights()[k]) || !mog.means()[k].allFinite() ||
        !mog.chol()[k].allFinite()) {
      return true;
    }
  }
  const auto& w = mog.weights();
  const int top = static_cast<int>(std::max_element(w.begin(), w.end()) - w.begin());
  if (w[top] < 1.0 - 1e-9) return false;
  const Eigen::Matrix2d cov = mog.covariance(top);
  return !(cov(0, 0) > 0.0 && cov.determinant() > 1e-300);
}

InferenceResult run_inference(const EpisodeRecord& real_traj, const PolicyFn& policy,
                              const LfiConfig& cfg, const EnvConfig& env_cfg, const ParamBox& box,
                              const IterationCallback& on_iteration) {
  cfg.validate();
  if (real_traj.steps.empty()) throw DomainError("run_inference: empty real trajectory");
  const Density desired = UniformBox{box};
  Density proposal = desired;

  const TrajectoryInput real_input = TrajectoryInput::from_record(real_traj, cfg.mdnn.horizon);
  std::vector<MdnnSample> data;
  MdnnModel model;
  Rng init_rng(derive_seed(cfg.seed, 1000));
  InferenceResult result;
  std::vector<std::pair<double, Density>> sampled_from;  // (trajectory count, prior)

  for (int it = 0; it < cfg.n_iterations; ++it) {
    const std::vector<SimTrajectory> batch =
        collect_trajectories(policy, proposal, cfg.trajectories_at(it), env_cfg,
                             derive_seed(cfg.seed, static_cast<std::uint64_t>(it)), cfg.n_envs);
    sampled_from.emplace_back(static_cast<double>(batch.size()), proposal);
    for (const SimTrajectory& s : batch) {
      data.push_back({TrajectoryInput::from_record(s.record, cfg.mdnn.horizon), box.normalize(s.theta)});
    }

    if (it == 0) {
      std::vector<Vec2> calibration;
      for (const MdnnSample& s : data) {
        for (Eigen::Index r = 0; r < s.x.length * kPointsPerStep; ++r) {
          calibration.push_back(s.x.points.row(r).transpose());
        }
      }
      model = MdnnModel::create(cfg.mdnn, calibration, init_rng, box);
    }

    TrainConfig tc = cfg.train;
    tc.epochs = it == 0 ? cfg.first_iteration_epochs : cfg.epochs_per_iter;
    tc.seed = derive_seed(cfg.seed, 2000 + static_cast<std::uint64_t>(it));
    FitResult fit_result = fit(model, data, tc);

    const MixtureOfGaussians q = model.forward(real_input);
    result.raw_per_iteration.push_back(q);
    result.loss_curves.push_back(std::move(fit_result.epoch_loss));
    result.dataset_sizes.push_back(data.size());
    result.model = model;

    MixtureOfGaussians posterior;
    bool degenerate = false;
    try {
      if (cfg.proposal_model == ProposalModel::kLatest || it == 0) {
        posterior = prior_correct(q, proposal, desired, cfg.correction_mode);
      } else {
        const double n = static_cast<double>(data.size());
        const PdfFn dataset_pdf = [&](const Vec2& u) {
          double p = 0.0;
          for (const auto& [count, d] : sampled_from) p += count / n * d.pdf_normalized(u);
          return p;
        };
        posterior = prior_correct(
            q, dataset_pdf, [&](const Vec2& u) { return desired.pdf_normalized(u); },
            cfg.correction_mode);
      }
      degenerate = is_degenerate(posterior);
    } catch (const DomainError& e) {
      std::cerr << "lfi: correction failed at iteration " << it << ": " << e.what() << '\n';
      degenerate = true;
    }
    if (degenerate && !result.posterior_per_iteration.empty()) {
      std::cerr << "lfi: degenerate posterior at iteration " << it
                << "; keeping the previous posterior and stopping\n";
      result.halted = true;
      const MixtureOfGaussians prev = result.posterior_per_iteration.back();
      while (static_cast<int>(result.posterior_per_iteration.size()) < cfg.n_iterations) {
        result.posterior_per_iteration.push_back(prev);
      }
      if (on_iteration) on_iteration(it, result);
      break;
    }
    if (degenerate) throw TrainingError("run_inference: degenerate posterior at the first iteration");

    result.posterior_per_iteration.push_back(posterior);
    proposal = posterior;
    if (on_iteration) on_iteration(it, result);
  }
  return result;
}

}  // namespace dlo
