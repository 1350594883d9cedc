#pragma once

// Mixture density network q(theta | x): RFF kernel-mean-embedding front end,
// tanh MLP trunk, and a full-covariance MoG head trained by negative
// log-likelihood with Adam.

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "dlo/mog.hpp"
#include "dlo/nn.hpp"
#include "dlo/rkhs.hpp"

namespace dlo {

struct MdnnConfig {
  int rff_features = 128;
  RffVariant rff_variant = RffVariant::kCosOnly;
  double rff_sigma = 0.0;  // <= 0: median heuristic on a calibration batch
  bool train_rff = true;
  bool include_actions = true;
  int hidden = 256;
  int hidden_layers = 3;
  int components = 4;
  double init_stddev = 0.3;  // initial component std in normalized theta space
  double min_stddev = 1e-3;
  double head_init_scale = 0.1;
  int horizon = kHorizon;
};

struct TrainConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int batch_size = 32;
  int epochs = 100;
  std::uint64_t seed = 0;
  bool shuffle = true;
};

/// One training pair; theta in normalized coordinates.
struct MdnnSample {
  TrajectoryInput x;
  Vec2 theta = Vec2::Zero();
};

class MdnnModel {
 public:
  MdnnModel() = default;
  MdnnModel(const MdnnConfig& cfg, RffParams rff, Mlp net, ParamBox box);

  /// Fresh model; `calibration` keypoints feed the median heuristic when cfg.rff_sigma <= 0.
  static MdnnModel create(const MdnnConfig& cfg, std::span<const Vec2> calibration, Rng& rng,
                          const ParamBox& box = {});

  int input_dim() const { return net_.input_dim(); }
  int num_components() const { return cfg_.components; }
  const MdnnConfig& config() const { return cfg_; }
  const ParamBox& box() const { return box_; }

  RffParams& rff() { return rff_; }
  const RffParams& rff() const { return rff_; }
  Mlp& net() { return net_; }
  const Mlp& net() const { return net_; }

  Eigen::VectorXd embed(const TrajectoryInput& x) const;
  MixtureOfGaussians forward(const TrajectoryInput& x) const;
  /// Trunk + head on an already embedded trajectory.
  MixtureOfGaussians forward_embedded(const Eigen::Ref<const Eigen::VectorXd>& x) const;

  /// Decodes one head output column into a mixture.
  MixtureOfGaussians decode(const Eigen::Ref<const Eigen::VectorXd>& head) const;

 private:
  MdnnConfig cfg_;
  RffParams rff_;
  Mlp net_;
  ParamBox box_;
};

struct MdnnGradients {
  Eigen::VectorXd net;
  RffGradients rff;
};

/// Mean negative log-likelihood over the batch.
double nll_loss(const MdnnModel& model, std::span<const MdnnSample> batch);

/// Loss and its gradient wrt every parameter group. The RFF block stays zero
/// when the model's RFF layer is frozen.
double nll_loss_and_grad(const MdnnModel& model, std::span<const MdnnSample> batch,
                         MdnnGradients& grads);

struct FitResult {
  std::vector<double> epoch_loss;  // mean per-sample training loss of each epoch
};

/// Minibatch Adam on the NLL. Throws TrainingError on a non-finite loss.
FitResult fit(MdnnModel& model, std::span<const MdnnSample> data, const TrainConfig& cfg);

/// Max relative error between analytic and central-difference gradients of the
/// NLL of (x, theta) over every parameter (or `max_params` evenly spaced ones).
double grad_check(const MdnnModel& model, const TrajectoryInput& x, const Vec2& theta,
                  double h = 1e-5, int max_params = 0);

}  // namespace dlo
