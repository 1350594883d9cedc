#pragma once

// Random Fourier features for the RBF kernel and kernel mean embeddings of
// per-step keypoint sets.
//
// Cos-only: phi_m(x) = sqrt(2/M) cos(omega_m . x + b_m), omega ~ N(0, sigma^-2 I).
// Cos-sin:  M/2 frequency pairs, phi = sqrt(2/M) [cos(t_m), sin(t_m)] with
//           t_m = omega_m . x / sigma_m, omega ~ N(0, I) and trainable sigma_m.

#include <span>
#include <vector>

#include <Eigen/Core>

#include "dlo/common.hpp"
#include "dlo/task_env.hpp"

namespace dlo {

enum class RffVariant { kCosOnly, kCosSin };

struct RffParams {
  RffVariant variant = RffVariant::kCosOnly;
  Eigen::MatrixXd omega;  // frequencies x d
  Eigen::VectorXd b;      // phases (cos-only)
  Eigen::VectorXd sigma;  // per-frequency length scales (cos-sin); size 1 for cos-only
  double init_sigma = 1.0;

  int features() const;
  int frequencies() const { return static_cast<int>(omega.rows()); }
  int input_dim() const { return static_cast<int>(omega.cols()); }
  double scale() const;  // sqrt(2 / M)
  void validate() const;
};

RffParams make_rff(int features, double sigma, Rng& rng,
                   RffVariant variant = RffVariant::kCosOnly, int input_dim = 2);

Eigen::VectorXd feature_map(const Eigen::Ref<const Eigen::VectorXd>& x, const RffParams& rff);

/// Mean of feature_map over the points (rows of `points`), compensated summation.
Eigen::VectorXd mean_embed(const Eigen::Ref<const Eigen::MatrixXd>& points, const RffParams& rff);
Eigen::VectorXd mean_embed(std::span<const Vec2> points, const RffParams& rff);

/// Median pairwise distance over `points`; the RBF length-scale heuristic.
/// Larger inputs are thinned to `max_points` evenly strided points (0 = all).
double median_heuristic(std::span<const Vec2> points, std::size_t max_points = 2000);

// ---------------------------------------------------------------------------
// Trajectory embedding

inline constexpr int kPointsPerStep = kDloKeypoints + 1;

/// Keypoints and actions of one episode, padded to the horizon.
struct TrajectoryInput {
  Eigen::MatrixXd points;   // (horizon * 5) x 2; padded steps are zero
  Eigen::MatrixXd actions;  // horizon x 2, normalized by kMaxAction; padded steps are zero
  int length = 0;           // valid steps

  static TrajectoryInput from_record(const EpisodeRecord& rec, int horizon = kHorizon);
};

int embedding_dim(const RffParams& rff, bool include_actions, int horizon = kHorizon);

/// Per-step mean embedding of the 5 keypoints, each followed by that step's
/// action when `include_actions`; steps past the episode end are zero blocks.
Eigen::VectorXd embed_trajectory(const TrajectoryInput& traj, const RffParams& rff,
                                 bool include_actions = true);
Eigen::VectorXd embed_trajectory(const EpisodeRecord& rec, const RffParams& rff,
                                 bool include_actions = true);

// ---------------------------------------------------------------------------
// Gradients

struct RffGradients {
  Eigen::MatrixXd omega;
  Eigen::VectorXd b;
  Eigen::VectorXd sigma;

  static RffGradients zeros_like(const RffParams& rff);
  void set_zero();
  RffGradients& operator+=(const RffGradients& other);
};

/// Forward values kept for the backward pass of a batch of points.
struct RffCache {
  Eigen::MatrixXd points;  // N x d
  Eigen::MatrixXd phase;   // N x frequencies
};

/// Features of each row of `points` (N x M); fills `cache` when non-null.
Eigen::MatrixXd feature_map_batch(const Eigen::Ref<const Eigen::MatrixXd>& points,
                                  const RffParams& rff, RffCache* cache);

/// Accumulates dLoss/d(omega, b, sigma) into `grads` given dLoss/dfeatures
/// (N x M). Returns dLoss/dpoints (N x d).
Eigen::MatrixXd rff_gradients(const Eigen::Ref<const Eigen::MatrixXd>& grad_features,
                              const RffCache& cache, const RffParams& rff, RffGradients& grads);

/// Embedding forward with cache, and its backward: `grad_embedding` is
/// dLoss/d(embed_trajectory output).
struct TrajectoryEmbedding {
  Eigen::VectorXd value;
  RffCache cache;
};
TrajectoryEmbedding embed_trajectory_cached(const TrajectoryInput& traj, const RffParams& rff,
                                            bool include_actions);
void embed_trajectory_backward(const Eigen::Ref<const Eigen::VectorXd>& grad_embedding,
                               const TrajectoryEmbedding& fwd, const TrajectoryInput& traj,
                               const RffParams& rff, bool include_actions, RffGradients& grads);

}  // namespace dlo
