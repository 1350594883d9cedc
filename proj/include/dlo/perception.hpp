#pragma once

// Synthetic keypoint perception: equal-arclength keypoints on the chain,
// an affine side-camera into normalized image coordinates, and the noise /
// permutation corruption typical of learned keypoint detectors.

#include <array>
#include <span>
#include <vector>

#include "dlo/chain_sim.hpp"
#include "dlo/common.hpp"

namespace dlo {

inline constexpr int kDloKeypoints = 4;
inline constexpr double kKeypointClamp = 1.5;

struct CameraModel {
  Vec2 window_min{-0.05, -0.30};
  Vec2 window_max{0.95, 0.70};
  Vec2 offset = Vec2::Zero();

  void validate() const;
  /// World (x, z) -> normalized (u, v); clamped to [-1.5, 1.5].
  Vec2 project(const Vec2& world) const;
  /// Inverse of the unclamped affine map.
  Vec2 unproject(const Vec2& uv) const;
};

struct KeypointFrame {
  std::array<Vec2, kDloKeypoints> dlo;
  Vec2 target = Vec2::Zero();
};

struct PerceptionConfig {
  CameraModel camera;
  double camera_offset_range = 0.025;  // uniform, per axis, per episode
  double noise_std = 0.005;
  bool permute = false;
};

/// Points at arclength fractions (2i+1)/(2n) along the chain, measured from the grip.
std::vector<Vec2> extract_keypoints(const ChainState& state, int n = kDloKeypoints);

std::vector<Vec2> project(std::span<const Vec2> world_points, const CameraModel& cam);

KeypointFrame make_frame(const ChainState& state, const Vec2& target_world,
                         const CameraModel& cam);

/// Gaussian noise on the DLO keypoints, optional uniform permutation of them
/// (never the target), then clamping.
KeypointFrame corrupt(const KeypointFrame& frame, double noise_std, bool permute, Rng& rng);

}  // namespace dlo
