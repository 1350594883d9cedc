#pragma once

// Planar position-based chain model of a deformable linear object (DLO).
//
// Node 0 is kinematically attached to the gripper; nodes 1..n carry equal
// mass. Each substep integrates gravity, bending torques and linear damping
// with semi-implicit Euler, then projects distance constraints and table
// contact. Bending stiffness comes from Young's modulus through the beam
// second moment of a square cross-section.

#include <vector>

#include "dlo/common.hpp"

namespace dlo {

/// Physical parameters inferred by LFI: theta = (length, Young's modulus).
struct SystemParams {
  double length = 0.25;             // m
  double youngs_modulus = 2.55e4;   // Pa

  friend bool operator==(const SystemParams&, const SystemParams&) = default;
};

/// Axis-aligned support box for SystemParams.
struct ParamBox {
  SystemParams lo{0.195, 1e3};
  SystemParams hi{0.305, 5e4};

  void validate() const;
  bool contains(const SystemParams& p) const;
  SystemParams clamp(const SystemParams& p) const;
  SystemParams median() const;

  /// Maps the box onto [0,1]^2 as (length, E).
  Vec2 normalize(const SystemParams& p) const;
  SystemParams denormalize(const Vec2& u) const;
};

/// Throws DomainError unless both fields are finite and inside `box`.
void validate_params(const SystemParams& p, const ParamBox& box = {});

struct SimConfig {
  int n_segments = 10;
  double cross_section = 0.015;       // square side, m
  double dt = 1.0 / 240.0;            // s per substep
  int substeps_per_control = 15;
  double gravity = 9.81;
  double linear_damping = 0.5;        // 1/s
  double table_height = 0.0;
  double mass_density = 977.78;       // kg/m^3: 250 mm of 15x15 mm weighs 55 g
  double friction = 0.5;              // tangential velocity loss on contact
  int constraint_iterations = 20;

  void validate() const;
};

struct ChainState {
  std::vector<Vec2> node_pos;
  std::vector<Vec2> node_vel;
  Vec2 grip_pos = Vec2::Zero();

  int n_nodes() const { return static_cast<int>(node_pos.size()); }
  const Vec2& tip() const { return node_pos.back(); }
};

/// E * I / seg_len with I = w^4 / 12.
double bending_stiffness(double youngs_modulus, double cross_section, double seg_len);

ChainState init_chain(const SystemParams& params, const Vec2& grip, const SimConfig& cfg);

/// Advances one control step: `substeps_per_control` physics substeps while the
/// grip moves linearly from its current position to `grip_target`.
ChainState step_physics(const ChainState& state, const Vec2& grip_target,
                        const SystemParams& params, const SimConfig& cfg);

/// Joint angles relative to straight. Entry 0 is the bend at the gripper,
/// measured against the gripper's downward axis; entries 1..n-1 are interior joints.
std::vector<double> joint_angles(const ChainState& state);

/// Kinetic + gravitational + bending energy (J).
double mechanical_energy(const ChainState& state, const SystemParams& params,
                         const SimConfig& cfg);

/// Largest |segment length / rest length - 1|.
double max_segment_strain(const ChainState& state, const SystemParams& params,
                          const SimConfig& cfg);

double node_mass(const SystemParams& params, const SimConfig& cfg);

}  // namespace dlo
