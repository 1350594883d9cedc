#include "dlo/chain_sim.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace dlo {
namespace {

// d angle(e) / d e for angle(e) = atan2(e.z, e.x).
Vec2 angle_gradient(const Vec2& e) {
  return Vec2(-e.y(), e.x()) / e.squaredNorm();
}

double signed_angle(const Vec2& from, const Vec2& to) {
  const double cross = from.x() * to.y() - from.y() * to.x();
  return std::atan2(cross, from.dot(to));
}

const Vec2 kGripAxis(0.0, -1.0);

// Velocity correction of dynamic follow-the-leader; cancels the momentum the
// length pass would otherwise inject.
constexpr double kFtlVelocityCorrection = 0.9;

bool finite(const Vec2& v) { return std::isfinite(v.x()) && std::isfinite(v.y()); }

}  // namespace

void ParamBox::validate() const {
  if (!(lo.length < hi.length) || !(lo.youngs_modulus < hi.youngs_modulus)) {
    throw DomainError("ParamBox: lo must be strictly below hi componentwise");
  }
}

bool ParamBox::contains(const SystemParams& p) const {
  return p.length >= lo.length && p.length <= hi.length &&
         p.youngs_modulus >= lo.youngs_modulus && p.youngs_modulus <= hi.youngs_modulus;
}

SystemParams ParamBox::clamp(const SystemParams& p) const {
  return {std::clamp(p.length, lo.length, hi.length),
          std::clamp(p.youngs_modulus, lo.youngs_modulus, hi.youngs_modulus)};
}

SystemParams ParamBox::median() const {
  return {0.5 * (lo.length + hi.length), 0.5 * (lo.youngs_modulus + hi.youngs_modulus)};
}

Vec2 ParamBox::normalize(const SystemParams& p) const {
  return {(p.length - lo.length) / (hi.length - lo.length),
          (p.youngs_modulus - lo.youngs_modulus) / (hi.youngs_modulus - lo.youngs_modulus)};
}

SystemParams ParamBox::denormalize(const Vec2& u) const {
  return {lo.length + u.x() * (hi.length - lo.length),
          lo.youngs_modulus + u.y() * (hi.youngs_modulus - lo.youngs_modulus)};
}

void validate_params(const SystemParams& p, const ParamBox& box) {
  if (!std::isfinite(p.length) || !std::isfinite(p.youngs_modulus) || !box.contains(p)) {
    std::ostringstream msg;
    msg << "SystemParams (length=" << p.length << ", E=" << p.youngs_modulus
        << ") outside [" << box.lo.length << ", " << box.hi.length << "] x ["
        << box.lo.youngs_modulus << ", " << box.hi.youngs_modulus << "]";
    throw DomainError(msg.str());
  }
}

void SimConfig::validate() const {
  if (n_segments < 2) throw DomainError("SimConfig: n_segments must be >= 2");
  if (!(dt > 0.0)) throw DomainError("SimConfig: dt must be > 0");
  if (substeps_per_control < 1) throw DomainError("SimConfig: substeps_per_control must be >= 1");
  if (!(cross_section > 0.0) || !(mass_density > 0.0)) {
    throw DomainError("SimConfig: cross_section and mass_density must be > 0");
  }
  if (constraint_iterations < 1) throw DomainError("SimConfig: constraint_iterations must be >= 1");
  if (linear_damping < 0.0 || friction < 0.0 || friction > 1.0) {
    throw DomainError("SimConfig: damping must be >= 0 and friction in [0, 1]");
  }
}

double bending_stiffness(double youngs_modulus, double cross_section, double seg_len) {
  if (!(youngs_modulus > 0.0) || !(cross_section > 0.0) || !(seg_len > 0.0)) {
    throw DomainError("bending_stiffness: inputs must be > 0");
  }
  const double w2 = cross_section * cross_section;
  const double second_moment = w2 * w2 / 12.0;
  return youngs_modulus * second_moment / seg_len;
}

double node_mass(const SystemParams& params, const SimConfig& cfg) {
  const double total = cfg.mass_density * cfg.cross_section * cfg.cross_section * params.length;
  return total / cfg.n_segments;
}

ChainState init_chain(const SystemParams& params, const Vec2& grip, const SimConfig& cfg) {
  cfg.validate();
  const double seg = params.length / cfg.n_segments;
  ChainState s;
  s.grip_pos = grip;
  s.node_pos.resize(cfg.n_segments + 1);
  s.node_vel.assign(cfg.n_segments + 1, Vec2::Zero());
  s.node_pos[0] = grip;
  for (int i = 1; i <= cfg.n_segments; ++i) {
    Vec2 p(grip.x(), grip.y() - i * seg);
    p.y() = std::max(p.y(), cfg.table_height);
    s.node_pos[i] = p;
  }
  return s;
}

std::vector<double> joint_angles(const ChainState& state) {
  const int n = state.n_nodes() - 1;
  std::vector<double> out(n);
  Vec2 prev_dir = kGripAxis;
  for (int i = 0; i < n; ++i) {
    const Vec2 e = state.node_pos[i + 1] - state.node_pos[i];
    out[i] = signed_angle(prev_dir, e);
    prev_dir = e;
  }
  return out;
}

double mechanical_energy(const ChainState& state, const SystemParams& params,
                         const SimConfig& cfg) {
  const double m = node_mass(params, cfg);
  const double k = bending_stiffness(params.youngs_modulus, cfg.cross_section,
                                     params.length / cfg.n_segments);
  double energy = 0.0;
  for (int i = 1; i < state.n_nodes(); ++i) {
    energy += 0.5 * m * state.node_vel[i].squaredNorm();
    energy += m * cfg.gravity * state.node_pos[i].y();
  }
  for (double a : joint_angles(state)) energy += 0.5 * k * a * a;
  return energy;
}

double max_segment_strain(const ChainState& state, const SystemParams& params,
                          const SimConfig& cfg) {
  const double rest = params.length / cfg.n_segments;
  double worst = 0.0;
  for (int i = 0; i + 1 < state.n_nodes(); ++i) {
    const double len = (state.node_pos[i + 1] - state.node_pos[i]).norm();
    worst = std::max(worst, std::abs(len / rest - 1.0));
  }
  return worst;
}

ChainState step_physics(const ChainState& state, const Vec2& grip_target,
                        const SystemParams& params, const SimConfig& cfg) {
  const int n = state.n_nodes() - 1;
  if (n != cfg.n_segments) throw UsageError("step_physics: state/config segment count mismatch");

  const double rest = params.length / n;
  const double m = node_mass(params, cfg);
  const double k = bending_stiffness(params.youngs_modulus, cfg.cross_section, rest);
  const double dt = cfg.dt;
  const double damping = std::max(0.0, 1.0 - cfg.linear_damping * dt);
  const Vec2 gravity(0.0, -cfg.gravity);
  const Vec2 grip_start = state.grip_pos;

  ChainState s = state;
  std::vector<Vec2> force(n + 1);
  std::vector<Vec2> prev(n + 1);
  std::vector<Vec2> ftl_shift(n + 1);

  for (int sub = 1; sub <= cfg.substeps_per_control; ++sub) {
    const double frac = static_cast<double>(sub) / cfg.substeps_per_control;
    const Vec2 grip = sub == cfg.substeps_per_control
                          ? grip_target
                          : Vec2(grip_start + frac * (grip_target - grip_start));

    std::fill(force.begin(), force.end(), Vec2::Zero());
    // Gripper joint: spring towards the gripper's downward axis, acts on node 1 only.
    {
      const Vec2 e = s.node_pos[1] - s.node_pos[0];
      const double theta = signed_angle(kGripAxis, e);
      force[1] -= k * theta * angle_gradient(e);
    }
    for (int i = 1; i < n; ++i) {
      const Vec2 e1 = s.node_pos[i] - s.node_pos[i - 1];
      const Vec2 e2 = s.node_pos[i + 1] - s.node_pos[i];
      const double theta = signed_angle(e1, e2);
      const Vec2 g1 = angle_gradient(e1);
      const Vec2 g2 = angle_gradient(e2);
      force[i + 1] -= k * theta * g2;
      force[i - 1] -= k * theta * g1;
      force[i] += k * theta * (g1 + g2);
    }

    prev = s.node_pos;
    for (int i = 1; i <= n; ++i) {
      Vec2& v = s.node_vel[i];
      v += dt * (gravity + force[i] / m);
      v *= damping;
      s.node_pos[i] += dt * v;
    }
    s.node_pos[0] = grip;
    s.grip_pos = grip;

    for (int it = 0; it < cfg.constraint_iterations; ++it) {
      for (int j = 0; j < n; ++j) {
        const Vec2 d = s.node_pos[j + 1] - s.node_pos[j];
        const double len = d.norm();
        if (len < 1e-12) continue;
        const Vec2 corr = (len - rest) / len * d;
        if (j == 0) {
          s.node_pos[1] -= corr;
        } else {
          s.node_pos[j] += 0.5 * corr;
          s.node_pos[j + 1] -= 0.5 * corr;
        }
      }
      for (int i = 1; i <= n; ++i) {
        if (s.node_pos[i].y() < cfg.table_height) s.node_pos[i].y() = cfg.table_height;
      }
    }

    // Follow-the-leader pass: restores exact segment lengths, sliding any node
    // that would end below the table along the table plane.
    std::fill(ftl_shift.begin(), ftl_shift.end(), Vec2::Zero());
    for (int j = 0; j < n; ++j) {
      const Vec2& a = s.node_pos[j];
      Vec2& b = s.node_pos[j + 1];
      const Vec2 before = b;
      const Vec2 d = b - a;
      const double len = d.norm();
      b = len > 1e-12 ? Vec2(a + rest / len * d) : Vec2(a.x(), a.y() - rest);
      if (b.y() < cfg.table_height) {
        const double drop = a.y() - cfg.table_height;
        const double reach = std::sqrt(std::max(0.0, rest * rest - drop * drop));
        b = Vec2(a.x() + (d.x() < 0.0 ? -reach : reach), cfg.table_height);
      }
      ftl_shift[j + 1] = b - before;
    }

    for (int i = 1; i <= n; ++i) {
      Vec2& v = s.node_vel[i];
      v = (s.node_pos[i] - prev[i]) / dt;
      if (i < n) v -= kFtlVelocityCorrection * ftl_shift[i + 1] / dt;
      if (s.node_pos[i].y() <= cfg.table_height + 1e-9) {
        v.y() = std::max(v.y(), 0.0);
        v.x() *= 1.0 - cfg.friction;
      }
      if (!finite(s.node_pos[i]) || !finite(v)) {
        std::ostringstream msg;
        msg << "step_physics: non-finite state at substep " << sub << ", node " << i
            << " (length=" << params.length << ", E=" << params.youngs_modulus
            << ", k=" << k << ", grip=(" << grip.x() << ", " << grip.y() << "))";
        throw IntegrationError(msg.str());
      }
    }
    s.node_vel[0] = (grip - prev[0]) / dt;
  }
  return s;
}

}  // namespace dlo
