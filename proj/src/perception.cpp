#include "dlo/perception.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace dlo {
namespace {

Vec2 clamp_uv(const Vec2& uv) {
  return {std::clamp(uv.x(), -kKeypointClamp, kKeypointClamp),
          std::clamp(uv.y(), -kKeypointClamp, kKeypointClamp)};
}

}  // namespace

void CameraModel::validate() const {
  if (!(window_max.x() > window_min.x()) || !(window_max.y() > window_min.y())) {
    throw DomainError("CameraModel: degenerate window");
  }
}

Vec2 CameraModel::project(const Vec2& world) const {
  const Vec2 span = window_max - window_min;
  const Vec2 p = world + offset - window_min;
  return clamp_uv(Vec2(2.0 * p.x() / span.x() - 1.0, 2.0 * p.y() / span.y() - 1.0));
}

Vec2 CameraModel::unproject(const Vec2& uv) const {
  const Vec2 span = window_max - window_min;
  return Vec2((uv.x() + 1.0) * 0.5 * span.x(), (uv.y() + 1.0) * 0.5 * span.y()) + window_min -
         offset;
}

std::vector<Vec2> extract_keypoints(const ChainState& state, int n) {
  if (n < 1) throw DomainError("extract_keypoints: n must be >= 1");
  const auto& pos = state.node_pos;
  std::vector<double> cumulative(pos.size(), 0.0);
  for (std::size_t i = 1; i < pos.size(); ++i) {
    cumulative[i] = cumulative[i - 1] + (pos[i] - pos[i - 1]).norm();
  }
  const double total = cumulative.back();

  std::vector<Vec2> out;
  out.reserve(n);
  std::size_t seg = 1;
  for (int i = 0; i < n; ++i) {
    const double s = total * (2.0 * i + 1.0) / (2.0 * n);
    while (seg + 1 < pos.size() && cumulative[seg] < s) ++seg;
    const double len = cumulative[seg] - cumulative[seg - 1];
    const double t = len > 0.0 ? std::clamp((s - cumulative[seg - 1]) / len, 0.0, 1.0) : 0.0;
    out.push_back(pos[seg - 1] + t * (pos[seg] - pos[seg - 1]));
  }
  return out;
}

std::vector<Vec2> project(std::span<const Vec2> world_points, const CameraModel& cam) {
  cam.validate();
  std::vector<Vec2> out;
  out.reserve(world_points.size());
  for (const auto& p : world_points) out.push_back(cam.project(p));
  return out;
}

KeypointFrame make_frame(const ChainState& state, const Vec2& target_world,
                         const CameraModel& cam) {
  const auto world = extract_keypoints(state, kDloKeypoints);
  const auto uv = project(world, cam);
  KeypointFrame f;
  std::copy(uv.begin(), uv.end(), f.dlo.begin());
  f.target = cam.project(target_world);
  return f;
}

KeypointFrame corrupt(const KeypointFrame& frame, double noise_std, bool permute, Rng& rng) {
  if (noise_std < 0.0) throw DomainError("corrupt: noise_std must be >= 0");
  KeypointFrame out = frame;
  if (noise_std > 0.0) {
    std::normal_distribution<double> noise(0.0, noise_std);
    for (auto& k : out.dlo) {
      k.x() += noise(rng);
      k.y() += noise(rng);
    }
  }
  if (permute) std::shuffle(out.dlo.begin(), out.dlo.end(), rng);
  for (auto& k : out.dlo) k = clamp_uv(k);
  out.target = clamp_uv(out.target);
  return out;
}

}  // namespace dlo
