#include "dlo/rkhs.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace dlo {
namespace {

// Mean of `count` rows starting at `first`, Kahan-compensated per column.
Eigen::VectorXd kahan_row_mean(const Eigen::MatrixXd& f, Eigen::Index first, Eigen::Index count) {
  const Eigen::Index cols = f.cols();
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(cols);
  Eigen::VectorXd comp = Eigen::VectorXd::Zero(cols);
  for (Eigen::Index r = first; r < first + count; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      const double y = f(r, c) - comp[c];
      const double t = sum[c] + y;
      comp[c] = (t - sum[c]) - y;
      sum[c] = t;
    }
  }
  return sum / static_cast<double>(count);
}

}  // namespace

int RffParams::features() const {
  return variant == RffVariant::kCosOnly ? frequencies() : 2 * frequencies();
}

double RffParams::scale() const { return std::sqrt(2.0 / features()); }

void RffParams::validate() const {
  if (omega.rows() < 1 || omega.cols() < 1) throw DomainError("RffParams: empty frequency matrix");
  if (variant == RffVariant::kCosOnly && b.size() != omega.rows()) {
    throw DomainError("RffParams: phase count must match frequency count");
  }
  if (variant == RffVariant::kCosSin && sigma.size() != omega.rows()) {
    throw DomainError("RffParams: cos-sin needs one length scale per frequency");
  }
  if (!omega.allFinite() || !b.allFinite() || !sigma.allFinite()) {
    throw DomainError("RffParams: non-finite entries");
  }
  if ((sigma.array() <= 0.0).any()) throw DomainError("RffParams: sigma must be > 0");
}

RffParams make_rff(int features, double sigma, Rng& rng, RffVariant variant, int input_dim) {
  if (features < 1 || input_dim < 1) throw DomainError("make_rff: sizes must be >= 1");
  if (!(sigma > 0.0)) throw DomainError("make_rff: sigma must be > 0");
  if (variant == RffVariant::kCosSin && features % 2 != 0) {
    throw DomainError("make_rff: cos-sin needs an even feature count");
  }
  RffParams p;
  p.variant = variant;
  p.init_sigma = sigma;
  const int freqs = variant == RffVariant::kCosOnly ? features : features / 2;
  p.omega.resize(freqs, input_dim);
  // cos-only folds 1/sigma into the frequencies; cos-sin keeps it as a parameter.
  const double freq_scale = variant == RffVariant::kCosOnly ? 1.0 / sigma : 1.0;
  for (int m = 0; m < freqs; ++m) {
    for (int j = 0; j < input_dim; ++j) p.omega(m, j) = freq_scale * standard_normal(rng);
  }
  if (variant == RffVariant::kCosOnly) {
    std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
    p.b.resize(freqs);
    for (int m = 0; m < freqs; ++m) p.b[m] = phase(rng);
    p.sigma = Eigen::VectorXd::Constant(1, sigma);
  } else {
    p.b = Eigen::VectorXd::Zero(freqs);
    p.sigma = Eigen::VectorXd::Constant(freqs, sigma);
  }
  return p;
}

Eigen::MatrixXd feature_map_batch(const Eigen::Ref<const Eigen::MatrixXd>& points,
                                  const RffParams& rff, RffCache* cache) {
  if (points.cols() != rff.input_dim()) throw UsageError("feature_map: input dimension mismatch");
  const double s = rff.scale();
  Eigen::MatrixXd phase = points * rff.omega.transpose();
  Eigen::MatrixXd out(points.rows(), rff.features());
  if (rff.variant == RffVariant::kCosOnly) {
    phase.rowwise() += rff.b.transpose();
    out = s * phase.array().cos();
  } else {
    phase.array().rowwise() /= rff.sigma.transpose().array();
    const Eigen::Index f = rff.frequencies();
    out.leftCols(f) = s * phase.array().cos();
    out.rightCols(f) = s * phase.array().sin();
  }
  if (cache != nullptr) {
    cache->points = points;
    cache->phase = std::move(phase);
  }
  return out;
}

Eigen::VectorXd feature_map(const Eigen::Ref<const Eigen::VectorXd>& x, const RffParams& rff) {
  return feature_map_batch(x.transpose(), rff, nullptr).row(0).transpose();
}

Eigen::VectorXd mean_embed(const Eigen::Ref<const Eigen::MatrixXd>& points, const RffParams& rff) {
  if (points.rows() == 0) throw DomainError("mean_embed: empty point set");
  const Eigen::MatrixXd f = feature_map_batch(points, rff, nullptr);
  return kahan_row_mean(f, 0, f.rows());
}

Eigen::VectorXd mean_embed(std::span<const Vec2> points, const RffParams& rff) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(points.size()), 2);
  for (std::size_t i = 0; i < points.size(); ++i) m.row(i) = points[i].transpose();
  return mean_embed(m, rff);
}

double median_heuristic(std::span<const Vec2> points, std::size_t max_points) {
  if (points.size() < 2) throw DomainError("median_heuristic: need at least two points");
  std::vector<Vec2> subset;
  if (max_points >= 2 && points.size() > max_points) {
    // Evenly strided subset keeps the cost quadratic in max_points only.
    const double stride = static_cast<double>(points.size()) / static_cast<double>(max_points);
    for (std::size_t k = 0; k < max_points; ++k) {
      subset.push_back(points[static_cast<std::size_t>(k * stride)]);
    }
    points = subset;
  }
  std::vector<double> d;
  d.reserve(points.size() * (points.size() - 1) / 2);
  for (std::size_t i = 0; i < points.size(); ++i) {
    for (std::size_t j = i + 1; j < points.size(); ++j) d.push_back((points[i] - points[j]).norm());
  }
  auto mid = d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2);
  std::nth_element(d.begin(), mid, d.end());
  return *mid;
}

Eigen::MatrixXd rff_gradients(const Eigen::Ref<const Eigen::MatrixXd>& grad_features,
                              const RffCache& cache, const RffParams& rff, RffGradients& grads) {
  const double s = rff.scale();
  if (rff.variant == RffVariant::kCosOnly) {
    const Eigen::MatrixXd d = (-s * cache.phase.array().sin() * grad_features.array()).matrix();
    grads.b += d.colwise().sum().transpose();
    grads.omega += d.transpose() * cache.points;
    return d * rff.omega;
  }
  const Eigen::Index f = rff.frequencies();
  const Eigen::MatrixXd d =
      (-s * cache.phase.array().sin() * grad_features.leftCols(f).array() +
       s * cache.phase.array().cos() * grad_features.rightCols(f).array())
          .matrix();
  const Eigen::ArrayXd inv_sigma = rff.sigma.array().inverse();
  grads.omega += (inv_sigma.matrix().asDiagonal() * (d.transpose() * cache.points));
  grads.sigma -= ((d.array() * cache.phase.array()).colwise().sum().transpose().array() *
                  inv_sigma)
                     .matrix();
  return d * inv_sigma.matrix().asDiagonal() * rff.omega;
}

RffGradients RffGradients::zeros_like(const RffParams& rff) {
  return {Eigen::MatrixXd::Zero(rff.omega.rows(), rff.omega.cols()),
          Eigen::VectorXd::Zero(rff.b.size()), Eigen::VectorXd::Zero(rff.sigma.size())};
}

void RffGradients::set_zero() {
  omega.setZero();
  b.setZero();
  sigma.setZero();
}

RffGradients& RffGradients::operator+=(const RffGradients& other) {
  omega += other.omega;
  b += other.b;
  sigma += other.sigma;
  return *this;
}

TrajectoryInput TrajectoryInput::from_record(const EpisodeRecord& rec, int horizon) {
  if (static_cast<int>(rec.steps.size()) > horizon) {
    throw UsageError("TrajectoryInput: episode longer than the horizon");
  }
  TrajectoryInput t;
  t.length = static_cast<int>(rec.steps.size());
  t.points = Eigen::MatrixXd::Zero(horizon * kPointsPerStep, 2);
  t.actions = Eigen::MatrixXd::Zero(horizon, 2);
  for (int s = 0; s < t.length; ++s) {
    const auto& step = rec.steps[s];
    for (int k = 0; k < kPointsPerStep; ++k) {
      t.points(s * kPointsPerStep + k, 0) = step.obs[2 + 2 * k];
      t.points(s * kPointsPerStep + k, 1) = step.obs[3 + 2 * k];
    }
    t.actions(s, 0) = step.action.x() / kMaxAction;
    t.actions(s, 1) = step.action.y() / kMaxAction;
  }
  return t;
}

int embedding_dim(const RffParams& rff, bool include_actions, int horizon) {
  return horizon * (rff.features() + (include_actions ? kActionDim : 0));
}

TrajectoryEmbedding embed_trajectory_cached(const TrajectoryInput& traj, const RffParams& rff,
                                            bool include_actions) {
  const int horizon = static_cast<int>(traj.actions.rows());
  const int m = rff.features();
  const int block = m + (include_actions ? kActionDim : 0);
  TrajectoryEmbedding out;
  out.value = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(horizon) * block);
  if (traj.length == 0) return out;

  const Eigen::Index rows = static_cast<Eigen::Index>(traj.length) * kPointsPerStep;
  const Eigen::MatrixXd f = feature_map_batch(traj.points.topRows(rows), rff, &out.cache);
  for (int s = 0; s < traj.length; ++s) {
    out.value.segment(static_cast<Eigen::Index>(s) * block, m) =
        kahan_row_mean(f, static_cast<Eigen::Index>(s) * kPointsPerStep, kPointsPerStep);
    if (include_actions) {
      out.value.segment(static_cast<Eigen::Index>(s) * block + m, kActionDim) =
          traj.actions.row(s).transpose();
    }
  }
  return out;
}

Eigen::VectorXd embed_trajectory(const TrajectoryInput& traj, const RffParams& rff,
                                 bool include_actions) {
  return embed_trajectory_cached(traj, rff, include_actions).value;
}

Eigen::VectorXd embed_trajectory(const EpisodeRecord& rec, const RffParams& rff,
                                 bool include_actions) {
  return embed_trajectory(TrajectoryInput::from_record(rec), rff, include_actions);
}

void embed_trajectory_backward(const Eigen::Ref<const Eigen::VectorXd>& grad_embedding,
                               const TrajectoryEmbedding& fwd, const TrajectoryInput& traj,
                               const RffParams& rff, bool include_actions, RffGradients& grads) {
  if (traj.length == 0) return;
  const int m = rff.features();
  const int block = m + (include_actions ? kActionDim : 0);
  Eigen::MatrixXd grad_f(static_cast<Eigen::Index>(traj.length) * kPointsPerStep, m);
  for (int s = 0; s < traj.length; ++s) {
    const Eigen::RowVectorXd g =
        grad_embedding.segment(static_cast<Eigen::Index>(s) * block, m).transpose() /
        static_cast<double>(kPointsPerStep);
    for (int k = 0; k < kPointsPerStep; ++k) grad_f.row(s * kPointsPerStep + k) = g;
  }
  rff_gradients(grad_f, fwd.cache, rff, grads);
}

}  // namespace dlo
