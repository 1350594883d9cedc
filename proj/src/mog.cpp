#include "dlo/mog.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <numbers>
#include <numeric>

namespace dlo {
namespace {

constexpr int kBoxRetries = 100;
const double kLog2Pi = std::log(2.0 * std::numbers::pi);

bool in_unit_box(const Vec2& u) {
  return u.x() >= 0.0 && u.x() <= 1.0 && u.y() >= 0.0 && u.y() <= 1.0;
}

Vec2 draw_component(const MixtureOfGaussians& mog, int k, Rng& rng) {
  for (int attempt = 0; attempt < kBoxRetries; ++attempt) {
    const Vec2 z(standard_normal(rng), standard_normal(rng));
    const Vec2 u = mog.means()[k] + mog.chol()[k] * z;
    if (in_unit_box(u)) return u;
  }
  const Vec2 z(standard_normal(rng), standard_normal(rng));
  const Vec2 u = mog.means()[k] + mog.chol()[k] * z;
  return u.cwiseMax(0.0).cwiseMin(1.0);
}

}  // namespace

MixtureOfGaussians::MixtureOfGaussians(std::vector<double> weights, std::vector<Vec2> means,
                                       std::vector<Chol2> chol, ParamBox box)
    : weights_(std::move(weights)), means_(std::move(means)), chol_(std::move(chol)), box_(box) {
  validate();
}

MixtureOfGaussians MixtureOfGaussians::single(const Vec2& mean, double stddev, ParamBox box) {
  return MixtureOfGaussians({1.0}, {mean}, {stddev * Chol2::Identity()}, box);
}

void MixtureOfGaussians::validate() const {
  const std::size_t k = weights_.size();
  if (k == 0 || means_.size() != k || chol_.size() != k) {
    throw DomainError("MixtureOfGaussians: inconsistent component counts");
  }
  double sum = 0.0;
  for (double w : weights_) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw DomainError("MixtureOfGaussians: negative weight");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw DomainError("MixtureOfGaussians: weights must sum to 1");
  for (std::size_t i = 0; i < k; ++i) {
    const auto& l = chol_[i];
    if (!means_[i].allFinite() || !l.allFinite() || l(0, 1) != 0.0 || !(l(0, 0) > 0.0) ||
        !(l(1, 1) > 0.0)) {
      throw DomainError("MixtureOfGaussians: component " + std::to_string(i) +
                        " is not a valid Cholesky-parameterised Gaussian");
    }
  }
  box_.validate();
}

double gaussian_log_pdf(const Vec2& u, const Vec2& mean, const Chol2& chol) {
  const double a = chol(0, 0), c = chol(1, 0), d = chol(1, 1);
  const Vec2 r = u - mean;
  const double z1 = r.x() / a;
  const double z2 = (r.y() - c * z1) / d;
  return -kLog2Pi - std::log(a) - std::log(d) - 0.5 * (z1 * z1 + z2 * z2);
}

double MixtureOfGaussians::log_pdf_normalized(const Vec2& u) const {
  double best = -std::numeric_limits<double>::infinity();
  std::vector<double> terms(weights_.size());
  for (std::size_t k = 0; k < weights_.size(); ++k) {
    terms[k] = weights_[k] > 0.0 ? std::log(weights_[k]) + gaussian_log_pdf(u, means_[k], chol_[k])
                                 : -std::numeric_limits<double>::infinity();
    best = std::max(best, terms[k]);
  }
  double acc = 0.0;
  for (double t : terms) acc += std::exp(t - best);
  return best + std::log(acc);
}

double MixtureOfGaussians::pdf_normalized(const Vec2& u) const {
  return std::exp(log_pdf_normalized(u));
}

double MixtureOfGaussians::log_pdf(const SystemParams& theta) const {
  return log_pdf_normalized(box_.normalize(theta));
}

Vec2 MixtureOfGaussians::mean() const {
  Vec2 m = Vec2::Zero();
  for (std::size_t k = 0; k < weights_.size(); ++k) m += weights_[k] * means_[k];
  return m;
}

Eigen::Matrix2d MixtureOfGaussians::weighted_component_covariance() const {
  Eigen::Matrix2d c = Eigen::Matrix2d::Zero();
  for (int k = 0; k < size(); ++k) c += weights_[k] * covariance(k);
  return c;
}

Eigen::Matrix2d MixtureOfGaussians::mixture_covariance() const {
  const Vec2 mu = mean();
  Eigen::Matrix2d c = weighted_component_covariance();
  for (int k = 0; k < size(); ++k) {
    const Vec2 d = means_[k] - mu;
    c += weights_[k] * d * d.transpose();
  }
  return c;
}

MixtureOfGaussians MixtureOfGaussians::with_weights(std::vector<double> weights) const {
  return MixtureOfGaussians(std::move(weights), means_, chol_, box_);
}

SystemParams sample(const MixtureOfGaussians& mog, Rng& rng) {
  const auto& w = mog.weights();
  std::discrete_distribution<int> pick(w.begin(), w.end());
  return mog.box().denormalize(draw_component(mog, pick(rng), rng));
}

std::vector<int> systematic_select(std::span<const double> weights, int n, double u) {
  if (n < 1) throw DomainError("systematic_select: n must be >= 1");
  std::vector<int> out;
  out.reserve(n);
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  std::size_t k = 0;
  double cdf = weights.empty() ? 0.0 : weights[0] / total;
  for (int i = 0; i < n; ++i) {
    const double pos = u + static_cast<double>(i) / n;
    while (pos >= cdf && k + 1 < weights.size()) {
      ++k;
      cdf += weights[k] / total;
    }
    out.push_back(static_cast<int>(k));
  }
  return out;
}

std::vector<SystemParams> low_variance_sample(const MixtureOfGaussians& mog, int n, Rng& rng) {
  std::uniform_real_distribution<double> offset(0.0, 1.0 / n);
  const auto picks = systematic_select(mog.weights(), n, offset(rng));
  std::vector<SystemParams> out;
  out.reserve(n);
  for (int k : picks) out.push_back(mog.box().denormalize(draw_component(mog, k, rng)));
  return out;
}

const ParamBox& Density::box() const {
  if (const auto* m = mixture()) return m->box();
  return std::get<UniformBox>(impl_).box;
}

double Density::pdf_normalized(const Vec2& u) const {
  if (const auto* m = mixture()) return m->pdf_normalized(u);
  return in_unit_box(u) ? 1.0 : 0.0;
}

SystemParams Density::sample(Rng& rng) const {
  if (const auto* m = mixture()) return dlo::sample(*m, rng);
  return box().denormalize(Vec2(uniform01(rng), uniform01(rng)));
}

std::vector<SystemParams> Density::sample_batch(int n, Rng& rng) const {
  if (const auto* m = mixture()) return low_variance_sample(*m, n, rng);
  std::vector<SystemParams> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) out.push_back(sample(rng));
  return out;
}

CorrectionMode parse_correction_mode(const std::string& s) {
  if (s == "eq1") return CorrectionMode::kEq1;
  if (s == "alg1") return CorrectionMode::kAlg1;
  throw UsageError("unknown correction mode '" + s + "' (expected eq1 or alg1)");
}

std::string to_string(CorrectionMode mode) {
  return mode == CorrectionMode::kEq1 ? "eq1" : "alg1";
}

MixtureOfGaussians prior_correct(const MixtureOfGaussians& q, const Density& proposal,
                                 const Density& desired, CorrectionMode mode) {
  if (proposal.is_uniform() && desired.is_uniform()) {
    q.validate();
    return q;
  }
  return prior_correct(
      q, [&](const Vec2& u) { return proposal.pdf_normalized(u); },
      [&](const Vec2& u) { return desired.pdf_normalized(u); }, mode);
}

MixtureOfGaussians prior_correct(const MixtureOfGaussians& q, const PdfFn& proposal,
                                 const PdfFn& desired, CorrectionMode mode) {
  q.validate();
  std::vector<double> w(q.size());
  double total = 0.0;
  for (int k = 0; k < q.size(); ++k) {
    // Densities are only defined on the box; out-of-box means are evaluated at
    // their projection so they are not dropped by the box indicator.
    const Vec2 mu = q.means()[k].cwiseMax(0.0).cwiseMin(1.0);
    const double p = proposal(mu);
    const double d = desired(mu);
    double ratio = mode == CorrectionMode::kEq1 ? d / p : p / d;
    if (!std::isfinite(ratio)) {
      std::cerr << "warning: prior_correct: non-finite density ratio at component " << k
                << " (proposal=" << p << ", desired=" << d << "); dropping it\n";
      ratio = 0.0;
    }
    w[k] = q.weights()[k] * ratio;
    total += w[k];
  }
  if (!(total > 0.0) || !std::isfinite(total)) {
    throw DomainError("prior_correct: every component received zero weight");
  }
  for (double& x : w) x /= total;
  return q.with_weights(std::move(w));
}

Heatmap grid_density(const MixtureOfGaussians& mog, int length_cells, int modulus_cells) {
  if (length_cells < 2 || modulus_cells < 2) throw DomainError("grid_density: resolution must be >= 2");
  Heatmap h;
  h.density.resize(modulus_cells, length_cells);
  const ParamBox& box = mog.box();
  for (int i = 0; i < length_cells; ++i) {
    h.length_axis.push_back(box.denormalize(Vec2((i + 0.5) / length_cells, 0.0)).length);
  }
  for (int j = 0; j < modulus_cells; ++j) {
    h.modulus_axis.push_back(box.denormalize(Vec2(0.0, (j + 0.5) / modulus_cells)).youngs_modulus);
  }
  double sum = 0.0;
  for (int j = 0; j < modulus_cells; ++j) {
    for (int i = 0; i < length_cells; ++i) {
      const Vec2 u((i + 0.5) / length_cells, (j + 0.5) / modulus_cells);
      h.density(j, i) = mog.pdf_normalized(u);
      sum += h.density(j, i);
    }
  }
  h.integral = sum / (static_cast<double>(length_cells) * modulus_cells);
  return h;
}

}  // namespace dlo
