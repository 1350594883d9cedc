#pragma once

// Full-covariance 2D mixture of Gaussians over theta = (length, E).
//
// All density math happens in normalized coordinates, where the ParamBox
// maps onto [0,1]^2 (x = length, y = Young's modulus). Physical units appear
// only at the sampling boundary.

#include <functional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "dlo/chain_sim.hpp"
#include "dlo/common.hpp"

namespace dlo {

/// Lower-triangular 2x2 Cholesky factor [[a, 0], [c, d]] with a, d > 0.
using Chol2 = Eigen::Matrix2d;

class MixtureOfGaussians {
 public:
  MixtureOfGaussians() = default;
  MixtureOfGaussians(std::vector<double> weights, std::vector<Vec2> means,
                     std::vector<Chol2> chol, ParamBox box = {});

  /// Single isotropic component in normalized space.
  static MixtureOfGaussians single(const Vec2& mean, double stddev, ParamBox box = {});

  /// Throws DomainError if the weights are not a simplex or a factor is not
  /// lower triangular with a positive diagonal.
  void validate() const;

  int size() const { return static_cast<int>(weights_.size()); }
  const std::vector<double>& weights() const { return weights_; }
  const std::vector<Vec2>& means() const { return means_; }
  const std::vector<Chol2>& chol() const { return chol_; }
  const ParamBox& box() const { return box_; }
  Eigen::Matrix2d covariance(int k) const { return chol_[k] * chol_[k].transpose(); }

  double log_pdf_normalized(const Vec2& u) const;
  double pdf_normalized(const Vec2& u) const;
  double log_pdf(const SystemParams& theta) const;

  /// Weight-averaged mean (normalized).
  Vec2 mean() const;
  /// Mixture covariance (normalized): within- plus between-component spread.
  Eigen::Matrix2d mixture_covariance() const;
  /// Weight-averaged component covariance (normalized).
  Eigen::Matrix2d weighted_component_covariance() const;

  MixtureOfGaussians with_weights(std::vector<double> weights) const;

 private:
  std::vector<double> weights_;
  std::vector<Vec2> means_;
  std::vector<Chol2> chol_;
  ParamBox box_;
};

/// Log density of N(u; mean, L L^T) in 2D.
double gaussian_log_pdf(const Vec2& u, const Vec2& mean, const Chol2& chol);

/// Ancestral sample, rejected against the box (100 retries) then clamped.
SystemParams sample(const MixtureOfGaussians& mog, Rng& rng);

/// Component indices chosen by systematic resampling with offset `u` in [0, 1/n).
std::vector<int> systematic_select(std::span<const double> weights, int n, double u);

/// Systematic (low-variance) component selection followed by one Gaussian
/// draw per sample; box handling as in sample().
std::vector<SystemParams> low_variance_sample(const MixtureOfGaussians& mog, int n, Rng& rng);

/// Uniform density over the box: 1 in normalized coordinates.
struct UniformBox {
  ParamBox box;
};

/// A density over theta usable as a prior or proposal.
class Density {
 public:
  Density(UniformBox u) : impl_(std::move(u)) {}  // NOLINT(google-explicit-constructor)
  Density(MixtureOfGaussians m) : impl_(std::move(m)) {}  // NOLINT

  bool is_uniform() const { return std::holds_alternative<UniformBox>(impl_); }
  const MixtureOfGaussians* mixture() const { return std::get_if<MixtureOfGaussians>(&impl_); }
  const ParamBox& box() const;

  double pdf_normalized(const Vec2& u) const;
  SystemParams sample(Rng& rng) const;
  /// Systematic sampling for mixtures; i.i.d. uniform draws for the box.
  std::vector<SystemParams> sample_batch(int n, Rng& rng) const;

 private:
  std::variant<UniformBox, MixtureOfGaussians> impl_;
};

enum class CorrectionMode {
  kEq1,  // w_k *= desired(mu_k) / proposal(mu_k)
  kAlg1  // w_k *= proposal(mu_k) / desired(mu_k)
};

CorrectionMode parse_correction_mode(const std::string& s);
std::string to_string(CorrectionMode mode);

/// Proposal-prior correction of a conditional density, approximated by
/// reweighting each component at its mean. Uniform/uniform returns `q` unchanged.
MixtureOfGaussians prior_correct(const MixtureOfGaussians& q, const Density& proposal,
                                 const Density& desired, CorrectionMode mode = CorrectionMode::kEq1);

/// Normalized-space density callback.
using PdfFn = std::function<double(const Vec2&)>;

/// Same reweighting with arbitrary densities (e.g. a mixture of past proposals).
MixtureOfGaussians prior_correct(const MixtureOfGaussians& q, const PdfFn& proposal,
                                 const PdfFn& desired, CorrectionMode mode = CorrectionMode::kEq1);

struct Heatmap {
  Eigen::MatrixXd density;            // rows = E cells, cols = length cells (normalized pdf)
  std::vector<double> length_axis;    // cell centres, metres
  std::vector<double> modulus_axis;   // cell centres, pascals
  double integral = 0.0;              // cell-sum x normalized cell area
};

Heatmap grid_density(const MixtureOfGaussians& mog, int length_cells = 100, int modulus_cells = 100);

}  // namespace dlo
