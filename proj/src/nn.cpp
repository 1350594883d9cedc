#include "dlo/nn.hpp"

#include <cmath>

#include <Eigen/QR>

namespace dlo {

Mlp::Mlp(std::vector<int> sizes, Activation hidden, Activation output)
    : sizes_(std::move(sizes)), hidden_(hidden), output_(output) {
  if (sizes_.size() < 2) throw UsageError("Mlp: need at least input and output sizes");
  Eigen::Index total = 0;
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    if (sizes_[l] < 1 || sizes_[l + 1] < 1) throw UsageError("Mlp: layer sizes must be >= 1");
    offsets_.push_back(total);
    total += static_cast<Eigen::Index>(sizes_[l]) * sizes_[l + 1] + sizes_[l + 1];
  }
  params_ = Eigen::VectorXd::Zero(total);
}

Eigen::Map<Eigen::MatrixXd> Mlp::weight(int layer) {
  return {params_.data() + weight_offset(layer), sizes_[layer + 1], sizes_[layer]};
}
Eigen::Map<const Eigen::MatrixXd> Mlp::weight(int layer) const {
  return {params_.data() + weight_offset(layer), sizes_[layer + 1], sizes_[layer]};
}
Eigen::Map<Eigen::VectorXd> Mlp::bias(int layer) {
  return {params_.data() + bias_offset(layer), sizes_[layer + 1]};
}
Eigen::Map<const Eigen::VectorXd> Mlp::bias(int layer) const {
  return {params_.data() + bias_offset(layer), sizes_[layer + 1]};
}

void Mlp::init_uniform_fan_in(Rng& rng) {
  params_.setZero();
  for (int l = 0; l < num_layers(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(sizes_[l]));
    std::uniform_real_distribution<double> u(-bound, bound);
    auto w = weight(l);
    for (Eigen::Index j = 0; j < w.cols(); ++j)
      for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = u(rng);
  }
}

void Mlp::init_orthogonal(Rng& rng, const std::vector<double>& gains) {
  if (static_cast<int>(gains.size()) != num_layers()) {
    throw UsageError("Mlp::init_orthogonal: one gain per layer required");
  }
  params_.setZero();
  for (int l = 0; l < num_layers(); ++l) {
    const int rows = sizes_[l + 1], cols = sizes_[l];
    const int big = std::max(rows, cols), small = std::min(rows, cols);
    Eigen::MatrixXd g(big, small);
    for (Eigen::Index j = 0; j < g.cols(); ++j)
      for (Eigen::Index i = 0; i < g.rows(); ++i) g(i, j) = standard_normal(rng);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(big, small);
    // Sign fix so the distribution is uniform over orthogonal matrices.
    const Eigen::MatrixXd r = qr.matrixQR().topRows(small).triangularView<Eigen::Upper>();
    for (int k = 0; k < small; ++k) {
      if (r(k, k) < 0.0) q.col(k) *= -1.0;
    }
    auto w = weight(l);
    if (rows >= cols) {
      w = gains[l] * q;
    } else {
      w = gains[l] * q.transpose();
    }
  }
}

Eigen::MatrixXd Mlp::forward(const Eigen::Ref<const Eigen::MatrixXd>& x, Tape* tape) const {
  if (x.rows() != input_dim()) {
    throw UsageError("Mlp::forward: expected input dimension " + std::to_string(input_dim()) +
                     ", got " + std::to_string(x.rows()));
  }
  Eigen::MatrixXd a = x;
  if (tape != nullptr) {
    tape->activations.clear();
    tape->activations.push_back(a);
  }
  for (int l = 0; l < num_layers(); ++l) {
    Eigen::MatrixXd z = weight(l) * a;
    z.colwise() += bias(l);
    if (activation(l) == Activation::kTanh) z = z.array().tanh();
    a = std::move(z);
    if (tape != nullptr) tape->activations.push_back(a);
  }
  return a;
}

Eigen::MatrixXd Mlp::backward(const Tape& tape, const Eigen::Ref<const Eigen::MatrixXd>& grad_out,
                              Eigen::VectorXd& grad) const {
  if (grad.size() != params_.size()) throw UsageError("Mlp::backward: gradient size mismatch");
  Eigen::MatrixXd g = grad_out;
  for (int l = num_layers() - 1; l >= 0; --l) {
    const Eigen::MatrixXd& out = tape.activations[l + 1];
    if (activation(l) == Activation::kTanh) g.array() *= 1.0 - out.array().square();
    const Eigen::MatrixXd& in = tape.activations[l];
    Eigen::Map<Eigen::MatrixXd> gw(grad.data() + weight_offset(l), sizes_[l + 1], sizes_[l]);
    Eigen::Map<Eigen::VectorXd> gb(grad.data() + bias_offset(l), sizes_[l + 1]);
    gw.noalias() += g * in.transpose();
    gb += g.rowwise().sum();
    g = weight(l).transpose() * g;
  }
  return g;
}

Adam::Adam(Eigen::Index n, double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps),
      m_(Eigen::VectorXd::Zero(n)), v_(Eigen::VectorXd::Zero(n)) {}

void Adam::step(Eigen::Ref<Eigen::VectorXd> params, const Eigen::Ref<const Eigen::VectorXd>& grad) {
  if (params.size() != m_.size() || grad.size() != m_.size()) {
    throw UsageError("Adam::step: size mismatch");
  }
  ++t_;
  m_ = beta1_ * m_ + (1.0 - beta1_) * grad;
  v_ = beta2_ * v_ + (1.0 - beta2_) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  params.array() -= lr_ * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps_);
}

}  // namespace dlo
