#pragma once

// Dense feed-forward networks with a flat parameter vector, manual
// reverse-mode gradients, and Adam. Batches are column-major: one sample per
// column.

#include <vector>

#include <Eigen/Core>

#include "dlo/common.hpp"

namespace dlo {

enum class Activation { kTanh, kIdentity };

class Mlp {
 public:
  Mlp() = default;
  /// `sizes` = {input, hidden..., output}; hidden layers use `hidden`, the last layer `output`.
  explicit Mlp(std::vector<int> sizes, Activation hidden = Activation::kTanh,
               Activation output = Activation::kIdentity);

  int input_dim() const { return sizes_.front(); }
  int output_dim() const { return sizes_.back(); }
  int num_layers() const { return static_cast<int>(sizes_.size()) - 1; }
  const std::vector<int>& sizes() const { return sizes_; }
  Eigen::Index num_params() const { return params_.size(); }

  Eigen::VectorXd& params() { return params_; }
  const Eigen::VectorXd& params() const { return params_; }

  Eigen::Map<Eigen::MatrixXd> weight(int layer);
  Eigen::Map<const Eigen::MatrixXd> weight(int layer) const;
  Eigen::Map<Eigen::VectorXd> bias(int layer);
  Eigen::Map<const Eigen::VectorXd> bias(int layer) const;

  /// W ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero.
  void init_uniform_fan_in(Rng& rng);
  /// Orthogonal weights with per-layer gains, biases zero.
  void init_orthogonal(Rng& rng, const std::vector<double>& gains);

  struct Tape {
    std::vector<Eigen::MatrixXd> activations;  // input, then each layer's output
  };

  Eigen::MatrixXd forward(const Eigen::Ref<const Eigen::MatrixXd>& x, Tape* tape = nullptr) const;

  /// Accumulates dLoss/dparams into `grad` (same layout as params()); returns dLoss/dinput.
  Eigen::MatrixXd backward(const Tape& tape, const Eigen::Ref<const Eigen::MatrixXd>& grad_out,
                           Eigen::VectorXd& grad) const;

 private:
  Eigen::Index weight_offset(int layer) const { return offsets_[layer]; }
  Eigen::Index bias_offset(int layer) const {
    return offsets_[layer] + static_cast<Eigen::Index>(sizes_[layer]) * sizes_[layer + 1];
  }
  Activation activation(int layer) const {
    return layer + 1 == num_layers() ? output_ : hidden_;
  }

  std::vector<int> sizes_;
  std::vector<Eigen::Index> offsets_;
  Activation hidden_ = Activation::kTanh;
  Activation output_ = Activation::kIdentity;
  Eigen::VectorXd params_;
};

class Adam {
 public:
  Adam() = default;
  Adam(Eigen::Index n, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  void step(Eigen::Ref<Eigen::VectorXd> params, const Eigen::Ref<const Eigen::VectorXd>& grad);
  double learning_rate() const { return lr_; }
  void set_learning_rate(double lr) { lr_ = lr; }

 private:
  double lr_ = 1e-3, beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  Eigen::VectorXd m_, v_;
  long t_ = 0;
};

}  // namespace dlo
