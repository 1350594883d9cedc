#include "dlo/mdnn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <sstream>

namespace dlo {
namespace {

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }
double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
double softplus_inverse(double y) { return std::log(std::expm1(y)); }

// Head layout per mixture of K components:
//   [logits (K) | means (2K: length, E) | chol raw (3K: a, c, d)]
struct HeadLayout {
  int k;
  int logit(int j) const { return j; }
  int mean(int j, int axis) const { return k + 2 * j + axis; }
  int chol(int j, int entry) const { return 3 * k + 3 * j + entry; }
  int size() const { return 6 * k; }
};

// Negative log-likelihood of one sample and its gradient wrt the head outputs.
double head_nll(const Eigen::Ref<const Eigen::VectorXd>& out, const Vec2& theta, int k,
                double min_std, Eigen::Ref<Eigen::VectorXd> grad) {
  const HeadLayout lay{k};
  const double log2pi = std::log(2.0 * std::numbers::pi);

  double max_logit = -std::numeric_limits<double>::infinity();
  for (int j = 0; j < k; ++j) max_logit = std::max(max_logit, out[lay.logit(j)]);
  double z = 0.0;
  for (int j = 0; j < k; ++j) z += std::exp(out[lay.logit(j)] - max_logit);
  const double log_z = max_logit + std::log(z);

  std::vector<double> ell(k), w(k);
  struct Parts { double a, c, d, z1, z2, ra, rd; };
  std::vector<Parts> parts(k);
  double best = -std::numeric_limits<double>::infinity();
  for (int j = 0; j < k; ++j) {
    Parts& p = parts[j];
    p.ra = out[lay.chol(j, 0)];
    p.c = out[lay.chol(j, 1)];
    p.rd = out[lay.chol(j, 2)];
    p.a = softplus(p.ra) + min_std;
    p.d = softplus(p.rd) + min_std;
    const double r1 = theta.x() - out[lay.mean(j, 0)];
    const double r2 = theta.y() - out[lay.mean(j, 1)];
    p.z1 = r1 / p.a;
    p.z2 = (r2 - p.c * p.z1) / p.d;
    const double log_w = out[lay.logit(j)] - log_z;
    w[j] = std::exp(log_w);
    ell[j] = log_w - log2pi - std::log(p.a) - std::log(p.d) - 0.5 * (p.z1 * p.z1 + p.z2 * p.z2);
    best = std::max(best, ell[j]);
  }
  double acc = 0.0;
  for (int j = 0; j < k; ++j) acc += std::exp(ell[j] - best);
  const double log_p = best + std::log(acc);

  for (int j = 0; j < k; ++j) {
    const Parts& p = parts[j];
    const double gamma = std::exp(ell[j] - log_p);
    grad[lay.logit(j)] = w[j] - gamma;
    // d logN / d params, then scaled by -gamma for the NLL.
    const double d_mu1 = p.z1 / p.a - p.z2 * p.c / (p.d * p.a);
    const double d_mu2 = p.z2 / p.d;
    const double d_a = (-1.0 + p.z1 * p.z1 - p.z2 * p.c * p.z1 / p.d) / p.a;
    const double d_c = p.z1 * p.z2 / p.d;
    const double d_d = (-1.0 + p.z2 * p.z2) / p.d;
    grad[lay.mean(j, 0)] = -gamma * d_mu1;
    grad[lay.mean(j, 1)] = -gamma * d_mu2;
    grad[lay.chol(j, 0)] = -gamma * d_a * sigmoid(p.ra);
    grad[lay.chol(j, 1)] = -gamma * d_c;
    grad[lay.chol(j, 2)] = -gamma * d_d * sigmoid(p.rd);
  }
  return -log_p;
}

struct BatchForward {
  std::vector<TrajectoryEmbedding> embeddings;
  Eigen::MatrixXd inputs;
  Mlp::Tape tape;
  Eigen::MatrixXd out;
};

BatchForward forward_batch(const MdnnModel& model, std::span<const MdnnSample> batch) {
  BatchForward f;
  const auto b = static_cast<Eigen::Index>(batch.size());
  f.inputs.resize(model.input_dim(), b);
  f.embeddings.reserve(batch.size());
  for (Eigen::Index i = 0; i < b; ++i) {
    f.embeddings.push_back(
        embed_trajectory_cached(batch[i].x, model.rff(), model.config().include_actions));
    f.inputs.col(i) = f.embeddings.back().value;
  }
  f.out = model.net().forward(f.inputs, &f.tape);
  return f;
}

}  // namespace

MdnnModel::MdnnModel(const MdnnConfig& cfg, RffParams rff, Mlp net, ParamBox box)
    : cfg_(cfg), rff_(std::move(rff)), net_(std::move(net)), box_(box) {
  rff_.validate();
  if (net_.input_dim() != embedding_dim(rff_, cfg_.include_actions, cfg_.horizon)) {
    throw UsageError("MdnnModel: network input does not match the embedding dimension");
  }
  if (net_.output_dim() != HeadLayout{cfg_.components}.size()) {
    throw UsageError("MdnnModel: network output does not match the mixture head");
  }
}

MdnnModel MdnnModel::create(const MdnnConfig& cfg, std::span<const Vec2> calibration, Rng& rng,
                            const ParamBox& box) {
  if (cfg.components < 1 || cfg.hidden < 1 || cfg.hidden_layers < 1) {
    throw DomainError("MdnnConfig: sizes must be >= 1");
  }
  double sigma = cfg.rff_sigma;
  if (!(sigma > 0.0)) sigma = calibration.size() >= 2 ? median_heuristic(calibration) : 1.0;
  if (!(sigma > 0.0)) sigma = 1.0;
  RffParams rff = make_rff(cfg.rff_features, sigma, rng, cfg.rff_variant);

  std::vector<int> sizes{embedding_dim(rff, cfg.include_actions, cfg.horizon)};
  for (int l = 0; l < cfg.hidden_layers; ++l) sizes.push_back(cfg.hidden);
  const HeadLayout lay{cfg.components};
  sizes.push_back(lay.size());
  Mlp net(sizes, Activation::kTanh, Activation::kIdentity);
  net.init_uniform_fan_in(rng);

  const int head = net.num_layers() - 1;
  net.weight(head) *= cfg.head_init_scale;
  auto bias = net.bias(head);
  const double raw_std = softplus_inverse(std::max(cfg.init_stddev - cfg.min_stddev, 1e-6));
  const int grid = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(cfg.components))));
  for (int j = 0; j < cfg.components; ++j) {
    // Spread initial means over a grid inside the box.
    bias[lay.mean(j, 0)] = (j % grid + 0.5) / grid;
    bias[lay.mean(j, 1)] = (j / grid + 0.5) / grid;
    bias[lay.chol(j, 0)] = raw_std;
    bias[lay.chol(j, 2)] = raw_std;
  }
  return MdnnModel(cfg, std::move(rff), std::move(net), box);
}

Eigen::VectorXd MdnnModel::embed(const TrajectoryInput& x) const {
  return embed_trajectory(x, rff_, cfg_.include_actions);
}

MixtureOfGaussians MdnnModel::decode(const Eigen::Ref<const Eigen::VectorXd>& head) const {
  const HeadLayout lay{cfg_.components};
  const int k = cfg_.components;
  std::vector<double> w(k);
  double max_logit = head.head(k).maxCoeff();
  double z = 0.0;
  for (int j = 0; j < k; ++j) {
    w[j] = std::exp(head[lay.logit(j)] - max_logit);
    z += w[j];
  }
  for (double& x : w) x /= z;
  std::vector<Vec2> means(k);
  std::vector<Chol2> chol(k);
  for (int j = 0; j < k; ++j) {
    means[j] = Vec2(head[lay.mean(j, 0)], head[lay.mean(j, 1)]);
    Chol2 l = Chol2::Zero();
    l(0, 0) = softplus(head[lay.chol(j, 0)]) + cfg_.min_stddev;
    l(1, 0) = head[lay.chol(j, 1)];
    l(1, 1) = softplus(head[lay.chol(j, 2)]) + cfg_.min_stddev;
    chol[j] = l;
  }
  return MixtureOfGaussians(std::move(w), std::move(means), std::move(chol), box_);
}

MixtureOfGaussians MdnnModel::forward_embedded(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  if (x.size() != input_dim()) {
    throw UsageError("MdnnModel::forward: expected input dimension " + std::to_string(input_dim()) +
                     ", got " + std::to_string(x.size()));
  }
  const Eigen::MatrixXd out = net_.forward(x);
  return decode(out.col(0));
}

MixtureOfGaussians MdnnModel::forward(const TrajectoryInput& x) const {
  return forward_embedded(embed(x));
}

double nll_loss(const MdnnModel& model, std::span<const MdnnSample> batch) {
  if (batch.empty()) throw UsageError("nll_loss: empty batch");
  const BatchForward f = forward_batch(model, batch);
  Eigen::VectorXd scratch(f.out.rows());
  double total = 0.0;
  for (Eigen::Index i = 0; i < f.out.cols(); ++i) {
    total += head_nll(f.out.col(i), batch[i].theta, model.num_components(),
                      model.config().min_stddev, scratch);
  }
  return total / static_cast<double>(batch.size());
}

double nll_loss_and_grad(const MdnnModel& model, std::span<const MdnnSample> batch,
                         MdnnGradients& grads) {
  if (batch.empty()) throw UsageError("nll_loss: empty batch");
  grads.net = Eigen::VectorXd::Zero(model.net().num_params());
  grads.rff = RffGradients::zeros_like(model.rff());

  const BatchForward f = forward_batch(model, batch);
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  Eigen::MatrixXd grad_out(f.out.rows(), f.out.cols());
  double total = 0.0;
  for (Eigen::Index i = 0; i < f.out.cols(); ++i) {
    total += head_nll(f.out.col(i), batch[i].theta, model.num_components(),
                      model.config().min_stddev, grad_out.col(i));
  }
  grad_out *= inv_b;
  const Eigen::MatrixXd grad_in = model.net().backward(f.tape, grad_out, grads.net);
  if (model.config().train_rff) {
    for (std::size_t i = 0; i < batch.size(); ++i) {
      embed_trajectory_backward(grad_in.col(static_cast<Eigen::Index>(i)), f.embeddings[i],
                                batch[i].x, model.rff(), model.config().include_actions,
                                grads.rff);
    }
  }
  return total * inv_b;
}

FitResult fit(MdnnModel& model, std::span<const MdnnSample> data, const TrainConfig& cfg) {
  if (data.empty()) throw UsageError("fit: empty dataset");
  if (!(cfg.learning_rate >= 0.0)) throw DomainError("TrainConfig: learning_rate must be >= 0");
  if (cfg.batch_size < 1) throw DomainError("TrainConfig: batch_size must be >= 1");

  Rng rng(cfg.seed);
  RffParams& rff = model.rff();
  Adam net_opt(model.net().num_params(), cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon);
  Adam omega_opt(rff.omega.size(), cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon);
  Adam b_opt(rff.b.size(), cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon);
  Adam sigma_opt(rff.sigma.size(), cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon);
  const bool train_sigma = rff.variant == RffVariant::kCosSin;

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<MdnnSample> batch;
  MdnnGradients grads;
  FitResult result;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (cfg.shuffle) std::shuffle(order.begin(), order.end(), rng);
    double epoch_total = 0.0;
    for (std::size_t start = 0, batch_index = 0; start < order.size();
         start += cfg.batch_size, ++batch_index) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      batch.clear();
      for (std::size_t i = start; i < end; ++i) batch.push_back(data[order[i]]);
      const double loss = nll_loss_and_grad(model, batch, grads);
      if (!std::isfinite(loss)) {
        std::ostringstream msg;
        msg << "MDNN fit: non-finite loss at epoch " << epoch << ", batch " << batch_index
            << " (|grad net|=" << grads.net.norm() << ", |grad omega|=" << grads.rff.omega.norm()
            << ", |grad b|=" << grads.rff.b.norm() << ")";
        throw TrainingError(msg.str());
      }
      epoch_total += loss * static_cast<double>(end - start);
      net_opt.step(model.net().params(), grads.net);
      if (model.config().train_rff) {
        Eigen::Map<Eigen::VectorXd> omega(rff.omega.data(), rff.omega.size());
        Eigen::Map<const Eigen::VectorXd> g_omega(grads.rff.omega.data(), grads.rff.omega.size());
        omega_opt.step(omega, g_omega);
        if (rff.variant == RffVariant::kCosOnly) b_opt.step(rff.b, grads.rff.b);
        if (train_sigma) {
          sigma_opt.step(rff.sigma, grads.rff.sigma);
          rff.sigma = rff.sigma.cwiseMax(1e-6);
        }
      }
    }
    result.epoch_loss.push_back(epoch_total / static_cast<double>(data.size()));
  }
  return result;
}

double grad_check(const MdnnModel& model, const TrajectoryInput& x, const Vec2& theta, double h,
                  int max_params) {
  const MdnnSample sample{x, theta};
  const std::span<const MdnnSample> one(&sample, 1);
  MdnnGradients analytic;
  nll_loss_and_grad(model, one, analytic);

  MdnnModel probe = model;
  double worst = 0.0;
  auto check = [&](double& slot, double grad) {
    const double saved = slot;
    slot = saved + h;
    const double up = nll_loss(probe, one);
    slot = saved - h;
    const double down = nll_loss(probe, one);
    slot = saved;
    const double numeric = (up - down) / (2.0 * h);
    const double denom = std::max({std::abs(grad), std::abs(numeric), 1e-6});
    worst = std::max(worst, std::abs(grad - numeric) / denom);
  };
  auto stride_for = [&](Eigen::Index n) -> Eigen::Index {
    if (max_params <= 0 || n <= max_params) return 1;
    return (n + max_params - 1) / max_params;
  };

  Eigen::VectorXd& p = probe.net().params();
  for (Eigen::Index i = 0, s = stride_for(p.size()); i < p.size(); i += s) check(p[i], analytic.net[i]);

  if (model.config().train_rff) {
    RffParams& rff = probe.rff();
    for (Eigen::Index i = 0; i < rff.omega.size(); ++i) {
      check(rff.omega.data()[i], analytic.rff.omega.data()[i]);
    }
    if (rff.variant == RffVariant::kCosOnly) {
      for (Eigen::Index i = 0; i < rff.b.size(); ++i) check(rff.b[i], analytic.rff.b[i]);
    } else {
      for (Eigen::Index i = 0; i < rff.sigma.size(); ++i) check(rff.sigma[i], analytic.rff.sigma[i]);
    }
  }
  return worst;
}

}  // namespace dlo
