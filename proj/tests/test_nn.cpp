#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "dlo/nn.hpp"

using namespace dlo;

TEST_CASE("parameter layout") {
  Mlp net({3, 5, 2});
  CHECK(net.num_params() == 3 * 5 + 5 + 5 * 2 + 2);
  CHECK(net.num_layers() == 2);
  CHECK(net.weight(0).rows() == 5);
  CHECK(net.weight(0).cols() == 3);
  CHECK(net.bias(1).size() == 2);
}

TEST_CASE("forward by hand") {
  Mlp net({2, 2, 1});
  net.params().setZero();
  net.weight(0) << 1.0, 0.0, 0.0, 2.0;
  net.bias(0) << 0.5, 0.0;
  net.weight(1) << 1.0, -1.0;
  net.bias(1) << 0.25;
  Eigen::MatrixXd x(2, 1);
  x << 0.3, -0.2;
  const double expected = std::tanh(0.8) - std::tanh(-0.4) + 0.25;
  CHECK(net.forward(x)(0, 0) == doctest::Approx(expected));
}

TEST_CASE("backward matches central differences") {
  Rng rng(12);
  Mlp net({4, 6, 6, 3});
  net.init_uniform_fan_in(rng);
  const Eigen::MatrixXd x = Eigen::MatrixXd::Random(4, 5);
  const Eigen::MatrixXd w = Eigen::MatrixXd::Random(3, 5);
  auto loss = [&](const Mlp& m, const Eigen::MatrixXd& in) {
    return (m.forward(in).array() * w.array()).sum();
  };
  Mlp::Tape tape;
  net.forward(x, &tape);
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(net.num_params());
  const Eigen::MatrixXd dx = net.backward(tape, w, grad);
  const double h = 1e-6;
  double worst = 0.0;
  for (Eigen::Index i = 0; i < net.num_params(); ++i) {
    Mlp p = net, m = net;
    p.params()[i] += h;
    m.params()[i] -= h;
    const double fd = (loss(p, x) - loss(m, x)) / (2 * h);
    worst = std::max(worst, std::abs(fd - grad[i]) / std::max({1e-8, std::abs(fd), std::abs(grad[i])}));
  }
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Eigen::MatrixXd p = x, m = x;
    p.data()[i] += h;
    m.data()[i] -= h;
    const double fd = (loss(net, p) - loss(net, m)) / (2 * h);
    worst = std::max(worst, std::abs(fd - dx.data()[i]) / std::max({1e-8, std::abs(fd), std::abs(dx.data()[i])}));
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("orthogonal init") {
  Rng rng(2);
  Mlp net({12, 64, 64, 2});
  net.init_orthogonal(rng, {std::sqrt(2.0), std::sqrt(2.0), 0.01});
  const Eigen::MatrixXd w0 = net.weight(0);  // 64 x 12: orthonormal columns
  CHECK((w0.transpose() * w0 - 2.0 * Eigen::MatrixXd::Identity(12, 12)).cwiseAbs().maxCoeff() < 1e-10);
  const Eigen::MatrixXd w2 = net.weight(2);  // 2 x 64: orthonormal rows
  CHECK((w2 * w2.transpose() - 1e-4 * Eigen::MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(net.bias(1).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("adam") {
  Eigen::VectorXd p(2);
  p << 1.0, -2.0;
  Adam opt(2, 0.1);
  Eigen::VectorXd g(2);
  g << 3.0, -0.5;
  opt.step(p, g);
  // first bias-corrected step is lr * sign(g)
  CHECK(p[0] == doctest::Approx(0.9));
  CHECK(p[1] == doctest::Approx(-1.9));

  Adam frozen(2, 0.0);
  const Eigen::VectorXd before = p;
  frozen.step(p, g);
  CHECK(p == before);

  // minimizes a quadratic
  Eigen::VectorXd q = Eigen::VectorXd::Constant(3, 5.0);
  Adam quad(3, 0.05);
  for (int i = 0; i < 2000; ++i) quad.step(q, 2 * q);
  CHECK(q.norm() < 1e-2);
}
