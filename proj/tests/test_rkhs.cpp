#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "dlo/rkhs.hpp"

using namespace dlo;

namespace {

double rbf(const Vec2& x, const Vec2& y, double sigma) {
  return std::exp(-(x - y).squaredNorm() / (2 * sigma * sigma));
}

EpisodeRecord random_record(int steps, Rng& rng) {
  EpisodeRecord rec;
  for (int t = 0; t < steps; ++t) {
    EpisodeStep s;
    for (double& v : s.obs) v = 2 * uniform01(rng) - 1;
    s.action = Vec2(0.12 * (uniform01(rng) - 0.5), 0.12 * (uniform01(rng) - 0.5));
    s.done = t + 1 == steps;
    rec.steps.push_back(s);
  }
  return rec;
}

// Scalar test loss L = g . embed(traj) and its finite-difference gradient.
double probe(const TrajectoryInput& x, const RffParams& rff, const Eigen::VectorXd& g) {
  return g.dot(embed_trajectory(x, rff, true));
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max({1e-8, std::abs(a), std::abs(b)}); }

}  // namespace

TEST_CASE("single feature oracle") {
  RffParams rff;
  rff.omega = Eigen::MatrixXd::Zero(1, 2);
  rff.b = Eigen::VectorXd::Zero(1);
  rff.sigma = Eigen::VectorXd::Ones(1);
  const Eigen::VectorXd f = feature_map(Eigen::Vector2d(0.3, -0.7), rff);
  REQUIRE(f.size() == 1);
  CHECK(f[0] == doctest::Approx(std::sqrt(2.0)));
}

TEST_CASE("RFF dot product approximates the RBF kernel") {
  Rng rng(2024);
  const RffParams rff = make_rff(500, 1.0, rng);
  CHECK(rff.features() == 500);
  const Vec2 x(0.2, 0.1), y(0.7, 0.1);
  const double dot = feature_map(x, rff).dot(feature_map(y, rff));
  CHECK(std::abs(dot - 0.8825) < 0.1);
  CHECK(rbf(x, y, 1.0) == doctest::Approx(0.8824969));

  double self = 0.0;
  for (int i = 0; i < 20; ++i) {
    const Vec2 z(2 * uniform01(rng) - 1, 2 * uniform01(rng) - 1);
    self += feature_map(z, rff).squaredNorm() / 20.0;
  }
  CHECK(std::abs(self - 1.0) < 0.1);

  double mae = 0.0;
  for (int i = 0; i < 100; ++i) {
    const Vec2 a(2 * uniform01(rng) - 1, 2 * uniform01(rng) - 1);
    const Vec2 b(2 * uniform01(rng) - 1, 2 * uniform01(rng) - 1);
    mae += std::abs(feature_map(a, rff).dot(feature_map(b, rff)) - rbf(a, b, 1.0)) / 100.0;
  }
  CHECK(mae < 0.05);
}

TEST_CASE("make_rff validates and draws phases in [0, 2pi)") {
  Rng rng(1);
  const RffParams rff = make_rff(64, 0.5, rng);
  CHECK_NOTHROW(rff.validate());
  CHECK(rff.b.minCoeff() >= 0.0);
  CHECK(rff.b.maxCoeff() < 2 * std::numbers::pi);
  const RffParams cs = make_rff(64, 0.5, rng, RffVariant::kCosSin);
  CHECK(cs.features() == 64);
  CHECK(cs.frequencies() == 32);
  CHECK(cs.sigma.size() == 32);
  CHECK_THROWS_AS(feature_map(Eigen::Vector3d(1, 2, 3), rff), UsageError);
}

TEST_CASE("mean embedding") {
  Rng rng(3);
  const RffParams rff = make_rff(32, 0.7, rng);
  const Vec2 p(0.1, 0.4), q(-0.5, 0.2), r(0.3, -0.9);

  const std::vector<Vec2> one{p};
  CHECK((mean_embed(one, rff) - feature_map(p, rff)).cwiseAbs().maxCoeff() < 1e-15);

  const std::vector<Vec2> pqr{p, q, r}, rpq{r, p, q};
  CHECK((mean_embed(pqr, rff) - mean_embed(rpq, rff)).cwiseAbs().maxCoeff() <= 1e-12);

  const std::vector<Vec2> pq{p, q}, ppqq{p, p, q, q};
  CHECK((mean_embed(pq, rff) - mean_embed(ppqq, rff)).cwiseAbs().maxCoeff() <= 1e-12);

  CHECK_THROWS_AS(mean_embed(std::vector<Vec2>{}, rff), DomainError);
}

TEST_CASE("median heuristic") {
  const std::vector<Vec2> line{{0, 0}, {1, 0}, {3, 0}};  // distances 1, 2, 3
  CHECK(median_heuristic(line) == doctest::Approx(2.0));
  CHECK_THROWS_AS(median_heuristic(std::vector<Vec2>{{0, 0}}), DomainError);

  Rng rng(9);
  std::vector<Vec2> many(5000);
  for (auto& v : many) v = Vec2(uniform01(rng), uniform01(rng));
  const double thinned = median_heuristic(many, 500);
  const double full = median_heuristic(many, 0);
  CHECK(thinned == doctest::Approx(full).epsilon(0.05));
}

TEST_CASE("trajectory embedding layout") {
  Rng rng(4);
  const RffParams rff = make_rff(500, 1.0, rng);
  CHECK(embedding_dim(rff, true) == 8032);
  CHECK(embedding_dim(rff, false) == 8000);

  const EpisodeRecord rec = random_record(10, rng);
  const Eigen::VectorXd e = embed_trajectory(rec, rff);
  REQUIRE(e.size() == 8032);
  CHECK(e.tail(6 * 502).cwiseAbs().maxCoeff() == 0.0);
  CHECK(e.segment(9 * 502, 500).cwiseAbs().maxCoeff() > 0.0);

  // step block: mean of the 5 keypoint features, then the action / max action
  std::vector<Vec2> pts;
  for (int k = 0; k < 5; ++k) pts.emplace_back(rec.steps[3].obs[2 + 2 * k], rec.steps[3].obs[3 + 2 * k]);
  CHECK((e.segment(3 * 502, 500) - mean_embed(pts, rff)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(e[3 * 502 + 500] == doctest::Approx(rec.steps[3].action.x() / kMaxAction));
  CHECK(e[3 * 502 + 501] == doctest::Approx(rec.steps[3].action.y() / kMaxAction));

  EpisodeRecord longer = random_record(20, rng);
  CHECK_THROWS_AS(TrajectoryInput::from_record(longer), UsageError);
}

TEST_CASE("trajectory embedding ignores keypoint order") {
  Rng rng(5);
  const RffParams rff = make_rff(128, 0.8, rng);
  for (int trial = 0; trial < 100; ++trial) {
    const EpisodeRecord rec = random_record(1 + trial % 16, rng);
    EpisodeRecord perm = rec;
    for (EpisodeStep& s : perm.steps) {
      std::array<int, 4> order{0, 1, 2, 3};
      std::shuffle(order.begin(), order.end(), rng);
      for (int k = 0; k < 4; ++k) {
        s.obs[2 + 2 * k] = rec.steps[&s - perm.steps.data()].obs[2 + 2 * order[k]];
        s.obs[3 + 2 * k] = rec.steps[&s - perm.steps.data()].obs[3 + 2 * order[k]];
      }
    }
    const Eigen::VectorXd d = embed_trajectory(rec, rff) - embed_trajectory(perm, rff);
    CHECK(d.cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("feature gradient oracles") {
  RffParams rff;
  rff.omega = Eigen::MatrixXd::Zero(4, 2);
  rff.b = Eigen::VectorXd::Constant(4, std::numbers::pi / 2);
  rff.sigma = Eigen::VectorXd::Ones(1);
  Eigen::MatrixXd x(1, 2);
  x << 0.0, 0.0;
  RffCache cache;
  feature_map_batch(x, rff, &cache);
  RffGradients g = RffGradients::zeros_like(rff);
  rff_gradients(Eigen::MatrixXd::Ones(1, 4), cache, rff, g);
  for (int m = 0; m < 4; ++m) CHECK(g.b[m] == doctest::Approx(-std::sqrt(2.0 / 4)));
  CHECK(g.omega.cwiseAbs().maxCoeff() == 0.0);  // x = 0
}

TEST_CASE("feature gradients match central differences") {
  Rng rng(6);
  const double h = 1e-6;
  for (int config = 0; config < 20; ++config) {
    const RffVariant variant = config % 2 == 0 ? RffVariant::kCosOnly : RffVariant::kCosSin;
    RffParams rff = make_rff(8, 0.3 + uniform01(rng), rng, variant);
    Eigen::MatrixXd x = Eigen::MatrixXd::Random(3, 2);
    const Eigen::MatrixXd w = Eigen::MatrixXd::Random(3, rff.features());
    auto loss = [&](const RffParams& r, const Eigen::MatrixXd& pts) {
      return (feature_map_batch(pts, r, nullptr).array() * w.array()).sum();
    };
    RffCache cache;
    feature_map_batch(x, rff, &cache);
    RffGradients g = RffGradients::zeros_like(rff);
    const Eigen::MatrixXd dx = rff_gradients(w, cache, rff, g);

    double worst = 0.0;
    for (Eigen::Index i = 0; i < rff.omega.size(); ++i) {
      RffParams p = rff, m = rff;
      p.omega.data()[i] += h;
      m.omega.data()[i] -= h;
      worst = std::max(worst, rel_err(g.omega.data()[i], (loss(p, x) - loss(m, x)) / (2 * h)));
    }
    if (variant == RffVariant::kCosOnly) {
      for (Eigen::Index i = 0; i < rff.b.size(); ++i) {
        RffParams p = rff, m = rff;
        p.b[i] += h;
        m.b[i] -= h;
        worst = std::max(worst, rel_err(g.b[i], (loss(p, x) - loss(m, x)) / (2 * h)));
      }
    } else {
      for (Eigen::Index i = 0; i < rff.sigma.size(); ++i) {
        RffParams p = rff, m = rff;
        p.sigma[i] += h;
        m.sigma[i] -= h;
        worst = std::max(worst, rel_err(g.sigma[i], (loss(p, x) - loss(m, x)) / (2 * h)));
      }
    }
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      Eigen::MatrixXd p = x, m = x;
      p.data()[i] += h;
      m.data()[i] -= h;
      worst = std::max(worst, rel_err(dx.data()[i], (loss(rff, p) - loss(rff, m)) / (2 * h)));
    }
    CHECK(worst < 1e-5);
  }
}

TEST_CASE("trajectory embedding backward matches central differences") {
  Rng rng(8);
  const double h = 1e-6;
  for (RffVariant variant : {RffVariant::kCosOnly, RffVariant::kCosSin}) {
    RffParams rff = make_rff(6, 0.6, rng, variant);
    const TrajectoryInput x = TrajectoryInput::from_record(random_record(5, rng));
    const Eigen::VectorXd g = Eigen::VectorXd::Random(embedding_dim(rff, true));
    const TrajectoryEmbedding fwd = embed_trajectory_cached(x, rff, true);
    RffGradients grads = RffGradients::zeros_like(rff);
    embed_trajectory_backward(g, fwd, x, rff, true, grads);
    double worst = 0.0;
    for (Eigen::Index i = 0; i < rff.omega.size(); ++i) {
      RffParams p = rff, m = rff;
      p.omega.data()[i] += h;
      m.omega.data()[i] -= h;
      worst = std::max(worst, rel_err(grads.omega.data()[i], (probe(x, p, g) - probe(x, m, g)) / (2 * h)));
    }
    CHECK(worst < 1e-4);
  }
}
