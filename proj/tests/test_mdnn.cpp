#include <doctest.h>

#include <cmath>
#include <numbers>

#include "dlo/mdnn.hpp"

using namespace dlo;

namespace {

MdnnConfig tiny_config() {
  MdnnConfig c;
  c.rff_features = 8;
  c.hidden = 16;
  c.components = 2;
  c.rff_sigma = 0.5;
  return c;
}

TrajectoryInput random_input(Rng& rng, int steps = 6) {
  EpisodeRecord rec;
  for (int t = 0; t < steps; ++t) {
    EpisodeStep s;
    for (double& v : s.obs) v = 3 * uniform01(rng) - 1.5;
    s.action = Vec2(0.1 * (uniform01(rng) - 0.5), 0.1 * (uniform01(rng) - 0.5));
    rec.steps.push_back(s);
  }
  return TrajectoryInput::from_record(rec);
}

// Every keypoint near `c`; the conditional mean of theta is an affine map of c.
MdnnSample synthetic(Rng& rng) {
  const Vec2 c(2 * uniform01(rng) - 1, 2 * uniform01(rng) - 1);
  EpisodeRecord rec;
  for (int t = 0; t < kHorizon; ++t) {
    EpisodeStep s;
    for (int k = 0; k < 6; ++k) {
      s.obs[2 * k] = c.x() + 0.02 * standard_normal(rng);
      s.obs[2 * k + 1] = c.y() + 0.02 * standard_normal(rng);
    }
    rec.steps.push_back(s);
  }
  const Vec2 theta(0.5 + 0.35 * c.x() + 0.01 * standard_normal(rng),
                   0.5 - 0.35 * c.y() + 0.01 * standard_normal(rng));
  return {TrajectoryInput::from_record(rec), theta};
}

double softplus_inverse(double y) { return std::log(std::expm1(y)); }

}  // namespace

TEST_CASE("forward always yields a valid mixture") {
  Rng rng(1);
  const MdnnModel model = MdnnModel::create(tiny_config(), {}, rng);
  CHECK(model.input_dim() == kHorizon * (8 + 2));
  for (int i = 0; i < 50; ++i) {
    const MixtureOfGaussians q = model.forward(random_input(rng));
    CHECK_NOTHROW(q.validate());
    double sum = 0.0;
    for (double w : q.weights()) sum += w;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    for (const Chol2& l : q.chol()) {
      CHECK(l(0, 0) > 0.0);
      CHECK(l(1, 1) > 0.0);
    }
  }
  CHECK_THROWS_AS(model.forward_embedded(Eigen::VectorXd::Zero(7)), UsageError);
}

TEST_CASE("zero input with zero logit biases gives equal weights") {
  Rng rng(2);
  MdnnConfig cfg = tiny_config();
  cfg.components = 4;
  const MdnnModel model = MdnnModel::create(cfg, {}, rng);
  const MixtureOfGaussians q = model.forward_embedded(Eigen::VectorXd::Zero(model.input_dim()));
  for (double w : q.weights()) CHECK(w == doctest::Approx(0.25).epsilon(1e-12));
  for (const Chol2& l : q.chol()) CHECK(l(0, 0) == doctest::Approx(cfg.init_stddev));
}

TEST_CASE("nll oracles") {
  Rng rng(3);
  MdnnConfig cfg = tiny_config();
  cfg.components = 1;
  MdnnModel model = MdnnModel::create(cfg, {}, rng);
  const int head = model.net().num_layers() - 1;
  model.net().weight(head).setZero();
  auto bias = model.net().bias(head);
  // [logit, mean x, mean y, chol a, chol c, chol d]
  bias << 0.0, 0.3, 0.7, softplus_inverse(1.0 - cfg.min_stddev), 0.0,
      softplus_inverse(1.0 - cfg.min_stddev);
  const MdnnSample s{random_input(rng), Vec2(0.3, 0.7)};
  CHECK(nll_loss(model, std::span(&s, 1)) == doctest::Approx(std::log(2 * std::numbers::pi)).epsilon(1e-9));

  const MdnnModel fresh = MdnnModel::create(tiny_config(), {}, rng);
  std::vector<MdnnSample> batch;
  for (int i = 0; i < 5; ++i) batch.push_back({random_input(rng), Vec2(uniform01(rng), uniform01(rng))});
  const double once = nll_loss(fresh, batch);
  std::vector<MdnnSample> twice = batch;
  twice.insert(twice.end(), batch.begin(), batch.end());
  CHECK(nll_loss(fresh, twice) == doctest::Approx(once).epsilon(1e-12));
  CHECK(std::isfinite(once));
  CHECK_THROWS_AS(nll_loss(fresh, std::span<const MdnnSample>{}), UsageError);
}

TEST_CASE("gradients match central differences") {
  Rng rng(4);
  for (RffVariant variant : {RffVariant::kCosOnly, RffVariant::kCosSin}) {
    MdnnConfig cfg = tiny_config();
    cfg.rff_variant = variant;
    const MdnnModel model = MdnnModel::create(cfg, {}, rng);
    for (int trial = 0; trial < 3; ++trial) {
      const TrajectoryInput x = random_input(rng);
      const Vec2 theta(uniform01(rng), uniform01(rng));
      const double err = grad_check(model, x, theta);
      CHECK(err < 1e-4);
      CHECK(grad_check(model, x, theta) == err);
    }
  }
}

TEST_CASE("frozen RFF layer has zero gradient") {
  Rng rng(5);
  MdnnConfig cfg = tiny_config();
  cfg.train_rff = false;
  const MdnnModel model = MdnnModel::create(cfg, {}, rng);
  const MdnnSample s{random_input(rng), Vec2(0.4, 0.6)};
  MdnnGradients g;
  nll_loss_and_grad(model, std::span(&s, 1), g);
  CHECK(g.rff.omega.cwiseAbs().maxCoeff() == 0.0);
  CHECK(g.rff.b.cwiseAbs().maxCoeff() == 0.0);
  CHECK(g.net.cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("fit: overfitting, zero learning rate, full-batch order invariance") {
  Rng rng(6);
  const MdnnModel init = MdnnModel::create(tiny_config(), {}, rng);
  std::vector<MdnnSample> data;
  for (int i = 0; i < 10; ++i) data.push_back({random_input(rng), Vec2(uniform01(rng), uniform01(rng))});

  TrainConfig tc;
  tc.learning_rate = 1e-3;
  tc.epochs = 500;
  tc.batch_size = 10;
  MdnnModel overfit = init;
  const FitResult r = fit(overfit, data, tc);
  REQUIRE(r.epoch_loss.size() == 500);
  CHECK(r.epoch_loss.back() < r.epoch_loss.front());
  CHECK(nll_loss(overfit, data) < 0.0);  // tight mass: density above 1

  tc.learning_rate = 0.0;
  tc.epochs = 5;
  MdnnModel frozen = init;
  const FitResult flat = fit(frozen, data, tc);
  CHECK(frozen.net().params() == init.net().params());
  CHECK(frozen.rff().omega == init.rff().omega);
  for (double l : flat.epoch_loss) CHECK(l == doctest::Approx(flat.epoch_loss.front()).epsilon(1e-12));

  tc.learning_rate = 1e-3;
  tc.epochs = 20;
  tc.shuffle = true;
  MdnnModel a = init, b = init;
  const FitResult ra = fit(a, data, tc);
  tc.shuffle = false;
  const FitResult rb = fit(b, data, tc);
  for (std::size_t i = 0; i < ra.epoch_loss.size(); ++i) {
    CHECK(ra.epoch_loss[i] == doctest::Approx(rb.epoch_loss[i]).epsilon(1e-9));
  }
  CHECK((a.net().params() - b.net().params()).cwiseAbs().maxCoeff() < 1e-9);

  CHECK_THROWS(fit(a, std::span<const MdnnSample>{}, tc));
}

TEST_CASE("non-finite loss aborts training") {
  Rng rng(7);
  MdnnModel model = MdnnModel::create(tiny_config(), {}, rng);
  std::vector<MdnnSample> data{{random_input(rng), Vec2(std::nan(""), 0.5)}};
  TrainConfig tc;
  tc.epochs = 1;
  CHECK_THROWS_AS(fit(model, data, tc), TrainingError);
}

TEST_CASE("recovers a known conditional mean at desk scale") {
  Rng rng(8);
  std::vector<MdnnSample> train, test;
  for (int i = 0; i < 400; ++i) train.push_back(synthetic(rng));
  for (int i = 0; i < 100; ++i) test.push_back(synthetic(rng));
  std::vector<Vec2> calibration;
  for (const MdnnSample& s : train) {
    for (Eigen::Index r = 0; r < s.x.points.rows(); ++r) calibration.emplace_back(s.x.points.row(r).transpose());
  }
  MdnnConfig cfg;  // desk scale: M = 128, H = 256
  cfg.include_actions = false;
  MdnnModel model = MdnnModel::create(cfg, calibration, rng);
  TrainConfig tc;  // desk learning rate
  tc.epochs = 60;
  fit(model, train, tc);
  double sq = 0.0;
  for (const MdnnSample& s : test) sq += (model.forward(s.x).mean() - s.theta).squaredNorm();
  const double rmse = std::sqrt(sq / (2.0 * test.size()));
  MESSAGE("conditional-mean RMSE " << rmse);
  CHECK(rmse < 0.05);
}
