#include <doctest.h>

#include <cmath>
#include <memory>

#include "dlo/lfi.hpp"

using namespace dlo;

namespace {

// Small, fast configuration; the numbers only need to exercise the loop.
LfiConfig small_config() {
  LfiConfig c;
  c.n_iterations = 3;
  c.first_iteration_trajectories = 24;
  c.trajectories_per_iter = 12;
  c.first_iteration_epochs = 4;
  c.epochs_per_iter = 2;
  c.mdnn.rff_features = 16;
  c.mdnn.hidden = 16;
  c.mdnn.components = 2;
  c.train.learning_rate = 1e-3;
  c.seed = 5;
  return c;
}

const PolicyFn kSweep = [](const Observation& o) {
  return Vec2(o[0] < 0.5 ? 0.04 : -0.02, o[1] > 0.2 ? -0.05 : 0.0);
};

EpisodeRecord real_record() {
  ReachEnv env = make_real_emulator(1, EnvConfig{}, 3);
  return run_episode(env, kSweep);
}

bool same_mog(const MixtureOfGaussians& a, const MixtureOfGaussians& b) {
  if (a.size() != b.size()) return false;
  for (int k = 0; k < a.size(); ++k) {
    if (a.weights()[k] != b.weights()[k] || a.means()[k] != b.means()[k] || a.chol()[k] != b.chol()[k]) {
      return false;
    }
  }
  return true;
}

}  // namespace

TEST_CASE("config") {
  LfiConfig c;
  CHECK_NOTHROW(c.validate());
  CHECK(c.trajectories_at(0) == 200);
  CHECK(c.trajectories_at(3) == 50);
  c.n_iterations = 0;
  CHECK_THROWS_AS(c.validate(), DomainError);
  c = LfiConfig{};
  c.trajectories_per_iter = 0;
  CHECK_THROWS_AS(c.validate(), DomainError);
  CHECK(parse_proposal_model("dataset") == ProposalModel::kDataset);
  CHECK(parse_proposal_model("latest") == ProposalModel::kLatest);
  CHECK(to_string(ProposalModel::kLatest) == "latest");
  CHECK_THROWS(parse_proposal_model("other"));
}

TEST_CASE("collection under a delta prior") {
  const Density delta = MixtureOfGaussians::single(Vec2(0.3, 0.7), 1e-12);
  const auto data = collect_trajectories(kSweep, delta, 12, EnvConfig{}, 1);
  REQUIRE(data.size() == 12);
  for (const SimTrajectory& t : data) {
    CHECK(t.theta.length == doctest::Approx(data[0].theta.length).epsilon(1e-9));
    CHECK(t.theta.youngs_modulus == doctest::Approx(data[0].theta.youngs_modulus).epsilon(1e-9));
    CHECK(t.record.params.has_value());
    CHECK_FALSE(t.record.steps.empty());
  }
  CHECK_THROWS_AS(collect_trajectories(kSweep, delta, 0, EnvConfig{}, 1), DomainError);
}

TEST_CASE("uniform-prior draws pass a chi-square uniformity test") {
  auto rng = std::make_shared<Rng>(99);
  const PolicyFn random_policy = [rng](const Observation&) {
    return Vec2(0.12 * (uniform01(*rng) - 0.5), 0.12 * (uniform01(*rng) - 0.5));
  };
  const ParamBox box;
  const auto data = collect_trajectories(random_policy, Density(UniformBox{box}), 100, EnvConfig{}, 4);
  REQUIRE(data.size() == 100);
  // 5 equiprobable bins per axis, 4 degrees of freedom: critical value 13.277 at alpha = 0.01
  for (int axis = 0; axis < 2; ++axis) {
    std::vector<int> bins(5, 0);
    for (const SimTrajectory& t : data) {
      const double u = box.normalize(t.theta)[axis];
      ++bins[std::min(4, static_cast<int>(u * 5))];
    }
    double chi2 = 0.0;
    for (int b : bins) chi2 += (b - 20.0) * (b - 20.0) / 20.0;
    CHECK(chi2 < 13.277);
  }
}

TEST_CASE("collection is deterministic") {
  const Density u = UniformBox{};
  const auto a = collect_trajectories(kSweep, u, 15, EnvConfig{}, 8, 4);
  const auto b = collect_trajectories(kSweep, u, 15, EnvConfig{}, 8, 4);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].theta == b[i].theta);
    REQUIRE(a[i].record.steps.size() == b[i].record.steps.size());
    for (std::size_t t = 0; t < a[i].record.steps.size(); ++t) {
      CHECK(a[i].record.steps[t].obs == b[i].record.steps[t].obs);
      CHECK(a[i].record.steps[t].reward == b[i].record.steps[t].reward);
    }
  }
}

TEST_CASE("a single iteration under the uniform proposal is the raw conditional") {
  LfiConfig cfg = small_config();
  cfg.n_iterations = 1;
  const InferenceResult r = run_inference(real_record(), kSweep, cfg, EnvConfig{});
  REQUIRE(r.posterior_per_iteration.size() == 1);
  CHECK(same_mog(r.posterior_per_iteration[0], r.raw_per_iteration[0]));
  CHECK(r.dataset_sizes == std::vector<std::size_t>{24});
}

TEST_CASE("iterations accumulate data and are reproducible") {
  const LfiConfig cfg = small_config();
  const EpisodeRecord real = real_record();
  int calls = 0;
  const InferenceResult a = run_inference(real, kSweep, cfg, EnvConfig{}, ParamBox{},
                                          [&](int it, const InferenceResult& r) {
                                            CHECK(it == calls++);
                                            CHECK(r.posterior_per_iteration.size() == static_cast<std::size_t>(it + 1));
                                          });
  CHECK(calls == 3);
  CHECK(a.dataset_sizes == std::vector<std::size_t>{24, 36, 48});
  REQUIRE(a.loss_curves.size() == 3);
  CHECK(a.loss_curves[0].size() == 4);
  CHECK(a.loss_curves[1].size() == 2);
  for (const MixtureOfGaussians& p : a.posterior_per_iteration) CHECK_NOTHROW(p.validate());
  CHECK_FALSE(a.halted);

  const InferenceResult b = run_inference(real, kSweep, cfg, EnvConfig{});
  REQUIRE(b.posterior_per_iteration.size() == a.posterior_per_iteration.size());
  for (std::size_t i = 0; i < a.posterior_per_iteration.size(); ++i) {
    CHECK(same_mog(a.posterior_per_iteration[i], b.posterior_per_iteration[i]));
  }

  CHECK_THROWS_AS(run_inference(EpisodeRecord{}, kSweep, cfg, EnvConfig{}), DomainError);
}

TEST_CASE("degeneracy detection") {
  const auto fine = MixtureOfGaussians::single(Vec2(0.5, 0.5), 0.1);
  CHECK_FALSE(is_degenerate(fine));
  Chol2 collapsed = Chol2::Identity() * 1e-200;
  const MixtureOfGaussians dead({1.0, 0.0}, {{0.5, 0.5}, {0.2, 0.2}}, {collapsed, Chol2::Identity()});
  CHECK(is_degenerate(dead));
  const MixtureOfGaussians shared({0.5, 0.5}, {{0.5, 0.5}, {0.2, 0.2}}, {collapsed, Chol2::Identity()});
  CHECK_FALSE(is_degenerate(shared));
}
