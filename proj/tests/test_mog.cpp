#include <doctest.h>

#include <cmath>
#include <numbers>

#include <Eigen/LU>

#include "dlo/mog.hpp"

using namespace dlo;

namespace {

Chol2 iso(double s) { return Chol2::Identity() * s; }

MixtureOfGaussians four(std::vector<double> w) {
  return MixtureOfGaussians(std::move(w), {{0.2, 0.2}, {0.8, 0.2}, {0.2, 0.8}, {0.8, 0.8}},
                            {iso(0.1), iso(0.1), iso(0.1), iso(0.1)});
}

std::vector<int> counts(const std::vector<int>& idx, int k) {
  std::vector<int> c(k, 0);
  for (int i : idx) ++c[i];
  return c;
}

}  // namespace

TEST_CASE("construction invariants") {
  CHECK_NOTHROW(four({0.25, 0.25, 0.25, 0.25}).validate());
  CHECK_THROWS_AS(four({0.5, 0.5, 0.5, 0.0}), DomainError);
  CHECK_THROWS_AS(four({1.2, -0.2, 0.0, 0.0}), DomainError);
  Chol2 upper = iso(0.1);
  upper(0, 1) = 0.3;
  CHECK_THROWS_AS(MixtureOfGaussians({1.0}, {{0.5, 0.5}}, {upper}), DomainError);
  CHECK_THROWS_AS(MixtureOfGaussians({1.0}, {{0.5, 0.5}}, {iso(-0.1)}), DomainError);
}

TEST_CASE("log density oracles") {
  const auto unit = MixtureOfGaussians({1.0}, {{0.5, 0.5}}, {Chol2::Identity()});
  CHECK(unit.log_pdf_normalized(Vec2(0.5, 0.5)) == doctest::Approx(-std::log(2 * std::numbers::pi)));
  CHECK(unit.log_pdf_normalized(Vec2(0.5, 0.5)) == doctest::Approx(-1.8379).epsilon(1e-4));
  CHECK(unit.log_pdf(ParamBox{}.median()) == doctest::Approx(-1.8379).epsilon(1e-4));

  Chol2 l;
  l << 0.2, 0.0, 0.05, 0.1;
  const Vec2 mu(0.3, 0.6), u(0.35, 0.5);
  const Eigen::Matrix2d cov = l * l.transpose();
  const Vec2 d = u - mu;
  const double oracle = -std::log(2 * std::numbers::pi) - 0.5 * std::log(cov.determinant()) -
                        0.5 * d.dot(cov.inverse() * d);
  CHECK(gaussian_log_pdf(u, mu, l) == doctest::Approx(oracle).epsilon(1e-12));

  const auto single = MixtureOfGaussians({1.0}, {{0.2, 0.2}}, {iso(0.1)});
  const auto padded = four({1.0, 0.0, 0.0, 0.0});
  CHECK(padded.log_pdf_normalized(Vec2(0.3, 0.25)) ==
        doctest::Approx(single.log_pdf_normalized(Vec2(0.3, 0.25))));

  const auto tight = MixtureOfGaussians::single(Vec2(0.5, 0.5), 0.01);
  const double far = tight.log_pdf_normalized(Vec2(0.7, 0.5));  // 20 sigma
  CHECK(std::isfinite(far));
  CHECK(far < -100.0);

  const auto mix = four({0.1, 0.2, 0.3, 0.4});
  Rng rng(1);
  for (int i = 0; i < 200; ++i) {
    const Vec2 p(uniform01(rng), uniform01(rng));
    CHECK(std::isfinite(mix.log_pdf_normalized(p)));
  }
}

TEST_CASE("moments") {
  const auto m = four({0.25, 0.25, 0.25, 0.25});
  CHECK(m.mean().x() == doctest::Approx(0.5));
  CHECK(m.mean().y() == doctest::Approx(0.5));
  // within 0.01 + between 0.09
  CHECK(m.mixture_covariance()(0, 0) == doctest::Approx(0.1));
  CHECK(m.mixture_covariance()(0, 1) == doctest::Approx(0.0));
  CHECK(m.weighted_component_covariance()(1, 1) == doctest::Approx(0.01));
}

TEST_CASE("sampling") {
  Rng rng(7);
  const auto delta = MixtureOfGaussians::single(Vec2(0.3, 0.6), 1e-12);
  const SystemParams s = sample(delta, rng);
  const Vec2 u = delta.box().normalize(s);
  CHECK((u - Vec2(0.3, 0.6)).norm() < 1e-6);

  const auto g = MixtureOfGaussians::single(Vec2(0.4, 0.55), 0.1);
  const int n = 10000;
  Vec2 mean = Vec2::Zero();
  for (int i = 0; i < n; ++i) mean += g.box().normalize(sample(g, rng)) / n;
  CHECK(std::abs(mean.x() - 0.4) < 3 * 0.1 / std::sqrt(n));
  CHECK(std::abs(mean.y() - 0.55) < 3 * 0.1 / std::sqrt(n));

  const auto outside = MixtureOfGaussians::single(Vec2(1.4, -0.3), 1e-4);
  for (int i = 0; i < 20; ++i) {
    const SystemParams p = sample(outside, rng);
    CHECK(p.length == ParamBox{}.hi.length);
    CHECK(p.youngs_modulus == ParamBox{}.lo.youngs_modulus);
  }
}

TEST_CASE("systematic selection is exact") {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const double u = uniform01(rng) / 12.0;
    CHECK(counts(systematic_select(std::vector<double>{1, 0, 0, 0}, 12, u), 4) ==
          std::vector<int>{12, 0, 0, 0});
    CHECK(counts(systematic_select(std::vector<double>{0.5, 0.5, 0, 0}, 12, u), 4) ==
          std::vector<int>{6, 6, 0, 0});
    CHECK(counts(systematic_select(std::vector<double>{0.25, 0.25, 0.25, 0.25}, 12, u), 4) ==
          std::vector<int>{3, 3, 3, 3});
  }
  const auto m = four({0.25, 0.25, 0.25, 0.25});
  const auto draws = low_variance_sample(m, 12, rng);
  REQUIRE(draws.size() == 12);
  std::vector<int> quadrant(4, 0);
  for (const SystemParams& p : draws) {
    CHECK(m.box().contains(p));
    const Vec2 v = m.box().normalize(p);
    ++quadrant[(v.x() > 0.5 ? 1 : 0) + (v.y() > 0.5 ? 2 : 0)];
  }
  for (int q : quadrant) CHECK(q >= 1);
}

TEST_CASE("densities") {
  const Density u = UniformBox{};
  CHECK(u.is_uniform());
  CHECK(u.pdf_normalized(Vec2(0.3, 0.9)) == 1.0);
  Rng rng(4);
  for (const SystemParams& p : u.sample_batch(100, rng)) CHECK(u.box().contains(p));
  const Density m = four({0.25, 0.25, 0.25, 0.25});
  CHECK_FALSE(m.is_uniform());
  CHECK(m.mixture() != nullptr);
}

TEST_CASE("prior correction") {
  const auto q = four({0.1, 0.2, 0.3, 0.4});
  const Density uniform = UniformBox{};
  const auto same = prior_correct(q, uniform, uniform);
  CHECK(same.weights() == q.weights());

  const auto one = MixtureOfGaussians::single(Vec2(0.5, 0.5), 0.2);
  const Density concentrated = MixtureOfGaussians({1.0}, {{0.2, 0.2}}, {iso(0.05)});
  CHECK(prior_correct(one, concentrated, uniform).weights()[0] == doctest::Approx(1.0));

  // proposal heavy at the first mean: that component is suppressed
  const auto even = four({0.25, 0.25, 0.25, 0.25});
  const auto eq1 = prior_correct(even, concentrated, uniform, CorrectionMode::kEq1);
  for (int k = 1; k < 4; ++k) CHECK(eq1.weights()[0] < eq1.weights()[k]);
  const auto alg1 = prior_correct(even, concentrated, uniform, CorrectionMode::kAlg1);
  for (int k = 1; k < 4; ++k) CHECK(alg1.weights()[0] > alg1.weights()[k]);
  double sum = 0.0;
  for (double w : eq1.weights()) sum += w;
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));

  // a vanishing proposal density gives an infinite ratio: that component is dropped
  const PdfFn zero_at_first = [](const Vec2& u) { return u.x() < 0.5 && u.y() < 0.5 ? 0.0 : 1.0; };
  const PdfFn flat = [](const Vec2&) { return 1.0; };
  const auto dropped = prior_correct(even, zero_at_first, flat);
  CHECK(dropped.weights()[0] == 0.0);
  CHECK(dropped.weights()[1] == doctest::Approx(1.0 / 3));

  CHECK(parse_correction_mode("eq1") == CorrectionMode::kEq1);
  CHECK(parse_correction_mode("alg1") == CorrectionMode::kAlg1);
  CHECK(to_string(CorrectionMode::kAlg1) == "alg1");
}

TEST_CASE("heatmap") {
  const auto g = MixtureOfGaussians::single(Vec2(0.433, 0.617), 0.05);
  const Heatmap h = grid_density(g, 100, 100);
  CHECK(h.integral >= 0.98);
  CHECK(h.integral <= 1.0);
  Eigen::Index r, c;
  h.density.maxCoeff(&r, &c);
  CHECK(c == 43);
  CHECK(r == 61);
  CHECK(h.length_axis.size() == 100);
  CHECK(h.modulus_axis.front() == doctest::Approx(1e3 + 0.005 * 4.9e4));

  const auto flat = MixtureOfGaussians::single(Vec2(0.5, 0.5), 100.0);
  const Heatmap f = grid_density(flat, 50, 50);
  CHECK(f.density.maxCoeff() / f.density.minCoeff() < 1.5);

  const Heatmap fine = grid_density(four({0.1, 0.2, 0.3, 0.4}), 200, 200);
  CHECK(fine.integral >= 0.9);
  CHECK(fine.integral <= 1.01);
}
