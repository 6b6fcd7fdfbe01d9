#include <doctest.h>

#include <cmath>
#include <vector>

#include "msw/distributions.hpp"
#include "msw/error.hpp"
#include "msw/marginal.hpp"
#include "msw/rng.hpp"
#include "oracles.hpp"

using namespace msw;

namespace {

std::vector<double> unit(std::vector<double> v) {
  double n = 0.0;
  for (double x : v) n += x * x;
  n = std::sqrt(n);
  for (double& x : v) x /= n;
  return v;
}

std::vector<double> e1(std::size_t d) {
  std::vector<double> v(d, 0.0);
  v[0] = 1.0;
  return v;
}

struct Case {
  DistributionSpec spec;
  std::vector<double> theta;
};

std::vector<Case> closed_form_cases() {
  return {
      {DistributionSpec::standard_gaussian(3), unit({1, 2, 3})},
      {DistributionSpec::laplace_product(1), e1(1)},
      {DistributionSpec::laplace_product(3), unit({0.3, -0.5, 0.9})},
      {DistributionSpec::sphere_radial(2, calibrate_two_point(2, 50)), unit({1, 1})},
      {DistributionSpec::sphere_radial(3, RadialLaw::two_point(std::sqrt(3.0), 0.0, 1.0)), e1(3)},
      {DistributionSpec::sphere_radial(5, calibrate_two_point(5, 400)), e1(5)},
      {DistributionSpec::sphere_radial(4, RadialLaw::dm_example()), e1(4)},
  };
}

}  // namespace

TEST_CASE("quantile examples") {
  const auto g = DistributionSpec::standard_gaussian(4);
  const auto th = unit({1, -1, 2, 0.5});
  CHECK(marginal_quantile(g, th, 0.5).value == 0.0);
  const auto q = marginal_quantile(g, e1(4), 0.841345);
  CHECK(std::abs(q.value - 1.0) <= 1e-4);
  CHECK(q.backend == QuantileBackend::closed_form);
  CHECK(std::abs(q.value - oracle::normal_quantile(0.841345)) <= 1e-12);

  const auto c = marginal_quantile(DistributionSpec::rademacher_cube(1), e1(1), 0.25);
  CHECK(c.value == -1.0);
  CHECK(c.backend == QuantileBackend::enumerated);
  CHECK(marginal_quantile(DistributionSpec::rademacher_cube(1), e1(1), 0.5).value == -1.0);
  CHECK(marginal_quantile(DistributionSpec::rademacher_cube(1), e1(1), 0.5000001).value == 1.0);
}

TEST_CASE("quantile errors") {
  const auto g = DistributionSpec::standard_gaussian(2);
  CHECK_THROWS_AS(marginal_quantile(g, e1(2), 0.0), DomainError);
  CHECK_THROWS_AS(marginal_quantile(g, e1(2), 1.0), DomainError);
  CHECK_THROWS_AS(marginal_quantile(g, std::vector<double>{1.0, 1e-5}, 0.3), DomainError);
  CHECK_THROWS_AS(marginal_quantile(g, e1(3), 0.3), ShapeError);

  const auto cube = DistributionSpec::rademacher_cube(21);
  std::vector<double> flat(21, 1.0 / std::sqrt(21.0));
  MarginalOptions no_mc;
  no_mc.mc_budget = 0;
  CHECK_THROWS_AS(marginal_quantile(cube, flat, 0.3, no_mc), BackendUnavailable);
  // Coordinate directions stay enumerable in any dimension.
  CHECK(marginal_quantile(cube, e1(21), 0.3, no_mc).backend == QuantileBackend::enumerated);

  MarginalOptions small;
  small.mc_budget = 200'000;
  const auto q = marginal_quantile(cube, flat, 0.841345, small);
  CHECK(q.backend == QuantileBackend::monte_carlo_reference);
  CHECK(std::abs(q.value - 1.0) <= 0.25);  // CLT scale, coarse lattice
}

TEST_CASE("gaussian cells against the antiderivative oracle") {
  GaussianMarginal g;
  const auto c = g.cell_integrals(1, 2);
  CHECK(std::abs(c.first + 0.3989423) <= 1e-7);
  CHECK(std::abs(c.first + 1.0 / std::sqrt(2.0 * M_PI)) <= 1e-14);
  for (std::size_t m : {3u, 10u, 101u}) {
    const auto table = g.cell_table(m);
    for (std::size_t i = 1; i <= m; ++i) {
      const double a = (i - 1.0) / m, b = static_cast<double>(i) / m;
      CHECK(std::abs(table[i - 1].first - oracle::normal_cell_first(a, b)) <= 1e-12);
      CHECK(std::abs(table[i - 1].first - g.cell_integrals(i, m).first) <= 1e-15);
    }
  }
  CHECK_THROWS_AS(g.cell_integrals(0, 3), ParameterError);
  CHECK_THROWS_AS(g.cell_integrals(4, 3), ParameterError);
}

TEST_CASE("cell tables: symmetry, unit second moment, monotone profile") {
  for (const auto& c : closed_form_cases()) {
    const auto q = make_marginal(c.spec, c.theta);
    INFO(c.spec.id());
    CHECK(std::abs(q->second_moment() - 1.0) <= 1e-6);
    for (std::size_t m : {1u, 2u, 7u, 64u, 333u}) {
      const auto t = q->cell_table(m);
      double s2 = 0.0;
      for (std::size_t i = 1; i <= m; ++i) {
        s2 += t[i - 1].second;
        CHECK(std::abs(t[i - 1].first + t[m - i].first) <= 1e-12);
        if (i > 1) CHECK(t[i - 1].first >= t[i - 2].first - 1e-15);
        CHECK(t[i - 1].second >= 0.0);
      }
      CHECK(std::abs(s2 - 1.0) <= 1e-8);
      if (m <= 64) {
        for (std::size_t i = 1; i <= m; ++i) {
          const auto direct = q->cell_integrals(i, m);
          CHECK(std::abs(direct.first - t[i - 1].first) <= 1e-12);
          CHECK(std::abs(direct.second - t[i - 1].second) <= 1e-12);
        }
      }
    }
  }
}

TEST_CASE("right-inverse contract on every backend") {
  auto cases = closed_form_cases();
  cases.push_back({DistributionSpec::rademacher_cube(4), unit({1, 2, 3, 4})});
  cases.push_back({DistributionSpec::rademacher_cube(3), e1(3)});
  cases.push_back({DistributionSpec::sphere_radial(1, RadialLaw::two_point(0.5, 0.2, 3.0)), e1(1)});
  MarginalOptions mc;
  mc.mc_budget = 50'000;
  mc.laplace_weight_limit = 0.0;  // force the reference law
  const auto mc_q = make_marginal(DistributionSpec::laplace_product(2), unit({1, 1}), mc);
  REQUIRE(mc_q->backend() == QuantileBackend::monte_carlo_reference);

  std::vector<MarginalPtr> qs;
  for (const auto& c : cases) qs.push_back(make_marginal(c.spec, c.theta));
  qs.push_back(mc_q);
  for (const auto& q : qs) {
    double prev = -INFINITY;
    for (int k = 1; k <= 1000; ++k) {
      const double u = k / 1001.0;
      const double x = q->quantile(u);
      CHECK(x >= prev);
      prev = x;
      const double slack = q->discrete() ? 0.0 : 1e-12;
      CHECK(q->cdf(x) >= u - slack);
      const double t = -4.0 + 8.0 * k / 1001.0;
      const double p = q->cdf(t);
      if (p > 0.0 && p < 1.0) CHECK(q->quantile(p) <= t + (q->discrete() ? 0.0 : 1e-9));
    }
  }
}

TEST_CASE("enumerated cube mass") {
  const auto q = make_marginal(DistributionSpec::rademacher_cube(12), unit({1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12}));
  const auto* a = dynamic_cast<const AtomicMarginal*>(q.get());
  REQUIRE(a != nullptr);
  CHECK(std::abs(a->total_mass() - 1.0) <= 1e-12);
  CHECK(std::abs(a->second_moment() - 1.0) <= 1e-12);
  CHECK(std::abs(a->mean()) <= 1e-12);
}

TEST_CASE("atomic interval integrals are exact sums") {
  AtomicMarginal a({-2.0, 1.0, 3.0}, {0.25, 0.5, 0.25}, QuantileBackend::enumerated);
  const auto c = a.interval_integrals(0.2, 0.8);
  // 0.05 at -2, 0.5 at 1, 0.05 at 3
  CHECK(std::abs(c.first - (0.05 * -2.0 + 0.5 + 0.05 * 3.0)) <= 1e-15);
  CHECK(std::abs(c.second - (0.05 * 4.0 + 0.5 + 0.05 * 9.0)) <= 1e-15);
  CHECK(a.cdf(-2.0) == 0.25);
  CHECK(a.cdf(-2.0001) == 0.0);
  CHECK(a.quantile(0.25) == -2.0);
  CHECK(a.quantile(0.2500001) == 1.0);
  CHECK_THROWS_AS(AtomicMarginal({1.0}, {0.5}, QuantileBackend::enumerated), ParameterError);
}

TEST_CASE("sphere marginal against Archimedes and arcsine laws") {
  // d = 3: the first coordinate of a uniform point on S^2 is uniform on [-1, 1].
  const double r1 = 0.8, r2 = 2.0, p = 0.3;
  SphereMarginal s3(3, {r1, r2}, {1.0 - p, p});
  auto unif = [](double t, double r) { return std::clamp(0.5 * (1.0 + t / r), 0.0, 1.0); };
  for (double t = -2.5; t <= 2.5; t += 0.07)
    CHECK(std::abs(s3.cdf(t) - ((1 - p) * unif(t, r1) + p * unif(t, r2))) <= 1e-13);
  // d = 2: arcsine law.
  SphereMarginal s2(2, {1.5}, {1.0});
  for (double t = -1.49; t <= 1.49; t += 0.05)
    CHECK(std::abs(s2.cdf(t) - (0.5 + std::asin(t / 1.5) / M_PI)) <= 1e-13);
  // Single radius on S^2: F^{-1}(u) = r (2u - 1), cells in closed form.
  SphereMarginal one(3, {std::sqrt(3.0)}, {1.0});
  const std::size_t m = 9;
  const auto t = one.cell_table(m);
  for (std::size_t i = 1; i <= m; ++i) {
    const double a = (i - 1.0) / m, b = double(i) / m, r = std::sqrt(3.0);
    const double first = r * ((b * b - b) - (a * a - a));
    const double second = r * r * (std::pow(2 * b - 1, 3) - std::pow(2 * a - 1, 3)) / 6.0;
    CHECK(std::abs(t[i - 1].first - first) <= 1e-13);
    CHECK(std::abs(t[i - 1].second - second) <= 1e-13);
  }
}

TEST_CASE("sphere heavy tail: inert tail is skipped, live tail keeps unit variance") {
  auto inert = SphereMarginal::for_radial(4, RadialLaw::dm_example());
  CHECK_FALSE(inert->tail_evaluated());
  auto live = SphereMarginal::for_radial(3, RadialLaw::heavy_tail(11.0, 2.0, 1e-2));
  CHECK(live->tail_evaluated());
  CHECK(std::abs(live->second_moment() - 1.0) <= 1e-9);
  // Against Monte Carlo at a few levels.
  const auto spec = DistributionSpec::sphere_radial(3, RadialLaw::heavy_tail(11.0, 2.0, 1e-2));
  const auto s = sample(spec, 400'000, 77);
  const Eigen::VectorXd x = s.entries.col(0);
  for (double t : {-3.0, -1.5, -0.4, 0.9, 2.6}) {
    const double emp = (x.array() <= t).cast<double>().mean();
    const double f = live->cdf(t);
    CHECK(std::abs(emp - f) <= 5.0 * std::sqrt(f * (1 - f) / 4e5) + 1e-6);
  }
}

TEST_CASE("Laplace mixture against numerical convolution") {
  const auto theta = unit({0.6, 0.8});
  const auto q = LaplaceMixtureMarginal::for_direction(theta, 1e8);
  REQUIRE(q != nullptr);
  for (double t : {-4.0, -1.3, -0.2, 0.0, 0.7, 2.2}) {
    CHECK(std::abs(q->cdf(t) - oracle::laplace_pair_cdf(theta[0], theta[1], t)) <= 1e-9);
  }
  std::vector<double> same{M_SQRT1_2, -M_SQRT1_2};
  CHECK(LaplaceMixtureMarginal::for_direction(same, 1e8) == nullptr);
  // Coinciding coefficients fall back to the reference law.
  MarginalOptions mc;
  mc.mc_budget = 100'000;
  CHECK(make_marginal(DistributionSpec::laplace_product(2), same, mc)->backend() ==
        QuantileBackend::monte_carlo_reference);
  // Single coordinate: closed-form quantile.
  const auto l1 = make_marginal(DistributionSpec::laplace_product(3), std::vector<double>{0, -1, 0});
  CHECK(std::abs(l1->quantile(0.1) - std::log(0.2) / std::sqrt(2.0)) <= 1e-14);
}

TEST_CASE("Laplace mixture matches Monte Carlo projections") {
  const auto spec = DistributionSpec::laplace_product(5);
  const auto theta = unit({0.1, -0.4, 0.5, 0.9, 0.25});
  const auto q = make_marginal(spec, theta);
  REQUIRE(q->backend() == QuantileBackend::closed_form);
  const auto s = sample(spec, 400'000, 5);
  Eigen::Map<const Eigen::VectorXd> th(theta.data(), 5);
  const Eigen::VectorXd proj = s.entries * th;
  for (double t : {-2.5, -1.0, -0.3, 0.4, 1.7}) {
    const double emp = (proj.array() <= t).cast<double>().mean();
    const double f = q->cdf(t);
    CHECK(std::abs(emp - f) <= 5.0 * std::sqrt(f * (1 - f) / 4e5));
  }
}

TEST_CASE("quadrature matches closed-form cells") {
  GaussianMarginal g;
  auto qf = [&](double u) { return g.quantile(u); };
  for (std::size_t m : {1u, 4u, 13u}) {
    for (std::size_t i = 1; i <= m; ++i) {
      const auto exact = g.cell_integrals(i, m);
      const auto num = quadrature_interval_integrals(qf, (i - 1.0) / m, double(i) / m);
      CHECK(std::abs(num.first - exact.first) <= 1e-10 * std::max(1.0, std::abs(exact.first)));
      CHECK(std::abs(num.second - exact.second) <= 1e-10 * std::max(1.0, exact.second));
    }
  }
  auto wild = [](double u) { return std::sin(1.0 / (u * (1.0 - u))) / (u * (1.0 - u)); };
  CHECK_THROWS_AS(quadrature_interval_integrals(wild, 0.0, 1.0, 1e-14), NumericError);
}
