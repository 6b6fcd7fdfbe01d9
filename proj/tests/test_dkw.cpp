#include <doctest.h>

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <vector>

#include "msw/dkw.hpp"
#include "msw/error.hpp"
#include "msw/maxsliced.hpp"
#include "msw/rng.hpp"
#include "oracles.hpp"

using namespace msw;

TEST_CASE("gamma") {
  CHECK(msw::gamma(0.3) == doctest::Approx(0.3).epsilon(1e-15));
  CHECK(msw::gamma(0.7) == doctest::Approx(0.3).epsilon(1e-15));
  CHECK(msw::gamma(0.5) == 0.5);
  CHECK(msw::gamma(0.0) == 0.0);
  CHECK(msw::gamma(1.0) == 0.0);
  CHECK_THROWS_AS(msw::gamma(-1e-3), DomainError);
  CHECK_THROWS_AS(msw::gamma(1.5), DomainError);
  CHECK_THROWS_AS(msw::gamma(NAN), DomainError);
}

TEST_CASE("config derived level and gate") {
  const DkwConfig c(1e-8);
  CHECK(c.kappa == 400.0);
  const double L = std::log(std::exp(1.0) / 1e-8);
  CHECK(c.small_delta == doctest::Approx(400.0 * 1e-8 * L * L).epsilon(1e-14));
  CHECK(c.small_regime());
  CHECK_FALSE(DkwConfig(0.05).small_regime());
  CHECK(DkwConfig(0.0).small_delta == 0.0);
  CHECK_THROWS_AS(DkwConfig(0.01, 0.5), ParameterError);
  CHECK_THROWS_AS(DkwConfig(-0.1), ParameterError);
  CHECK_THROWS_AS(DkwConfig(0.5), ParameterError);
  // kappa = 1 at the cap (1/10)^2 has delta = log^2(100 e) / 100 > 1/4
  CHECK_THROWS_AS(DkwConfig(0.01, 1.0), ParameterError);
}

TEST_CASE("psi examples") {
  const DkwConfig zero(0.0);
  for (double u : {1e-6, 0.2, 0.5, 0.9}) {
    CHECK(psi(u, zero, +1) == u);
    CHECK(psi(u, zero, -1) == u);
  }
  const DkwConfig c(1e-8);
  // 2 sqrt(5e-9) (1 + ln 2)
  const double expect = 0.5 + 2.0 * std::sqrt(5e-9) * (1.0 + std::log(2.0));
  CHECK(std::abs(psi(0.5, c, +1) - 0.50023945) <= 1e-8);
  CHECK(psi(0.5, c, +1) == doctest::Approx(expect).epsilon(1e-15));
  for (double u : {1e-3, 0.1, 0.37, 0.5, 0.8, 0.999}) {
    // the perturbation is antisymmetric; only the final additions round
    CHECK(std::abs((psi(u, c, +1) - u) + (psi(u, c, -1) - u)) <= 2 * DBL_EPSILON * u);
    CHECK(psi(u, c, +1) >= u);
    CHECK(psi(u, c, -1) <= u);
  }
  CHECK_THROWS_AS(psi(0.0, c, 1), DomainError);
  CHECK_THROWS_AS(psi(1.0, c, 1), DomainError);
  CHECK_THROWS_AS(psi(0.5, c, 0), ParameterError);
}

TEST_CASE("psi derivative against central differences") {
  const DkwConfig c(1e-4, 400.0);
  msw::Rng rng(5);
  for (int k = 0; k < 200; ++k) {
    double u = 0.01 + 0.98 * rng.uniform();
    if (std::abs(u - 0.5) < 1e-3) continue;
    for (int s : {-1, 1}) {
      const double h = 1e-7;
      const double fd = (psi(u + h, c, s) - psi(u - h, c, s)) / (2 * h);
      CHECK(std::abs(psi_derivative(u, c, s) - fd) <= 1e-5);
    }
  }
}

TEST_CASE("psi properties") {
  const DkwConfig c(1e-8, 400.0);
  const auto r = psi_properties_check(c, 10000);
  CHECK(r.passed());
  CHECK(r.grid_n == 10000);
  CHECK(r.closeness_margin <= 1.0);
  const double g = 0.5;
  const double expect = 2.0 * std::sqrt(1e-8 * g) * std::log(std::exp(1.0) / g) / (g / 10.0);
  CHECK(r.closeness_margin_at_half == doctest::Approx(expect).epsilon(1e-12));
  CHECK(r.closeness_margin_at_half <= 1.0);
  CHECK(r.derivative_margin <= 1.0);

  CHECK_THROWS_AS(psi_properties_check(DkwConfig(1e-5, 400.0), 100), ParameterError);
  CHECK_THROWS_AS(psi_properties_check(DkwConfig(1e-8, 100.0), 100), ParameterError);
  CHECK_THROWS_AS(psi_properties_check(c, 1), ParameterError);
}

TEST_CASE("psi continuity on a grid") {
  const DkwConfig c(1e-8);
  const std::size_t n = 5000;
  const double a = c.small_delta, h = (1 - 2 * a) / (n - 1);
  for (int s : {-1, 1}) {
    double prev = psi(a, c, s);
    for (std::size_t k = 1; k < n; ++k) {
      const double u = a + h * static_cast<double>(k);
      const double lo = std::min(u - h, 1 - u);
      const double gmin = std::max(std::min(lo, u), a);
      const double lip = 1.0 + 3.0 * std::sqrt(c.delta_cap / gmin) * std::log(std::exp(1.0) / gmin);
      const double cur = psi(u, c, s);
      CHECK(std::abs(cur - prev) <= h * lip * (1 + 1e-9));
      prev = cur;
    }
  }
}

namespace {

std::vector<Vector> dirs_of(std::size_t d, std::size_t n, std::uint64_t seed) {
  return random_directions(d, n, seed);
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

TEST_CASE("dkw scan structure and exact counts") {
  const auto spec = DistributionSpec::standard_gaussian(3);
  const auto s = sample(spec, 300, 11);
  const auto dirs = dirs_of(3, 5, 2);
  const DkwConfig c(0.05);
  const auto r = dkw_scan(s, spec, c, dirs, std::size_t{19});
  CHECK(r.m == 300);
  CHECK(r.probes + r.excluded == 5 * 19);
  CHECK(r.violations <= r.probes);
  CHECK(r.worst_ratio >= 0.0);
  CHECK(r.records.size() == 95);
  for (const auto& p : r.records) {
    const Vector& th = dirs[p.theta_id];
    std::size_t count = 0;
    for (std::size_t i = 0; i < s.rows(); ++i)
      if (s.entries.row(static_cast<Eigen::Index>(i)).dot(th) <= p.t) ++count;
    CHECK(p.count == count);
    CHECK(p.F_m == static_cast<double>(count) / 300.0);
    CHECK(p.F == doctest::Approx(oracle::normal_cdf(p.t)).epsilon(1e-12));
    if (!p.excluded) {
      const double g = std::min(p.F, 1 - p.F);
      CHECK(p.bound == doctest::Approx(std::sqrt(0.05 * g) * std::log(std::exp(1.0) / g)));
      CHECK(p.violated == (p.ratio > 1.0));
      CHECK(p.ratio_nolog >= p.ratio);
    }
  }
  // determinism
  const auto again = dkw_scan(s, spec, c, dirs, std::size_t{19});
  REQUIRE(again.records.size() == r.records.size());
  CHECK(again.violations == r.violations);
  CHECK(again.worst_ratio == r.worst_ratio);
  for (std::size_t k = 0; k < r.records.size(); ++k) {
    CHECK(again.records[k].F == r.records[k].F);
    CHECK(again.records[k].count == r.records[k].count);
  }
}

TEST_CASE("dkw scan band gate and large samples") {
  const auto spec = DistributionSpec::standard_gaussian(2);
  const auto s = sample(spec, 200000, 3);
  const auto dirs = dirs_of(2, 4, 9);
  const DkwConfig c(0.05);
  const std::vector<double> tails{0.001, 0.01, 0.03, 0.97, 0.995};
  const auto gate = dkw_scan(s, spec, c, dirs, tails);
  CHECK(gate.probes == 0);
  CHECK(gate.excluded == 20);
  CHECK(gate.violations == 0);

  const auto big = dkw_scan(s, spec, c, dirs, std::size_t{99});
  CHECK(big.violations == 0);
  CHECK(big.probes > 0);
  CHECK(big.worst_ratio < 1.0);
}

TEST_CASE("dkw scan sees violations when the bound is tight") {
  const auto spec = DistributionSpec::laplace_product(3);
  const auto s = sample(spec, 100, 8);
  const auto r = dkw_scan(s, spec, DkwConfig(1e-4), dirs_of(3, 10, 4), std::size_t{49});
  CHECK(r.violations > 0);
  CHECK(r.worst_ratio > 1.0);
}

TEST_CASE("dkw scan records skipped directions") {
  const auto spec = DistributionSpec::rademacher_cube(25);
  const auto s = sample(spec, 50, 1);
  ScanOptions o;
  o.marginal.mc_budget = 0;
  Vector e = Vector::Zero(25);
  e[0] = 1.0;
  std::vector<Vector> dirs{e};
  for (auto& v : dirs_of(25, 2, 7)) dirs.push_back(v);
  const auto r = dkw_scan(s, spec, DkwConfig(0.05), dirs, std::size_t{9}, o);
  CHECK(r.skipped_directions == 2);
  CHECK(r.skip_reasons.size() == 2);
  CHECK(r.probes + r.excluded == 9);
}

TEST_CASE("merge is associative") {
  const auto spec = DistributionSpec::standard_gaussian(2);
  const auto dirs = dirs_of(2, 3, 1);
  const DkwConfig c(0.01);
  std::vector<ViolationReport> parts;
  for (std::uint64_t t = 0; t < 3; ++t) parts.push_back(dkw_scan(sample(spec, 150, t), spec, c, dirs, std::size_t{9}));
  ViolationReport left = parts[0];
  left.merge(parts[1]);
  left.merge(parts[2]);
  ViolationReport bc = parts[1];
  bc.merge(parts[2]);
  ViolationReport right = parts[0];
  right.merge(bc);
  CHECK(left.probes == right.probes);
  CHECK(left.violations == right.violations);
  CHECK(left.worst_ratio == right.worst_ratio);
  CHECK(left.records.size() == right.records.size());
}

TEST_CASE("dkw violation rate does not grow with m") {
  const auto spec = DistributionSpec::standard_gaussian(5);
  const double delta = 0.05;
  const DkwConfig c(delta);
  std::vector<double> small, large;
  ScanOptions o;
  o.keep_records = false;
  for (std::uint64_t t = 0; t < 20; ++t) {
    const auto dirs = dirs_of(5, 50, 1000 + t);
    small.push_back(dkw_scan(sample(spec, 800, 2 * t), spec, c, dirs, std::size_t{99}, o).violation_rate());
    large.push_back(dkw_scan(sample(spec, 6400, 2 * t + 1), spec, c, dirs, std::size_t{99}, o).violation_rate());
  }
  CHECK(mean(large) <= mean(small));
}

TEST_CASE("quantile sandwich") {
  const auto spec = DistributionSpec::standard_gaussian(2);
  const auto dirs = dirs_of(2, 6, 3);

  SUBCASE("collapsed interval") {
    const auto s = sample(spec, 400, 2);
    const auto r = quantile_sandwich_check(s, spec, DkwConfig(0.0), dirs, 25);
    CHECK(r.probes == 6 * 25);
    for (const auto& p : r.records) CHECK(p.lower == p.upper);
    CHECK(r.passes + r.failures() == r.probes);
  }

  SUBCASE("implication audit") {
    const DkwConfig c(1e-6);
    for (std::uint64_t t = 0; t < 10; ++t) {
      const auto s = sample(spec, 500 * (t + 1), 40 + t);
      const auto r = quantile_sandwich_check(s, spec, c, dirs, 200);
      CHECK(r.implication_breaches == 0);
      CHECK(r.failures() <= r.aligned_violations);
      for (const auto& p : r.records) {
        CHECK(p.u >= c.small_delta);
        CHECK(p.u <= 1 - c.small_delta);
        CHECK(p.lower <= p.upper);
      }
    }
  }

  SUBCASE("pass rate improves with m") {
    const DkwConfig c(1e-6);
    std::vector<double> a, b;
    for (std::uint64_t t = 0; t < 20; ++t) {
      const auto d = dirs_of(2, 10, 70 + t);
      a.push_back(quantile_sandwich_check(sample(spec, 3000, 3 * t), spec, c, d, 100).pass_rate());
      b.push_back(quantile_sandwich_check(sample(spec, 6000, 3 * t + 1), spec, c, d, 100).pass_rate());
    }
    CHECK(mean(b) >= mean(a));
  }

  SUBCASE("gates") {
    const auto s = sample(spec, 100, 2);
    CHECK_THROWS_AS(quantile_sandwich_check(s, spec, DkwConfig(0.05), dirs, 10), ParameterError);
    CHECK_THROWS_AS(quantile_sandwich_check(s, spec, DkwConfig(1e-6), dirs, 0), ParameterError);
    CHECK_THROWS_AS(quantile_sandwich_check(s, DistributionSpec::standard_gaussian(3), DkwConfig(1e-6),
                                            dirs, 10),
                    ShapeError);
  }
}
