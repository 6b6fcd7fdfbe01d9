#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include "msw/error.hpp"
#include "msw/harness.hpp"
#include "msw/rng.hpp"

using namespace msw;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string first_line(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  return line;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("msw_harness_" + name);
  fs::remove_all(p);
  return p;
}

ExperimentConfig tiny(ExperimentKind kind, const fs::path& out) {
  auto c = default_config(kind);
  c.output = out;
  c.seed = 17;
  switch (kind) {
    case ExperimentKind::sw2_rate:
      c.m_values = {64, 128, 256};
      c.trials = 3;
      c.options["restarts"] = 3;
      break;
    case ExperimentKind::dkw_scan:
      c.m_values = {200, 400};
      c.trials = 3;
      c.options["n_dirs"] = 5;
      c.options["t_grid"] = 9;
      c.options["sandwich"] = true;
      break;
    case ExperimentKind::lower_bound_witness:
      c.trials = 200;
      break;
    case ExperimentKind::dm_oscillation:
      c.trials = 2;
      c.options["norm"] = {{"kind", "linf"}, {"n", 60}};
      c.options["m"] = 300;
      c.options["n_dirs"] = 24;
      break;
    case ExperimentKind::h_statistics:
      c.m_values = {50, 100};
      c.trials = 2;
      break;
  }
  return c;
}

}  // namespace

TEST_CASE("fit_rate") {
  std::vector<std::pair<double, double>> pts;
  for (int k = 8; k <= 14; ++k) {
    const double m = std::ldexp(1.0, k);
    pts.emplace_back(m, 3.0 * std::pow(m, -0.25));
  }
  const auto f = fit_rate(pts);
  CHECK(std::abs(f.slope + 0.25) <= 1e-12);
  CHECK(f.intercept == doctest::Approx(std::log(3.0)).epsilon(1e-12));
  CHECK(f.r_squared == doctest::Approx(1.0));
  CHECK(f.points.size() == 7);
  CHECK(f.points[0].first == doctest::Approx(std::log(256.0)));

  std::vector<std::pair<double, double>> flat{{10, 2.0}, {20, 2.0}, {40, 2.0}};
  const auto g = fit_rate(flat);
  CHECK(g.slope == 0.0);
  CHECK(g.r_squared >= 0.0);
  CHECK(g.r_squared <= 1.0);

  std::vector<std::pair<double, double>> noisy{{10, 1.0}, {20, 3.0}, {40, 0.5}, {80, 2.0}};
  const auto h = fit_rate(noisy);
  CHECK(h.r_squared >= 0.0);
  CHECK(h.r_squared <= 1.0);
  CHECK(std::isfinite(h.slope));

  CHECK_THROWS_AS(fit_rate({{1, 1}, {2, 1}}), ParameterError);
  CHECK_THROWS_AS(fit_rate({{1, 1}, {2, 0}, {3, 1}}), DomainError);
  CHECK_THROWS_AS(fit_rate({{1, 1}, {2, -1}, {3, 1}}), DomainError);
}

TEST_CASE("csv formatting") {
  msw::Rng rng(1);
  for (int k = 0; k < 1000; ++k) {
    const double x = (rng.uniform() - 0.5) * std::pow(10.0, 40 * rng.uniform() - 20);
    CHECK(std::strtod(format_double(x).c_str(), nullptr) == x);
  }
  CsvTable t({"a", "b", "c"});
  t.row().add(std::size_t{1}).add(0.1).add("x");
  t.row().add(std::size_t{2}).add(true).add(1.0 / 3.0);
  CHECK(t.str() == "a,b,c\n1,0.10000000000000001,x\n2,1,0.33333333333333331\n");
  CHECK(t.rows() == 2);
  CHECK_THROWS(t.row().add(1.0).add(2.0).add(3.0).add(4.0));
}

TEST_CASE("configuration") {
  const nlohmann::json j = {
      {"sw2_rate", {{"distribution", {{"kind", "cube"}, {"dim", 3}}}, {"m_values", {16, 32}}, {"trials", 4},
                    {"seed", 9}, {"options", {{"restarts", 2}}}}},
      {"witness", {{"m_values", {100}}, {"trials", 10}}}};
  const auto c = config_from_json(j, ExperimentKind::sw2_rate);
  CHECK(c.kind == ExperimentKind::sw2_rate);
  CHECK(c.m_values == std::vector<std::size_t>{16, 32});
  CHECK(c.trials == 4);
  CHECK(c.seed == 9);
  CHECK(c.options.at("restarts") == 2);
  CHECK(c.spec_for(16).kind == DistributionKind::rademacher_cube);

  const auto w = config_from_json(j, ExperimentKind::lower_bound_witness);
  CHECK(w.trials == 10);

  const nlohmann::json flat = {{"experiment", "hstat"}, {"m_values", {40}}, {"trials", 1}};
  CHECK(config_from_json(flat, ExperimentKind::h_statistics).m_values.size() == 1);

  CHECK_THROWS_AS(config_from_json({{"trials", 0}}, ExperimentKind::sw2_rate), ConfigError);
  CHECK_THROWS_AS(config_from_json({{"m_values", nlohmann::json::array()}}, ExperimentKind::sw2_rate), ConfigError);
  CHECK_THROWS_AS(config_from_json({{"unexpected", 1}}, ExperimentKind::sw2_rate), ConfigError);
  CHECK_THROWS_AS(experiment_kind_from_string("nope"), ConfigError);
  CHECK(experiment_kind_from_string("sw2-rate") == ExperimentKind::sw2_rate);
  CHECK(experiment_kind_from_string("dm") == ExperimentKind::dm_oscillation);
  CHECK_THROWS_AS(load_config("/nonexistent/config.json", ExperimentKind::sw2_rate), ConfigError);

  // per-m calibration of the two-point radial law
  ExperimentConfig s = default_config(ExperimentKind::sw2_rate);
  s.distribution = {{"kind", "sphere_radial"}, {"dim", 4}, {"radial", {{"kind", "two_point_calibrated"}}}};
  const auto a = s.spec_for(64), b = s.spec_for(256);
  CHECK(std::get<TwoPointRadial>(a.radial->law).p == doctest::Approx(1.0 / 128));
  CHECK(std::get<TwoPointRadial>(b.radial->law).p == doctest::Approx(1.0 / 512));
}

TEST_CASE("parallel map keeps index order") {
  const std::function<double(std::size_t)> f = [](std::size_t i) {
    msw::Rng r(split_seed(5, i));
    double s = 0;
    for (int k = 0; k < 1000; ++k) s += r.normal();
    return s;
  };
  const auto a = parallel_map<double>(50, 1, f);
  const auto b = parallel_map<double>(50, 4, f);
  CHECK(a == b);
  const std::function<int(std::size_t)> bad = [](std::size_t i) -> int {
    if (i == 7) throw ParameterError("boom");
    return 0;
  };
  CHECK_THROWS_AS(parallel_map<int>(20, 3, bad), ParameterError);
}

TEST_CASE("thread count from the environment") {
  ::setenv("MSW_THREADS", "3", 1);
  CHECK(thread_count() == 3);
  ::setenv("MSW_THREADS", "0", 1);
  CHECK(thread_count() >= 1);
  ::unsetenv("MSW_THREADS");
  CHECK(thread_count() >= 1);
}

TEST_CASE("trial seeds do not collide") {
  std::set<std::uint64_t> seen;
  for (std::uint64_t t = 0; t < 10000; ++t) seen.insert(split_seed(123, t));
  CHECK(seen.size() == 10000);
}

TEST_CASE("campaign schemas and determinism") {
  struct Case {
    ExperimentKind kind;
    std::string file;
    std::string header;
  };
  const std::vector<Case> cases{
      {ExperimentKind::sw2_rate, "sw2_rate.csv", "trial,m,sw2_lower_bound,rho,method"},
      {ExperimentKind::lower_bound_witness, "witness.csv", "trial,m,delta,w2,flag"},
      {ExperimentKind::dm_oscillation, "dm_two_stage.csv", "trial,norm,n,d,m,d_star,lambda,oscillation"},
      {ExperimentKind::dkw_scan, "dkw_scan_records_m200.csv", "trial,theta_id,u_or_t,F,F_m,bound,ratio,violated"},
      {ExperimentKind::h_statistics, "hstat.csv", "trial,m,d,s,h,rho,sigma_max,sigma_min"},
  };
  for (const auto& c : cases) {
    CAPTURE(c.file);
    const auto d1 = scratch(c.file + "_1"), d2 = scratch(c.file + "_2");
    std::ostringstream log;
    REQUIRE(run(tiny(c.kind, d1), log, 1) == 0);
    REQUIRE(run(tiny(c.kind, d2), log, 3) == 0);
    CHECK(first_line(d1 / c.file) == c.header);
    for (const auto& e : fs::directory_iterator(d1)) {
      CAPTURE(e.path());
      CHECK(slurp(e.path()) == slurp(d2 / e.path().filename()));
    }
    auto other = tiny(c.kind, scratch(c.file + "_3"));
    other.seed = 18;
    REQUIRE(run(other, log, 1) == 0);
    CHECK(slurp(d1 / c.file) != slurp(other.output / c.file));
  }
}

TEST_CASE("sw2 rate campaign contents") {
  const auto out = scratch("sw2_contents");
  const auto cfg = tiny(ExperimentKind::sw2_rate, out);
  const auto r = run_sw2_rate(cfg, 1);
  CHECK(r.rows.size() == 9);
  CHECK(r.per_m.size() == 3);
  CHECK(r.fit.points.size() == 3);
  CHECK(r.fit.slope < 0.0);
  for (const auto& row : r.rows) {
    CHECK(row.sw2 > 0.0);
    CHECK(row.method == "gradient_ascent");
  }
}

TEST_CASE("witness campaign contents") {
  const auto r = run_witness_campaign(tiny(ExperimentKind::lower_bound_witness, scratch("w")), 1);
  CHECK(r.rows.size() == 600);
  CHECK(r.bound_failures == 0);
  REQUIRE(r.frequency.size() == 3);
  for (const auto& row : r.rows) CHECK(row.delta == 0.04);
}

TEST_CASE("dm campaign contents") {
  const auto r = run_dm_campaign(tiny(ExperimentKind::dm_oscillation, scratch("dm")), 1);
  CHECK(r.two_stage.size() == 2);
  CHECK(r.gaussian_direct.size() == 2);
  CHECK(r.decomposition_failures == 0);
  CHECK_FALSE(r.decomposition.empty());
  for (const auto& d : r.decomposition) CHECK(d.reconstruction_error <= 1e-10);
}

TEST_CASE("io failure exits with 1") {
  const auto blocker = scratch("blocker");
  { std::ofstream(blocker) << "x"; }
  auto cfg = tiny(ExperimentKind::lower_bound_witness, blocker / "sub");
  std::ostringstream log;
  CHECK(run(cfg, log, 1) == 1);
  fs::remove(blocker);
}
