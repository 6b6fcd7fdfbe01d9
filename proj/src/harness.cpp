#include "msw/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <set>

#include "msw/dkw.hpp"
#include "msw/dvoretzky.hpp"
#include "msw/error.hpp"
#include "msw/maxsliced.hpp"
#include "msw/rng.hpp"
#include "msw/transport1d.hpp"

namespace msw {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::sw2_rate: return "sw2_rate";
    case ExperimentKind::dkw_scan: return "dkw_scan";
    case ExperimentKind::lower_bound_witness: return "lower_bound_witness";
    case ExperimentKind::dm_oscillation: return "dm_oscillation";
    case ExperimentKind::h_statistics: return "h_statistics";
  }
  return "unknown";
}

ExperimentKind experiment_kind_from_string(const std::string& raw) {
  std::string name = raw;
  std::replace(name.begin(), name.end(), '-', '_');
  if (name == "sw2_rate") return ExperimentKind::sw2_rate;
  if (name == "dkw_scan" || name == "dkw") return ExperimentKind::dkw_scan;
  if (name == "lower_bound_witness" || name == "witness") return ExperimentKind::lower_bound_witness;
  if (name == "dm_oscillation" || name == "dm") return ExperimentKind::dm_oscillation;
  if (name == "h_statistics" || name == "hstat") return ExperimentKind::h_statistics;
  throw ConfigError("unknown experiment '" + raw + "'");
}

// ---------------------------------------------------------------------------
// Configuration

namespace {

std::vector<std::size_t> powers_of_two(int lo, int hi) {
  std::vector<std::size_t> v;
  for (int k = lo; k <= hi; ++k) v.push_back(std::size_t{1} << k);
  return v;
}

bool calibrated_per_m(const json& dist) {
  return dist.contains("radial") && dist["radial"].value("kind", "") == "two_point_calibrated" &&
         !dist["radial"].contains("m");
}

const std::set<std::string> kKnownKeys{"experiment", "distribution", "m_values", "d_values", "trials",
                                       "seed", "output", "options"};

}  // namespace

void ExperimentConfig::validate() const {
  if (trials < 1) throw ConfigError("trials must be at least 1");
  if (kind == ExperimentKind::dm_oscillation) {
    if (d_values.empty()) throw ConfigError("d_values must be nonempty");
  } else {
    if (m_values.empty()) throw ConfigError("m_values must be nonempty");
    if (std::find(m_values.begin(), m_values.end(), std::size_t{0}) != m_values.end())
      throw ConfigError("sample sizes must be positive");
  }
  if (!options.is_object()) throw ConfigError("options must be an object");
  if (kind != ExperimentKind::lower_bound_witness && kind != ExperimentKind::dm_oscillation) {
    try {
      (void)spec_for(m_values.front());
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw ConfigError(std::string("invalid distribution: ") + e.what());
    }
  }
}

DistributionSpec ExperimentConfig::spec_for(std::size_t m) const {
  json j = distribution;
  if (calibrated_per_m(j)) j["radial"]["m"] = m;
  DistributionSpec s = j.get<DistributionSpec>();
  s.validate();
  return s;
}

ExperimentConfig default_config(ExperimentKind kind) {
  ExperimentConfig c;
  c.kind = kind;
  c.seed = 20240601;
  c.output = "out";
  switch (kind) {
    case ExperimentKind::sw2_rate:
      c.distribution = {{"kind", "standard_gaussian"}, {"dim", 5}};
      c.m_values = powers_of_two(8, 14);
      c.trials = 50;
      c.options = {{"method", "auto"}, {"restarts", 6}, {"step", 0.1}, {"tol", 1e-8}, {"max_iter", 200},
                   {"screening_dirs", 32}, {"polish_restarts", 2}, {"polish_iter", 10},
                   {"include_axes", true}, {"n_dirs", 64}};
      break;
    case ExperimentKind::dkw_scan:
      c.distribution = {{"kind", "standard_gaussian"}, {"dim", 5}};
      c.m_values = {800, 6400};  // 8 d / Delta and 64 d / Delta
      c.trials = 20;
      c.options = {{"delta", 0.05}, {"kappa", 400.0}, {"n_dirs", 50}, {"t_grid", 99}, {"keep_records", true},
                   {"sandwich", false}, {"sandwich_delta", 1e-6}, {"u_grid", 100}};
      break;
    case ExperimentKind::lower_bound_witness:
      c.distribution = {{"kind", "rademacher_cube"}, {"dim", 1}};
      c.m_values = {100, 200, 400};
      c.trials = 10000;
      c.options = {{"delta", 0.04}, {"witness_constant", kWitnessConstant}};
      break;
    case ExperimentKind::dm_oscillation:
      c.distribution = {{"kind", "sphere_radial"}, {"radial", {{"kind", "two_point_calibrated"}}}};
      c.d_values = {2};
      c.trials = 20;
      c.options = {{"norm", {{"kind", "linf"}, {"n", 1000}}}, {"m", "auto"},
                   {"z", {{"kind", "rademacher_cube"}}}, {"n_dirs", 180}, {"s_values", {4}},
                   {"r_values", {16}}, {"c1L", 1.0}, {"decomposition", true}};
      break;
    case ExperimentKind::h_statistics:
      c.distribution = {{"kind", "standard_gaussian"}, {"dim", 5}};
      c.m_values = {256, 1024, 4096};
      c.trials = 10;
      c.options = {{"s_fractions", {0.01, 0.05}}, {"restarts", 4}};
      break;
  }
  return c;
}

ExperimentConfig config_from_json(const json& root, ExperimentKind kind) {
  const std::string name = to_string(kind);
  const json* j = &root;
  if (!root.is_object()) throw ConfigError("configuration must be a JSON object");
  // keyed by canonical name or a CLI alias
  for (const auto& [key, val] : root.items()) {
    if (kKnownKeys.count(key)) continue;
    try {
      if (experiment_kind_from_string(key) == kind) {
        j = &val;
        break;
      }
    } catch (const ConfigError&) {
    }
  }
  ExperimentConfig c = default_config(kind);
  try {
    for (const auto& [key, val] : j->items()) {
      if (kKnownKeys.count(key)) continue;
      bool experiment_key = false;
      try {
        experiment_kind_from_string(key);
        experiment_key = true;
      } catch (const ConfigError&) {
      }
      if (!experiment_key || j != &root) throw ConfigError("unknown configuration key '" + key + "'");
    }
    if (j->contains("experiment") && experiment_kind_from_string(j->at("experiment").get<std::string>()) != kind)
      throw ConfigError("configuration is for experiment '" + j->at("experiment").get<std::string>() + "'");
    if (j->contains("distribution")) c.distribution = j->at("distribution");
    if (j->contains("m_values")) c.m_values = j->at("m_values").get<std::vector<std::size_t>>();
    if (j->contains("d_values")) c.d_values = j->at("d_values").get<std::vector<std::size_t>>();
    if (j->contains("trials")) {
      const auto t = j->at("trials").get<long long>();
      if (t < 1) throw ConfigError("trials must be at least 1");
      c.trials = static_cast<std::size_t>(t);
    }
    if (j->contains("seed")) c.seed = j->at("seed").get<std::uint64_t>();
    if (j->contains("output")) c.output = j->at("output").get<std::string>();
    if (j->contains("options")) {
      if (!j->at("options").is_object()) throw ConfigError("options must be an object");
      for (const auto& [k, v] : j->at("options").items()) c.options[k] = v;
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed configuration: ") + e.what());
  }
  c.validate();
  return c;
}

ExperimentConfig load_config(const fs::path& path, ExperimentKind kind) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open configuration " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("cannot parse " + path.string() + ": " + e.what());
  }
  return config_from_json(j, kind);
}

// ---------------------------------------------------------------------------
// Rate fit, threads, CSV

RateFit fit_rate(const std::vector<std::pair<double, double>>& points) {
  if (points.size() < 3) throw ParameterError("fit_rate: at least three points are required");
  RateFit f;
  for (const auto& [m, v] : points) {
    if (!(m > 0.0)) throw DomainError("fit_rate: sample sizes must be positive");
    if (!(v > 0.0)) throw DomainError("fit_rate: values must be positive");
    f.points.emplace_back(std::log(m), std::log(v));
  }
  const double n = static_cast<double>(f.points.size());
  double mx = 0.0, my = 0.0;
  for (const auto& [x, y] : f.points) {
    mx += x;
    my += y;
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (const auto& [x, y] : f.points) {
    sxx += (x - mx) * (x - mx);
    sxy += (x - mx) * (y - my);
    syy += (y - my) * (y - my);
  }
  if (!(sxx > 0.0)) throw DomainError("fit_rate: sample sizes must not all coincide");
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  // a noiseless fit (including a constant) explains everything
  f.r_squared = syy > 0.0 ? std::clamp(sxy * sxy / (sxx * syy), 0.0, 1.0) : 1.0;
  if (!std::isfinite(f.slope)) throw NumericError("fit_rate: slope is not finite");
  return f;
}

std::size_t thread_count() {
  if (const char* env = std::getenv("MSW_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && v > 0) return static_cast<std::size_t>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

CsvTable::CsvTable(std::vector<std::string> header) : header_(std::move(header)) {
  if (header_.empty()) throw ParameterError("csv: empty header");
}

CsvTable& CsvTable::row() {
  if (rows_ > 0 && col_ != header_.size()) throw ShapeError("csv: previous row is incomplete");
  if (rows_ > 0) body_ += '\n';
  ++rows_;
  col_ = 0;
  return *this;
}

CsvTable& CsvTable::add(const std::string& v) {
  if (rows_ == 0) throw ShapeError("csv: add before row");
  if (col_ == header_.size()) throw ShapeError("csv: too many fields in a row");
  if (col_ > 0) body_ += ',';
  body_ += v;
  ++col_;
  return *this;
}

CsvTable& CsvTable::add(double v) { return add(format_double(v)); }
CsvTable& CsvTable::add(std::size_t v) { return add(std::to_string(v)); }
CsvTable& CsvTable::add(bool v) { return add(std::string(v ? "1" : "0")); }

std::string CsvTable::str() const {
  if (rows_ > 0 && col_ != header_.size()) throw ShapeError("csv: last row is incomplete");
  std::string s;
  for (std::size_t k = 0; k < header_.size(); ++k) {
    if (k) s += ',';
    s += header_[k];
  }
  s += '\n';
  if (rows_ > 0) {
    s += body_;
    s += '\n';
  }
  return s;
}

void CsvTable::write(const fs::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  const std::string s = str();
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
  if (!out) throw std::runtime_error("write to " + path.string() + " failed");
}

// ---------------------------------------------------------------------------
// Campaigns

namespace {

template <class T>
T opt(const ExperimentConfig& c, const std::string& key, T fallback) {
  if (!c.options.contains(key)) return fallback;
  try {
    return c.options.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("option '" + key + "': " + e.what());
  }
}

// Trial t owns stream split(master, t); a sample of size m inside the trial uses split(trial, m).
std::uint64_t trial_seed(const ExperimentConfig& c, std::size_t t) { return split_seed(c.seed, t); }
std::uint64_t sample_seed(const ExperimentConfig& c, std::size_t t, std::size_t m) {
  return split_seed(trial_seed(c, t), m);
}

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

Sw2RateResult run_sw2_rate(const ExperimentConfig& cfg, std::size_t threads) {
  cfg.validate();
  const std::string method = opt<std::string>(cfg, "method", "auto");
  if (method != "auto" && method != "gradient_ascent" && method != "random_search")
    throw ConfigError("sw2_rate: method must be auto, gradient_ascent or random_search");
  AscentOptions ao;
  ao.restarts = opt<std::size_t>(cfg, "restarts", 6);
  ao.step = opt<double>(cfg, "step", 0.1);
  ao.tol = opt<double>(cfg, "tol", 1e-8);
  ao.max_iter = opt<std::size_t>(cfg, "max_iter", 200);
  ao.screening_dirs = opt<std::size_t>(cfg, "screening_dirs", 32);
  ao.polish_iter = opt<std::size_t>(cfg, "polish_iter", 10);
  ao.include_axes = opt<bool>(cfg, "include_axes", true);
  const std::size_t polish_restarts = opt<std::size_t>(cfg, "polish_restarts", 2);
  const std::size_t n_dirs = opt<std::size_t>(cfg, "n_dirs", 64);

  const std::size_t T = cfg.trials, nm = cfg.m_values.size();
  const std::function<Sw2Row(std::size_t)> task = [&](std::size_t k) {
    const std::size_t j = k / T, t = k % T, m = cfg.m_values[j];
    const auto spec = cfg.spec_for(m);
    const auto s = sample(spec, m, sample_seed(cfg, t, m));
    const std::uint64_t opt_seed = split_seed(sample_seed(cfg, t, m), 1);
    SlicedReport rep;
    if (method == "random_search") {
      RandomSearchOptions ro;
      ro.include_axes = ao.include_axes;
      rep = sw2_random_search(s, spec, n_dirs, opt_seed, ro);
    } else {
      AscentOptions o = ao;
      if (!spec.rotation_invariant()) o.restarts = polish_restarts;
      rep = sw2_gradient_ascent(s, spec, opt_seed, o);
    }
    return Sw2Row{t, m, rep.value, rho(s), to_string(rep.method)};
  };
  Sw2RateResult r;
  r.rows = parallel_map<Sw2Row>(T * nm, threads, task);
  std::vector<std::pair<double, double>> pts;
  for (std::size_t j = 0; j < nm; ++j) {
    std::vector<double> v;
    for (std::size_t t = 0; t < T; ++t) v.push_back(r.rows[j * T + t].sw2);
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(T);
    r.per_m.push_back({cfg.m_values[j], mean, median_of(v)});
    pts.emplace_back(static_cast<double>(cfg.m_values[j]), mean);
  }
  if (pts.size() >= 3) r.fit = fit_rate(pts);
  return r;
}

DkwCampaignResult run_dkw_campaign(const ExperimentConfig& cfg, std::size_t threads) {
  cfg.validate();
  const DkwConfig dk(opt<double>(cfg, "delta", 0.05), opt<double>(cfg, "kappa", 400.0));
  const std::size_t n_dirs = opt<std::size_t>(cfg, "n_dirs", 50);
  const std::size_t t_grid = opt<std::size_t>(cfg, "t_grid", 99);
  const bool keep = opt<bool>(cfg, "keep_records", true);
  const bool sandwich = opt<bool>(cfg, "sandwich", false);
  std::optional<DkwConfig> sw;
  if (sandwich) sw.emplace(opt<double>(cfg, "sandwich_delta", 1e-6), opt<double>(cfg, "kappa", 400.0));
  const std::size_t u_grid = opt<std::size_t>(cfg, "u_grid", 100);

  struct Out {
    DkwRow row;
    ViolationReport rep;
  };
  const std::size_t T = cfg.trials, nm = cfg.m_values.size();
  const std::function<Out(std::size_t)> task = [&](std::size_t k) {
    const std::size_t j = k / T, t = k % T, m = cfg.m_values[j];
    const auto spec = cfg.spec_for(m);
    const auto s = sample(spec, m, sample_seed(cfg, t, m));
    const auto dirs = random_directions(spec.dim, n_dirs, split_seed(trial_seed(cfg, t), 0));
    ScanOptions so;
    so.keep_records = keep;
    Out o;
    o.rep = dkw_scan(s, spec, dk, dirs, t_grid, so);
    o.row = {t, m, o.rep.probes, o.rep.excluded, o.rep.violations, o.rep.skipped_directions,
             o.rep.violation_rate(), o.rep.worst_ratio, o.rep.worst_ratio_nolog, 0, 0, 0};
    if (sw) {
      ScanOptions q;
      q.keep_records = false;
      const auto sr = quantile_sandwich_check(s, spec, *sw, dirs, u_grid, q);
      o.row.sandwich_probes = sr.probes;
      o.row.sandwich_passes = sr.passes;
      o.row.implication_breaches = sr.implication_breaches;
    }
    return o;
  };
  auto outs = parallel_map<Out>(T * nm, threads, task);
  DkwCampaignResult r;
  for (std::size_t j = 0; j < nm; ++j) {
    CsvTable tab({"trial", "theta_id", "u_or_t", "F", "F_m", "bound", "ratio", "violated"});
    for (std::size_t t = 0; t < T; ++t) {
      const auto& o = outs[j * T + t];
      r.rows.push_back(o.row);
      for (const auto& p : o.rep.records) {
        if (p.excluded) continue;
        tab.row().add(t).add(p.theta_id).add(p.t).add(p.F).add(p.F_m).add(p.bound).add(p.ratio).add(p.violated);
      }
    }
    if (keep) r.records.emplace_back(cfg.m_values[j], std::move(tab));
  }
  return r;
}

WitnessCampaignResult run_witness_campaign(const ExperimentConfig& cfg, std::size_t threads) {
  cfg.validate();
  const double delta = opt<double>(cfg, "delta", 0.04);
  const double c = opt<double>(cfg, "witness_constant", kWitnessConstant);
  const std::size_t T = cfg.trials, nm = cfg.m_values.size();
  const std::function<WitnessRow(std::size_t)> task = [&](std::size_t k) {
    const std::size_t j = k / T, t = k % T, m = cfg.m_values[j];
    const auto w = bernoulli_witness(m, delta, sample_seed(cfg, t, m), c);
    return WitnessRow{t, m, delta, w.w2, w.event_mass, w.flag};
  };
  WitnessCampaignResult r;
  r.rows = parallel_map<WitnessRow>(T * nm, threads, task);
  const double scale = std::pow(delta, 0.25);
  for (std::size_t j = 0; j < nm; ++j) {
    std::size_t flags = 0;
    for (std::size_t t = 0; t < T; ++t) {
      const auto& w = r.rows[j * T + t];
      if (!w.flag) continue;
      ++flags;
      if (w.w2 < scale * std::sqrt(w.event_mass)) ++r.bound_failures;
    }
    r.frequency.emplace_back(cfg.m_values[j], static_cast<double>(flags) / static_cast<double>(T));
  }
  return r;
}

DmCampaignResult run_dm_campaign(const ExperimentConfig& cfg, std::size_t threads) {
  cfg.validate();
  NormSpec norm;
  try {
    norm = cfg.options.value("norm", json{{"kind", "linf"}, {"n", 1000}}).get<NormSpec>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("dm: bad norm: ") + e.what());
  }
  const auto cd = critical_dimension(norm, 100000, split_seed(cfg.seed, 0xd5));
  const double eg = cd.gaussian_mean;
  json zj = cfg.options.value("z", json{{"kind", "rademacher_cube"}});
  zj["dim"] = norm.n;
  const DistributionSpec z = zj.get<DistributionSpec>();
  const std::size_t n_dirs = opt<std::size_t>(cfg, "n_dirs", 180);
  const auto s_values = opt<std::vector<std::size_t>>(cfg, "s_values", {4});
  const auto r_values = opt<std::vector<std::size_t>>(cfg, "r_values", {16});
  const double c1L = opt<double>(cfg, "c1L", 1.0);
  const bool decompose = opt<bool>(cfg, "decomposition", true);

  struct Out {
    DmRow two, direct;
    std::vector<DecompositionRow> dec;
  };
  const std::size_t T = cfg.trials, nd = cfg.d_values.size();
  const std::function<Out(std::size_t)> task = [&](std::size_t k) {
    const std::size_t j = k / T, t = k % T, d = cfg.d_values[j];
    std::size_t m = 0;
    const json mj = cfg.options.value("m", json("auto"));
    if (mj.is_string() && mj.get<std::string>() == "auto") m = static_cast<std::size_t>(std::ceil(std::pow(cd.d_star, 4)));
    else m = mj.get<std::size_t>();
    json xj = cfg.distribution;
    xj["dim"] = d;
    ExperimentConfig sub = cfg;
    sub.distribution = xj;
    const DistributionSpec x = sub.spec_for(m);
    const std::uint64_t seed = split_seed(trial_seed(cfg, t), d);
    const auto e = build_two_stage(TwoStage{x, z, norm.n, d, m}, seed);
    const auto dirs = probe_directions(d, n_dirs, split_seed(seed, 2));
    const auto two = psi_oscillation(e.gamma, e.D, norm, dirs);
    const auto direct = psi_oscillation(gaussian_direct({norm.n, d}, split_seed(seed, 3)), norm, dirs);
    Out o;
    o.two = {t, norm.n, d, m, norm.name(), cd.d_star, two.lambda, two.mean, two.oscillation};
    o.direct = {t, norm.n, d, m, norm.name(), cd.d_star, direct.lambda, direct.mean, direct.oscillation};
    if (decompose) {
      const auto cn = decomposition_column_norms(e.D, norm);
      for (std::size_t id = 0; id < dirs.size(); ++id)
        for (std::size_t s : s_values)
          for (std::size_t r : r_values) {
            if (s >= m || r > m) throw ConfigError("dm: s must be < m and r <= m");
            const auto dd = decomposition_diagnostics({dirs[id].data(), d}, e.gamma, e.D, s, r, norm, eg, c1L, cn);
            o.dec.push_back({t, d, id, s, r, dd.i_size, dd.ic_j_size, dd.xi_u, dd.phi_r, dd.club_norm,
                             dd.diamond_norm, dd.heart_norm, dd.full_norm, dd.reconstruction_error,
                             dd.heart_terms_bounded});
          }
    }
    return o;
  };
  auto outs = parallel_map<Out>(T * nd, threads, task);
  DmCampaignResult r;
  for (auto& o : outs) {
    r.two_stage.push_back(o.two);
    r.gaussian_direct.push_back(o.direct);
    for (auto& d : o.dec) {
      if (!(d.reconstruction_error <= 1e-10) || !d.heart_bounded || d.i_size != d.s) ++r.decomposition_failures;
      r.decomposition.push_back(d);
    }
  }
  return r;
}

HCampaignResult run_h_campaign(const ExperimentConfig& cfg, std::size_t threads) {
  cfg.validate();
  const auto fractions = opt<std::vector<double>>(cfg, "s_fractions", {0.01, 0.05});
  const auto absolute = opt<std::vector<std::size_t>>(cfg, "s_values", {});
  const std::size_t restarts = opt<std::size_t>(cfg, "restarts", 4);
  const std::size_t T = cfg.trials, nm = cfg.m_values.size();
  const std::function<std::vector<HRow>(std::size_t)> task = [&](std::size_t k) {
    const std::size_t j = k / T, t = k % T, m = cfg.m_values[j];
    const auto spec = cfg.spec_for(m);
    const auto s = sample(spec, m, sample_seed(cfg, t, m));
    std::vector<std::size_t> sv = absolute;
    for (double f : fractions) sv.push_back(std::clamp<std::size_t>(static_cast<std::size_t>(std::ceil(f * static_cast<double>(m))), 1, m));
    std::sort(sv.begin(), sv.end());
    sv.erase(std::unique(sv.begin(), sv.end()), sv.end());
    sv.erase(std::remove_if(sv.begin(), sv.end(), [m](std::size_t v) { return v == 0 || v > m; }), sv.end());
    const auto st = matrix_stats(s, sv, restarts, split_seed(sample_seed(cfg, t, m), 1));
    std::vector<HRow> rows;
    for (const auto& [sz, h] : st.h_values) rows.push_back({t, m, spec.dim, sz, h, st.rho, st.sigma_max, st.sigma_min});
    return rows;
  };
  HCampaignResult r;
  for (auto& v : parallel_map<std::vector<HRow>>(T * nm, threads, task))
    for (auto& row : v) r.rows.push_back(row);
  return r;
}

// ---------------------------------------------------------------------------

namespace {

int write_sw2(const ExperimentConfig& cfg, std::size_t threads, std::ostream& out) {
  const auto r = run_sw2_rate(cfg, threads);
  CsvTable main({"trial", "m", "sw2_lower_bound", "rho", "method"});
  for (const auto& row : r.rows) main.row().add(row.trial).add(row.m).add(row.sw2).add(row.rho).add(row.method);
  CsvTable summary({"m", "mean", "median", "trials"});
  for (const auto& s : r.per_m) summary.row().add(s.m).add(s.mean).add(s.median).add(cfg.trials);
  CsvTable fit({"slope", "intercept", "r_squared", "points"});
  fit.row().add(r.fit.slope).add(r.fit.intercept).add(r.fit.r_squared).add(r.fit.points.size());
  main.write(cfg.output / "sw2_rate.csv");
  summary.write(cfg.output / "sw2_rate_summary.csv");
  fit.write(cfg.output / "sw2_rate_fit.csv");

  out << "sw2_rate  " << cfg.spec_for(cfg.m_values.front()).id() << ", " << cfg.trials << " trials\n";
  out << std::setw(8) << "m" << std::setw(14) << "mean" << std::setw(14) << "median" << '\n';
  for (const auto& s : r.per_m)
    out << std::setw(8) << s.m << std::setw(14) << std::setprecision(6) << s.mean << std::setw(14) << s.median << '\n';
  if (!r.fit.points.empty())
    out << "slope " << r.fit.slope << "  intercept " << r.fit.intercept << "  r^2 " << r.fit.r_squared << '\n';
  for (const auto& row : r.rows)
    if (!(row.sw2 >= 0.0) || !std::isfinite(row.sw2)) return 2;
  return 0;
}

int write_dkw(const ExperimentConfig& cfg, std::size_t threads, std::ostream& out) {
  const auto r = run_dkw_campaign(cfg, threads);
  CsvTable summary({"trial", "m", "probes", "excluded", "violations", "violation_rate", "worst_ratio",
                    "worst_ratio_nolog", "skipped_directions", "sandwich_probes", "sandwich_passes",
                    "implication_breaches"});
  int status = 0;
  for (const auto& w : r.rows) {
    summary.row().add(w.trial).add(w.m).add(w.probes).add(w.excluded).add(w.violations).add(w.violation_rate)
        .add(w.worst_ratio).add(w.worst_ratio_nolog).add(w.skipped).add(w.sandwich_probes).add(w.sandwich_passes)
        .add(w.implication_breaches);
    if (w.violations > w.probes || !(w.worst_ratio >= 0.0)) status = 2;
  }
  summary.write(cfg.output / "dkw_scan_summary.csv");
  for (const auto& [m, tab] : r.records) tab.write(cfg.output / ("dkw_scan_records_m" + std::to_string(m) + ".csv"));

  out << "dkw_scan  " << cfg.spec_for(cfg.m_values.front()).id() << ", " << cfg.trials << " trials\n";
  out << std::setw(8) << "m" << std::setw(16) << "mean rate" << std::setw(16) << "worst ratio" << std::setw(16)
      << "no-log ratio" << '\n';
  for (std::size_t m : cfg.m_values) {
    double rate = 0.0, worst = 0.0, nolog = 0.0;
    for (const auto& w : r.rows)
      if (w.m == m) {
        rate += w.violation_rate / static_cast<double>(cfg.trials);
        worst = std::max(worst, w.worst_ratio);
        nolog = std::max(nolog, w.worst_ratio_nolog);
      }
    out << std::setw(8) << m << std::setw(16) << std::setprecision(6) << rate << std::setw(16) << worst
        << std::setw(16) << nolog << '\n';
  }
  return status;
}

int write_witness(const ExperimentConfig& cfg, std::size_t threads, std::ostream& out) {
  const auto r = run_witness_campaign(cfg, threads);
  CsvTable main({"trial", "m", "delta", "w2", "flag"});
  for (const auto& w : r.rows) main.row().add(w.trial).add(w.m).add(w.delta).add(w.w2).add(w.flag);
  CsvTable summary({"m", "trials", "frequency"});
  for (const auto& [m, f] : r.frequency) summary.row().add(m).add(cfg.trials).add(f);
  main.write(cfg.output / "witness.csv");
  summary.write(cfg.output / "witness_summary.csv");
  out << "witness  delta " << opt<double>(cfg, "delta", 0.04) << ", " << cfg.trials << " trials\n";
  for (const auto& [m, f] : r.frequency) out << std::setw(8) << m << std::setw(14) << std::setprecision(6) << f << '\n';
  return r.bound_failures == 0 ? 0 : 2;
}

int write_dm(const ExperimentConfig& cfg, std::size_t threads, std::ostream& out) {
  const auto r = run_dm_campaign(cfg, threads);
  auto table = [](const std::vector<DmRow>& rows) {
    CsvTable t({"trial", "norm", "n", "d", "m", "d_star", "lambda", "oscillation"});
    for (const auto& w : rows) t.row().add(w.trial).add(w.norm).add(w.n).add(w.d).add(w.m).add(w.d_star).add(w.lambda).add(w.oscillation);
    return t;
  };
  table(r.two_stage).write(cfg.output / "dm_two_stage.csv");
  table(r.gaussian_direct).write(cfg.output / "dm_gaussian_direct.csv");
  CsvTable dec({"trial", "d", "theta_id", "s", "r", "xi_u", "phi_r", "club_norm", "diamond_norm", "heart_norm",
                "full_norm", "reconstruction_error", "i_size", "ic_j_size", "heart_bounded"});
  for (const auto& w : r.decomposition)
    dec.row().add(w.trial).add(w.d).add(w.theta_id).add(w.s).add(w.r).add(w.xi_u).add(w.phi_r).add(w.club)
        .add(w.diamond).add(w.heart).add(w.full).add(w.reconstruction_error).add(w.i_size).add(w.ic_j_size)
        .add(w.heart_bounded);
  dec.write(cfg.output / "dm_decomposition.csv");

  CsvTable summary({"d", "m", "median_oscillation_two_stage", "median_oscillation_gaussian", "ratio"});
  out << "dm_oscillation  " << (r.two_stage.empty() ? std::string() : r.two_stage.front().norm) << ", "
      << cfg.trials << " trials\n";
  for (std::size_t d : cfg.d_values) {
    std::vector<double> a, b;
    std::size_t m = 0;
    for (std::size_t k = 0; k < r.two_stage.size(); ++k)
      if (r.two_stage[k].d == d) {
        a.push_back(r.two_stage[k].oscillation);
        b.push_back(r.gaussian_direct[k].oscillation);
        m = r.two_stage[k].m;
      }
    const double ma = median_of(a), mb = median_of(b);
    summary.row().add(d).add(m).add(ma).add(mb).add(ma / mb);
    out << "d " << d << "  m " << m << "  median oscillation two-stage " << std::setprecision(6) << ma
        << "  gaussian " << mb << '\n';
  }
  summary.write(cfg.output / "dm_summary.csv");
  return r.decomposition_failures == 0 ? 0 : 2;
}

int write_h(const ExperimentConfig& cfg, std::size_t threads, std::ostream& out) {
  const auto r = run_h_campaign(cfg, threads);
  CsvTable t({"trial", "m", "d", "s", "h", "rho", "sigma_max", "sigma_min"});
  int status = 0;
  for (const auto& w : r.rows) {
    t.row().add(w.trial).add(w.m).add(w.d).add(w.s).add(w.h).add(w.rho).add(w.sigma_max).add(w.sigma_min);
    if (!(w.h >= 0.0) || w.h > w.sigma_max * (1 + 1e-12)) status = 2;
  }
  t.write(cfg.output / "hstat.csv");
  out << "h_statistics  " << cfg.spec_for(cfg.m_values.front()).id() << ", " << cfg.trials << " trials, "
      << r.rows.size() << " rows\n";
  return status;
}

}  // namespace

int run(const ExperimentConfig& cfg, std::ostream& out, std::size_t threads) {
  try {
    cfg.validate();
    std::error_code ec;
    fs::create_directories(cfg.output, ec);
    if (ec || !fs::is_directory(cfg.output)) {
      out << "error: cannot create output directory " << cfg.output.string() << '\n';
      return 1;
    }
    switch (cfg.kind) {
      case ExperimentKind::sw2_rate: return write_sw2(cfg, threads, out);
      case ExperimentKind::dkw_scan: return write_dkw(cfg, threads, out);
      case ExperimentKind::lower_bound_witness: return write_witness(cfg, threads, out);
      case ExperimentKind::dm_oscillation: return write_dm(cfg, threads, out);
      case ExperimentKind::h_statistics: return write_h(cfg, threads, out);
    }
  } catch (const NumericError& e) {
    out << "invariant failure: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    out << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}

}  // namespace msw
