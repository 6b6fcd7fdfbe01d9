#include "msw/dvoretzky.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "msw/error.hpp"
#include "msw/maxsliced.hpp"
#include "msw/rng.hpp"

namespace msw {

NormSpec NormSpec::l1(std::size_t n) { NormSpec s{NormKind::l1, 1.0, n}; s.validate(); return s; }
NormSpec NormSpec::l2(std::size_t n) { NormSpec s{NormKind::l2, 2.0, n}; s.validate(); return s; }
NormSpec NormSpec::linf(std::size_t n) {
  NormSpec s{NormKind::linf, std::numeric_limits<double>::infinity(), n};
  s.validate();
  return s;
}
NormSpec NormSpec::lp(std::size_t n, double p) { NormSpec s{NormKind::lp, p, n}; s.validate(); return s; }

void NormSpec::validate() const {
  if (n == 0) throw ParameterError("norm: ambient dimension must be positive");
  if (kind == NormKind::lp && !(p > 1.0 && std::isfinite(p)))
    throw ParameterError("norm: lp requires 1 < p < inf");
}

double NormSpec::exponent() const {
  switch (kind) {
    case NormKind::l1: return 1.0;
    case NormKind::l2: return 2.0;
    case NormKind::linf: return std::numeric_limits<double>::infinity();
    case NormKind::lp: return p;
  }
  return p;
}

double NormSpec::conjugate() const {
  switch (kind) {
    case NormKind::l1: return std::numeric_limits<double>::infinity();
    case NormKind::l2: return 2.0;
    case NormKind::linf: return 1.0;
    case NormKind::lp: return p / (p - 1.0);
  }
  return 2.0;
}

double NormSpec::eval(std::span<const double> x) const {
  if (x.size() != n) throw ShapeError("norm: vector length does not match n");
  switch (kind) {
    case NormKind::l1: {
      double s = 0.0;
      for (double v : x) s += std::abs(v);
      return s;
    }
    case NormKind::l2: {
      double s = 0.0;
      for (double v : x) s += v * v;
      return std::sqrt(s);
    }
    case NormKind::linf: {
      double s = 0.0;
      for (double v : x) s = std::max(s, std::abs(v));
      return s;
    }
    case NormKind::lp: {
      // scale by the largest entry against overflow
      double big = 0.0;
      for (double v : x) big = std::max(big, std::abs(v));
      if (big == 0.0) return 0.0;
      double s = 0.0;
      for (double v : x) s += std::pow(std::abs(v) / big, p);
      return big * std::pow(s, 1.0 / p);
    }
  }
  return 0.0;
}

double NormSpec::dual_radius() const {
  const double q = conjugate();
  const double e = std::isinf(q) ? 0.5 : 0.5 - 1.0 / q;
  return std::max(1.0, std::pow(static_cast<double>(n), e));
}

std::optional<double> NormSpec::gaussian_mean() const {
  const double nn = static_cast<double>(n);
  if (kind == NormKind::l1) return nn * std::sqrt(2.0 / M_PI);
  if (kind == NormKind::l2) return std::sqrt(2.0) * std::exp(std::lgamma((nn + 1.0) / 2.0) - std::lgamma(nn / 2.0));
  return std::nullopt;
}

std::string NormSpec::name() const {
  switch (kind) {
    case NormKind::l1: return "l1";
    case NormKind::l2: return "l2";
    case NormKind::linf: return "linf";
    case NormKind::lp: {
      std::string s = std::to_string(p);
      s.erase(s.find_last_not_of('0') + 1);
      if (!s.empty() && s.back() == '.') s.pop_back();
      return "l" + s;
    }
  }
  return "?";
}

void to_json(nlohmann::json& j, const NormSpec& s) {
  j = {{"kind", s.kind == NormKind::l1 ? "l1" : s.kind == NormKind::l2 ? "l2" : s.kind == NormKind::linf ? "linf" : "lp"},
       {"n", s.n}};
  if (s.kind == NormKind::lp) j["p"] = s.p;
}

void from_json(const nlohmann::json& j, NormSpec& s) {
  const auto kind = j.at("kind").get<std::string>();
  const auto n = j.at("n").get<std::size_t>();
  if (kind == "l1") s = NormSpec::l1(n);
  else if (kind == "l2") s = NormSpec::l2(n);
  else if (kind == "linf") s = NormSpec::linf(n);
  else if (kind == "lp") s = NormSpec::lp(n, j.at("p").get<double>());
  else throw ConfigError("unknown norm kind '" + kind + "'");
}

double gaussian_linf_mean(std::size_t n) {
  if (n == 0) throw ParameterError("gaussian_linf_mean: n must be positive");
  const double nn = static_cast<double>(n);
  // P(max |G_i| > t) = 1 - (1 - erfc(t / sqrt 2))^n
  auto tail = [nn](double t) {
    const double c = std::erfc(t * M_SQRT1_2);
    return -std::expm1(nn * std::log1p(-c));
  };
  double err = 0.0;
  const double upper = std::sqrt(2.0 * std::log(nn) + 2.0 * 40.0) + 2.0;
  const double v = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(tail, 0.0, upper, 20, 1e-14, &err);
  if (!(err <= 1e-10 * v)) throw NumericError("gaussian_linf_mean: quadrature did not converge", err / v);
  return v;
}

CriticalDimension critical_dimension(const NormSpec& norm, std::size_t mc_samples, std::uint64_t seed,
                                     bool force_monte_carlo) {
  norm.validate();
  CriticalDimension c;
  const double R = norm.dual_radius();
  std::optional<double> mean = force_monte_carlo ? std::nullopt : norm.gaussian_mean();
  if (mean) {
    c.method = "closed_form";
  } else if (!force_monte_carlo && norm.kind == NormKind::linf) {
    mean = gaussian_linf_mean(norm.n);
    c.method = "quadrature";
  }
  if (mean) {
    c.gaussian_mean = *mean;
  } else {
    if (mc_samples < 1000) throw ParameterError("critical_dimension: Monte Carlo needs at least 1000 samples");
    Rng rng(seed);
    std::vector<double> g(norm.n);
    double s = 0.0, s2 = 0.0;
    for (std::size_t k = 0; k < mc_samples; ++k) {
      for (auto& x : g) x = rng.normal();
      const double v = norm.eval(g);
      s += v;
      s2 += v * v;
    }
    const double N = static_cast<double>(mc_samples);
    c.gaussian_mean = s / N;
    const double var = std::max(0.0, (s2 - N * c.gaussian_mean * c.gaussian_mean) / (N - 1.0));
    c.gaussian_mean_stderr = std::sqrt(var / N);
    c.method = "monte_carlo";
  }
  c.d_star = std::pow(c.gaussian_mean / R, 2);
  c.std_error = 2.0 * c.gaussian_mean / (R * R) * c.gaussian_mean_stderr;
  return c;
}

// ---------------------------------------------------------------------------

Matrix gamma_from_sample(const SampleMatrix& x) {
  if (x.rows() == 0) throw ParameterError("gamma_from_sample: empty sample");
  return x.entries / std::sqrt(static_cast<double>(x.rows()));
}

namespace {

void check_z(const DistributionSpec& z, std::size_t n) {
  z.validate();
  if (!z.iid_coordinates()) throw ConfigError("the law of Z must have iid coordinates (got " + z.id() + ")");
  if (z.dim != n) throw ConfigError("the law of Z must live in R^n");
}

}  // namespace

TwoStageEnsemble build_two_stage(const TwoStage& cfg, std::uint64_t seed) {
  if (cfg.d == 0 || cfg.m < cfg.d) throw ConfigError("two-stage ensemble needs m >= d >= 1");
  if (cfg.x.dim != cfg.d) throw ConfigError("the law of X must live in R^d");
  check_z(cfg.z, cfg.n);
  TwoStageEnsemble e;
  e.gamma = gamma_from_sample(sample(cfg.x, cfg.m, split_seed(seed, 0)));
  e.D = sample(cfg.z, cfg.m, split_seed(seed, 1)).entries.transpose();
  return e;
}

Matrix gaussian_direct(const GaussianDirect& cfg, std::uint64_t seed) {
  if (cfg.n == 0 || cfg.d == 0) throw ParameterError("gaussian_direct: n and d must be positive");
  return sample(DistributionSpec::standard_gaussian(cfg.d), cfg.n, seed).entries;
}

Matrix two_stage_image(const Matrix& gamma, const DistributionSpec& z, std::uint64_t seed) {
  check_z(z, z.dim);
  const auto zs = sample(z, static_cast<std::size_t>(gamma.rows()), seed);
  return zs.entries.transpose() * gamma;
}

std::vector<Vector> probe_directions(std::size_t d, std::size_t count, std::uint64_t seed) {
  if (count == 0) throw ParameterError("probe_directions: count must be positive");
  if (d != 2) return random_directions(d, count, seed);
  std::vector<Vector> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    const double a = 2.0 * M_PI * static_cast<double>(k) / static_cast<double>(count);
    Vector v(2);
    v << std::cos(a), std::sin(a);
    out.push_back(v);
  }
  return out;
}

namespace {

double median_of(std::vector<double> v) {
  const std::size_t n = v.size();
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(n / 2), v.end());
  const double hi = v[n / 2];
  if (n % 2) return hi;
  return 0.5 * (*std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(n / 2)) + hi);
}

}  // namespace

EnsembleReport psi_oscillation(const Matrix& A, const NormSpec& norm, std::span<const Vector> dirs) {
  if (dirs.empty()) throw ParameterError("psi_oscillation: no directions");
  if (static_cast<std::size_t>(A.rows()) != norm.n) throw ShapeError("psi_oscillation: operator rows differ from n");
  EnsembleReport r;
  r.n = norm.n;
  r.d = static_cast<std::size_t>(A.cols());
  r.psi_values.reserve(dirs.size());
  for (const auto& u : dirs) {
    check_direction({u.data(), static_cast<std::size_t>(u.size())}, r.d);
    r.psi_values.push_back(norm.eval(Vector(A * u)));
  }
  r.lambda = median_of(r.psi_values);
  r.mean = std::accumulate(r.psi_values.begin(), r.psi_values.end(), 0.0) / static_cast<double>(dirs.size());
  if (!(r.lambda > 0.0)) throw NumericError("psi_oscillation: median of Psi is zero");
  for (double v : r.psi_values) r.oscillation = std::max(r.oscillation, std::abs(v / r.lambda - 1.0));
  const double R = norm.dual_radius();
  if (auto g = norm.gaussian_mean()) r.d_star_used = std::pow(*g / R, 2);
  else if (norm.kind == NormKind::linf) r.d_star_used = std::pow(gaussian_linf_mean(norm.n) / R, 2);
  return r;
}

EnsembleReport psi_oscillation(const Matrix& gamma, const Matrix& D, const NormSpec& norm,
                               std::span<const Vector> dirs) {
  if (D.cols() != gamma.rows()) throw ShapeError("psi_oscillation: D and Gamma do not compose");
  auto r = psi_oscillation(Matrix(D * gamma), norm, dirs);
  r.m = static_cast<std::size_t>(gamma.rows());
  return r;
}

double phi_r(std::size_t r, std::size_t m, double gaussian_mean, double dual_radius, double c1L) {
  if (r == 0 || r > m) throw ParameterError("phi_r: r must satisfy 1 <= r <= m");
  return c1L * (gaussian_mean + dual_radius * std::sqrt(std::log(std::exp(1.0) * static_cast<double>(m) / static_cast<double>(r))));
}

DecompositionDiagnostics decomposition_diagnostics(std::span<const double> u, const Matrix& gamma,
                                                   const Matrix& D, std::size_t s, std::size_t r,
                                                   const NormSpec& norm, double gaussian_mean,
                                                   double c1L, std::span<const double> column_norms) {
  const std::size_t m = static_cast<std::size_t>(gamma.rows()), d = static_cast<std::size_t>(gamma.cols());
  if (s == 0 || s >= m) throw ParameterError("decomposition_diagnostics: s must satisfy 1 <= s < m");
  if (r == 0 || r > m) throw ParameterError("decomposition_diagnostics: r must satisfy 1 <= r <= m");
  if (static_cast<std::size_t>(D.cols()) != m || static_cast<std::size_t>(D.rows()) != norm.n)
    throw ShapeError("decomposition_diagnostics: D must be n x m");
  check_direction(u, d);

  DecompositionDiagnostics out;
  out.s = s;
  out.r = r;
  // c_i = <X_i, u> / sqrt m
  const Vector c = gamma * Eigen::Map<const Vector>(u.data(), static_cast<Eigen::Index>(d));
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::abs(c[static_cast<Eigen::Index>(a)]) > std::abs(c[static_cast<Eigen::Index>(b)]);
  });
  std::vector<char> in_i(m, 0);
  for (std::size_t k = 0; k < s; ++k) in_i[order[k]] = 1;
  out.i_size = s;
  out.xi_u = std::abs(c[static_cast<Eigen::Index>(order[s])]);
  out.phi_r = phi_r(r, m, gaussian_mean, norm.dual_radius(), c1L);
  const double cut = out.xi_u * out.phi_r;

  std::vector<double> own;
  if (column_norms.empty()) {
    own = decomposition_column_norms(D, norm);
    column_norms = own;
  } else if (column_norms.size() != m) {
    throw ShapeError("decomposition_diagnostics: one column norm per Z_i is required");
  }

  // |<X_i,u> Z_i / sqrt m| = |c_i| |Z_i|. The sparse parts are summed column by
  // column, the heart part as one product with the masked coefficients.
  const auto n = static_cast<Eigen::Index>(norm.n);
  Vector club = Vector::Zero(n), diamond = Vector::Zero(n);
  Vector heart_coef = Vector::Zero(static_cast<Eigen::Index>(m));
  for (std::size_t i = 0; i < m; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    const double size = std::abs(c[ii]) * column_norms[i];
    if (in_i[i]) {
      club += c[ii] * D.col(ii);
    } else if (size >= cut) {
      diamond += c[ii] * D.col(ii);
      ++out.ic_j_size;
    } else {
      heart_coef[ii] = c[ii];
      if (!(size < cut)) out.heart_terms_bounded = false;
    }
  }
  const Vector heart = D * heart_coef;
  const Vector full = D * c;
  out.club_norm = norm.eval(club);
  out.diamond_norm = norm.eval(diamond);
  out.heart_norm = norm.eval(heart);
  out.full_norm = norm.eval(full);
  const double scale = full.norm();
  const Vector gap = club + diamond + heart - full;
  out.reconstruction_error = scale > 0.0 ? gap.norm() / scale : gap.norm();
  return out;
}

std::vector<double> decomposition_column_norms(const Matrix& D, const NormSpec& norm) {
  if (static_cast<std::size_t>(D.rows()) != norm.n) throw ShapeError("D must have n rows");
  const Eigen::MatrixXd cols = D;  // column-major copy for contiguous columns
  std::vector<double> out(static_cast<std::size_t>(D.cols()));
  for (Eigen::Index i = 0; i < cols.cols(); ++i)
    out[static_cast<std::size_t>(i)] = norm.eval(std::span<const double>(cols.col(i).data(), norm.n));
  return out;
}

FlatnessReport expectation_flatness(const Matrix& gamma, const DistributionSpec& z, const NormSpec& norm,
                                    std::span<const Vector> dirs, std::size_t z_trials, std::uint64_t seed,
                                    double gaussian_mean) {
  if (z_trials < 30) throw ParameterError("expectation_flatness: at least 30 Z trials are required");
  if (dirs.empty()) throw ParameterError("expectation_flatness: no directions");
  check_z(z, norm.n);
  const std::size_t k = dirs.size();
  std::vector<double> s(k, 0.0), s2(k, 0.0);
  for (std::size_t t = 0; t < z_trials; ++t) {
    const Matrix A = two_stage_image(gamma, z, split_seed(seed, t));
    for (std::size_t j = 0; j < k; ++j) {
      const double v = norm.eval(Vector(A * dirs[j]));
      s[j] += v;
      s2[j] += v * v;
    }
  }
  FlatnessReport r;
  const double N = static_cast<double>(z_trials);
  for (std::size_t j = 0; j < k; ++j) {
    const double mu = s[j] / N;
    r.mean_psi.push_back(mu);
    r.std_error.push_back(std::sqrt(std::max(0.0, (s2[j] - N * mu * mu) / (N - 1.0)) / N));
  }
  r.lambda = median_of(r.mean_psi);
  SampleMatrix x;
  x.entries = gamma * std::sqrt(static_cast<double>(gamma.rows()));
  for (std::size_t a = 0; a < k; ++a) {
    for (std::size_t b = a + 1; b < k; ++b) {
      const double diff = std::abs(r.mean_psi[a] - r.mean_psi[b]);
      r.max_pair_difference = std::max(r.max_pair_difference, diff);
      const double dist = two_direction_distance(x, {dirs[a].data(), static_cast<std::size_t>(dirs[a].size())},
                                                 {dirs[b].data(), static_cast<std::size_t>(dirs[b].size())});
      if (dist > 0.0) r.max_ratio = std::max(r.max_ratio, diff / (gaussian_mean * dist));
    }
  }
  return r;
}

ConditionalMeanResult conditional_mean_bounds(const Matrix& gamma, const DistributionSpec& z,
                                              const NormSpec& norm, std::span<const double> v,
                                              std::size_t z_trials, double eta, double census_fraction,
                                              std::uint64_t seed, double gaussian_mean) {
  if (z_trials < 2) throw ParameterError("conditional_mean_bounds: at least two Z trials are required");
  if (!(census_fraction > 0.0 && census_fraction <= 1.0)) throw ParameterError("census fraction must lie in (0, 1]");
  if (!(gaussian_mean > 0.0)) throw ParameterError("E|G| must be positive");
  check_z(z, norm.n);
  const std::size_t m = static_cast<std::size_t>(gamma.rows());
  check_direction(v, static_cast<std::size_t>(gamma.cols()));
  const Vector c = gamma * Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
  const double root_m = std::sqrt(static_cast<double>(m));

  ConditionalMeanResult out;
  out.required = static_cast<std::size_t>(std::ceil(census_fraction * static_cast<double>(m)));
  for (Eigen::Index i = 0; i < c.size(); ++i)
    if (std::abs(c[i]) * root_m >= eta) ++out.census;
  if (out.census < out.required) {
    out.precondition_failed = true;
    return out;
  }
  double s = 0.0, s2 = 0.0;
  for (std::size_t t = 0; t < z_trials; ++t) {
    const auto zs = sample(z, m, split_seed(seed, t));
    const double val = norm.eval(Vector(zs.entries.transpose() * c));
    s += val;
    s2 += val * val;
  }
  const double N = static_cast<double>(z_trials);
  out.mean_psi = s / N;
  out.std_error = std::sqrt(std::max(0.0, (s2 - N * out.mean_psi * out.mean_psi) / (N - 1.0)) / N);
  out.lower_ratio = out.mean_psi / gaussian_mean;
  return out;
}

}  // namespace msw
