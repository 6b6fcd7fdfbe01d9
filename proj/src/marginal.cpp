#include "msw/marginal.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>

#include <boost/math/quadrature/tanh_sinh.hpp>
#include <boost/math/special_functions/beta.hpp>
#include <boost/math/special_functions/erf.hpp>

#include "msw/error.hpp"
#include "msw/rng.hpp"

namespace msw {

std::string to_string(QuantileBackend backend) {
  switch (backend) {
    case QuantileBackend::closed_form: return "closed_form";
    case QuantileBackend::enumerated: return "enumerated";
    case QuantileBackend::monte_carlo_reference: return "monte_carlo_reference";
  }
  return "unknown";
}

namespace {

void check_interval(double a, double b) {
  if (!(a >= 0.0 && b <= 1.0 && a <= b))
    throw DomainError("level interval must satisfy 0 <= a <= b <= 1");
}

void check_level(double u) {
  if (!(u > 0.0 && u < 1.0)) throw DomainError("quantile level must lie in (0,1)");
}

}  // namespace

CellIntegrals Marginal::cell_integrals(std::size_t i, std::size_t m) const {
  if (m == 0 || i == 0 || i > m) throw ParameterError("cell index must satisfy 1 <= i <= m");
  const double mm = static_cast<double>(m);
  return interval_integrals(static_cast<double>(i - 1) / mm, static_cast<double>(i) / mm);
}

std::vector<CellIntegrals> Marginal::cell_table(std::size_t m) const {
  std::vector<CellIntegrals> out(m);
  for (std::size_t i = 1; i <= m; ++i) out[i - 1] = cell_integrals(i, m);
  return out;
}

CellIntegrals cell_integrals(const Marginal& q, std::size_t i, std::size_t m) {
  return q.cell_integrals(i, m);
}

// ---------------------------------------------------------------------------
// AtomicMarginal

AtomicMarginal::AtomicMarginal(std::vector<double> values, std::vector<double> probs,
                               QuantileBackend backend)
    : backend_(backend) {
  if (values.size() != probs.size()) throw ShapeError("atoms and probabilities differ in length");
  if (values.empty()) throw ParameterError("atomic marginal needs at least one atom");
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  double acc = 0.0;
  for (std::size_t k : order) {
    const double p = probs[k];
    if (!(p >= 0.0) || !std::isfinite(values[k])) throw ParameterError("invalid atom");
    acc += p;
    if (!values_.empty() && values_.back() == values[k]) {
      cum_.back() = acc;
    } else {
      values_.push_back(values[k]);
      cum_.push_back(acc);
    }
  }
  finish();
}

AtomicMarginal::AtomicMarginal(std::vector<double> values, QuantileBackend backend)
    : backend_(backend) {
  if (values.empty()) throw ParameterError("atomic marginal needs at least one atom");
  std::sort(values.begin(), values.end());
  const double n = static_cast<double>(values.size());
  for (std::size_t k = 0; k < values.size(); ++k) {
    if (!std::isfinite(values[k])) throw ParameterError("invalid atom");
    const double c = static_cast<double>(k + 1) / n;
    if (!values_.empty() && values_.back() == values[k]) {
      cum_.back() = c;
    } else {
      values_.push_back(values[k]);
      cum_.push_back(c);
    }
  }
  finish();
}

void AtomicMarginal::finish() {
  mass_ = cum_.back();
  if (std::abs(mass_ - 1.0) > 1e-9) throw ParameterError("atom probabilities must sum to 1");
  // Levels up to 1 must resolve to the last atom.
  cum_.back() = 1.0;
}

double AtomicMarginal::cdf(double t) const {
  const auto it = std::upper_bound(values_.begin(), values_.end(), t);
  if (it == values_.begin()) return 0.0;
  return cum_[static_cast<std::size_t>(it - values_.begin()) - 1];
}

double AtomicMarginal::quantile(double u) const {
  check_level(u);
  const auto it = std::lower_bound(cum_.begin(), cum_.end(), u);
  if (it == cum_.end()) return values_.back();
  return values_[static_cast<std::size_t>(it - cum_.begin())];
}

CellIntegrals AtomicMarginal::interval_integrals(double a, double b) const {
  check_interval(a, b);
  CellIntegrals out;
  if (b <= a) return out;
  std::size_t k = static_cast<std::size_t>(std::upper_bound(cum_.begin(), cum_.end(), a) -
                                           cum_.begin());
  double prev = a;
  for (; k < values_.size() && prev < b; ++k) {
    const double upper = std::min(b, cum_[k]);
    const double w = upper - prev;
    if (w > 0.0) {
      out.first += w * values_[k];
      out.second += w * values_[k] * values_[k];
    }
    prev = upper;
  }
  return out;
}

std::vector<CellIntegrals> AtomicMarginal::cell_table(std::size_t m) const {
  if (m == 0) throw ParameterError("cell table needs m >= 1");
  const double mm = static_cast<double>(m);
  std::vector<CellIntegrals> out(m);
  std::size_t k = 0;
  for (std::size_t i = 1; i <= m; ++i) {
    const double a = static_cast<double>(i - 1) / mm, b = static_cast<double>(i) / mm;
    while (k + 1 < values_.size() && cum_[k] <= a) ++k;
    if (cum_[k] >= b) {
      const double v = values_[k];
      out[i - 1] = {v / mm, v * v / mm};
    } else {
      out[i - 1] = interval_integrals(a, b);
    }
  }
  return out;
}

double AtomicMarginal::mean() const {
  double acc = 0.0, prev = 0.0;
  for (std::size_t k = 0; k < values_.size(); ++k) {
    acc += (cum_[k] - prev) * values_[k];
    prev = cum_[k];
  }
  return acc;
}

double AtomicMarginal::second_moment() const {
  double acc = 0.0, prev = 0.0;
  for (std::size_t k = 0; k < values_.size(); ++k) {
    acc += (cum_[k] - prev) * values_[k] * values_[k];
    prev = cum_[k];
  }
  return acc;
}

// ---------------------------------------------------------------------------
// SymmetricContinuousMarginal

double SymmetricContinuousMarginal::cdf(double t) const {
  if (std::isnan(t)) throw DomainError("cdf of NaN");
  return t <= 0.0 ? lower_cdf(t) : 1.0 - lower_cdf(-t);
}

double SymmetricContinuousMarginal::quantile(double u) const {
  check_level(u);
  if (u == 0.5) return 0.0;
  if (u < 0.5) return lower_quantile(u);
  return -lower_quantile(1.0 - u);
}

double SymmetricContinuousMarginal::lower_quantile(double u) const {
  return solve_lower(u, std::numeric_limits<double>::quiet_NaN());
}

double SymmetricContinuousMarginal::solve_lower(double u, double t) const {
  if (u >= 0.5) return 0.0;
  double lo = lower_bracket(u);
  double hi = 0.0;
  if (!(t > lo && t < hi)) t = 0.5 * (lo + hi);
  for (int it = 0; it < 400; ++it) {
    const double f = lower_cdf(t) - u;
    if (f == 0.0) return t;
    if (f < 0.0) lo = t; else hi = t;
    const double dens = density(t);
    double next = t - f / dens;
    if (!(dens > 0.0) || !(next > lo && next < hi)) next = 0.5 * (lo + hi);
    const double scale = std::max(std::abs(lo), std::abs(hi));
    if (std::abs(next - t) <= 1e-15 * scale || hi - lo <= 1e-15 * scale) return next;
    t = next;
  }
  throw NumericError("quantile solve did not converge", hi - lo);
}

CellIntegrals SymmetricContinuousMarginal::lower_integrals(double u) const {
  if (u <= 0.0) return {};
  const double q = u >= 0.5 ? 0.0 : lower_quantile(u);
  return {partial_first(q), partial_second(q)};
}

CellIntegrals SymmetricContinuousMarginal::interval_integrals(double a, double b) const {
  check_interval(a, b);
  if (b <= a) return {};
  const double ey2 = second_moment();
  // G1(u) = int_0^u F^{-1} is symmetric about 1/2; G2 is reflected through EY^2.
  auto lower_or_mirror = [&](double u) { return lower_integrals(u <= 0.5 ? u : 1.0 - u); };
  const CellIntegrals la = lower_or_mirror(a);
  const CellIntegrals lb = lower_or_mirror(b);
  CellIntegrals out;
  out.first = lb.first - la.first;
  if (a >= 0.5) {
    out.second = la.second - lb.second;
  } else if (b <= 0.5) {
    out.second = lb.second - la.second;
  } else {
    out.second = (ey2 - lb.second) - la.second;
  }
  return out;
}

std::vector<CellIntegrals> SymmetricContinuousMarginal::cell_table(std::size_t m) const {
  if (m == 0) throw ParameterError("cell table needs m >= 1");
  const double mm = static_cast<double>(m);
  const std::size_t half = m / 2;
  // Boundary k/m with k > m/2 mirrors to (m-k)/m, so only the lower half is solved.
  std::vector<CellIntegrals> lower(half + 1);
  for (std::size_t k = 1; k <= half; ++k) lower[k] = lower_integrals(static_cast<double>(k) / mm);
  const double ey2 = second_moment();
  auto at = [&](std::size_t k) { return 2 * k <= m ? lower[k] : lower[m - k]; };
  std::vector<CellIntegrals> out(m);
  for (std::size_t i = 1; i <= m; ++i) {
    const std::size_t ka = i - 1, kb = i;
    const CellIntegrals la = at(ka), lb = at(kb);
    CellIntegrals c;
    c.first = lb.first - la.first;
    if (2 * ka >= m) {
      c.second = la.second - lb.second;
    } else if (2 * kb <= m) {
      c.second = lb.second - la.second;
    } else {
      c.second = (ey2 - lb.second) - la.second;
    }
    out[i - 1] = c;
  }
  return out;
}

// ---------------------------------------------------------------------------
// GaussianMarginal

namespace {
constexpr double kInvSqrt2Pi = 0.39894228040143267794;
}

double GaussianMarginal::lower_cdf(double t) const { return 0.5 * std::erfc(-t * M_SQRT1_2); }
double GaussianMarginal::density(double t) const { return kInvSqrt2Pi * std::exp(-0.5 * t * t); }
double GaussianMarginal::partial_first(double t) const { return -density(t); }
double GaussianMarginal::partial_second(double t) const { return lower_cdf(t) - t * density(t); }
double GaussianMarginal::lower_bracket(double) const {
  return -std::numeric_limits<double>::infinity();
}
double GaussianMarginal::lower_quantile(double u) const {
  return -M_SQRT2 * boost::math::erfc_inv(2.0 * u);
}

// ---------------------------------------------------------------------------
// LaplaceMixtureMarginal

namespace {
// Unit-variance Laplace law has scale b = 1/sqrt(2).
constexpr double kLaplaceB = M_SQRT1_2;
}

LaplaceMixtureMarginal::LaplaceMixtureMarginal(std::vector<double> weights,
                                               std::vector<double> scales)
    : weights_(std::move(weights)), scales_(std::move(scales)) {
  if (weights_.size() != scales_.size()) throw ShapeError("weights and scales differ in length");
  if (weights_.empty()) throw ParameterError("Laplace mixture needs at least one component");
  for (double a : scales_)
    if (!(a > 0.0) || !std::isfinite(a)) throw ParameterError("Laplace scales must be positive");
}

std::shared_ptr<LaplaceMixtureMarginal> LaplaceMixtureMarginal::for_direction(
    std::span<const double> theta, double weight_limit) {
  std::vector<double> a;
  for (double t : theta)
    if (t != 0.0) a.push_back(std::abs(t));
  if (a.empty()) throw DomainError("direction is zero");
  std::sort(a.begin(), a.end());
  for (std::size_t k = 1; k < a.size(); ++k)
    if (a[k] - a[k - 1] <= 1e-12 * a[k]) return nullptr;
  std::vector<double> w(a.size(), 1.0);
  for (std::size_t j = 0; j < a.size(); ++j) {
    for (std::size_t k = 0; k < a.size(); ++k) {
      if (k == j) continue;
      w[j] *= a[j] * a[j] / ((a[j] - a[k]) * (a[j] + a[k]));
    }
    if (!(std::abs(w[j]) <= weight_limit)) return nullptr;
  }
  return std::make_shared<LaplaceMixtureMarginal>(std::move(w), std::move(a));
}

double LaplaceMixtureMarginal::lower_cdf(double t) const {
  double acc = 0.0;
  for (std::size_t j = 0; j < weights_.size(); ++j)
    acc += weights_[j] * 0.5 * std::exp(t / (scales_[j] * kLaplaceB));
  return std::clamp(acc, 0.0, 0.5);
}

double LaplaceMixtureMarginal::density(double t) const {
  double acc = 0.0;
  for (std::size_t j = 0; j < weights_.size(); ++j) {
    const double s = scales_[j] * kLaplaceB;
    acc += weights_[j] * 0.5 * std::exp(t / s) / s;
  }
  return acc;
}

double LaplaceMixtureMarginal::partial_first(double t) const {
  double acc = 0.0;
  for (std::size_t j = 0; j < weights_.size(); ++j) {
    const double s = scales_[j] * kLaplaceB;
    acc += weights_[j] * 0.5 * std::exp(t / s) * (t - s);
  }
  return acc;
}

double LaplaceMixtureMarginal::partial_second(double t) const {
  double acc = 0.0;
  for (std::size_t j = 0; j < weights_.size(); ++j) {
    const double s = scales_[j] * kLaplaceB;
    acc += weights_[j] * 0.5 * std::exp(t / s) * (t * t - 2.0 * s * t + 2.0 * s * s);
  }
  return acc;
}

double LaplaceMixtureMarginal::lower_bracket(double u) const {
  const double a_max = scales_.back();
  double wsum = 0.0;
  for (double w : weights_) wsum += std::abs(w);
  double lo = a_max * kLaplaceB * std::log(2.0 * u / wsum) - 1.0;
  while (lower_cdf(lo) >= u) lo = 2.0 * lo - 1.0;
  return lo;
}

double LaplaceMixtureMarginal::lower_quantile(double u) const {
  if (weights_.size() == 1) return scales_[0] * kLaplaceB * std::log(2.0 * u);
  return solve_lower(u, scales_.back() * kLaplaceB * std::log(2.0 * u / weights_.back()));
}

// ---------------------------------------------------------------------------
// SphereMarginal

SphereMarginal::SphereMarginal(std::size_t d, std::vector<double> radii, std::vector<double> probs,
                               std::optional<Tail> tail)
    : d_(d), radii_(std::move(radii)), probs_(std::move(probs)), tail_(tail) {
  if (d_ < 2) throw ParameterError("sphere marginal requires d >= 2");
  if (radii_.size() != probs_.size() || radii_.empty())
    throw ShapeError("radii and probabilities differ in length");
  r_max_ = 0.0;
  for (std::size_t k = 0; k < radii_.size(); ++k) {
    if (!(radii_[k] > 0.0) || !(probs_[k] >= 0.0))
      throw ParameterError("sphere marginal radii must be positive");
    r_max_ = std::max(r_max_, radii_[k]);
  }
  pdf_const_ = 1.0 / boost::math::beta(0.5, 0.5 * static_cast<double>(d_ - 1));
}

std::shared_ptr<SphereMarginal> SphereMarginal::for_radial(std::size_t d, const RadialLaw& radial) {
  radial.validate();
  if (const auto* tp = std::get_if<RadialLaw::TwoPoint>(&radial.law)) {
    std::vector<double> r, p;
    if (tp->p < 1.0) { r.push_back(tp->a); p.push_back(1.0 - tp->p); }
    if (tp->p > 0.0) { r.push_back(tp->b); p.push_back(tp->p); }
    for (double x : r)
      if (!(x > 0.0)) throw BackendUnavailable("sphere marginal with an atom at the origin");
    return std::make_shared<SphereMarginal>(d, std::move(r), std::move(p));
  }
  const auto& h = std::get<RadialLaw::HeavyTail>(radial.law);
  const double sd = std::sqrt(static_cast<double>(d));
  std::optional<Tail> tail;
  // Below this size the tail cannot move any cell integral at double precision.
  const double tail_second = h.mass * h.floor * h.floor * h.exponent / (h.exponent - 2.0);
  if (tail_second >= 1e-17) tail = Tail{h.mass, h.exponent, sd * h.floor};
  return std::make_shared<SphereMarginal>(d, std::vector<double>{sd * RadialLaw::heavy_tail_bulk(h)},
                                          std::vector<double>{1.0 - h.mass}, tail);
}

double SphereMarginal::coord_cdf(double w) const {
  if (w <= -1.0) return 0.0;
  if (w >= 0.0) return 0.5;
  const double x = (1.0 - std::abs(w)) * (1.0 + std::abs(w));
  return 0.5 * boost::math::ibeta(0.5 * static_cast<double>(d_ - 1), 0.5, x);
}

double SphereMarginal::coord_pdf(double w) const {
  if (w <= -1.0 || w >= 1.0) return 0.0;
  const double x = (1.0 - std::abs(w)) * (1.0 + std::abs(w));
  return pdf_const_ * std::pow(x, 0.5 * (static_cast<double>(d_) - 3.0));
}

double SphereMarginal::coord_pm1(double w) const {
  if (w <= -1.0) return 0.0;
  w = std::min(w, 0.0);
  const double x = (1.0 - std::abs(w)) * (1.0 + std::abs(w));
  return -pdf_const_ / static_cast<double>(d_ - 1) * std::pow(x, 0.5 * static_cast<double>(d_ - 1));
}

double SphereMarginal::coord_pm2(double w) const {
  if (w <= -1.0) return 0.0;
  w = std::min(w, 0.0);
  const double x = (1.0 - std::abs(w)) * (1.0 + std::abs(w));
  return boost::math::ibeta(0.5 * static_cast<double>(d_ - 1), 1.5, x) /
         (2.0 * static_cast<double>(d_));
}

template <class F>
double SphereMarginal::tail_expectation(F&& f) const {
  boost::math::quadrature::tanh_sinh<double> integrator;
  const Tail& t = *tail_;
  auto g = [&](double s) { return f(t.scale * std::pow(s, -1.0 / t.exponent)); };
  return t.mass * integrator.integrate(g, 0.0, 1.0);
}

double SphereMarginal::lower_cdf(double t) const {
  double acc = 0.0;
  for (std::size_t k = 0; k < radii_.size(); ++k) acc += probs_[k] * coord_cdf(t / radii_[k]);
  if (tail_) acc += tail_expectation([&](double r) { return coord_cdf(t / r); });
  return acc;
}

double SphereMarginal::density(double t) const {
  double acc = 0.0;
  for (std::size_t k = 0; k < radii_.size(); ++k)
    acc += probs_[k] * coord_pdf(t / radii_[k]) / radii_[k];
  return acc;
}

double SphereMarginal::partial_first(double t) const {
  double acc = 0.0;
  for (std::size_t k = 0; k < radii_.size(); ++k)
    acc += probs_[k] * radii_[k] * coord_pm1(t / radii_[k]);
  if (tail_) acc += tail_expectation([&](double r) { return r * coord_pm1(t / r); });
  return acc;
}

double SphereMarginal::partial_second(double t) const {
  double acc = 0.0;
  for (std::size_t k = 0; k < radii_.size(); ++k)
    acc += probs_[k] * radii_[k] * radii_[k] * coord_pm2(t / radii_[k]);
  if (tail_) acc += tail_expectation([&](double r) { return r * r * coord_pm2(t / r); });
  return acc;
}

double SphereMarginal::lower_bracket(double u) const {
  double lo = -r_max_;
  while (lower_cdf(lo) >= u) lo *= 2.0;
  return lo;
}

// ---------------------------------------------------------------------------
// Factory

void check_direction(std::span<const double> theta, std::size_t dim) {
  if (theta.size() != dim) throw ShapeError("direction dimension does not match the law");
  double n2 = 0.0;
  for (double t : theta) n2 += t * t;
  if (!(std::abs(std::sqrt(n2) - 1.0) <= 1e-12)) throw DomainError("direction must be a unit vector");
}

namespace {

std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t k = 0; k < n; ++k) {
    h ^= p[k];
    h *= 0x100000001B3ULL;
  }
  return h;
}

MarginalPtr monte_carlo_marginal(const DistributionSpec& spec, std::span<const double> theta,
                                 const MarginalOptions& options) {
  if (options.mc_budget == 0)
    throw BackendUnavailable("no exact marginal for " + spec.id() + " and Monte Carlo is disabled");
  const std::string id = spec.id();
  std::uint64_t h = fnv1a(id.data(), id.size(), 0xCBF29CE484222325ULL);
  h = fnv1a(theta.data(), theta.size() * sizeof(double), h);
  const std::uint64_t seed = split_seed(options.mc_seed, h);
  constexpr std::size_t kChunk = 1 << 16;
  Eigen::Map<const Vector> th(theta.data(), static_cast<Eigen::Index>(theta.size()));
  std::vector<double> values;
  values.reserve(options.mc_budget);
  for (std::size_t done = 0, c = 0; done < options.mc_budget; done += kChunk, ++c) {
    const std::size_t n = std::min(kChunk, options.mc_budget - done);
    const SampleMatrix s = sample(spec, n, split_seed(seed, c));
    const Vector proj = s.entries * th;
    values.insert(values.end(), proj.data(), proj.data() + proj.size());
  }
  return std::make_shared<AtomicMarginal>(std::move(values),
                                          QuantileBackend::monte_carlo_reference);
}

MarginalPtr cube_marginal(std::span<const double> theta, const MarginalOptions& options,
                          const DistributionSpec& spec) {
  std::vector<double> coeffs;
  for (double t : theta)
    if (t != 0.0) coeffs.push_back(t);
  if (coeffs.size() > options.enumeration_limit) return monte_carlo_marginal(spec, theta, options);
  const std::size_t n = std::size_t{1} << coeffs.size();
  std::vector<double> values(n);
  for (std::size_t mask = 0; mask < n; ++mask) {
    double v = 0.0;
    for (std::size_t j = 0; j < coeffs.size(); ++j) v += ((mask >> j) & 1) ? coeffs[j] : -coeffs[j];
    values[mask] = v;
  }
  const double p = std::ldexp(1.0, -static_cast<int>(coeffs.size()));
  return std::make_shared<AtomicMarginal>(std::move(values), std::vector<double>(n, p),
                                          QuantileBackend::enumerated);
}

}  // namespace

MarginalPtr make_marginal(const DistributionSpec& spec, std::span<const double> theta,
                          const MarginalOptions& options) {
  spec.validate();
  check_direction(theta, spec.dim);
  switch (spec.kind) {
    case DistributionKind::standard_gaussian:
      return std::make_shared<GaussianMarginal>();
    case DistributionKind::rademacher_cube:
      return cube_marginal(theta, options, spec);
    case DistributionKind::isotropic_laplace_product: {
      auto m = LaplaceMixtureMarginal::for_direction(theta, options.laplace_weight_limit);
      if (m) return m;
      return monte_carlo_marginal(spec, theta, options);
    }
    case DistributionKind::sphere_radial: {
      if (spec.dim >= 2) return SphereMarginal::for_radial(spec.dim, *spec.radial);
      std::vector<double> values, probs;
      if (const auto* tp = std::get_if<RadialLaw::TwoPoint>(&spec.radial->law)) {
        for (double r : {tp->a, tp->b}) {
          const double p = (r == tp->a ? 1.0 - tp->p : tp->p) * 0.5;
          values.push_back(-r); probs.push_back(p);
          values.push_back(r); probs.push_back(p);
        }
        if (tp->a == tp->b) {
          values = {-tp->a, tp->a};
          probs = {0.5, 0.5};
        }
      }
      return std::make_shared<AtomicMarginal>(std::move(values), std::move(probs),
                                              QuantileBackend::enumerated);
    }
  }
  throw BackendUnavailable("unknown distribution kind");
}

QuantileValue marginal_quantile(const DistributionSpec& spec, std::span<const double> theta,
                                double u, const MarginalOptions& options) {
  check_level(u);
  const MarginalPtr q = make_marginal(spec, theta, options);
  return {q->quantile(u), q->backend()};
}

CellIntegrals quadrature_interval_integrals(const std::function<double(double)>& quantile,
                                            double a, double b, double rel_tol) {
  check_interval(a, b);
  if (b <= a) return {};
  const double lo_level = std::nextafter(0.0, 1.0);
  const double hi_level = std::nextafter(1.0, 0.0);
  auto q = [&](double u) { return quantile(std::clamp(u, lo_level, hi_level)); };
  boost::math::quadrature::tanh_sinh<double> integrator;
  // The error estimate is the gap between successive refinements, so the target is
  // set below the acceptance threshold.
  const double target = 1e-2 * rel_tol;
  CellIntegrals out;
  double err = 0.0, l1 = 0.0;
  out.first = integrator.integrate(q, a, b, target, &err, &l1);
  if (!(err <= rel_tol * std::max(l1, 1e-300)) && err > 0.0)
    throw NumericError("quadrature of F^{-1} did not converge", err / std::max(l1, 1e-300));
  auto q2 = [&](double u) {
    const double v = q(u);
    return v * v;
  };
  out.second = integrator.integrate(q2, a, b, target, &err, &l1);
  if (!(err <= rel_tol * std::max(l1, 1e-300)) && err > 0.0)
    throw NumericError("quadrature of (F^{-1})^2 did not converge", err / std::max(l1, 1e-300));
  return out;
}

}  // namespace msw
