#include "msw/dkw.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "msw/error.hpp"

namespace msw {

namespace {

const double kE = std::exp(1.0);

double level_term(double g, double delta_cap) {
  // 2 sqrt(Delta g) log(e / g); zero at g = 0 by continuity
  if (g <= 0.0 || delta_cap == 0.0) return 0.0;
  return 2.0 * std::sqrt(delta_cap * g) * std::log(kE / g);
}

void check_sign(int sign) {
  if (sign != 1 && sign != -1) throw ParameterError("psi: sign must be +1 or -1");
}

void check_open_level(double u, const char* what) {
  if (!(u > 0.0 && u < 1.0)) throw DomainError(std::string(what) + ": u must lie in (0, 1)");
}

}  // namespace

DkwConfig::DkwConfig(double delta, double k) : delta_cap(delta), kappa(k) {
  if (!(delta_cap >= 0.0 && delta_cap < 0.5)) throw ParameterError("Delta must lie in [0, 1/2)");
  if (!(kappa >= 1.0) || !std::isfinite(kappa)) throw ParameterError("kappa must be at least 1");
  if (delta_cap == 0.0) {
    small_delta = 0.0;
  } else {
    const double L = std::log(kE / delta_cap);
    small_delta = kappa * delta_cap * L * L;
  }
  if (small_regime() && small_delta > 0.25)
    throw ParameterError("Delta <= (10 kappa)^-2 but delta exceeds 1/4; kappa is too small");
}

bool DkwConfig::small_regime() const {
  const double cap = 1.0 / (10.0 * kappa);
  return delta_cap <= cap * cap;
}

double gamma(double u) {
  if (!(u >= 0.0 && u <= 1.0)) throw DomainError("gamma: u must lie in [0, 1]");
  return std::min(u, 1.0 - u);
}

double psi(double u, const DkwConfig& cfg, int sign) {
  check_sign(sign);
  check_open_level(u, "psi");
  return u + sign * level_term(gamma(u), cfg.delta_cap);
}

double psi_derivative(double u, const DkwConfig& cfg, int sign) {
  check_sign(sign);
  check_open_level(u, "psi_derivative");
  if (cfg.delta_cap == 0.0) return 1.0;
  const double g = gamma(u);
  const double slope = u <= 0.5 ? 1.0 : -1.0;  // gamma'(u)
  // d/dg of 2 sqrt(Delta g) log(e/g) = sqrt(Delta / g) (log(e/g) - 2)
  return 1.0 + sign * slope * std::sqrt(cfg.delta_cap / g) * (std::log(kE / g) - 2.0);
}

double dkw_bound(double F, double delta_cap, bool with_log) {
  const double g = gamma(F);
  if (g == 0.0) return 0.0;
  const double root = std::sqrt(delta_cap * g);
  return with_log ? root * std::log(kE / g) : root;
}

PsiPropertiesReport psi_properties_check(const DkwConfig& cfg, std::size_t grid_n) {
  if (cfg.kappa < 400.0) throw ParameterError("psi_properties_check: kappa must be at least 400");
  if (!cfg.small_regime()) throw ParameterError("psi_properties_check: Delta exceeds (10 kappa)^-2");
  if (grid_n < 2) throw ParameterError("psi_properties_check: grid needs at least two points");
  if (cfg.delta_cap == 0.0) throw ParameterError("psi_properties_check: Delta must be positive");

  PsiPropertiesReport r;
  r.grid_n = grid_n;
  const double a = cfg.small_delta, b = 1.0 - cfg.small_delta;
  const double lo = cfg.delta_cap, hi = 1.0 - cfg.delta_cap;
  double prev[2] = {0.0, 0.0};
  for (std::size_t k = 0; k < grid_n; ++k) {
    const double u = k + 1 == grid_n ? b : a + (b - a) * static_cast<double>(k) / static_cast<double>(grid_n - 1);
    const double g = gamma(u);
    const double dbound = 3.0 * std::sqrt(cfg.delta_cap / g) * std::log(kE / g);
    for (int j = 0; j < 2; ++j) {
      const int s = j == 0 ? 1 : -1;
      const double p = psi(u, cfg, s);
      if (p < lo || p > hi) ++r.range_failures;
      const double close = std::abs(p - u) / (g / 10.0);
      r.closeness_margin = std::max(r.closeness_margin, close);
      if (close > 1.0) ++r.closeness_failures;
      if (k > 0 && !(p > prev[j])) ++r.monotonicity_failures;
      prev[j] = p;
      const double dev = std::abs(psi_derivative(u, cfg, s) - 1.0) / dbound;
      r.derivative_margin = std::max(r.derivative_margin, dev);
      if (dev > 1.0) ++r.derivative_failures;
    }
  }
  r.closeness_margin_at_half = std::abs(psi(0.5, cfg, +1) - 0.5) / (0.5 / 10.0);
  return r;
}

// ---------------------------------------------------------------------------

namespace {

void check_inputs(const SampleMatrix& sample, const DistributionSpec& ref) {
  ref.validate();
  if (sample.cols() != ref.dim) throw ShapeError("sample dimension does not match the reference law");
  if (sample.rows() == 0) throw ParameterError("sample has no rows");
}

// Exact marginal with a true distribution function, or nullptr plus a skip record.
MarginalPtr exact_marginal(const DistributionSpec& ref, const Vector& th, const MarginalOptions& o,
                           std::size_t& skipped, std::vector<std::string>& reasons) {
  try {
    check_direction({th.data(), static_cast<std::size_t>(th.size())}, ref.dim);
    MarginalPtr q = make_marginal(ref, {th.data(), static_cast<std::size_t>(th.size())}, o);
    if (q->exact_cdf()) return q;
    reasons.push_back("only a Monte Carlo reference is available for " + ref.id());
  } catch (const BackendUnavailable& e) {
    reasons.emplace_back(e.what());
  }
  ++skipped;
  return nullptr;
}

std::vector<double> sorted_projection(const SampleMatrix& sample, const Vector& th) {
  const Vector p = sample.entries * th;
  std::vector<double> v(p.data(), p.data() + p.size());
  std::sort(v.begin(), v.end());
  return v;
}

struct Probe {
  double F;
  std::size_t count;
  double bound;
  double ratio;
  double ratio_nolog;
  bool excluded;
  bool violated;
};

Probe score(double F, std::size_t count, std::size_t m, double delta_cap) {
  Probe p{F, count, 0.0, 0.0, 0.0, false, false};
  if (F < delta_cap || F > 1.0 - delta_cap) {
    p.excluded = true;
    return p;
  }
  const double dev = std::abs(static_cast<double>(count) / static_cast<double>(m) - F);
  p.bound = dkw_bound(F, delta_cap, true);
  const double nolog = dkw_bound(F, delta_cap, false);
  auto ratio = [&](double b) {
    if (b > 0.0) return dev / b;
    return dev > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
  };
  p.ratio = ratio(p.bound);
  p.ratio_nolog = ratio(nolog);
  p.violated = dev > p.bound;
  return p;
}

}  // namespace

void ViolationReport::merge(const ViolationReport& o) {
  m = std::max(m, o.m);
  probes += o.probes;
  excluded += o.excluded;
  violations += o.violations;
  worst_ratio = std::max(worst_ratio, o.worst_ratio);
  worst_ratio_nolog = std::max(worst_ratio_nolog, o.worst_ratio_nolog);
  skipped_directions += o.skipped_directions;
  skip_reasons.insert(skip_reasons.end(), o.skip_reasons.begin(), o.skip_reasons.end());
  records.insert(records.end(), o.records.begin(), o.records.end());
}

ViolationReport dkw_scan(const SampleMatrix& sample, const DistributionSpec& ref,
                         const DkwConfig& cfg, std::span<const Vector> dirs,
                         std::span<const double> levels, const ScanOptions& options) {
  check_inputs(sample, ref);
  for (double u : levels) check_open_level(u, "dkw_scan");
  ViolationReport r;
  r.m = sample.rows();
  for (std::size_t id = 0; id < dirs.size(); ++id) {
    const MarginalPtr q = exact_marginal(ref, dirs[id], options.marginal, r.skipped_directions, r.skip_reasons);
    if (!q) continue;
    const auto y = sorted_projection(sample, dirs[id]);
    for (double u : levels) {
      const double t = q->quantile(u);
      const auto count = static_cast<std::size_t>(std::upper_bound(y.begin(), y.end(), t) - y.begin());
      const Probe p = score(q->cdf(t), count, r.m, cfg.delta_cap);
      if (p.excluded) {
        ++r.excluded;
      } else {
        ++r.probes;
        if (p.violated) ++r.violations;
        r.worst_ratio = std::max(r.worst_ratio, p.ratio);
        r.worst_ratio_nolog = std::max(r.worst_ratio_nolog, p.ratio_nolog);
      }
      if (options.keep_records) {
        r.records.push_back({id, t, p.F, count, static_cast<double>(count) / static_cast<double>(r.m),
                             p.bound, p.ratio, p.ratio_nolog, p.excluded, p.violated});
      }
    }
  }
  return r;
}

ViolationReport dkw_scan(const SampleMatrix& sample, const DistributionSpec& ref,
                         const DkwConfig& cfg, std::span<const Vector> dirs, std::size_t t_grid,
                         const ScanOptions& options) {
  if (t_grid == 0) throw ParameterError("dkw_scan: t_grid must be positive");
  std::vector<double> levels(t_grid);
  for (std::size_t k = 0; k < t_grid; ++k)
    levels[k] = static_cast<double>(k + 1) / static_cast<double>(t_grid + 1);
  return dkw_scan(sample, ref, cfg, dirs, levels, options);
}

void SandwichReport::merge(const SandwichReport& o) {
  probes += o.probes;
  passes += o.passes;
  lower_failures += o.lower_failures;
  upper_failures += o.upper_failures;
  aligned_violations += o.aligned_violations;
  implication_breaches += o.implication_breaches;
  skipped_directions += o.skipped_directions;
  skip_reasons.insert(skip_reasons.end(), o.skip_reasons.begin(), o.skip_reasons.end());
  records.insert(records.end(), o.records.begin(), o.records.end());
}

SandwichReport quantile_sandwich_check(const SampleMatrix& sample, const DistributionSpec& ref,
                                       const DkwConfig& cfg, std::span<const Vector> dirs,
                                       std::size_t u_grid, const ScanOptions& options) {
  check_inputs(sample, ref);
  if (u_grid == 0) throw ParameterError("quantile_sandwich_check: u_grid must be positive");
  if (!(cfg.small_delta < 0.5)) throw ParameterError("quantile_sandwich_check: [delta, 1 - delta] is empty");
  const std::size_t m = sample.rows();
  const double a = cfg.small_delta, width = 1.0 - 2.0 * cfg.small_delta;

  SandwichReport r;
  for (std::size_t id = 0; id < dirs.size(); ++id) {
    const MarginalPtr q = exact_marginal(ref, dirs[id], options.marginal, r.skipped_directions, r.skip_reasons);
    if (!q) continue;
    const auto y = sorted_projection(sample, dirs[id]);
    for (std::size_t k = 1; k <= u_grid; ++k) {
      SandwichRecord rec;
      rec.theta_id = id;
      rec.u = a + width * static_cast<double>(k) / static_cast<double>(u_grid + 1);
      rec.lower = q->quantile(psi(rec.u, cfg, -1));
      rec.upper = q->quantile(psi(rec.u, cfg, +1));
      // right-inverse of the empirical law: smallest j with j/m >= u
      auto j = static_cast<std::size_t>(std::ceil(rec.u * static_cast<double>(m)));
      j = std::clamp<std::size_t>(j, 1, m);
      while (j > 1 && static_cast<double>(j - 1) / static_cast<double>(m) >= rec.u) --j;
      while (j < m && static_cast<double>(j) / static_cast<double>(m) < rec.u) ++j;
      rec.empirical = y[j - 1];
      rec.pass = rec.lower <= rec.empirical && rec.empirical <= rec.upper;
      ++r.probes;
      if (rec.pass) {
        ++r.passes;
      } else {
        Probe p{};
        if (rec.empirical > rec.upper) {
          ++r.upper_failures;
          const auto c = static_cast<std::size_t>(std::upper_bound(y.begin(), y.end(), rec.upper) - y.begin());
          p = score(q->cdf(rec.upper), c, m, cfg.delta_cap);
        } else {
          ++r.lower_failures;
          const auto c = static_cast<std::size_t>(std::lower_bound(y.begin(), y.end(), rec.lower) - y.begin());
          const double left = q->cdf(std::nextafter(rec.lower, -std::numeric_limits<double>::infinity()));
          p = score(left, c, m, cfg.delta_cap);
        }
        rec.aligned_violation = p.violated;
        if (p.violated) ++r.aligned_violations;
        else ++r.implication_breaches;
      }
      if (options.keep_records) r.records.push_back(rec);
    }
  }
  return r;
}

}  // namespace msw
