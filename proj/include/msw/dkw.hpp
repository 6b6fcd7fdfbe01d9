#pragma once

// Scale-sensitive DKW machinery: the level perturbations psi_+-, the empirical
// distribution-function scan and the quantile sandwich.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "msw/distributions.hpp"
#include "msw/marginal.hpp"

namespace msw {

/// Delta (the level cap), kappa and the derived delta = kappa Delta log^2(e / Delta).
struct DkwConfig {
  explicit DkwConfig(double delta_cap, double kappa = 400.0);

  double delta_cap;
  double kappa;
  double small_delta;

  /// Delta <= (10 kappa)^{-2}.
  bool small_regime() const;
};

/// min(u, 1 - u) on [0, 1].
double gamma(double u);

/// u + sign * 2 sqrt(Delta gamma(u)) log(e / gamma(u)), u in (0, 1), sign = +-1.
double psi(double u, const DkwConfig& cfg, int sign);

/// Analytic derivative; at u = 1/2 the left derivative.
double psi_derivative(double u, const DkwConfig& cfg, int sign);

/// sqrt(Delta gamma(F)) log(e / gamma(F)), or without the logarithm.
double dkw_bound(double F, double delta_cap, bool with_log = true);

struct PsiPropertiesReport {
  std::size_t grid_n = 0;
  std::size_t range_failures = 0;        // psi(u) outside [Delta, 1 - Delta]
  std::size_t closeness_failures = 0;    // |psi(u) - u| > gamma(u) / 10
  std::size_t monotonicity_failures = 0;
  std::size_t derivative_failures = 0;
  /// max over the grid of |psi - u| / (gamma / 10)
  double closeness_margin = 0.0;
  /// the same ratio at u = 1/2
  double closeness_margin_at_half = 0.0;
  /// max of |psi' - 1| / (3 sqrt(Delta / gamma) log(e / gamma))
  double derivative_margin = 0.0;

  bool passed() const {
    return range_failures + closeness_failures + monotonicity_failures + derivative_failures == 0;
  }
};

/// Clauses on a grid_n-point grid of [delta, 1 - delta], endpoints included.
/// Requires kappa >= 400 and Delta <= (10 kappa)^{-2}.
PsiPropertiesReport psi_properties_check(const DkwConfig& cfg, std::size_t grid_n);

struct ProbeRecord {
  std::size_t theta_id = 0;
  double t = 0.0;
  double F = 0.0;
  std::size_t count = 0;  // #{i : <X_i, theta> <= t}
  double F_m = 0.0;       // count / m
  double bound = 0.0;
  double ratio = 0.0;     // |F_m - F| / bound
  double ratio_nolog = 0.0;
  bool excluded = false;  // F outside [Delta, 1 - Delta]
  bool violated = false;
};

struct ViolationReport {
  std::size_t m = 0;
  std::size_t probes = 0;    // scored probes
  std::size_t excluded = 0;
  std::size_t violations = 0;
  double worst_ratio = 0.0;
  double worst_ratio_nolog = 0.0;
  std::size_t skipped_directions = 0;
  std::vector<std::string> skip_reasons;
  std::vector<ProbeRecord> records;

  double violation_rate() const {
    return probes ? static_cast<double>(violations) / static_cast<double>(probes) : 0.0;
  }
  /// Associative; records are appended in call order.
  void merge(const ViolationReport& other);
};

struct ScanOptions {
  MarginalOptions marginal;
  bool keep_records = true;
};

/// Probes t = F^{-1}(u) for every level in `levels` and every direction.
ViolationReport dkw_scan(const SampleMatrix& sample, const DistributionSpec& ref,
                         const DkwConfig& cfg, std::span<const Vector> dirs,
                         std::span<const double> levels, const ScanOptions& options = {});

/// Levels k / (t_grid + 1), k = 1..t_grid.
ViolationReport dkw_scan(const SampleMatrix& sample, const DistributionSpec& ref,
                         const DkwConfig& cfg, std::span<const Vector> dirs, std::size_t t_grid,
                         const ScanOptions& options = {});

struct SandwichRecord {
  std::size_t theta_id = 0;
  double u = 0.0;
  double lower = 0.0;      // F^{-1}(psi_-(u))
  double empirical = 0.0;  // F_m^{-1}(u)
  double upper = 0.0;      // F^{-1}(psi_+(u))
  bool pass = false;
  /// DKW violated at the endpoint the failure points to (right limit at the upper
  /// endpoint, left limit at the lower one).
  bool aligned_violation = false;
};

struct SandwichReport {
  std::size_t probes = 0;
  std::size_t passes = 0;
  std::size_t lower_failures = 0;
  std::size_t upper_failures = 0;
  std::size_t aligned_violations = 0;
  /// Failures with no DKW violation at the aligned probe.
  std::size_t implication_breaches = 0;
  std::size_t skipped_directions = 0;
  std::vector<std::string> skip_reasons;
  std::vector<SandwichRecord> records;

  std::size_t failures() const { return lower_failures + upper_failures; }
  double pass_rate() const {
    return probes ? static_cast<double>(passes) / static_cast<double>(probes) : 0.0;
  }
  void merge(const SandwichReport& other);
};

/// u_k = delta + (1 - 2 delta) k / (u_grid + 1), k = 1..u_grid; requires delta < 1/2.
SandwichReport quantile_sandwich_check(const SampleMatrix& sample, const DistributionSpec& ref,
                                       const DkwConfig& cfg, std::span<const Vector> dirs,
                                       std::size_t u_grid, const ScanOptions& options = {});

}  // namespace msw
