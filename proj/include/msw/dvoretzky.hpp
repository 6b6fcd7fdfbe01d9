#pragma once

// lp norms, critical dimensions and the two-stage random embedding D Gamma.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "msw/distributions.hpp"

namespace msw {

enum class NormKind { l1, l2, linf, lp };

struct NormSpec {
  NormKind kind = NormKind::l2;
  double p = 2.0;  // used by lp; 1 < p < inf
  std::size_t n = 1;

  static NormSpec l1(std::size_t n);
  static NormSpec l2(std::size_t n);
  static NormSpec linf(std::size_t n);
  static NormSpec lp(std::size_t n, double p);

  double exponent() const;  // p, with +inf for linf
  double conjugate() const;  // q with 1/p + 1/q = 1
  double eval(std::span<const double> x) const;
  double eval(const Vector& x) const { return eval(std::span<const double>(x.data(), static_cast<std::size_t>(x.size()))); }
  /// sup of |t|_2 over the dual unit ball: max(1, n^{1/2 - 1/q}).
  double dual_radius() const;
  /// E|G| for a standard gaussian G in R^n when a closed form exists (l1, l2).
  std::optional<double> gaussian_mean() const;
  std::string name() const;

  void validate() const;
};

void to_json(nlohmann::json& j, const NormSpec& s);
void from_json(const nlohmann::json& j, NormSpec& s);

/// E max_i |G_i| = int_0^inf 1 - (2 Phi(t) - 1)^n dt by quadrature.
double gaussian_linf_mean(std::size_t n);

struct CriticalDimension {
  double d_star = 0.0;
  double std_error = 0.0;
  double gaussian_mean = 0.0;
  double gaussian_mean_stderr = 0.0;
  std::string method;  // closed_form, quadrature or monte_carlo
};

/// d* = (E|G| / R(K°))^2, standard error by the delta method. Monte Carlo is used
/// when no closed form (or quadrature, for linf) exists, or when forced.
CriticalDimension critical_dimension(const NormSpec& norm, std::size_t mc_samples, std::uint64_t seed,
                                     bool force_monte_carlo = false);

struct GaussianDirect {
  std::size_t n = 0;
  std::size_t d = 0;
};

struct TwoStage {
  DistributionSpec x;  // law of the rows X_i in R^d
  DistributionSpec z;  // law of the columns Z_i in R^n; iid coordinates
  std::size_t n = 0;
  std::size_t d = 0;
  std::size_t m = 0;
};

struct TwoStageEnsemble {
  Matrix gamma;  // m x d, X / sqrt(m)
  Matrix D;      // n x m, columns Z_i
};

/// Gamma from rows X_i: X / sqrt(m).
Matrix gamma_from_sample(const SampleMatrix& x);

/// Throws ConfigError when the Z law lacks iid coordinates or shapes disagree.
TwoStageEnsemble build_two_stage(const TwoStage& cfg, std::uint64_t seed);

/// n x d gaussian matrix.
Matrix gaussian_direct(const GaussianDirect& cfg, std::uint64_t seed);

/// D Gamma with fresh columns Z_i, without keeping D.
Matrix two_stage_image(const Matrix& gamma, const DistributionSpec& z, std::uint64_t seed);

/// d = 2: angles 2 pi k / count; otherwise random unit vectors.
std::vector<Vector> probe_directions(std::size_t d, std::size_t count, std::uint64_t seed);

struct EnsembleReport {
  double lambda = 0.0;  // median of psi_values
  double mean = 0.0;
  double oscillation = 0.0;  // max |v / lambda - 1|
  std::vector<double> psi_values;
  double d_star_used = 0.0;
  std::size_t n = 0, d = 0, m = 0;
};

/// Psi(u) = |A u| for the n x d operator A.
EnsembleReport psi_oscillation(const Matrix& A, const NormSpec& norm, std::span<const Vector> dirs);

/// Psi(u) = |D Gamma u|.
EnsembleReport psi_oscillation(const Matrix& gamma, const Matrix& D, const NormSpec& norm,
                               std::span<const Vector> dirs);

struct DecompositionDiagnostics {
  std::size_t s = 0, r = 0;
  double xi_u = 0.0;
  double phi_r = 0.0;
  double club_norm = 0.0;     // indices in I_{u,s}
  double diamond_norm = 0.0;  // I^c and J_{u,r}
  double heart_norm = 0.0;    // I^c and not J_{u,r}
  double full_norm = 0.0;
  double reconstruction_error = 0.0;  // relative, in the l2 sense
  std::size_t i_size = 0;
  std::size_t ic_j_size = 0;
  /// Every heart term satisfies |<X_i,u> Z_i / sqrt m| < xi_u phi(r).
  bool heart_terms_bounded = true;
};

/// phi(r) = c1L (E|G| + R(K°) sqrt(log(e m / r))).
double phi_r(std::size_t r, std::size_t m, double gaussian_mean, double dual_radius, double c1L = 1.0);

/// |Z_i| for every column of D.
std::vector<double> decomposition_column_norms(const Matrix& D, const NormSpec& norm);

/// D is n x m with columns Z_i; gaussian_mean is E|G| for the norm. Pass the column
/// norms when probing many directions with the same D.
DecompositionDiagnostics decomposition_diagnostics(std::span<const double> u, const Matrix& gamma,
                                                   const Matrix& D, std::size_t s, std::size_t r,
                                                   const NormSpec& norm, double gaussian_mean,
                                                   double c1L = 1.0,
                                                   std::span<const double> column_norms = {});

struct FlatnessReport {
  std::vector<double> mean_psi;  // per direction
  std::vector<double> std_error;
  double max_pair_difference = 0.0;
  /// max over pairs of |E Psi(u) - E Psi(v)| / (E|G| * two_direction_distance(u, v))
  double max_ratio = 0.0;
  double lambda = 0.0;  // median of mean_psi
};

FlatnessReport expectation_flatness(const Matrix& gamma, const DistributionSpec& z, const NormSpec& norm,
                                    std::span<const Vector> dirs, std::size_t z_trials, std::uint64_t seed,
                                    double gaussian_mean);

struct ConditionalMeanResult {
  bool precondition_failed = false;
  std::size_t census = 0;    // #{i : |<X_i, v>| >= eta}
  std::size_t required = 0;  // ceil(delta m)
  double lower_ratio = 0.0;  // E_Z Psi(v) / E|G|
  double mean_psi = 0.0;
  double std_error = 0.0;
};

ConditionalMeanResult conditional_mean_bounds(const Matrix& gamma, const DistributionSpec& z,
                                              const NormSpec& norm, std::span<const double> v,
                                              std::size_t z_trials, double eta, double census_fraction,
                                              std::uint64_t seed, double gaussian_mean);

}  // namespace msw
