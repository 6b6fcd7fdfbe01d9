#pragma once

// Max-sliced W2 between a sample and its source law, and the matrix statistics
// rho and H of the projected sample.

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "msw/distributions.hpp"
#include "msw/marginal.hpp"
#include "msw/transport1d.hpp"

namespace msw {

enum class SlicedMethod { random_search, gradient_ascent, random_search_polish, grid_2d };

std::string to_string(SlicedMethod method);

/// Every reported value is a lower bound on the supremum over the sphere.
struct SlicedReport {
  Vector best_direction;
  double value = 0.0;
  SlicedMethod method = SlicedMethod::random_search;
  std::size_t restarts = 0;
  std::vector<double> per_restart;
  std::size_t iterations = 0;
  std::size_t skipped_directions = 0;
  std::vector<std::string> skip_reasons;
  /// Tangent gradient norm at the best direction (ascent methods only).
  double tangent_gradient_norm = 0.0;
  bool converged = false;
};

/// <X_i, theta> sorted; theta must be a unit vector.
SortedSlice project_sorted(const SampleMatrix& sample, std::span<const double> theta);

/// u -> W2(mu_m^u, mu^u). The reference cell table is computed once when the law is
/// rotation invariant; otherwise a marginal is built per direction.
class ProjectionObjective {
 public:
  ProjectionObjective(const SampleMatrix& sample, const DistributionSpec& ref,
                      MarginalOptions options = {});

  bool rotation_invariant() const { return invariant_; }
  std::size_t dim() const { return static_cast<std::size_t>(sample_->entries.cols()); }
  std::size_t rows() const { return static_cast<std::size_t>(sample_->entries.rows()); }

  /// W2 in direction theta (unit); throws BackendUnavailable when no marginal exists.
  double w2(std::span<const double> theta) const;

  /// W2^2 and its a.e. gradient (2/m) sum (<x_(i), theta> - lambda_i) x_(i) in R^d.
  /// Rotation-invariant references only.
  double value_and_gradient(const Vector& theta, Vector& gradient) const;

  std::size_t evaluations() const { return evaluations_; }

 private:
  const SampleMatrix* sample_;
  DistributionSpec ref_;
  MarginalOptions options_;
  bool invariant_;
  MarginalPtr fixed_;
  std::vector<CellIntegrals> cells_;
  std::vector<double> lambdas_;
  mutable std::size_t evaluations_ = 0;
};

/// Unit directions; the first n of a call with more directions are identical (nested).
std::vector<Vector> random_directions(std::size_t d, std::size_t n, std::uint64_t seed);

struct RandomSearchOptions {
  /// Evaluate the coordinate axes before the random directions.
  bool include_axes = false;
  MarginalOptions marginal;
};

SlicedReport sw2_random_search(const SampleMatrix& sample, const DistributionSpec& ref,
                               std::size_t n_dirs, std::uint64_t seed,
                               const RandomSearchOptions& options = {});

struct AscentOptions {
  std::size_t restarts = 16;
  double step = 0.1;
  double tol = 1e-8;
  std::size_t max_iter = 500;
  /// Used when the reference is not rotation invariant: screening directions and
  /// finite-difference polish.
  std::size_t screening_dirs = 64;
  double fd_step = 1e-5;
  std::size_t polish_iter = 50;
  bool include_axes = false;
  MarginalOptions marginal;
};

SlicedReport sw2_gradient_ascent(const SampleMatrix& sample, const DistributionSpec& ref,
                                 std::size_t restarts, double step, double tol,
                                 std::size_t max_iter, std::uint64_t seed);

SlicedReport sw2_gradient_ascent(const SampleMatrix& sample, const DistributionSpec& ref,
                                 std::uint64_t seed, const AscentOptions& options);

/// max over the angles k 2 pi / grid_n of the per-direction W2; d = 2, grid_n >= 360.
double sw2_grid_2d(const SampleMatrix& sample, const DistributionSpec& ref, std::size_t grid_n,
                   const MarginalOptions& options = {});

/// w2_pair of the two sorted projections.
double two_direction_distance(const SampleMatrix& sample, std::span<const double> u,
                              std::span<const double> v);

struct Spectrum {
  double sigma_max = 0.0;
  double sigma_min = 0.0;
};

/// Extremal singular values of Gamma = X / sqrt(m); sigma_min = 0 when m < d.
Spectrum gamma_spectrum(const SampleMatrix& sample);

/// sup over the sphere of | |Gamma theta|^2 - 1 |.
double rho(const SampleMatrix& sample);

/// ((1/m) * sum of the s largest <X_i, theta>^2)^{1/2}.
double h_direction(const SampleMatrix& sample, std::span<const double> theta, std::size_t s);

struct HResult {
  double value = 0.0;
  Vector direction;
  std::vector<std::size_t> index_set;  // sorted
  std::size_t rounds = 0;
  /// Objective (squared, before the root) after every half-step of the best restart.
  std::vector<double> trace;
};

/// Alternating maximization over (index set, direction).
HResult h_sm(const SampleMatrix& sample, std::size_t s, std::size_t restarts, std::uint64_t seed);

/// Exact maximum over all index sets; (m choose s) <= 1e5.
double h_sm_bruteforce(const SampleMatrix& sample, std::size_t s);

struct MatrixStats {
  double rho = 0.0;
  double sigma_max = 0.0;
  double sigma_min = 0.0;
  std::map<std::size_t, double> h_values;
};

MatrixStats matrix_stats(const SampleMatrix& sample, std::span<const std::size_t> s_values,
                         std::size_t restarts, std::uint64_t seed);

/// Per-direction audit of | |Gamma theta|^2 - 1 | <= w (w + 2), w = W2 in direction theta.
struct BaiYinAudit {
  double lhs = 0.0;
  double w2 = 0.0;
  double bound = 0.0;
  bool holds = true;
};

BaiYinAudit bai_yin_audit(const SampleMatrix& sample, const ProjectionObjective& objective,
                          std::span<const double> theta, double slack = 1e-10);

}  // namespace msw
