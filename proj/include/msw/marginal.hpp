#pragma once

// One-dimensional marginals F_{mu^theta} of the laws in distributions.hpp.
//
// Every marginal exposes its distribution function, its right-inverse
// u -> inf{t : F(t) >= u} and the integrals of F^{-1} and (F^{-1})^2 over
// arbitrary level intervals (a, b], which is what the lambda-profile and the
// quantile form of W2 consume.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "msw/distributions.hpp"

namespace msw {

enum class QuantileBackend { closed_form, enumerated, monte_carlo_reference };

std::string to_string(QuantileBackend backend);

/// (integral of F^{-1}, integral of (F^{-1})^2) over a level interval.
struct CellIntegrals {
  double first = 0.0;
  double second = 0.0;
};

class Marginal {
 public:
  virtual ~Marginal() = default;

  virtual QuantileBackend backend() const = 0;
  /// Piecewise-constant quantile (finitely many atoms).
  virtual bool discrete() const = 0;

  virtual double cdf(double t) const = 0;
  /// Right-inverse of the distribution function; u in (0,1).
  virtual double quantile(double u) const = 0;
  /// Integrals of F^{-1} and (F^{-1})^2 over (a, b], 0 <= a <= b <= 1.
  virtual CellIntegrals interval_integrals(double a, double b) const = 0;

  virtual double mean() const = 0;
  virtual double second_moment() const = 0;

  /// Integrals over the cell ((i-1)/m, i/m], 1 <= i <= m.
  CellIntegrals cell_integrals(std::size_t i, std::size_t m) const;

  /// All m cells at once; overridden where cell boundaries can be shared.
  virtual std::vector<CellIntegrals> cell_table(std::size_t m) const;

  /// True distribution function available (closed form or exact enumeration).
  bool exact_cdf() const { return backend() != QuantileBackend::monte_carlo_reference; }
};

using MarginalPtr = std::shared_ptr<const Marginal>;

/// Finitely supported law; quantile integrals are exact sums over atoms.
class AtomicMarginal final : public Marginal {
 public:
  /// Atoms need not be sorted or distinct; probabilities must sum to 1.
  AtomicMarginal(std::vector<double> values, std::vector<double> probs, QuantileBackend backend);
  /// Equal-weight atoms (empirical reference law).
  AtomicMarginal(std::vector<double> values, QuantileBackend backend);

  QuantileBackend backend() const override { return backend_; }
  bool discrete() const override { return true; }
  double cdf(double t) const override;
  double quantile(double u) const override;
  CellIntegrals interval_integrals(double a, double b) const override;
  /// Cells inside a single atom get exactly (v/m, v^2/m), keeping the profile monotone.
  std::vector<CellIntegrals> cell_table(std::size_t m) const override;
  double mean() const override;
  double second_moment() const override;

  std::span<const double> atoms() const { return values_; }
  std::span<const double> cumulative() const { return cum_; }
  double total_mass() const { return mass_; }

 private:
  void finish();

  std::vector<double> values_;
  std::vector<double> cum_;
  double mass_ = 0.0;
  QuantileBackend backend_;
};

/// Symmetric law with a continuous distribution function. Subclasses describe the
/// lower half t <= 0 (distribution function, density and partial moments
/// E[Y^k ; Y <= t]); the upper half follows by symmetry, which keeps upper-tail
/// levels free of cancellation.
class SymmetricContinuousMarginal : public Marginal {
 public:
  bool discrete() const override { return false; }
  double cdf(double t) const override;
  double quantile(double u) const override;
  CellIntegrals interval_integrals(double a, double b) const override;
  std::vector<CellIntegrals> cell_table(std::size_t m) const override;
  double mean() const override { return 0.0; }
  double second_moment() const override { return 2.0 * partial_second(0.0); }

 protected:
  virtual double lower_cdf(double t) const = 0;       // F(t), t <= 0
  virtual double density(double t) const = 0;         // guide for Newton steps
  virtual double partial_first(double t) const = 0;   // E[Y ; Y <= t], t <= 0
  virtual double partial_second(double t) const = 0;  // E[Y^2 ; Y <= t], t <= 0
  /// Point t0 <= 0 with F(t0) < u, or -inf when the closed form is used.
  virtual double lower_bracket(double u) const = 0;
  /// Solves F(t) = u for u in (0, 1/2].
  virtual double lower_quantile(double u) const;

  double solve_lower(double u, double initial) const;

 private:
  // Integrals of F^{-1} and (F^{-1})^2 over (0, u] for u <= 1/2.
  CellIntegrals lower_integrals(double u) const;
};

class GaussianMarginal final : public SymmetricContinuousMarginal {
 public:
  QuantileBackend backend() const override { return QuantileBackend::closed_form; }
  double second_moment() const override { return 1.0; }

 protected:
  double lower_cdf(double t) const override;
  double density(double t) const override;
  double partial_first(double t) const override;
  double partial_second(double t) const override;
  double lower_bracket(double u) const override;
  double lower_quantile(double u) const override;
};

/// Signed mixture sum_j w_j Law(a_j L) of scaled unit-variance Laplace laws. This is
/// exactly the law of sum_j theta_j L_j when the |theta_j| are distinct
/// (partial fractions of the characteristic function).
class LaplaceMixtureMarginal final : public SymmetricContinuousMarginal {
 public:
  LaplaceMixtureMarginal(std::vector<double> weights, std::vector<double> scales);

  /// Law of sum_j theta_j L_j; nullptr when two |theta_j| coincide or the
  /// partial-fraction weights exceed `weight_limit` in magnitude.
  static std::shared_ptr<LaplaceMixtureMarginal> for_direction(std::span<const double> theta,
                                                                double weight_limit);

  QuantileBackend backend() const override { return QuantileBackend::closed_form; }
  std::span<const double> weights() const { return weights_; }
  std::span<const double> scales() const { return scales_; }

 protected:
  double lower_cdf(double t) const override;
  double density(double t) const override;
  double partial_first(double t) const override;
  double partial_second(double t) const override;
  double lower_bracket(double u) const override;
  double lower_quantile(double u) const override;

 private:
  std::vector<double> weights_;
  std::vector<double> scales_;
};

/// Marginal of R * W for W uniform on S^{d-1} (d >= 2), through the law of the first
/// coordinate of W (a symmetric Beta law) mixed over the radial atoms, plus an
/// optional Pareto radial tail handled by quadrature.
class SphereMarginal final : public SymmetricContinuousMarginal {
 public:
  struct Tail {
    double mass = 0.0;      // P(tail)
    double exponent = 11.0;
    double scale = 1.0;     // R = scale * s^{-1/exponent}, s uniform on (0,1)
  };

  SphereMarginal(std::size_t d, std::vector<double> radii, std::vector<double> probs,
                 std::optional<Tail> tail = std::nullopt);

  static std::shared_ptr<SphereMarginal> for_radial(std::size_t d, const RadialLaw& radial);

  QuantileBackend backend() const override { return QuantileBackend::closed_form; }
  bool tail_evaluated() const { return tail_.has_value(); }

 protected:
  double lower_cdf(double t) const override;
  double density(double t) const override;
  double partial_first(double t) const override;
  double partial_second(double t) const override;
  double lower_bracket(double u) const override;

 private:
  double coord_cdf(double w) const;   // P(W_1 <= w), w <= 0
  double coord_pdf(double w) const;
  double coord_pm1(double w) const;   // E[W_1 ; W_1 <= w]
  double coord_pm2(double w) const;   // E[W_1^2 ; W_1 <= w]
  template <class F>
  double tail_expectation(F&& f) const;

  std::size_t d_;
  std::vector<double> radii_;
  std::vector<double> probs_;
  std::optional<Tail> tail_;
  double pdf_const_;
  double r_max_;
};

struct MarginalOptions {
  /// Size of the Monte Carlo reference law; 0 disables the backend.
  std::size_t mc_budget = 10'000'000;
  std::uint64_t mc_seed = 0x6d73772d6d63ULL;
  /// Exact enumeration of cube marginals up to this many nonzero coordinates.
  std::size_t enumeration_limit = 20;
  /// Laplace-product marginals fall back to Monte Carlo beyond this weight magnitude.
  double laplace_weight_limit = 1e8;
};

/// Marginal law of <X, theta>; theta must be a unit vector of matching dimension.
MarginalPtr make_marginal(const DistributionSpec& spec, std::span<const double> theta,
                          const MarginalOptions& options = {});

struct QuantileValue {
  double value;
  QuantileBackend backend;
};

/// F^{-1}_{mu^theta}(u) with the backend that produced it.
QuantileValue marginal_quantile(const DistributionSpec& spec, std::span<const double> theta,
                                double u, const MarginalOptions& options = {});

/// Cell integrals with index validation (1 <= i <= m).
CellIntegrals cell_integrals(const Marginal& q, std::size_t i, std::size_t m);

/// Adaptive double-exponential quadrature of a quantile function over (a, b); the
/// substitution concentrates nodes at the endpoints, where quantiles may blow up.
/// Throws NumericError carrying the achieved relative error when `rel_tol` is not met.
CellIntegrals quadrature_interval_integrals(const std::function<double(double)>& quantile,
                                            double a, double b, double rel_tol = 1e-10);

/// Validates ||theta||_2 = 1 +- 1e-12 and dimension, throwing DomainError / ShapeError.
void check_direction(std::span<const double> theta, std::size_t dim);

}  // namespace msw
