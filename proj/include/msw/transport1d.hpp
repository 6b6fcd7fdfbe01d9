#pragma once

// Exact one-dimensional quadratic transport.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "msw/marginal.hpp"

namespace msw {

/// Nondecreasing rearrangement of a finite sequence.
struct SortedSlice {
  std::vector<double> values;
  /// values[k] = input[permutation[k]]; ties keep input order.
  std::vector<std::size_t> permutation;
  std::string origin;

  static SortedSlice from(std::span<const double> x, std::string origin = {});

  std::size_t size() const { return values.size(); }
};

/// lambda_i = m * integral of F^{-1} over ((i-1)/m, i/m].
struct LambdaProfile {
  std::vector<double> lambdas;
  std::string source;

  std::size_t size() const { return lambdas.size(); }
};

/// W2 between the empirical measures of two equal-size samples.
double w2_pair(const SortedSlice& x, const SortedSlice& y);

/// Minimum over all m! matchings; m <= 10.
double w2_bruteforce(std::span<const double> x, std::span<const double> y);

/// W2 between the empirical measure of x and a reference law, from the reference's cells.
double w2_vs_quantile(const SortedSlice& x, const Marginal& q);

/// Same, with the m-cell table supplied by the caller (tables can be shared across slices).
double w2_vs_cells(std::span<const double> sorted, std::span<const CellIntegrals> cells);

LambdaProfile lambda_profile(const Marginal& q, std::size_t m);
LambdaProfile lambda_profile(std::span<const CellIntegrals> cells);

/// ((1/m) sum (x_i - lambda_i)^2)^{1/2}.
double rearrangement_deviation(const SortedSlice& x, const LambdaProfile& lam);

struct WitnessResult {
  std::size_t m = 0;
  double delta = 0.0;
  std::size_t negatives = 0;  // count of -1 signs
  double w2 = 0.0;
  bool flag = false;
  /// 1/2 - negatives/m: where the two quantile functions disagree (0 when negatives >= m/2).
  double event_mass = 0.0;
};

/// Default threshold constant c of the witness event {negatives <= m (1/2 - c sqrt(delta))}.
inline constexpr double kWitnessConstant = 0.25;

/// m Rademacher signs against the symmetric two-point law.
WitnessResult bernoulli_witness(std::size_t m, double delta, std::uint64_t seed,
                                double c = kWitnessConstant);

/// Same on given signs (entries must be +-1).
WitnessResult bernoulli_witness_from_signs(std::span<const double> signs, double delta,
                                           double c = kWitnessConstant);

}  // namespace msw
