#include "msw/transport1d.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "msw/error.hpp"
#include "msw/rng.hpp"

namespace msw {

SortedSlice SortedSlice::from(std::span<const double> x, std::string origin) {
  SortedSlice s;
  s.origin = std::move(origin);
  s.permutation.resize(x.size());
  std::iota(s.permutation.begin(), s.permutation.end(), std::size_t{0});
  std::stable_sort(s.permutation.begin(), s.permutation.end(),
                   [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  s.values.resize(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) s.values[k] = x[s.permutation[k]];
  return s;
}

double w2_pair(const SortedSlice& x, const SortedSlice& y) {
  if (x.size() != y.size()) throw ShapeError("w2_pair: slices differ in length");
  if (x.size() == 0) throw ParameterError("w2_pair: empty slices");
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double diff = x.values[i] - y.values[i];
    acc += diff * diff;
  }
  return std::sqrt(acc / static_cast<double>(x.size()));
}

double w2_bruteforce(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ShapeError("w2_bruteforce: inputs differ in length");
  if (x.size() > 10) throw SizeError("w2_bruteforce: m! enumeration limited to m <= 10");
  if (x.empty()) throw ParameterError("w2_bruteforce: empty inputs");
  std::vector<std::size_t> perm(x.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  double best = INFINITY;
  do {
    double acc = 0.0;
    for (std::size_t i = 0; i < perm.size(); ++i) {
      const double diff = x[perm[i]] - y[i];
      acc += diff * diff;
    }
    best = std::min(best, acc);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return std::sqrt(best / static_cast<double>(x.size()));
}

double w2_vs_cells(std::span<const double> sorted, std::span<const CellIntegrals> cells) {
  if (sorted.size() != cells.size()) throw ShapeError("w2_vs_cells: table does not match slice");
  if (sorted.empty()) throw ParameterError("w2_vs_cells: empty slice");
  const double m = static_cast<double>(sorted.size());
  // sum_i int_cell (x_i - F^{-1})^2 = sum x_i^2 / m - 2 sum x_i C1_i + sum C2_i
  double sq = 0.0, cross = 0.0, ref = 0.0;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    sq += sorted[i] * sorted[i];
    cross += sorted[i] * cells[i].first;
    ref += cells[i].second;
  }
  const double w2sq = sq / m - 2.0 * cross + ref;
  if (!std::isfinite(w2sq)) throw NumericError("non-finite transport cost");
  return std::sqrt(std::max(w2sq, 0.0));
}

namespace {

// Both quantile functions are step functions: sweep the common refinement of the
// sample cells and the atom levels, accumulating (x_i - v_k)^2 exactly per piece.
double w2_vs_atoms(std::span<const double> x, const AtomicMarginal& q) {
  const auto v = q.atoms();
  const auto cum = q.cumulative();
  const double m = static_cast<double>(x.size());
  double acc = 0.0, prev = 0.0;
  std::size_t i = 0, k = 0;
  while (i < x.size()) {
    const double cell_end = static_cast<double>(i + 1) / m;
    const double next = std::min(cell_end, cum[k]);
    const double diff = x[i] - v[k];
    acc += (next - prev) * diff * diff;
    prev = next;
    if (next == cell_end) ++i;
    if (next == cum[k] && k + 1 < v.size()) ++k;
  }
  return std::sqrt(acc);
}

}  // namespace

double w2_vs_quantile(const SortedSlice& x, const Marginal& q) {
  if (x.size() == 0) throw ParameterError("w2_vs_quantile: empty slice");
  if (const auto* atoms = dynamic_cast<const AtomicMarginal*>(&q)) return w2_vs_atoms(x.values, *atoms);
  const auto cells = q.cell_table(x.size());
  return w2_vs_cells(x.values, cells);
}

LambdaProfile lambda_profile(std::span<const CellIntegrals> cells) {
  if (cells.empty()) throw ParameterError("lambda_profile: m must be positive");
  LambdaProfile p;
  const double m = static_cast<double>(cells.size());
  p.lambdas.reserve(cells.size());
  for (const auto& c : cells) p.lambdas.push_back(m * c.first);
  return p;
}

LambdaProfile lambda_profile(const Marginal& q, std::size_t m) {
  if (m == 0) throw ParameterError("lambda_profile: m must be positive");
  auto p = lambda_profile(q.cell_table(m));
  p.source = to_string(q.backend());
  return p;
}

double rearrangement_deviation(const SortedSlice& x, const LambdaProfile& lam) {
  if (x.size() != lam.size()) throw ShapeError("rearrangement_deviation: lengths differ");
  if (x.size() == 0) throw ParameterError("rearrangement_deviation: empty input");
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double diff = x.values[i] - lam.lambdas[i];
    acc += diff * diff;
  }
  return std::sqrt(acc / static_cast<double>(x.size()));
}

namespace {

void check_witness_parameters(std::size_t m, double delta, double c) {
  if (m < 4) throw ParameterError("bernoulli_witness: m must be at least 4");
  if (!(delta >= 0.0 && delta < 0.25)) throw ParameterError("bernoulli_witness: delta must lie in [0, 1/4)");
  if (!(c > 0.0)) throw ParameterError("bernoulli_witness: threshold constant must be positive");
}

}  // namespace

WitnessResult bernoulli_witness_from_signs(std::span<const double> signs, double delta, double c) {
  check_witness_parameters(signs.size(), delta, c);
  WitnessResult r;
  r.m = signs.size();
  r.delta = delta;
  for (double s : signs) {
    if (s == -1.0) ++r.negatives;
    else if (s != 1.0) throw ParameterError("bernoulli_witness: signs must be +-1");
  }
  const AtomicMarginal law({-1.0, 1.0}, {0.5, 0.5}, QuantileBackend::enumerated);
  r.w2 = w2_vs_quantile(SortedSlice::from(signs), law);
  const double m = static_cast<double>(r.m);
  const double neg = static_cast<double>(r.negatives);
  r.flag = neg <= m * (0.5 - c * std::sqrt(delta));
  r.event_mass = std::max(0.0, 0.5 - neg / m);
  return r;
}

WitnessResult bernoulli_witness(std::size_t m, double delta, std::uint64_t seed, double c) {
  check_witness_parameters(m, delta, c);
  Rng rng(seed);
  std::vector<double> signs(m);
  for (auto& s : signs) s = rng.rademacher();
  return bernoulli_witness_from_signs(signs, delta, c);
}

}  // namespace msw
