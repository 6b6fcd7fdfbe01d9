#include "msw/maxsliced.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/SVD>

#include "msw/error.hpp"
#include "msw/rng.hpp"

namespace msw {

std::string to_string(SlicedMethod method) {
  switch (method) {
    case SlicedMethod::random_search: return "random_search";
    case SlicedMethod::gradient_ascent: return "gradient_ascent";
    case SlicedMethod::random_search_polish: return "random_search_polish";
    case SlicedMethod::grid_2d: return "grid_2d";
  }
  return "unknown";
}

namespace {

Eigen::Map<const Vector> as_vector(std::span<const double> v) {
  return {v.data(), static_cast<Eigen::Index>(v.size())};
}

std::span<const double> as_span(const Vector& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

void check_sample_dim(const SampleMatrix& s, std::size_t d) {
  if (s.cols() != d) throw ShapeError("sample dimension does not match the reference law");
  if (s.rows() == 0) throw ParameterError("sample has no rows");
}

}  // namespace

SortedSlice project_sorted(const SampleMatrix& sample, std::span<const double> theta) {
  check_direction(theta, sample.cols());
  const Vector p = sample.entries * as_vector(theta);
  return SortedSlice::from(std::span<const double>(p.data(), static_cast<std::size_t>(p.size())));
}

// ---------------------------------------------------------------------------
// ProjectionObjective

ProjectionObjective::ProjectionObjective(const SampleMatrix& sample, const DistributionSpec& ref,
                                         MarginalOptions options)
    : sample_(&sample), ref_(ref), options_(options), invariant_(ref.rotation_invariant()) {
  ref_.validate();
  check_sample_dim(sample, ref_.dim);
  if (invariant_) {
    Vector e = Vector::Zero(static_cast<Eigen::Index>(ref_.dim));
    e[0] = 1.0;
    fixed_ = make_marginal(ref_, as_span(e), options_);
    cells_ = fixed_->cell_table(rows());
    lambdas_ = lambda_profile(cells_).lambdas;
  }
}

double ProjectionObjective::w2(std::span<const double> theta) const {
  ++evaluations_;
  const SortedSlice slice = project_sorted(*sample_, theta);
  if (invariant_) {
    if (fixed_->discrete()) return w2_vs_quantile(slice, *fixed_);
    return w2_vs_cells(slice.values, cells_);
  }
  const MarginalPtr q = make_marginal(ref_, theta, options_);
  return w2_vs_quantile(slice, *q);
}

double ProjectionObjective::value_and_gradient(const Vector& theta, Vector& gradient) const {
  if (!invariant_) throw BackendUnavailable("gradient requires a rotation-invariant reference");
  if (theta.size() != static_cast<Eigen::Index>(dim())) throw ShapeError("direction dimension");
  ++evaluations_;
  const auto& x = sample_->entries;
  const Vector p = x * theta;
  const std::size_t m = rows();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return p[a] < p[b]; });
  const double mm = static_cast<double>(m);
  double sq = 0.0, cross = 0.0, ref = 0.0;
  gradient = Vector::Zero(theta.size());
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t r = order[i];
    const double y = p[static_cast<Eigen::Index>(r)];
    sq += y * y;
    cross += y * cells_[i].first;
    ref += cells_[i].second;
    gradient += (y - lambdas_[i]) * x.row(static_cast<Eigen::Index>(r)).transpose();
  }
  gradient *= 2.0 / mm;
  const double f = sq / mm - 2.0 * cross + ref;
  if (!std::isfinite(f) || !gradient.allFinite()) throw NumericError("non-finite objective");
  return std::max(f, 0.0);
}

// ---------------------------------------------------------------------------
// Direction sets

std::vector<Vector> random_directions(std::size_t d, std::size_t n, std::uint64_t seed) {
  if (d == 0) throw ParameterError("direction dimension must be positive");
  std::vector<Vector> out;
  out.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    Rng rng(split_seed(seed, k));
    Vector v(static_cast<Eigen::Index>(d));
    double norm = 0.0;
    while (norm == 0.0) {
      for (Eigen::Index j = 0; j < v.size(); ++j) v[j] = rng.normal();
      norm = v.norm();
    }
    out.push_back(v / norm);
  }
  return out;
}

namespace {

std::vector<Vector> search_directions(std::size_t d, std::size_t n, std::uint64_t seed, bool axes) {
  std::vector<Vector> dirs;
  if (axes) {
    for (std::size_t j = 0; j < d; ++j) {
      Vector e = Vector::Zero(static_cast<Eigen::Index>(d));
      e[static_cast<Eigen::Index>(j)] = 1.0;
      dirs.push_back(e);
    }
  }
  for (auto& v : random_directions(d, n, seed)) dirs.push_back(std::move(v));
  return dirs;
}

// W2 in a direction, or a recorded skip.
bool try_eval(const ProjectionObjective& obj, const Vector& th, double& out, SlicedReport& report) {
  try {
    out = obj.w2(as_span(th));
    return true;
  } catch (const BackendUnavailable& e) {
    ++report.skipped_directions;
    report.skip_reasons.emplace_back(e.what());
    return false;
  }
}

Vector geodesic(const Vector& th, const Vector& dir, double eta) {
  Vector v = std::cos(eta) * th + std::sin(eta) * dir;
  return v / v.norm();
}

constexpr double kMinStep = 1e-12;

}  // namespace

SlicedReport sw2_random_search(const SampleMatrix& sample, const DistributionSpec& ref,
                               std::size_t n_dirs, std::uint64_t seed,
                               const RandomSearchOptions& options) {
  if (n_dirs == 0) throw ParameterError("sw2_random_search: n_dirs must be positive");
  ProjectionObjective obj(sample, ref, options.marginal);
  SlicedReport report;
  report.method = SlicedMethod::random_search;
  for (const auto& th : search_directions(ref.dim, n_dirs, seed, options.include_axes)) {
    double w;
    if (!try_eval(obj, th, w, report)) continue;
    report.per_restart.push_back(w);
    if (report.per_restart.size() == 1 || w > report.value) {
      report.value = w;
      report.best_direction = th;
    }
  }
  report.restarts = report.per_restart.size();
  report.iterations = report.restarts;
  return report;
}

// ---------------------------------------------------------------------------
// Ascent

namespace {

struct AscentPath {
  Vector theta;
  double value = 0.0;  // W2
  double grad_norm = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
};

// Riemannian ascent on W2^2 with halving backtracking along geodesics.
AscentPath ascend(const ProjectionObjective& obj, Vector th, const AscentOptions& o) {
  AscentPath path;
  Vector g;
  double f = obj.value_and_gradient(th, g);
  double eta = o.step;
  for (;;) {
    const Vector gt = g - g.dot(th) * th;
    path.grad_norm = gt.norm();
    if (path.grad_norm <= o.tol) {
      path.converged = true;
      break;
    }
    if (path.iterations >= o.max_iter) break;
    const Vector dir = gt / path.grad_norm;
    bool accepted = false;
    while (eta >= kMinStep) {
      const Vector cand = geodesic(th, dir, eta);
      Vector gc;
      const double fc = obj.value_and_gradient(cand, gc);
      if (fc > f) {
        th = cand;
        f = fc;
        g = gc;
        eta = std::min(2.0 * eta, o.step);
        accepted = true;
        break;
      }
      eta *= 0.5;
    }
    if (!accepted) break;  // kink: no ascent along the a.e. gradient
    ++path.iterations;
  }
  path.theta = th;
  path.value = std::sqrt(f);
  return path;
}

// Central differences of W2 over normalized perturbations, then the same line search.
AscentPath polish(const ProjectionObjective& obj, Vector th, double f, const AscentOptions& o) {
  AscentPath path;
  const Eigen::Index d = th.size();
  double eta = o.step;
  for (;;) {
    Vector g(d);
    for (Eigen::Index j = 0; j < d; ++j) {
      Vector a = th, b = th;
      a[j] += o.fd_step;
      b[j] -= o.fd_step;
      a.normalize();
      b.normalize();
      g[j] = (obj.w2(as_span(a)) - obj.w2(as_span(b))) / (2.0 * o.fd_step);
    }
    const Vector gt = g - g.dot(th) * th;
    path.grad_norm = gt.norm();
    if (path.grad_norm <= o.tol) {
      path.converged = true;
      break;
    }
    if (path.iterations >= o.polish_iter) break;
    const Vector dir = gt / path.grad_norm;
    bool accepted = false;
    while (eta >= 1e-9) {
      const Vector cand = geodesic(th, dir, eta);
      const double fc = obj.w2(as_span(cand));
      if (fc > f) {
        th = cand;
        f = fc;
        eta = std::min(2.0 * eta, o.step);
        accepted = true;
        break;
      }
      eta *= 0.5;
    }
    if (!accepted) break;
    ++path.iterations;
  }
  path.theta = th;
  path.value = f;
  return path;
}

void keep_best(SlicedReport& r, const AscentPath& p) {
  r.per_restart.push_back(p.value);
  r.iterations += p.iterations;
  if (r.per_restart.size() == 1 || p.value > r.value) {
    r.value = p.value;
    r.best_direction = p.theta;
    r.tangent_gradient_norm = p.grad_norm;
    r.converged = p.converged;
  }
}

}  // namespace

SlicedReport sw2_gradient_ascent(const SampleMatrix& sample, const DistributionSpec& ref,
                                 std::uint64_t seed, const AscentOptions& o) {
  if (!(o.step > 0.0)) throw ParameterError("sw2_gradient_ascent: step must be positive");
  if (!(o.tol >= 0.0)) throw ParameterError("sw2_gradient_ascent: tol must be nonnegative");
  if (o.restarts == 0) throw ParameterError("sw2_gradient_ascent: restarts must be positive");
  ProjectionObjective obj(sample, ref, o.marginal);
  SlicedReport report;
  if (obj.rotation_invariant()) {
    report.method = SlicedMethod::gradient_ascent;
    for (const auto& th : search_directions(ref.dim, o.restarts, seed, o.include_axes))
      keep_best(report, ascend(obj, th, o));
    report.restarts = report.per_restart.size();
    return report;
  }

  report.method = SlicedMethod::random_search_polish;
  const auto dirs = search_directions(ref.dim, std::max(o.screening_dirs, o.restarts), seed,
                                      o.include_axes);
  std::vector<std::pair<double, std::size_t>> screened;
  for (std::size_t k = 0; k < dirs.size(); ++k) {
    double w;
    if (try_eval(obj, dirs[k], w, report)) screened.emplace_back(w, k);
  }
  if (screened.empty()) return report;
  // Highest screened values first; ties by position.
  std::stable_sort(screened.begin(), screened.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  const std::size_t n = std::min(o.restarts, screened.size());
  for (std::size_t r = 0; r < n; ++r) {
    try {
      keep_best(report, polish(obj, dirs[screened[r].second], screened[r].first, o));
    } catch (const BackendUnavailable& e) {
      ++report.skipped_directions;
      report.skip_reasons.emplace_back(e.what());
      AscentPath p;
      p.theta = dirs[screened[r].second];
      p.value = screened[r].first;
      keep_best(report, p);
    }
  }
  report.restarts = report.per_restart.size();
  return report;
}

SlicedReport sw2_gradient_ascent(const SampleMatrix& sample, const DistributionSpec& ref,
                                 std::size_t restarts, double step, double tol,
                                 std::size_t max_iter, std::uint64_t seed) {
  AscentOptions o;
  o.restarts = restarts;
  o.step = step;
  o.tol = tol;
  o.max_iter = max_iter;
  return sw2_gradient_ascent(sample, ref, seed, o);
}

double sw2_grid_2d(const SampleMatrix& sample, const DistributionSpec& ref, std::size_t grid_n,
                   const MarginalOptions& options) {
  if (ref.dim != 2 || sample.cols() != 2) throw ShapeError("sw2_grid_2d: requires d = 2");
  if (grid_n < 360) throw ParameterError("sw2_grid_2d: grid_n must be at least 360");
  ProjectionObjective obj(sample, ref, options);
  const double two_pi = 2.0 * M_PI;
  double best = 0.0;
  for (std::size_t k = 0; k < grid_n; ++k) {
    const double a = two_pi * static_cast<double>(k) / static_cast<double>(grid_n);
    const double th[2] = {std::cos(a), std::sin(a)};
    // cos^2 + sin^2 can miss 1 by an ulp; that is inside the unit-vector tolerance.
    best = std::max(best, obj.w2(th));
  }
  return best;
}

double two_direction_distance(const SampleMatrix& sample, std::span<const double> u,
                              std::span<const double> v) {
  return w2_pair(project_sorted(sample, u), project_sorted(sample, v));
}

// ---------------------------------------------------------------------------
// Matrix statistics

Spectrum gamma_spectrum(const SampleMatrix& sample) {
  if (sample.rows() == 0) throw ParameterError("gamma_spectrum: empty sample");
  const Eigen::MatrixXd g = sample.entries / std::sqrt(static_cast<double>(sample.rows()));
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(g);
  const auto& sv = svd.singularValues();
  if (!sv.allFinite()) throw NumericError("singular value decomposition failed");
  Spectrum s;
  s.sigma_max = sv.size() ? sv.maxCoeff() : 0.0;
  s.sigma_min = sample.rows() < sample.cols() ? 0.0 : sv.minCoeff();
  return s;
}

double rho(const SampleMatrix& sample) {
  const Spectrum s = gamma_spectrum(sample);
  return std::max(s.sigma_max * s.sigma_max - 1.0, 1.0 - s.sigma_min * s.sigma_min);
}

namespace {

// Top-s indices by |p|; ties by index; returned sorted.
std::vector<std::size_t> top_s(const Vector& p, std::size_t s) {
  std::vector<std::size_t> idx(static_cast<std::size_t>(p.size()));
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(s), idx.end(),
                    [&](std::size_t a, std::size_t b) {
                      const double fa = std::abs(p[static_cast<Eigen::Index>(a)]);
                      const double fb = std::abs(p[static_cast<Eigen::Index>(b)]);
                      return fa > fb || (fa == fb && a < b);
                    });
  idx.resize(s);
  std::sort(idx.begin(), idx.end());
  return idx;
}

double top_s_energy(const Vector& p, const std::vector<std::size_t>& set) {
  double acc = 0.0;
  for (std::size_t i : set) acc += p[static_cast<Eigen::Index>(i)] * p[static_cast<Eigen::Index>(i)];
  return acc;
}

Eigen::MatrixXd rows_of(const Matrix& x, const std::vector<std::size_t>& set) {
  Eigen::MatrixXd sub(static_cast<Eigen::Index>(set.size()), x.cols());
  for (std::size_t k = 0; k < set.size(); ++k)
    sub.row(static_cast<Eigen::Index>(k)) = x.row(static_cast<Eigen::Index>(set[k]));
  return sub;
}

// Top right singular vector and squared top singular value.
std::pair<Vector, double> top_right_singular(const Eigen::MatrixXd& a) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const double s = svd.singularValues().size() ? svd.singularValues()[0] : 0.0;
  return {svd.matrixV().col(0), s * s};
}

}  // namespace

double h_direction(const SampleMatrix& sample, std::span<const double> theta, std::size_t s) {
  check_direction(theta, sample.cols());
  if (s == 0 || s > sample.rows()) throw ParameterError("h_direction: s must satisfy 1 <= s <= m");
  const Vector p = sample.entries * as_vector(theta);
  return std::sqrt(top_s_energy(p, top_s(p, s)) / static_cast<double>(sample.rows()));
}

HResult h_sm(const SampleMatrix& sample, std::size_t s, std::size_t restarts, std::uint64_t seed) {
  const std::size_t m = sample.rows(), d = sample.cols();
  if (s == 0 || s > m) throw ParameterError("h_sm: s must satisfy 1 <= s <= m");
  if (restarts == 0) throw ParameterError("h_sm: restarts must be positive");
  const auto& x = sample.entries;
  const double mm = static_cast<double>(m);

  std::vector<Vector> starts;
  Eigen::Index longest = 0;
  x.rowwise().squaredNorm().maxCoeff(&longest);
  const double ln = x.row(longest).norm();
  if (ln > 0.0) starts.push_back(x.row(longest).transpose() / ln);
  if (starts.size() < restarts) starts.push_back(top_right_singular(x).first);
  if (starts.size() < restarts) {
    for (auto& v : random_directions(d, restarts - starts.size(), seed)) starts.push_back(std::move(v));
  }
  starts.resize(std::min(starts.size(), restarts));

  HResult best;
  bool have = false;
  for (const Vector& start : starts) {
    HResult cur;
    Vector th = start;
    Vector p = x * th;
    std::vector<std::size_t> set = top_s(p, s);
    double obj = top_s_energy(p, set) / mm;
    cur.trace.push_back(obj);
    for (std::size_t round = 0; round < 100; ++round) {
      auto [v, s2] = top_right_singular(rows_of(x, set));
      const double next_obj = s2 / mm;
      if (next_obj < obj * (1.0 - 1e-12)) throw NumericError("h_sm: direction step decreased the objective");
      th = v;
      obj = std::max(obj, next_obj);
      cur.trace.push_back(obj);
      p = x * th;
      auto next_set = top_s(p, s);
      const double set_obj = top_s_energy(p, next_set) / mm;
      if (set_obj < obj * (1.0 - 1e-12)) throw NumericError("h_sm: index step decreased the objective");
      obj = std::max(obj, set_obj);
      cur.trace.push_back(obj);
      cur.rounds = round + 1;
      if (next_set == set) break;
      set = std::move(next_set);
    }
    cur.value = std::sqrt(obj);
    cur.direction = th;
    cur.index_set = set;
    if (!have || cur.value > best.value) {
      best = std::move(cur);
      have = true;
    }
  }
  return best;
}

double h_sm_bruteforce(const SampleMatrix& sample, std::size_t s) {
  const std::size_t m = sample.rows();
  if (s == 0 || s > m) throw ParameterError("h_sm_bruteforce: s must satisfy 1 <= s <= m");
  double count = 1.0;
  for (std::size_t k = 0; k < std::min(s, m - s); ++k) {
    count = count * static_cast<double>(m - k) / static_cast<double>(k + 1);
    if (count > 1e5) throw SizeError("h_sm_bruteforce: more than 1e5 index sets");
  }
  std::vector<std::size_t> set(s);
  std::iota(set.begin(), set.end(), std::size_t{0});
  double best = 0.0;
  for (;;) {
    best = std::max(best, top_right_singular(rows_of(sample.entries, set)).second);
    // next combination in lexicographic order
    std::size_t k = s;
    while (k > 0 && set[k - 1] == m - s + (k - 1)) --k;
    if (k == 0) break;
    ++set[k - 1];
    for (std::size_t j = k; j < s; ++j) set[j] = set[j - 1] + 1;
  }
  return std::sqrt(best / static_cast<double>(m));
}

MatrixStats matrix_stats(const SampleMatrix& sample, std::span<const std::size_t> s_values,
                         std::size_t restarts, std::uint64_t seed) {
  MatrixStats out;
  const Spectrum sp = gamma_spectrum(sample);
  out.sigma_max = sp.sigma_max;
  out.sigma_min = sp.sigma_min;
  out.rho = std::max(sp.sigma_max * sp.sigma_max - 1.0, 1.0 - sp.sigma_min * sp.sigma_min);
  for (std::size_t s : s_values) out.h_values[s] = h_sm(sample, s, restarts, split_seed(seed, s)).value;
  return out;
}

BaiYinAudit bai_yin_audit(const SampleMatrix& sample, const ProjectionObjective& objective,
                          std::span<const double> theta, double slack) {
  check_direction(theta, sample.cols());
  BaiYinAudit a;
  const Vector p = sample.entries * as_vector(theta);
  a.lhs = std::abs(p.squaredNorm() / static_cast<double>(sample.rows()) - 1.0);
  a.w2 = objective.w2(theta);
  a.bound = a.w2 * (a.w2 + 2.0);
  a.holds = a.lhs <= a.bound + slack;
  return a;
}

}  // namespace msw
