#pragma once

// Sampleable isotropic laws on R^d and their seeded realizations.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <variant>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

namespace msw {

/// Row-major dense matrix; rows of a sample are the draws X_i.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

/// R = a with probability 1-p, R = b with probability p.
struct TwoPointRadial {
  double a = 1.0;
  double p = 0.0;
  double b = 1.0;
};

/// R = sqrt(d) |v| with v symmetric, P(|v| >= t) = mass * (floor / t)^exponent for t >= floor,
/// and |v| equal to a single bulk value below the floor chosen so that E v^2 = 1.
struct HeavyTailRadial {
  double exponent = 11.0;
  double floor = 100.0;
  double mass = 2e-22;
};

/// Law of the Euclidean norm R of X = R * W, W uniform on the sphere.
struct RadialLaw {
  using TwoPoint = TwoPointRadial;
  using HeavyTail = HeavyTailRadial;

  std::variant<TwoPoint, HeavyTail> law;

  static RadialLaw two_point(double a, double p, double b) { return {TwoPoint{a, p, b}}; }
  static RadialLaw heavy_tail(double exponent, double floor, double mass) {
    return {HeavyTail{exponent, floor, mass}};
  }
  /// The heavy-tailed radial law of the two-stage embedding example (exponent 11, floor 100).
  static RadialLaw dm_example() { return heavy_tail(11.0, 100.0, 2e-22); }

  bool is_two_point() const { return std::holds_alternative<TwoPoint>(law); }

  /// E R^2 for the given ambient dimension.
  double second_moment(std::size_t d) const;

  /// Bulk value of |v| for the heavy-tailed law.
  static double heavy_tail_bulk(const HeavyTail& h);

  /// True when the tail event is far below the resolution of any desk-scale experiment.
  bool tail_inert() const;

  void validate() const;
};

/// Optional L_q - L_2 norm equivalence metadata (q >= 2, L >= 1).
struct NormEquivalence {
  double q = 4.0;
  double L = 1.0;
};

enum class DistributionKind {
  standard_gaussian,
  rademacher_cube,
  isotropic_laplace_product,
  sphere_radial,
};

std::string to_string(DistributionKind kind);
DistributionKind distribution_kind_from_string(const std::string& name);

/// A sampleable isotropic law on R^d.
struct DistributionSpec {
  DistributionKind kind = DistributionKind::standard_gaussian;
  std::size_t dim = 1;
  std::optional<RadialLaw> radial;
  std::optional<NormEquivalence> norm_equiv;

  static DistributionSpec standard_gaussian(std::size_t d);
  static DistributionSpec rademacher_cube(std::size_t d);
  static DistributionSpec laplace_product(std::size_t d);
  static DistributionSpec sphere_radial(std::size_t d, RadialLaw radial);

  /// Throws ParameterError when the parameters do not describe a valid law.
  void validate() const;

  /// Marginal law of <X, theta> does not depend on theta.
  bool rotation_invariant() const;

  /// Coordinates of X are iid.
  bool iid_coordinates() const;

  /// Stable textual identity, used for provenance of samples.
  std::string id() const;
};

void to_json(nlohmann::json& j, const RadialLaw& r);
void from_json(const nlohmann::json& j, RadialLaw& r);
void to_json(nlohmann::json& j, const DistributionSpec& s);
void from_json(const nlohmann::json& j, DistributionSpec& s);

/// m x d realization with provenance.
struct SampleMatrix {
  Matrix entries;
  std::uint64_t seed = 0;
  std::string spec_id;

  std::size_t rows() const { return static_cast<std::size_t>(entries.rows()); }
  std::size_t cols() const { return static_cast<std::size_t>(entries.cols()); }
};

/// m iid draws from `spec`; bit-identical for identical (spec, m, seed).
SampleMatrix sample(const DistributionSpec& spec, std::size_t m, std::uint64_t seed);

/// beta solving (1 - 1/(2m)) beta^2 d + (1/(2m)) sqrt(md) = d.
double two_point_beta(std::size_t d, std::size_t m);

/// Two-point radial law a = beta sqrt(d), p = 1/(2m), b = (md)^{1/4}, calibrated to E R^2 = d.
/// Requires m >= 4d.
RadialLaw calibrate_two_point(std::size_t d, std::size_t m);

/// Little-endian binary persistence: 16-byte header (magic "SMX1", u64 m, u32 d) then m*d f64.
void write_sample_matrix(const std::filesystem::path& path, const SampleMatrix& s);
SampleMatrix read_sample_matrix(const std::filesystem::path& path);

}  // namespace msw
