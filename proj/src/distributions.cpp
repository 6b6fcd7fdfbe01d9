#include "msw/distributions.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "msw/error.hpp"
#include "msw/rng.hpp"

namespace msw {

namespace {

std::string fmt17(double x) {
  std::ostringstream os;
  os.precision(17);
  os << x;
  return os.str();
}

template <class T>
void put_le(std::ostream& os, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  std::array<unsigned char, sizeof(T)> bytes{};
  std::memcpy(bytes.data(), &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  os.write(reinterpret_cast<const char*>(bytes.data()), sizeof(T));
}

template <class T>
T get_le(std::istream& is) {
  std::array<unsigned char, sizeof(T)> bytes{};
  is.read(reinterpret_cast<char*>(bytes.data()), sizeof(T));
  if (!is) throw ConfigError("sample matrix file truncated");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  T value;
  std::memcpy(&value, bytes.data(), sizeof(T));
  return value;
}

constexpr std::array<char, 4> kMagic{'S', 'M', 'X', '1'};

}  // namespace

// ---------------------------------------------------------------------------
// RadialLaw

double RadialLaw::heavy_tail_bulk(const HeavyTail& h) {
  const double tail_second = h.mass * h.floor * h.floor * h.exponent / (h.exponent - 2.0);
  return std::sqrt((1.0 - tail_second) / (1.0 - h.mass));
}

double RadialLaw::second_moment(std::size_t d) const {
  if (const auto* tp = std::get_if<TwoPoint>(&law)) {
    return (1.0 - tp->p) * tp->a * tp->a + tp->p * tp->b * tp->b;
  }
  // R = sqrt(d) |v| with E v^2 = 1 by construction.
  return static_cast<double>(d);
}

bool RadialLaw::tail_inert() const {
  if (const auto* h = std::get_if<HeavyTail>(&law)) return h->mass < 0x1.0p-53;
  return false;
}

void RadialLaw::validate() const {
  if (const auto* tp = std::get_if<TwoPoint>(&law)) {
    if (!(tp->p >= 0.0 && tp->p <= 1.0)) throw ParameterError("two_point: p must lie in [0,1]");
    if (!(tp->a >= 0.0) || !(tp->b >= 0.0) || !std::isfinite(tp->a) || !std::isfinite(tp->b))
      throw ParameterError("two_point: radial values must be finite and nonnegative");
    return;
  }
  const auto& h = std::get<HeavyTail>(law);
  if (!(h.exponent > 2.0)) throw ParameterError("heavy_tail: exponent must exceed 2");
  if (!(h.floor > 0.0)) throw ParameterError("heavy_tail: floor must be positive");
  if (!(h.mass > 0.0 && h.mass < 1.0)) throw ParameterError("heavy_tail: mass must lie in (0,1)");
  const double tail_second = h.mass * h.floor * h.floor * h.exponent / (h.exponent - 2.0);
  if (!(tail_second < 1.0)) throw ParameterError("heavy_tail: tail second moment exceeds 1");
  if (!(heavy_tail_bulk(h) < h.floor)) throw ParameterError("heavy_tail: bulk value above floor");
}

// ---------------------------------------------------------------------------
// DistributionSpec

std::string to_string(DistributionKind kind) {
  switch (kind) {
    case DistributionKind::standard_gaussian: return "standard_gaussian";
    case DistributionKind::rademacher_cube: return "rademacher_cube";
    case DistributionKind::isotropic_laplace_product: return "isotropic_laplace_product";
    case DistributionKind::sphere_radial: return "sphere_radial";
  }
  return "unknown";
}

DistributionKind distribution_kind_from_string(const std::string& name) {
  if (name == "standard_gaussian" || name == "gaussian") return DistributionKind::standard_gaussian;
  if (name == "rademacher_cube" || name == "cube") return DistributionKind::rademacher_cube;
  if (name == "isotropic_laplace_product" || name == "laplace_product" || name == "laplace")
    return DistributionKind::isotropic_laplace_product;
  if (name == "sphere_radial") return DistributionKind::sphere_radial;
  throw ConfigError("unknown distribution kind '" + name + "'");
}

DistributionSpec DistributionSpec::standard_gaussian(std::size_t d) {
  return {DistributionKind::standard_gaussian, d, std::nullopt, std::nullopt};
}
DistributionSpec DistributionSpec::rademacher_cube(std::size_t d) {
  return {DistributionKind::rademacher_cube, d, std::nullopt, std::nullopt};
}
DistributionSpec DistributionSpec::laplace_product(std::size_t d) {
  return {DistributionKind::isotropic_laplace_product, d, std::nullopt, std::nullopt};
}
DistributionSpec DistributionSpec::sphere_radial(std::size_t d, RadialLaw radial) {
  return {DistributionKind::sphere_radial, d, std::move(radial), std::nullopt};
}

void DistributionSpec::validate() const {
  if (dim == 0) throw ParameterError("distribution dimension must be positive");
  if (kind == DistributionKind::sphere_radial) {
    if (!radial) throw ParameterError("sphere_radial requires a radial law");
    radial->validate();
    if (!radial->is_two_point() && dim < 2)
      throw ParameterError("heavy_tail radial law requires d >= 2");
  }
  if (norm_equiv) {
    if (!(norm_equiv->q >= 2.0)) throw ParameterError("norm equivalence requires q >= 2");
    if (!(norm_equiv->L >= 1.0)) throw ParameterError("norm equivalence requires L >= 1");
  }
}

bool DistributionSpec::rotation_invariant() const {
  return kind == DistributionKind::standard_gaussian || kind == DistributionKind::sphere_radial ||
         dim == 1;
}

bool DistributionSpec::iid_coordinates() const {
  return kind != DistributionKind::sphere_radial || dim == 1;
}

std::string DistributionSpec::id() const {
  std::string out = to_string(kind) + "(d=" + std::to_string(dim);
  if (radial) {
    if (const auto* tp = std::get_if<RadialLaw::TwoPoint>(&radial->law)) {
      out += ";two_point(a=" + fmt17(tp->a) + ",p=" + fmt17(tp->p) + ",b=" + fmt17(tp->b) + ")";
    } else {
      const auto& h = std::get<RadialLaw::HeavyTail>(radial->law);
      out += ";heavy_tail(exponent=" + fmt17(h.exponent) + ",floor=" + fmt17(h.floor) +
             ",mass=" + fmt17(h.mass) + ")";
    }
  }
  return out + ")";
}

// ---------------------------------------------------------------------------
// JSON

void to_json(nlohmann::json& j, const RadialLaw& r) {
  if (const auto* tp = std::get_if<RadialLaw::TwoPoint>(&r.law)) {
    j = {{"kind", "two_point"}, {"a", tp->a}, {"p", tp->p}, {"b", tp->b}};
  } else {
    const auto& h = std::get<RadialLaw::HeavyTail>(r.law);
    j = {{"kind", "heavy_tail"}, {"exponent", h.exponent}, {"floor", h.floor}, {"mass", h.mass}};
  }
}

void from_json(const nlohmann::json& j, RadialLaw& r) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "two_point") {
    r = RadialLaw::two_point(j.at("a").get<double>(), j.at("p").get<double>(),
                             j.at("b").get<double>());
  } else if (kind == "heavy_tail") {
    RadialLaw::HeavyTail h;
    h.exponent = j.value("exponent", h.exponent);
    h.floor = j.value("floor", h.floor);
    h.mass = j.value("mass", h.mass);
    r = RadialLaw{h};
  } else {
    throw ConfigError("unknown radial law kind '" + kind + "'");
  }
}

void to_json(nlohmann::json& j, const DistributionSpec& s) {
  j = {{"kind", to_string(s.kind)}, {"dim", s.dim}};
  if (s.radial) j["radial"] = *s.radial;
  if (s.norm_equiv) j["norm_equiv"] = {{"q", s.norm_equiv->q}, {"L", s.norm_equiv->L}};
}

void from_json(const nlohmann::json& j, DistributionSpec& s) {
  s.kind = distribution_kind_from_string(j.at("kind").get<std::string>());
  s.dim = j.at("dim").get<std::size_t>();
  s.radial.reset();
  s.norm_equiv.reset();
  if (j.contains("radial")) {
    const auto& r = j.at("radial");
    // {"kind": "two_point_calibrated", "m": ...} calibrates against the sample size.
    if (r.at("kind").get<std::string>() == "two_point_calibrated") {
      s.radial = calibrate_two_point(s.dim, r.at("m").get<std::size_t>());
    } else {
      RadialLaw law;
      from_json(r, law);
      s.radial = law;
    }
  }
  if (j.contains("norm_equiv")) {
    s.norm_equiv = NormEquivalence{j.at("norm_equiv").at("q").get<double>(),
                                   j.at("norm_equiv").at("L").get<double>()};
  }
}

// ---------------------------------------------------------------------------
// Sampling

namespace {

double draw_radius(const RadialLaw& radial, std::size_t d, Rng& rng) {
  if (const auto* tp = std::get_if<RadialLaw::TwoPoint>(&radial.law)) {
    return rng.bernoulli(tp->p) ? tp->b : tp->a;
  }
  const auto& h = std::get<RadialLaw::HeavyTail>(radial.law);
  // The tail event can be far below 2^-53, so it is split into two independent
  // Bernoulli(sqrt(mass)) events to keep its probability exact.
  const double root = std::sqrt(h.mass);
  const bool first = rng.bernoulli(root);
  const bool second = rng.bernoulli(root);
  double v;
  if (first && second) {
    v = h.floor * std::pow(rng.uniform(), -1.0 / h.exponent);
  } else {
    v = RadialLaw::heavy_tail_bulk(h);
  }
  return std::sqrt(static_cast<double>(d)) * v;
}

}  // namespace

SampleMatrix sample(const DistributionSpec& spec, std::size_t m, std::uint64_t seed) {
  spec.validate();
  const std::size_t d = spec.dim;
  SampleMatrix out;
  out.entries.resize(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(d));
  out.seed = seed;
  out.spec_id = spec.id();
  Rng rng(seed);
  auto& x = out.entries;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    switch (spec.kind) {
      case DistributionKind::standard_gaussian:
        for (Eigen::Index j = 0; j < x.cols(); ++j) x(i, j) = rng.normal();
        break;
      case DistributionKind::rademacher_cube:
        for (Eigen::Index j = 0; j < x.cols(); ++j) x(i, j) = rng.rademacher();
        break;
      case DistributionKind::isotropic_laplace_product:
        for (Eigen::Index j = 0; j < x.cols(); ++j) x(i, j) = rng.laplace();
        break;
      case DistributionKind::sphere_radial: {
        double norm2 = 0.0;
        if (d == 1) {
          x(i, 0) = rng.rademacher();
          norm2 = 1.0;
        } else {
          do {
            norm2 = 0.0;
            for (Eigen::Index j = 0; j < x.cols(); ++j) {
              x(i, j) = rng.normal();
              norm2 += x(i, j) * x(i, j);
            }
          } while (norm2 == 0.0);
        }
        const double r = draw_radius(*spec.radial, d, rng);
        x.row(i) *= r / std::sqrt(norm2);
        break;
      }
    }
  }
  return out;
}

double two_point_beta(std::size_t d, std::size_t m) {
  const double dd = static_cast<double>(d);
  const double mm = static_cast<double>(m);
  const double num = dd - 0.5 * std::sqrt(dd / mm);
  const double den = (1.0 - 1.0 / (2.0 * mm)) * dd;
  return std::sqrt(num / den);
}

RadialLaw calibrate_two_point(std::size_t d, std::size_t m) {
  if (d == 0) throw ParameterError("calibrate_two_point: d must be positive");
  if (m < 4 * d) throw ParameterError("calibrate_two_point: requires m >= 4d");
  const double dd = static_cast<double>(d);
  const double mm = static_cast<double>(m);
  return RadialLaw::two_point(two_point_beta(d, m) * std::sqrt(dd), 1.0 / (2.0 * mm),
                              std::pow(mm * dd, 0.25));
}

// ---------------------------------------------------------------------------
// Binary persistence

void write_sample_matrix(const std::filesystem::path& path, const SampleMatrix& s) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw ConfigError("cannot open '" + path.string() + "' for writing");
  os.write(kMagic.data(), kMagic.size());
  put_le<std::uint64_t>(os, s.rows());
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(s.cols()));
  for (Eigen::Index i = 0; i < s.entries.rows(); ++i)
    for (Eigen::Index j = 0; j < s.entries.cols(); ++j) put_le<double>(os, s.entries(i, j));
  if (!os) throw ConfigError("write to '" + path.string() + "' failed");
}

SampleMatrix read_sample_matrix(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot open '" + path.string() + "'");
  std::array<char, 4> magic{};
  is.read(magic.data(), magic.size());
  if (!is || magic != kMagic) throw ConfigError("'" + path.string() + "' is not a sample matrix");
  const auto m = get_le<std::uint64_t>(is);
  const auto d = get_le<std::uint32_t>(is);
  SampleMatrix s;
  s.entries.resize(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < s.entries.rows(); ++i)
    for (Eigen::Index j = 0; j < s.entries.cols(); ++j) s.entries(i, j) = get_le<double>(is);
  return s;
}

}  // namespace msw
