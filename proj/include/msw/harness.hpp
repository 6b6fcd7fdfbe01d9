#pragma once

// Seeded Monte Carlo campaigns, rate fits and CSV output.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "msw/distributions.hpp"

namespace msw {

enum class ExperimentKind { sw2_rate, dkw_scan, lower_bound_witness, dm_oscillation, h_statistics };

std::string to_string(ExperimentKind kind);
/// Accepts the canonical names and the CLI spellings (sw2-rate, witness, dm, hstat, ...).
ExperimentKind experiment_kind_from_string(const std::string& name);

/// Campaign knobs beyond the common fields live in `options` and are read with defaults.
struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::sw2_rate;
  nlohmann::json distribution;  // DistributionSpec json; radial "two_point_calibrated" without m is calibrated per m
  std::vector<std::size_t> m_values;
  std::vector<std::size_t> d_values;  // dm_oscillation
  std::size_t trials = 1;
  std::uint64_t seed = 0;
  std::filesystem::path output = ".";
  nlohmann::json options = nlohmann::json::object();

  /// Throws ConfigError.
  void validate() const;
  /// DistributionSpec for sample size m.
  DistributionSpec spec_for(std::size_t m) const;
};

/// Defaults reproduce the reference campaign of each experiment.
ExperimentConfig default_config(ExperimentKind kind);

/// `j` holds either the experiment's object or a top-level object keyed by experiment name.
ExperimentConfig config_from_json(const nlohmann::json& j, ExperimentKind kind);
ExperimentConfig load_config(const std::filesystem::path& path, ExperimentKind kind);

struct RateFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  std::vector<std::pair<double, double>> points;  // (log m, log value)
};

/// Least squares of log value on log m; >= 3 points, values > 0.
RateFit fit_rate(const std::vector<std::pair<double, double>>& points);

/// MSW_THREADS, else the number of hardware threads.
std::size_t thread_count();

/// fn(0..n-1) on `threads` workers; results are returned in index order.
template <class T>
std::vector<T> parallel_map(std::size_t n, std::size_t threads, const std::function<T(std::size_t)>& fn);

/// CSV with a fixed header; doubles are written with 17 significant digits.
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header);
  CsvTable& row();
  CsvTable& add(double v);
  CsvTable& add(std::size_t v);
  CsvTable& add(bool v);
  CsvTable& add(const std::string& v);
  CsvTable& add(const char* v) { return add(std::string(v)); }
  std::string str() const;
  std::size_t rows() const { return rows_; }
  /// Throws std::runtime_error on I/O failure.
  void write(const std::filesystem::path& path) const;

 private:
  std::vector<std::string> header_;
  std::string body_;
  std::size_t rows_ = 0;
  std::size_t col_ = 0;
};

std::string format_double(double v);

struct MSummary {
  std::size_t m = 0;
  double mean = 0.0;
  double median = 0.0;
};

struct Sw2Row {
  std::size_t trial = 0, m = 0;
  double sw2 = 0.0, rho = 0.0;
  std::string method;
};

struct Sw2RateResult {
  std::vector<Sw2Row> rows;
  std::vector<MSummary> per_m;
  RateFit fit;
};

struct DkwRow {
  std::size_t trial = 0, m = 0, probes = 0, excluded = 0, violations = 0, skipped = 0;
  double violation_rate = 0.0, worst_ratio = 0.0, worst_ratio_nolog = 0.0;
  std::size_t sandwich_probes = 0, sandwich_passes = 0, implication_breaches = 0;
};

struct DkwCampaignResult {
  std::vector<DkwRow> rows;
  /// (m, csv) for the per-probe records.
  std::vector<std::pair<std::size_t, CsvTable>> records;
};

struct WitnessRow {
  std::size_t trial = 0, m = 0;
  double delta = 0.0, w2 = 0.0, event_mass = 0.0;
  bool flag = false;
};

struct WitnessCampaignResult {
  std::vector<WitnessRow> rows;
  std::vector<std::pair<std::size_t, double>> frequency;  // (m, flag frequency)
  std::size_t bound_failures = 0;  // flagged trials with W2 < Delta^{1/4} sqrt(event mass)
};

struct DmRow {
  std::size_t trial = 0, n = 0, d = 0, m = 0;
  std::string norm;
  double d_star = 0.0, lambda = 0.0, mean = 0.0, oscillation = 0.0;
};

struct DecompositionRow {
  std::size_t trial = 0, d = 0, theta_id = 0, s = 0, r = 0, i_size = 0, ic_j_size = 0;
  double xi_u = 0.0, phi_r = 0.0, club = 0.0, diamond = 0.0, heart = 0.0, full = 0.0, reconstruction_error = 0.0;
  bool heart_bounded = true;
};

struct DmCampaignResult {
  std::vector<DmRow> two_stage, gaussian_direct;
  std::vector<DecompositionRow> decomposition;
  std::size_t decomposition_failures = 0;
};

struct HRow {
  std::size_t trial = 0, m = 0, d = 0, s = 0;
  double h = 0.0, rho = 0.0, sigma_max = 0.0, sigma_min = 0.0;
};

struct HCampaignResult {
  std::vector<HRow> rows;
};

Sw2RateResult run_sw2_rate(const ExperimentConfig& cfg, std::size_t threads);
DkwCampaignResult run_dkw_campaign(const ExperimentConfig& cfg, std::size_t threads);
WitnessCampaignResult run_witness_campaign(const ExperimentConfig& cfg, std::size_t threads);
DmCampaignResult run_dm_campaign(const ExperimentConfig& cfg, std::size_t threads);
HCampaignResult run_h_campaign(const ExperimentConfig& cfg, std::size_t threads);

/// Runs the campaign, writes its CSV files under cfg.output and prints a summary.
/// Returns 0 on success, 1 on I/O or configuration failure, 2 on an invariant failure.
int run(const ExperimentConfig& cfg, std::ostream& out, std::size_t threads = thread_count());

}  // namespace msw

#include "msw/harness_impl.hpp"
