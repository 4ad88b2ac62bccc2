#pragma once

// Gaussian selection model behind the variance-reduction claims: sampling,
// threshold selection, truncated-normal identities, and the controller
// stability scan.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "synclab/dgs.hpp"

namespace synclab::theory {

struct BivariateModel {
  double mu_r = 0.0;
  double mu_s = 0.0;  // surrogate mean
  double sigma_r = 1.0;
  double sigma_s = 1.0;
  /// |rho| = 1 is admitted for the degenerate mean-shift check.
  double rho = 0.0;

  void validate() const;
};

struct SelectionExperiment {
  BivariateModel model;
  /// Fraction kept. 1 means no filtering (the baseline).
  double p = 0.25;
  std::size_t n = 1'000'000;
  std::uint64_t seed = 1;

  void validate() const;
};

inline constexpr std::size_t kMinSelected = 100;
inline constexpr std::size_t kMinSamples = 10'000;

/// 1 - rho^2 (1 - p)
double theorem1_bound(double rho, double p);

/// Standard normal helpers.
double normal_pdf(double x);
double normal_upper_tail(double x);
double normal_quantile(double q);

/// phi(a) / (1 - Phi(a)), stable in both tails.
double mills_ratio(double alpha);

/// Var(Z | Z > a) = 1 + a lambda(a) - lambda(a)^2.
double truncated_variance(double a);

struct ConditionalStats {
  double cond_mean = 0.0;
  double cond_var = 0.0;  // 1/m normalization
  double threshold = 0.0;
  std::size_t selected = 0;
  double se_mean = 0.0;
  double se_var = 0.0;
  double m3 = 0.0;  // third central moment of the selected R
};

/// Draws the samples, keeps R-tilde above its exact (1 - p)-quantile and
/// summarizes R over the kept set. Throws PreconditionError("... increase n")
/// below kMinSelected kept samples.
ConditionalStats conditional_stats(const SelectionExperiment& experiment);

struct CheckRow {
  std::string suite;
  std::string check;
  double rho = 0.0;
  double p = 0.0;
  std::size_t n = 0;
  double estimate = 0.0;
  double se = 0.0;
  double reference = 0.0;  // bound or closed form
  double tolerance = 0.0;  // multiple of se, or absolute for exact checks
  bool pass = false;
};

void write_csv_header(std::ostream& os);
void write_csv_row(std::ostream& os, const CheckRow& row);

/// cond_var / sigma_R^2 <= bound + 3 se.
CheckRow theorem1_check(const SelectionExperiment& experiment);

/// |cond_mean - (mu_R + rho sigma_R lambda(alpha))| <= 4 se.
CheckRow verify_mean_shift(const SelectionExperiment& experiment);

/// Monte Carlo Var(Z | Z > z_p) <= p + 3 se for standard normal Z.
CheckRow truncated_variance_bound_check(double p, std::size_t n, std::uint64_t seed);

/// Closed-form row: Var(Z | Z > 0) against 1 - 2/pi.
CheckRow half_normal_anchor(std::size_t n, std::uint64_t seed);

/// SNR = mean^2 / var under selection at p, over the unfiltered baseline.
/// Passes when the ratio exceeds 1 / theorem1_bound within 3 delta-method
/// standard errors. Throws PreconditionError when mu_R = 0.
CheckRow verify_snr(const SelectionExperiment& experiment, const SelectionExperiment& baseline);

struct DensityModel {
  enum class Kind { Uniform, Normal };
  Kind kind = Kind::Uniform;
  double a = 1.0;  // low or mean
  double b = 2.0;  // high or standard deviation

  static DensityModel uniform(double low, double high) { return {Kind::Uniform, low, high}; }
  static DensityModel normal(double mean, double sd) { return {Kind::Normal, mean, sd}; }

  double pdf(double x) const;
  double quantile(double q) const;
  double sample(Rng& rng) const;
  std::string name() const;
};

struct ControllerTrace {
  std::vector<double> thresholds;  // T after each update; T_0 excluded
  std::vector<double> pass_rates;
  std::vector<std::size_t> evaluated;
  std::vector<bool> truncated;
};

/// Runs the DGS controller against an i.i.d. score stream: each update
/// screens draws until `group_size` clear the threshold (or the attempt cap
/// is reached) and feeds the observed pass rate back.
ControllerTrace simulate_controller(const DensityModel& density, const DgsConfig& config,
                                    std::size_t updates, std::size_t group_size, Rng& rng,
                                    ControllerState start);

struct TrackingReport {
  double target = 0.0;
  /// Index (0-based) of the first update whose threshold is within the band
  /// of the target; equals `updates` when it never gets there.
  std::size_t first_entry = 0;
  /// Mean pass rate over the trailing window, truncated groups excluded.
  double trailing_pass_rate = 0.0;
  std::size_t trailing_groups = 0;
  double final_threshold = 0.0;
};

TrackingReport controller_tracking(const DensityModel& density, const DgsConfig& config,
                                   std::size_t updates, std::size_t window, double band,
                                   std::size_t group_size, std::uint64_t seed);

struct ScanConfig {
  DgsConfig dgs;
  std::size_t updates = 2000;
  std::size_t window = 200;
  double tolerance = 0.05;
  std::size_t group_size = 9;
  double band = 0.2;  // relative half-width excluded around the boundary
  std::uint64_t seed = 1;
  std::size_t workers = 1;
};

struct ScanPoint {
  double mu = 0.0;
  bool predicted_stable = false;
  bool observed_stable = false;
  bool in_band = false;
  double rms_error = 0.0;  // RMS of T - T* over the final window
};

struct ScanReport {
  DensityModel density;
  double target = 0.0;   // T*
  double density_at_target = 0.0;
  double boundary = 0.0;  // 2 / (f T*)
  std::vector<ScanPoint> points;
  std::size_t outside_band = 0;
  std::size_t agreeing = 0;
  double agreement() const {
    return outside_band == 0 ? 0.0 : static_cast<double>(agreeing) / static_cast<double>(outside_band);
  }
};

/// `count` gains log-spaced over [lo, hi].
std::vector<double> log_grid(double lo, double hi, std::size_t count);

ScanReport stability_scan(const DensityModel& density, const std::vector<double>& mu_grid,
                          const ScanConfig& config);

}  // namespace synclab::theory
