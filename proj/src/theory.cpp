#include "synclab/theory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>

#include <boost/math/distributions/normal.hpp>

#include "synclab/detail/seed.hpp"
#include "synclab/error.hpp"
#include "synclab/kernels.hpp"

namespace synclab::theory {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Samples {
  std::vector<double> r;
  std::vector<double> s;
};

Samples draw(const BivariateModel& m, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> z;
  const double c = std::sqrt(std::max(0.0, 1.0 - m.rho * m.rho));
  Samples out;
  out.r.resize(n);
  out.s.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double z1 = z(rng);
    const double z2 = z(rng);
    out.s[i] = m.mu_s + m.sigma_s * z1;
    out.r[i] = m.mu_r + m.sigma_r * (m.rho * z1 + c * z2);
  }
  return out;
}

ConditionalStats summarize(std::span<const double> values, std::span<const double> keys,
                           double threshold) {
  const auto sel = kernels::selected_sum(values, keys, threshold);
  if (sel.count < kMinSelected) {
    throw PreconditionError("fewer than 100 samples selected; increase n");
  }
  ConditionalStats st;
  st.threshold = threshold;
  st.selected = sel.count;
  const double m = static_cast<double>(sel.count);
  st.cond_mean = sel.sum / m;
  const auto cs = kernels::selected_central_sums(values, keys, threshold, st.cond_mean);
  st.cond_var = cs.m2 / m;
  st.m3 = cs.m3 / m;
  st.se_mean = std::sqrt(st.cond_var / m);
  st.se_var = std::sqrt(std::max(0.0, cs.m4 / m - st.cond_var * st.cond_var) / m);
  return st;
}

double selection_threshold(const BivariateModel& m, double p) {
  return p >= 1.0 ? -kInf : m.mu_s + m.sigma_s * normal_quantile(1.0 - p);
}

}  // namespace

void BivariateModel::validate() const {
  if (!(sigma_r > 0.0) || !(sigma_s > 0.0)) throw ConfigError("standard deviations must be > 0");
  if (!(rho >= -1.0 && rho <= 1.0)) throw ConfigError("rho must lie in [-1, 1]");
  if (!std::isfinite(mu_r) || !std::isfinite(mu_s)) throw ConfigError("means must be finite");
}

void SelectionExperiment::validate() const {
  model.validate();
  if (!(p > 0.0 && p <= 1.0)) throw ConfigError("selection fraction p must lie in (0, 1]");
  if (n < kMinSamples) throw ConfigError("selection experiments need n >= 10000");
}

double theorem1_bound(double rho, double p) { return 1.0 - rho * rho * (1.0 - p); }

double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

double normal_upper_tail(double x) { return 0.5 * std::erfc(x / std::numbers::sqrt2); }

double normal_quantile(double q) {
  if (!(q > 0.0 && q < 1.0)) throw PreconditionError("quantile level must lie in (0, 1)");
  return boost::math::quantile(boost::math::normal_distribution<double>(), q);
}

double mills_ratio(double alpha) {
  if (std::isnan(alpha)) throw PreconditionError("mills ratio of NaN");
  if (alpha == -kInf) return 0.0;
  if (alpha < 5.0) return normal_pdf(alpha) / normal_upper_tail(alpha);
  // Laplace continued fraction: lambda = a + 1/(a + 2/(a + 3/(a + ...)))
  double t = alpha;
  for (int k = 400; k >= 1; --k) t = alpha + k / t;
  return t;
}

double truncated_variance(double a) {
  if (a == -kInf) return 1.0;
  const double l = mills_ratio(a);
  return 1.0 + a * l - l * l;
}

ConditionalStats conditional_stats(const SelectionExperiment& e) {
  e.validate();
  const auto smp = draw(e.model, e.n, e.seed);
  return summarize(smp.r, smp.s, selection_threshold(e.model, e.p));
}

void write_csv_header(std::ostream& os) {
  os << "suite,check,rho,p,n,estimate,se,reference,tolerance,pass\n";
}

void write_csv_row(std::ostream& os, const CheckRow& row) {
  std::ostringstream line;
  line.precision(10);
  line << row.suite << ',' << row.check << ',' << row.rho << ',' << row.p << ',' << row.n << ','
       << row.estimate << ',' << row.se << ',' << row.reference << ',' << row.tolerance << ','
       << (row.pass ? "pass" : "FAIL") << '\n';
  os << line.str();
}

CheckRow theorem1_check(const SelectionExperiment& e) {
  const auto st = conditional_stats(e);
  const double s2 = e.model.sigma_r * e.model.sigma_r;
  CheckRow row{"theorem1", "cond_var_ratio", e.model.rho, e.p, e.n};
  row.estimate = st.cond_var / s2;
  row.se = st.se_var / s2;
  row.reference = theorem1_bound(e.model.rho, e.p);
  row.tolerance = 3.0;
  row.pass = row.estimate <= row.reference + 3.0 * row.se;
  return row;
}

CheckRow verify_mean_shift(const SelectionExperiment& e) {
  const auto st = conditional_stats(e);
  const auto& m = e.model;
  const double alpha = (st.threshold - m.mu_s) / m.sigma_s;
  CheckRow row{"mean_shift", "cond_mean", m.rho, e.p, e.n};
  row.estimate = st.cond_mean;
  row.se = st.se_mean;
  row.reference = m.mu_r + m.rho * m.sigma_r * mills_ratio(alpha);
  row.tolerance = 4.0;
  row.pass = std::abs(row.estimate - row.reference) <= 4.0 * row.se;
  return row;
}

CheckRow truncated_variance_bound_check(double p, std::size_t n, std::uint64_t seed) {
  if (!(p > 0.0 && p <= 0.5)) throw ConfigError("truncated variance check needs p in (0, 0.5]");
  if (n < 100'000) throw ConfigError("truncated variance check needs n >= 100000");
  Rng rng(seed);
  std::normal_distribution<double> z;
  std::vector<double> v(n);
  for (auto& x : v) x = z(rng);
  const auto st = summarize(v, v, normal_quantile(1.0 - p));
  CheckRow row{"truncated", "var_above_quantile", 1.0, p, n};
  row.estimate = st.cond_var;
  row.se = st.se_var;
  row.reference = p;
  row.tolerance = 3.0;
  row.pass = row.estimate <= p + 3.0 * row.se;
  return row;
}

CheckRow half_normal_anchor(std::size_t n, std::uint64_t seed) {
  auto row = truncated_variance_bound_check(0.5, n, seed);
  row.check = "half_normal_variance";
  row.reference = 1.0 - 2.0 / std::numbers::pi;
  row.pass = std::abs(row.estimate - row.reference) <= 3.0 * row.se;
  return row;
}

CheckRow verify_snr(const SelectionExperiment& e, const SelectionExperiment& base) {
  const auto& m = e.model;
  const auto& b = base.model;
  if (m.mu_r != b.mu_r || m.mu_s != b.mu_s || m.sigma_r != b.sigma_r || m.sigma_s != b.sigma_s ||
      m.rho != b.rho) {
    throw PreconditionError("snr experiments must share the model");
  }
  if (base.p != 1.0) throw PreconditionError("snr baseline must use p = 1");
  if (m.mu_r == 0.0) throw PreconditionError("snr undefined for mu_R = 0");
  const auto sd = conditional_stats(e);
  const auto sb = conditional_stats(base);
  auto snr = [](const ConditionalStats& s) { return s.cond_mean * s.cond_mean / s.cond_var; };
  // delta method on log(mean^2 / var); cov(mean, var) ~ mu3 / m
  auto log_var = [](const ConditionalStats& s) {
    const double mm = s.cond_mean;
    const double v = s.cond_var;
    const double cnt = static_cast<double>(s.selected);
    return 4.0 * s.se_mean * s.se_mean / (mm * mm) + s.se_var * s.se_var / (v * v) -
           4.0 * (s.m3 / cnt) / (mm * v);
  };
  CheckRow row{"snr", "snr_ratio", m.rho, e.p, e.n};
  row.estimate = snr(sd) / snr(sb);
  row.se = row.estimate * std::sqrt(std::max(0.0, log_var(sd) + log_var(sb)));
  row.reference = 1.0 / theorem1_bound(m.rho, e.p);
  row.tolerance = 3.0;
  row.pass = row.estimate > row.reference - 3.0 * row.se;
  return row;
}

double DensityModel::pdf(double x) const {
  if (kind == Kind::Uniform) return (x >= a && x <= b) ? 1.0 / (b - a) : 0.0;
  return normal_pdf((x - a) / b) / b;
}

double DensityModel::quantile(double q) const {
  if (kind == Kind::Uniform) return a + q * (b - a);
  return a + b * normal_quantile(q);
}

double DensityModel::sample(Rng& rng) const {
  if (kind == Kind::Uniform) return std::uniform_real_distribution<double>(a, b)(rng);
  return std::normal_distribution<double>(a, b)(rng);
}

std::string DensityModel::name() const {
  std::ostringstream os;
  os << (kind == Kind::Uniform ? "uniform(" : "normal(") << a << ' ' << b << ')';
  return os.str();
}

ControllerTrace simulate_controller(const DensityModel& density, const DgsConfig& config,
                                    std::size_t updates, std::size_t group_size, Rng& rng,
                                    ControllerState state) {
  ControllerTrace tr;
  tr.thresholds.reserve(updates);
  tr.pass_rates.reserve(updates);
  for (std::size_t k = 0; k < updates; ++k) {
    std::size_t accepted = 0;
    std::size_t evaluated = 0;
    while (accepted < group_size && evaluated < config.max_attempts_per_group) {
      ++evaluated;
      if (density.sample(rng) > state.threshold) ++accepted;
    }
    const double pr = static_cast<double>(accepted) / static_cast<double>(evaluated);
    state = controller_update(state, pr, config);
    tr.thresholds.push_back(state.threshold);
    tr.pass_rates.push_back(pr);
    tr.evaluated.push_back(evaluated);
    tr.truncated.push_back(accepted < group_size);
  }
  return tr;
}

TrackingReport controller_tracking(const DensityModel& density, const DgsConfig& config,
                                   std::size_t updates, std::size_t window, double band,
                                   std::size_t group_size, std::uint64_t seed) {
  if (window == 0 || window > updates) throw ConfigError("window must lie in [1, updates]");
  Rng rng(seed);
  const auto tr = simulate_controller(density, config, updates, group_size, rng,
                                      ControllerState::initial(config));
  TrackingReport rep;
  rep.target = density.quantile(1.0 - config.target_pass_rate);
  rep.first_entry = updates;
  for (std::size_t k = 0; k < updates; ++k) {
    if (std::abs(tr.thresholds[k] - rep.target) <= band) {
      rep.first_entry = k;
      break;
    }
  }
  double sum = 0.0;
  for (std::size_t k = updates - window; k < updates; ++k) {
    if (tr.truncated[k]) continue;
    sum += tr.pass_rates[k];
    ++rep.trailing_groups;
  }
  rep.trailing_pass_rate = rep.trailing_groups ? sum / static_cast<double>(rep.trailing_groups) : 0.0;
  rep.final_threshold = tr.thresholds.back();
  return rep;
}

std::vector<double> log_grid(double lo, double hi, std::size_t count) {
  if (!(lo > 0.0 && hi > lo) || count < 2) throw PreconditionError("bad log grid");
  std::vector<double> out(count);
  const double step = std::log(hi / lo) / static_cast<double>(count - 1);
  for (std::size_t i = 0; i < count; ++i) out[i] = lo * std::exp(step * static_cast<double>(i));
  return out;
}

ScanReport stability_scan(const DensityModel& density, const std::vector<double>& mu_grid,
                          const ScanConfig& config) {
  if (config.window == 0 || config.window > config.updates) {
    throw ConfigError("scan window must lie in [1, updates]");
  }
  ScanReport rep;
  rep.density = density;
  rep.target = density.quantile(1.0 - config.dgs.target_pass_rate);
  rep.density_at_target = density.pdf(rep.target);
  rep.boundary = 2.0 / (rep.density_at_target * rep.target);
  rep.points.resize(mu_grid.size());
  parallel_for(mu_grid.size(), config.workers, [&](std::size_t i) {
    DgsConfig dgs = config.dgs;
    dgs.gain = mu_grid[i];
    Rng rng(child_seed(config.seed, i));
    const auto tr = simulate_controller(density, dgs, config.updates, config.group_size, rng,
                                        ControllerState::initial(dgs));
    double ss = 0.0;
    for (std::size_t k = config.updates - config.window; k < config.updates; ++k) {
      const double d = tr.thresholds[k] - rep.target;
      ss += d * d;
    }
    auto& pt = rep.points[i];
    pt.mu = mu_grid[i];
    pt.rms_error = std::sqrt(ss / static_cast<double>(config.window));
    pt.observed_stable = pt.rms_error <= config.tolerance;
    pt.predicted_stable = stability_check(pt.mu, rep.density_at_target, rep.target);
    pt.in_band = std::abs(pt.mu / rep.boundary - 1.0) <= config.band;
  });
  for (const auto& pt : rep.points) {
    if (pt.in_band) continue;
    ++rep.outside_band;
    if (pt.predicted_stable == pt.observed_stable) ++rep.agreeing;
  }
  return rep;
}

}  // namespace synclab::theory
