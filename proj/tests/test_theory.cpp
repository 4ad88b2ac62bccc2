#include <doctest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "synclab/error.hpp"
#include "synclab/theory.hpp"

using namespace synclab;
using namespace synclab::theory;

namespace {

double phi(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

// Composite Simpson on [a, a + 40] of f(z) phi(z); the tail past that is
// below 1e-300 for every a used here.
template <class F>
double simpson_tail(double a, F f, int intervals = 40000) {
  const double b = a + 40.0;
  const double h = (b - a) / intervals;
  double s = f(a) * phi(a) + f(b) * phi(b);
  for (int i = 1; i < intervals; ++i) {
    const double z = a + i * h;
    s += (i % 2 ? 4.0 : 2.0) * f(z) * phi(z);
  }
  return s * h / 3.0;
}

double mills_oracle(double a) {
  return phi(a) / simpson_tail(a, [](double) { return 1.0; });
}

double truncated_variance_oracle(double a) {
  const double mass = simpson_tail(a, [](double) { return 1.0; });
  const double m1 = simpson_tail(a, [](double z) { return z; }) / mass;
  const double m2 = simpson_tail(a, [](double z) { return z * z; }) / mass;
  return m2 - m1 * m1;
}

}  // namespace

TEST_CASE("theorem 1 bound") {
  CHECK(theorem1_bound(0.0, 0.3) == 1.0);
  CHECK(theorem1_bound(0.7, 1.0) == 1.0);
  CHECK(theorem1_bound(0.8, 0.25) == doctest::Approx(0.52));
}

TEST_CASE("normal helpers") {
  CHECK(normal_pdf(0.0) == doctest::Approx(1.0 / std::sqrt(2.0 * std::numbers::pi)));
  CHECK(normal_upper_tail(0.0) == doctest::Approx(0.5));
  CHECK(normal_quantile(0.975) == doctest::Approx(1.959963984540054));
  CHECK(normal_upper_tail(normal_quantile(0.9)) == doctest::Approx(0.1));
  CHECK_THROWS(normal_quantile(1.0));
}

TEST_CASE("mills ratio") {
  CHECK(mills_ratio(0.0) == doctest::Approx(std::sqrt(2.0 / std::numbers::pi)).epsilon(1e-12));
  CHECK(std::abs(mills_ratio(0.0) - 0.79788) < 1e-4);

  SUBCASE("lambda(5) against the quadrature oracle") {
    const double oracle = mills_oracle(5.0);
    CHECK(oracle == doctest::Approx(5.1865).epsilon(1e-4));
    CHECK(mills_ratio(5.0) == doctest::Approx(oracle).epsilon(1e-10));
  }
  SUBCASE("both branches agree with the oracle") {
    for (double a : {-3.0, -0.5, 1.0, 3.0, 4.999, 5.001, 7.5, 12.0}) {
      CAPTURE(a);
      CHECK(mills_ratio(a) == doctest::Approx(mills_oracle(a)).epsilon(1e-9));
    }
  }
  SUBCASE("tail bound and monotonicity") {
    double prev = mills_ratio(-10.0);
    for (double a = -9.9; a <= 40.0; a += 0.1) {
      const double l = mills_ratio(a);
      CHECK(l > a);
      CHECK(l > prev);
      prev = l;
    }
    // lambda(a) < a + 1/a for a > 0
    for (double a : {0.5, 2.0, 10.0, 30.0}) CHECK(mills_ratio(a) < a + 1.0 / a);
  }
}

TEST_CASE("truncated variance") {
  CHECK(truncated_variance(0.0) == doctest::Approx(1.0 - 2.0 / std::numbers::pi).epsilon(1e-12));
  for (double a : {-1.0, 0.5, 1.5, 2.5}) {
    CHECK(truncated_variance(a) == doctest::Approx(truncated_variance_oracle(a)).epsilon(1e-9));
  }
  SUBCASE("small p exceeds p") {
    // Var(Z | Z > z_p) <= p is false below roughly p = 0.2
    const double v10 = truncated_variance(normal_quantile(0.9));
    const double v01 = truncated_variance(normal_quantile(0.99));
    CHECK(v10 == doctest::Approx(0.1692).epsilon(1e-3));
    CHECK(v01 == doctest::Approx(0.0968).epsilon(1e-3));
    CHECK(v10 > 0.1);
    CHECK(v01 > 0.01);
    CHECK(truncated_variance(normal_quantile(0.75)) < 0.25);
    CHECK(truncated_variance(normal_quantile(0.5)) < 0.5);
  }
}

TEST_CASE("conditional stats") {
  SelectionExperiment e;
  e.n = 200'000;
  e.seed = 3;

  SUBCASE("independent surrogate leaves the variance alone") {
    e.model.rho = 0.0;
    const auto st = conditional_stats(e);
    CHECK(std::abs(st.cond_var - 1.0) <= 3.0 * st.se_var);
    CHECK(st.selected == doctest::Approx(0.25 * 200'000).epsilon(0.02));
  }
  SUBCASE("rho 0.8, p 0.25 under the bound") {
    e.model.rho = 0.8;
    e.n = 1'000'000;
    const auto st = conditional_stats(e);
    CHECK(st.cond_var <= 0.52 + 3.0 * st.se_var);
  }
  SUBCASE("rho 1, p 0.5 gives lambda(0)") {
    e.model.rho = 1.0;
    e.p = 0.5;
    const auto st = conditional_stats(e);
    CHECK(std::abs(st.cond_mean - std::sqrt(2.0 / std::numbers::pi)) <= 4.0 * st.se_mean);
    CHECK(st.threshold == doctest::Approx(0.0));
  }
  SUBCASE("scaled model") {
    e.model = {2.0, -1.0, 3.0, 0.5, 0.6};
    const auto st = conditional_stats(e);
    const double want_var = 9.0 * (1.0 - 0.36 * (1.0 - truncated_variance(normal_quantile(0.75))));
    CHECK(std::abs(st.cond_var - want_var) <= 4.0 * st.se_var);
  }
  SUBCASE("p = 1 keeps everything") {
    e.p = 1.0;
    CHECK(conditional_stats(e).selected == e.n);
  }
  SUBCASE("deterministic in the seed") {
    const auto a = conditional_stats(e);
    const auto b = conditional_stats(e);
    CHECK(a.cond_mean == b.cond_mean);
    CHECK(a.cond_var == b.cond_var);
  }
  SUBCASE("too few selected") {
    e.n = 20'000;
    e.p = 0.001;
    CHECK_THROWS_WITH_AS(conditional_stats(e), doctest::Contains("increase n"), PreconditionError);
  }
  SUBCASE("invalid experiments") {
    e.n = 10;
    CHECK_THROWS_AS(conditional_stats(e), ConfigError);
    e.n = 20'000;
    e.model.sigma_r = 0.0;
    CHECK_THROWS_AS(conditional_stats(e), ConfigError);
  }
}

TEST_CASE("check rows") {
  SelectionExperiment e;
  e.n = 200'000;
  e.model.rho = 0.6;
  SUBCASE("mean shift at rho 0 and 0.6") {
    CHECK(verify_mean_shift(e).pass);
    e.model.rho = 0.0;
    const auto r = verify_mean_shift(e);
    CHECK(r.reference == 0.0);
    CHECK(r.pass);
  }
  SUBCASE("snr needs a nonzero mean") {
    auto base = e;
    base.p = 1.0;
    CHECK_THROWS_AS(verify_snr(e, base), PreconditionError);
  }
  SUBCASE("snr at rho 0 is about the squared mean ratio") {
    e.model.rho = 0.0;
    e.model.mu_r = 1.0;
    auto base = e;
    base.p = 1.0;
    const auto r = verify_snr(e, base);
    CHECK(r.reference == 1.0);
    CHECK(r.pass);
    CHECK(r.estimate == doctest::Approx(1.0).epsilon(0.05));
  }
  SUBCASE("truncated check arguments") {
    CHECK_THROWS_AS(truncated_variance_bound_check(0.7, 200'000, 1), ConfigError);
    CHECK_THROWS_AS(truncated_variance_bound_check(0.25, 1000, 1), ConfigError);
    const auto r = half_normal_anchor(200'000, 1);
    CHECK(r.pass);
    CHECK(r.reference == doctest::Approx(0.3634).epsilon(1e-3));
  }
  SUBCASE("csv") {
    std::ostringstream os;
    write_csv_header(os);
    CheckRow row{"theorem1", "cond_var_ratio", 0.3, 0.1, 1000, 0.5, 0.01, 0.6, 3.0, false};
    write_csv_row(os, row);
    CHECK(os.str() == "suite,check,rho,p,n,estimate,se,reference,tolerance,pass\n"
                      "theorem1,cond_var_ratio,0.3,0.1,1000,0.5,0.01,0.6,3,FAIL\n");
  }
}

TEST_CASE("density models") {
  const auto u = DensityModel::uniform(1.0, 2.0);
  CHECK(u.quantile(0.75) == 1.75);
  CHECK(u.pdf(1.5) == 1.0);
  CHECK(u.pdf(2.5) == 0.0);
  const auto n = DensityModel::normal(1.5, 0.15);
  CHECK(n.quantile(0.5) == doctest::Approx(1.5));
  CHECK(n.pdf(1.5) == doctest::Approx(1.0 / (0.15 * std::sqrt(2.0 * std::numbers::pi))));
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) {
    const double x = u.sample(rng);
    CHECK(x >= 1.0);
    CHECK(x < 2.0);
  }
}

TEST_CASE("controller tracks the 0.75 quantile of Uniform(1,2)") {
  const auto rep = controller_tracking(DensityModel::uniform(1.0, 2.0), DgsConfig{}, 2000, 200,
                                       0.05, 9, 11);
  CHECK(rep.target == 1.75);
  CHECK(rep.first_entry < 500);
  CHECK(rep.trailing_pass_rate == doctest::Approx(0.25).epsilon(0.2));
  CHECK(std::abs(rep.final_threshold - 1.75) < 0.05);
}

TEST_CASE("stability scan extremes") {
  ScanConfig cfg;
  const auto rep = stability_scan(DensityModel::uniform(1.0, 2.0), {0.02, 0.1, 30.0, 100.0}, cfg);
  CHECK(rep.boundary == doctest::Approx(2.0 / 1.75));
  REQUIRE(rep.points.size() == 4);
  CHECK(rep.points[0].predicted_stable);
  CHECK(rep.points[1].predicted_stable);
  CHECK(rep.points[1].observed_stable);
  CHECK_FALSE(rep.points[2].predicted_stable);
  CHECK_FALSE(rep.points[2].observed_stable);
  CHECK_FALSE(rep.points[3].observed_stable);
  CHECK(rep.outside_band == 4);

  const auto g = log_grid(0.01, 10.0, 31);
  CHECK(g.size() == 31);
  CHECK(g.front() == doctest::Approx(0.01));
  CHECK(g.back() == doctest::Approx(10.0));
  CHECK(g[15] == doctest::Approx(std::sqrt(0.1)));
}
