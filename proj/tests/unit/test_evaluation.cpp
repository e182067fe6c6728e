#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "grudw/evaluation.hpp"
#include "helpers.hpp"

using namespace grudw;

namespace {

double draw_weibull(std::mt19937_64& rng, const WeibullParams& p) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double v = u(rng);
  while (v <= 0.0) v = u(rng);
  return p.lambda() * std::pow(-std::log(v), 1.0 / p.kappa());
}

double ks_uniform(Vec v) {
  std::sort(v.begin(), v.end());
  const double n = static_cast<double>(v.size());
  double d = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    d = std::max(d, std::abs((i + 1) / n - v[i]));
    d = std::max(d, std::abs(v[i] - i / n));
  }
  return d;
}

// Patients with random scales, exact event times, uniform censoring.
struct Toy {
  std::vector<WeibullParams> params;
  Vec remaining;
  std::vector<bool> censored;
};

Toy toy_population(std::size_t n, std::uint64_t seed, double censor_max) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ll(std::log(0.5), std::log(6.0)), c(0.0, censor_max);
  Toy t;
  for (std::size_t i = 0; i < n; ++i) {
    const WeibullParams p(1.4, std::exp(ll(rng)));
    const double ev = draw_weibull(rng, p);
    const double cs = censor_max > 0.0 ? c(rng) : 1e300;
    t.params.push_back(p);
    t.remaining.push_back(std::min(ev, cs));
    t.censored.push_back(cs < ev);
  }
  return t;
}

Vec horizon_survival(const Toy& t, double h, double power = 1.0) {
  Vec s;
  for (const auto& p : t.params) s.push_back(std::pow(survival(p, h), power));
  return s;
}

}  // namespace

TEST_CASE("c-index examples") {
  const std::vector<RiskOutcome> ordered{{0.9, 1.0, false}, {0.5, 2.0, false}, {0.1, 3.0, false}};
  CHECK(*c_index(ordered) == 1.0);
  const std::vector<RiskOutcome> ties{{0.4, 1.0, false}, {0.4, 2.0, true}, {0.4, 3.0, false}};
  CHECK(*c_index(ties) == 0.5);
  const std::vector<RiskOutcome> none{{0.4, 1.0, true}, {0.2, 2.0, true}};
  CHECK(*c_index(none) == 0.5);
  CHECK_FALSE(c_index(std::vector<RiskOutcome>{}));
  const std::vector<RiskOutcome> reversed{{0.1, 1.0, false}, {0.5, 2.0, false}, {0.9, 3.0, false}};
  CHECK(*c_index(reversed) == 0.0);
}

TEST_CASE("c-index of random scores is one half") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double sum = 0.0;
  int within = 0;
  for (int rep = 0; rep < 100; ++rep) {
    std::vector<RiskOutcome> d;
    for (int i = 0; i < 200; ++i) d.push_back({u(rng), 5.0 * u(rng), u(rng) < 0.4});
    const double c = *c_index(d);
    sum += c;
    within += std::abs(c - 0.5) <= 0.05 ? 1 : 0;
  }
  CHECK(std::abs(sum / 100.0 - 0.5) < 0.01);
  CHECK(within >= 95);
}

TEST_CASE("c-index is invariant under monotone transforms") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<RiskOutcome> d, e, f;
  for (int i = 0; i < 300; ++i) {
    const double r = u(rng);
    const RiskOutcome o{r, 4.0 * u(rng), u(rng) < 0.5};
    d.push_back(o);
    e.push_back({std::exp(3.0 * r) - 7.0, o.remaining, o.censored});
    f.push_back({std::atan(r * 10.0), o.remaining, o.censored});
  }
  CHECK(*c_index(d) == *c_index(e));
  CHECK(*c_index(d) == *c_index(f));
}

TEST_CASE("shared shape gives identical c-index at every horizon") {
  const Toy t = toy_population(400, 3, 4.0);
  Metric first;
  for (double h : {0.5, 1.0, 2.0, 3.0, 4.0, 5.0}) {
    std::vector<RiskOutcome> d;
    for (std::size_t i = 0; i < t.params.size(); ++i)
      d.push_back({1.0 - survival(t.params[i], h), t.remaining[i], t.censored[i]});
    const Metric c = c_index(d);
    if (!first) first = c;
    CHECK(*c == *first);
  }
}

TEST_CASE("l1 examples") {
  const L1Stats s = l1_loss(Vec{2.0, 3.0}, Vec{1.0, 5.0});
  CHECK(s.abs_error.mean == 1.5);
  CHECK(s.abs_error.median == 1.5);
  CHECK(s.abs_error.sd == 0.5);
  CHECK(s.over.n == 1);
  CHECK(s.over.mean == 1.0);
  CHECK(s.under.n == 1);
  CHECK(s.under.mean == -2.0);
  const L1Stats z = l1_loss(Vec{1.0, 2.0, 3.0}, Vec{1.0, 2.0, 3.0});
  CHECK(z.abs_error.mean == 0.0);
  CHECK(z.abs_error.sd == 0.0);
  CHECK(z.over.n == 0);
  CHECK_THROWS(l1_loss(Vec{}, Vec{}));
  CHECK_THROWS(l1_loss(Vec{1.0}, Vec{1.0, 2.0}));
}

TEST_CASE("l1 under the generating model matches the integral") {
  const WeibullParams p(1.5, 2.0);
  const double m = median_time(p);
  // E|m - T| by Simpson's rule on the density
  const int n = 200000;
  const double hi = 40.0, h = hi / n;
  double integral = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double t = i * h;
    const double w = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    integral += w * std::abs(m - t) * (t > 0 ? std::exp(log_pdf(p, t)) : 0.0);
  }
  integral *= h / 3.0;
  std::mt19937_64 rng(12);
  Vec pred, target;
  for (int i = 0; i < 1000; ++i) {
    pred.push_back(m);
    target.push_back(draw_weibull(rng, p));
  }
  const double got = l1_loss(pred, target).abs_error.mean;
  CHECK(std::abs(got - integral) / integral < 0.05);
}

TEST_CASE("parkes examples") {
  CHECK(parkes_proportion(Vec{3.0}, Vec{1.0}) == 1.0);
  CHECK(parkes_proportion(Vec{1.0}, Vec{1.5}) == 0.0);
  CHECK(parkes_proportion(Vec{3.0, 1.0}, Vec{1.0, 1.5}) == 0.5);
  CHECK(parkes_proportion(Vec{1.0}, Vec{2.5}) == 1.0);
  CHECK_THROWS_AS(parkes_proportion(Vec{0.0}, Vec{1.0}), DomainError);
  CHECK_THROWS_AS(parkes_proportion(Vec{1.0}, Vec{-1.0}), DomainError);
}

TEST_CASE("survival at event") {
  SUBCASE("truth gives uniform values") {
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> k(0.6, 3.0), l(0.3, 5.0);
    std::vector<WeibullParams> ps;
    Vec rem;
    for (int i = 0; i < 2000; ++i) {
      ps.emplace_back(k(rng), l(rng));
      rem.push_back(draw_weibull(rng, ps.back()));
    }
    const SurvivalAtEvent s = survival_at_event(ps, rem);
    CHECK(ks_uniform(s.values) < 0.05);
    std::size_t total = 0;
    for (auto c : s.counts) total += c;
    CHECK(total == 2000);
  }
  SUBCASE("median at the event gives one half") {
    std::vector<WeibullParams> ps{{1.2, 2.0}, {3.0, 0.5}};
    const Vec rem{median_time(ps[0]), median_time(ps[1])};
    const SurvivalAtEvent s = survival_at_event(ps, rem);
    for (double v : s.values) CHECK(v == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(s.counts[10] == 2);
  }
  SUBCASE("huge scale gives values near one") {
    std::vector<WeibullParams> ps{{50.0, 100.0}};
    CHECK(survival_at_event(ps, Vec{1.0}).values[0] > 0.999999);
  }
}

TEST_CASE("kaplan-meier") {
  CHECK(*kaplan_meier(Vec{1.0, 2.0, 3.0, 4.0}, {false, false, false, false}, 2.5) == 0.5);
  // censored at 1.5 leaves 2 at risk at time 2
  CHECK(*kaplan_meier(Vec{1.0, 1.5, 2.0, 3.0}, {false, true, false, false}, 2.5) ==
        doctest::Approx(0.75 * 0.5).epsilon(1e-15));
  CHECK(*kaplan_meier(Vec{1.0, 2.0}, {false, false}, 0.5) == 1.0);
  CHECK_FALSE(kaplan_meier(Vec{1.0, 2.0}, {true, true}, 3.0));
  CHECK(*kaplan_meier(Vec{1.0, 2.0}, {false, false}, 3.0) == 0.0);
}

TEST_CASE("calibration bins") {
  SUBCASE("truth is calibrated") {
    const Toy t = toy_population(5000, 31, 8.0);
    const Vec s = horizon_survival(t, 1.0);
    const auto bins = calibration_bins(s, t.remaining, t.censored, 1.0);
    REQUIRE(bins.size() == 10);
    for (const auto& b : bins) {
      REQUIRE(b.observed);
      CHECK(std::abs(b.mean_predicted - *b.observed) < 0.05);
    }
  }
  SUBCASE("identical patients repeat one value") {
    const Vec s(20, 0.7);
    Vec rem;
    for (int i = 0; i < 20; ++i) rem.push_back(0.1 * (i + 1));
    const auto bins = calibration_bins(s, rem, std::vector<bool>(20, false), 1.0);
    for (const auto& b : bins) CHECK(b.mean_predicted == 0.7);
  }
  SUBCASE("squared survival sits below observed in low bins") {
    const Toy t = toy_population(5000, 32, 8.0);
    const Vec s = horizon_survival(t, 1.0, 2.0);
    const auto bins = calibration_bins(s, t.remaining, t.censored, 1.0);
    for (int k = 0; k < 5; ++k) CHECK(bins[k].mean_predicted < *bins[k].observed);
  }
  SUBCASE("bin populations differ by at most one") {
    for (std::size_t n : {10u, 11u, 19u, 97u, 1003u}) {
      const Toy t = toy_population(n, n, 3.0);
      const auto bins = calibration_bins(horizon_survival(t, 1.0), t.remaining, t.censored, 1.0);
      std::size_t lo = SIZE_MAX, hi = 0, total = 0;
      for (const auto& b : bins) {
        lo = std::min(lo, b.n);
        hi = std::max(hi, b.n);
        total += b.n;
      }
      CHECK(hi - lo <= 1);
      CHECK(total == n);
      for (std::size_t k = 1; k < bins.size(); ++k) CHECK(bins[k].mean_predicted >= bins[k - 1].mean_predicted);
    }
    CHECK_THROWS(calibration_bins(Vec(9, 0.5), Vec(9, 1.0), std::vector<bool>(9, false), 1.0));
  }
}

TEST_CASE("recalibration") {
  SUBCASE("calibrated bins give the identity") {
    std::vector<CalibrationBin> bins;
    for (int k = 0; k < 10; ++k) bins.push_back({10, 0.05 + 0.1 * k, 0.05 + 0.1 * k});
    const LinearMap m = recalibrate_fit(bins);
    CHECK(std::abs(m.slope - 1.0) < 1e-10);
    CHECK(std::abs(m.intercept) < 1e-10);
  }
  SUBCASE("exact line is recovered") {
    std::vector<CalibrationBin> bins;
    for (int k = 0; k < 10; ++k) bins.push_back({10, 0.1 + 0.05 * k, 2.0 * (0.1 + 0.05 * k) - 0.1});
    const LinearMap m = recalibrate_fit(bins);
    CHECK(m.slope == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(m.intercept == doctest::Approx(-0.1).epsilon(1e-12));
    CHECK(m.apply(0.9) == 1.0);
    CHECK(m.apply(0.01) == 0.0);
  }
  SUBCASE("degenerate bins fall back to the identity") {
    std::vector<CalibrationBin> bins(10, CalibrationBin{5, 0.4, 0.6});
    const LinearMap m = recalibrate_fit(bins);
    CHECK(m.identity_fallback);
    CHECK_FALSE(m.warning.empty());
    CHECK(m.apply(0.3) == 0.3);
  }
  SUBCASE("a fitted map halves held-out error on a distorted toy") {
    const Toy fit = toy_population(5000, 41, 8.0);
    const Toy held = toy_population(5000, 42, 8.0);
    const LinearMap m = recalibrate_fit(calibration_bins(horizon_survival(fit, 1.0, 2.0), fit.remaining, fit.censored, 1.0));
    const Vec raw = horizon_survival(held, 1.0, 2.0);
    Vec fixed;
    for (double v : raw) fixed.push_back(m.apply(v));
    const double before = mean_calibration_error(calibration_bins(raw, held.remaining, held.censored, 1.0));
    const double after = mean_calibration_error(calibration_bins(fixed, held.remaining, held.censored, 1.0));
    MESSAGE("before ", before, " after ", after);
    CHECK(after <= 0.5 * before);
  }
}

TEST_CASE("pearson guard and values") {
  CHECK_FALSE(pearson(Vec{1.0, 2.0}, Vec{2.0, 1.0}));
  Vec x, y, c(40, 1.0);
  for (int i = 0; i < 40; ++i) {
    x.push_back(i);
    y.push_back(3.0 * i + 1.0);
  }
  CHECK(*pearson(x, y) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK_FALSE(pearson(x, c));
}

TEST_CASE("missing proportion over a lookback window") {
  PatientSeries s;
  s.patient_id = "M";
  s.grid_times = {-60.0, -30.0, 0.0};
  s.observations = {{{0.0, 1.0}, {0.0, 1.0}, {0.0, 0.0}},
                    {{2.0, 0.0}, {1.0, 0.0}, {0.0, 0.0}},
                    {{0.0, 0.0}, {0.0, 0.0}, {0.0, 0.0}}};
  s.outcome.terminal_time = 10.0;
  recompute_deltas(s);
  const std::vector<FeatureInfo> f{{"a", FeatureKind::numeric, FeatureCategory::dynamic, 0.0},
                                   {"b", FeatureKind::binary, FeatureCategory::comorbidity, 100.0}};
  // after carry forward, a is missing only at -60
  CHECK(*missing_proportion(s, f, FeatureCategory::dynamic, 2, 90.0) == doctest::Approx(1.0 / 3.0));
  CHECK(*missing_proportion(s, f, FeatureCategory::dynamic, 2, 45.0) == 0.0);
  CHECK(*missing_proportion(s, f, FeatureCategory::comorbidity, 2, 90.0) == 0.0);
  CHECK_FALSE(missing_proportion(s, f, FeatureCategory::medication, 2, 90.0));
}

TEST_CASE("missingness correlation needs thirty samples") {
  std::vector<ErrorSample> two{{1.0, 2.0, 0.1}, {2.0, 1.0, 0.5}};
  const MissingnessCorrelation m = missingness_error_correlation(0.0, FeatureCategory::dynamic, two);
  CHECK(m.n == 2);
  CHECK_FALSE(m.log_ratio);
  CHECK_FALSE(m.offset_ratio);
}

TEST_CASE("missingness correlation is null without MAR") {
  CohortSpec spec;
  spec.n_patients = 2000;
  spec.mar_strength = 0.0;
  spec.binary_severity_effect = 0.0;
  spec.seed = 99;
  const GeneratedCohort g = generate(spec);
  std::vector<std::size_t> idx(g.cohort.patients.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  EvalOptions opts;
  opts.times_days = {0.0};
  const ModelReport r = evaluate("oracle", g.cohort, idx,
      [&](std::size_t p, std::size_t step) -> std::optional<WeibullParams> { return g.truth.oracle_params(p, step); },
      opts);
  REQUIRE(!r.times[0].missingness.empty());
  for (const auto& m : r.times[0].missingness) {
    if (!m.log_ratio) continue;
    MESSAGE(std::string(to_string(m.category)), " ", *m.log_ratio);
    CHECK(std::abs(*m.log_ratio) <= 0.05);
  }
}

TEST_CASE("trajectory export") {
  const std::vector<WeibullParams> tr{{1.0, 2.0}, {1.0, 2.0}, {1.0, 2.0}};
  const Vec grid{-60.0, -30.0, 0.0};
  const auto rec = trajectory_export(tr, grid, -45.0);
  REQUIRE(rec.size() == 3);
  for (const auto& r : rec) {
    CHECK(r.cumhaz_1y == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(r.adjusted_cumhaz_1y == 0.0);
    CHECK(r.pmst == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-12));
    CHECK(r.hazard_1y == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(r.survival[1] == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
  }
  CHECK_THROWS_AS(trajectory_export(tr, grid, -100.0), DomainError);
  const std::vector<WeibullParams> down{{1.0, 2.0}, {1.0, 1.0}};
  const auto d = trajectory_export(down, Vec{0.0, 30.0}, 0.0);
  CHECK(d[1].adjusted_cumhaz_1y == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("snapping and default time points") {
  const Vec g{-30.0, 0.0, 15.0};
  CHECK_FALSE(snap_step(g, -31.0));
  CHECK(*snap_step(g, -30.0) == 0);
  CHECK(*snap_step(g, 10.0) == 1);
  CHECK(*snap_step(g, 1000.0) == 2);
  const Vec t = default_time_points();
  CHECK(t.front() == -3 * 365.0);
  CHECK(t.back() == 4 * 365.0);
  CHECK(t.size() == 8);
}

namespace {

EvalReport small_report(int models) {
  CohortSpec spec;
  spec.n_patients = 120;
  const GeneratedCohort g = generate(spec);
  std::vector<std::size_t> idx(g.cohort.patients.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  EvalReport rep;
  rep.options.times_days = {-365.0, 0.0, 365.0, 5000.0};
  for (int m = 0; m < models; ++m) {
    rep.models.push_back(evaluate("m" + std::to_string(m), g.cohort, idx,
        [&](std::size_t p, std::size_t step) -> std::optional<WeibullParams> {
          const WeibullParams w = g.truth.oracle_params(p, step);
          return WeibullParams(w.kappa(), w.lambda() * (1.0 + 0.1 * m));
        },
        rep.options));
  }
  return rep;
}

}  // namespace

TEST_CASE("report round trip and tables") {
  const EvalReport one = small_report(1);
  const nlohmann::json j = to_json(one);
  CHECK(to_json(eval_report_from_json(nlohmann::json::parse(j.dump()))).dump() == j.dump());
  const std::string tsv1 = eval_report_tsv(one);
  CHECK(tsv1.find("c_index_ci_low") == std::string::npos);
  CHECK(tsv1.find("\tNA") != std::string::npos);  // 5000 days is past every grid

  const std::string tsv5 = eval_report_tsv(small_report(5));
  CHECK(tsv5.find("c_index_ci_low") != std::string::npos);
  CHECK(tsv5.find("c_index_ci_high") != std::string::npos);
  const auto& last = one.models[0].times.back();
  CHECK(last.n_at_risk == 0);
  CHECK_FALSE(last.c_index[0]);
}

TEST_CASE("model summaries") {
  const std::vector<Metric> one{0.7};
  const auto s1 = summarize_models(one);
  CHECK(s1->mean == 0.7);
  CHECK_FALSE(s1->ci_low);
  const std::vector<Metric> many{0.6, 0.7, std::nullopt, 0.8};
  const auto s = summarize_models(many);
  CHECK(s->n_models == 3);
  CHECK(s->mean == doctest::Approx(0.7));
  const double half = 1.96 * 0.1 / std::sqrt(3.0);
  CHECK(*s->ci_low == doctest::Approx(0.7 - half));
  CHECK(*s->ci_high == doctest::Approx(0.7 + half));
  CHECK_FALSE(summarize_models(std::vector<Metric>{std::nullopt}));
  CHECK(format_metric(std::nullopt) == "NA");
  CHECK(format_number(0.1) == "0.1");
}
