#include <doctest.h>

#include <cmath>
#include <sstream>

#include "grudw/cohort.hpp"
#include "grudw/evaluation.hpp"
#include "grudw/trainer.hpp"
#include "helpers.hpp"

using namespace grudw;

TEST_CASE("default grid has 110 steps") {
  const Vec g = build_grid({});
  CHECK(g.size() == 110);
  CHECK(g.front() == -1095.0);
  CHECK(g.back() <= 1826.0);
  for (std::size_t i = 1; i < g.size(); ++i) CHECK(g[i] > g[i - 1]);
  // dense steps only inside the half-year window
  for (std::size_t i = 1; i < g.size(); ++i) {
    const double step = g[i] - g[i - 1];
    CHECK((step == 15.0 || step == 30.0));
    if (step == 15.0) CHECK(std::abs(g[i - 1]) < 182.0);
  }
}

TEST_CASE("degenerate dense windows give a uniform grid") {
  SamplingGrid a;
  a.dense_half_window_days = 0.0;
  SamplingGrid b;
  b.dense_step_days = 30.0;
  const Vec ga = build_grid(a);
  CHECK(ga == build_grid(b));
  for (std::size_t i = 1; i < ga.size(); ++i) CHECK(ga[i] - ga[i - 1] == 30.0);
  SamplingGrid bad;
  bad.sparse_step_days = 0.0;
  CHECK_THROWS(build_grid(bad));
  SamplingGrid inverted;
  inverted.end_days = -2000.0;
  CHECK_THROWS(build_grid(inverted));
}

TEST_CASE("generation is deterministic per seed") {
  CohortSpec spec;
  spec.n_patients = 40;
  std::ostringstream a, b, c;
  write_cohort(a, generate(spec).cohort);
  write_cohort(b, generate(spec).cohort);
  spec.seed += 1;
  write_cohort(c, generate(spec).cohort);
  CHECK(a.str() == b.str());
  CHECK(a.str() != c.str());
}

TEST_CASE("zero missing rate observes every numeric cell") {
  CohortSpec spec;
  spec.n_patients = 50;
  spec.missing_rates.assign(static_cast<std::size_t>(spec.n_numeric), 0.0);
  const GeneratedCohort g = generate(spec);
  for (const auto& p : g.cohort.patients)
    for (const auto& o : p.observations)
      for (std::size_t d = 0; d < g.cohort.features.size(); ++d)
        if (g.cohort.features[d].kind != FeatureKind::binary) CHECK(o.m[d] == 1.0);
}

TEST_CASE("spec validation") {
  CohortSpec s;
  s.n_patients = 0;
  CHECK_THROWS(s.validate());
  s = {};
  s.censoring_rate = 1.5;
  CHECK_THROWS(s.validate());
  s = {};
  s.missing_rates = {0.1};
  CHECK_THROWS(s.validate());
  CHECK_THROWS(cohort_spec_from_json({{"no_such_field", 1}}));
  const CohortSpec r = cohort_spec_from_json(to_json(CohortSpec{}));
  CHECK(r.n_patients == CohortSpec{}.n_patients);
  CHECK(r.link == CohortSpec{}.link);
}

namespace {

Metric oracle_c_index(const GeneratedCohort& g, double horizon) {
  std::vector<RiskOutcome> d;
  const auto step = snap_step(g.truth.grid, 0.0);
  for (std::size_t i = 0; i < g.cohort.patients.size(); ++i) {
    const auto& p = g.cohort.patients[i];
    if (!(p.outcome.terminal_time > 0.0)) continue;
    const WeibullParams w = g.truth.oracle_params(i, *step);
    d.push_back({1.0 - survival(w, horizon), p.outcome.terminal_time / kDaysPerYear, p.outcome.censored});
  }
  return c_index(d);
}

}  // namespace

TEST_CASE("no link signal gives no oracle discrimination") {
  CohortSpec spec;
  spec.n_patients = 2000;
  spec.link = {1.3, 0.0};
  const GeneratedCohort g = generate(spec);
  const Metric c = oracle_c_index(g, 1.0);
  REQUIRE(c);
  CHECK(std::abs(*c - 0.5) <= 0.03);
}

TEST_CASE("censoring rate is hit within two points") {
  CohortSpec spec;
  spec.n_patients = 5000;
  spec.censoring_rate = 0.49;
  const GeneratedCohort g = generate(spec);
  std::size_t cens = 0;
  for (const auto& p : g.cohort.patients) cens += p.outcome.censored ? 1 : 0;
  const double rate = static_cast<double>(cens) / 5000.0;
  CHECK(rate >= 0.47);
  CHECK(rate <= 0.51);
  CHECK(g.achieved_censoring_rate == doctest::Approx(rate));
}

TEST_CASE("all-censored cohorts cut follow-up before each event") {
  CohortSpec spec;
  spec.n_patients = 400;
  spec.censoring_rate = 1.0;
  const GeneratedCohort g = generate(spec);
  CHECK(g.achieved_censoring_rate == 1.0);
  Vec t;
  for (std::size_t i = 0; i < g.cohort.patients.size(); ++i) {
    const auto& p = g.cohort.patients[i];
    CHECK(p.outcome.censored);
    if (g.truth.patients[i].event_time) CHECK(p.outcome.terminal_time < *g.truth.patients[i].event_time);
    t.push_back(p.outcome.terminal_time);
  }
  std::nth_element(t.begin(), t.begin() + 200, t.end());
  CHECK(t[200] > 30.0);
}

TEST_CASE("terminal time exceeds every contributing step") {
  CohortSpec spec;
  spec.n_patients = 500;
  const GeneratedCohort g = generate(spec);
  for (const auto& p : g.cohort.patients) {
    REQUIRE(p.steps() > 0);
    CHECK(p.outcome.terminal_time > p.grid_times.back());
    CHECK(p.grid_times.size() == p.steps());
    CHECK_NOTHROW(p.validate());
  }
}

TEST_CASE("lvcf examples") {
  PatientSeries s;
  s.patient_id = "L";
  s.grid_times = {0.0, 30.0, 60.0, 90.0};
  s.observations = {{{5.0}, {1.0}, {0.0}}, {{0.0}, {0.0}, {0.0}}, {{0.0}, {0.0}, {0.0}}, {{0.0}, {0.0}, {0.0}}};
  s.outcome.terminal_time = 100.0;
  recompute_deltas(s);
  const Vec means{-1.0};

  const PatientSeries u = lvcf(s, std::nullopt, means);
  for (const auto& o : u.observations) {
    CHECK(o.x[0] == 5.0);
    CHECK(o.m[0] == 1.0);
  }

  PatientSeries longgap = s;
  longgap.grid_times = {0.0, 200.0, 365.0, 400.0};
  recompute_deltas(longgap);
  const PatientSeries c = lvcf(longgap, 365.0, means);
  CHECK(c.observations[1].x[0] == 5.0);
  CHECK(c.observations[2].x[0] == 5.0);
  CHECK(c.observations[3].x[0] == -1.0);
  CHECK(c.observations[3].m[0] == 0.0);

  PatientSeries never = s;
  for (auto& o : never.observations) o.m[0] = 0.0;
  recompute_deltas(never);
  for (const auto& o : lvcf(never, std::nullopt, means).observations) {
    CHECK(o.x[0] == -1.0);
    CHECK(o.m[0] == 0.0);
  }

  std::mt19937_64 rng(3);
  const PatientSeries full = testing::random_series(rng, 3, 6, 0.0, false);
  const PatientSeries same = lvcf(full, std::nullopt, Vec{0.0, 0.0, 0.0});
  for (std::size_t t = 0; t < full.steps(); ++t) {
    CHECK(same.observations[t].x == full.observations[t].x);
    CHECK(same.observations[t].m == full.observations[t].m);
  }
}

TEST_CASE("z-score examples") {
  Cohort c;
  c.features = {{"a", FeatureKind::numeric, FeatureCategory::dynamic, 0.0},
                {"b", FeatureKind::numeric, FeatureCategory::dynamic, 0.0},
                {"never", FeatureKind::numeric, FeatureCategory::dynamic, 0.0}};
  for (int i = 0; i < 2; ++i) {
    PatientSeries s;
    s.patient_id = "Z" + std::to_string(i);
    s.grid_times = {0.0};
    // a: 8 and 12 -> mean 10, population sd 2; b constant
    s.observations = {{{i == 0 ? 8.0 : 12.0, 3.0, 0.0}, {1.0, 1.0, 0.0}, {0.0, 0.0, 0.0}}};
    s.outcome.terminal_time = 50.0;
    c.patients.push_back(s);
  }
  std::vector<std::string> warnings;
  const std::vector<std::size_t> idx{0, 1};
  const FeatureScaler sc = zscore_fit(c, idx, &warnings);
  CHECK(sc.transform(0, 14.0) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(sc.transform(1, 3.0) == 0.0);
  CHECK(sc.excluded[2]);
  CHECK(sc.kept_features() == 2);
  CHECK(warnings.size() == 1);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0.0, 50.0);
  for (int i = 0; i < 100; ++i) {
    const double v = n(rng);
    CHECK(std::abs(sc.inverse(0, sc.transform(0, v)) - v) < 1e-10);
  }
  const PatientSeries z = zscore_apply(sc, c.patients[1]);
  CHECK(z.features() == 2);
  CHECK(z.observations[0].x[0] == doctest::Approx(1.0));
}

TEST_CASE("cohort and truth files round trip and detect truncation") {
  CohortSpec spec;
  spec.n_patients = 30;
  const GeneratedCohort g = generate(spec);
  std::ostringstream os;
  write_cohort(os, g.cohort);
  std::istringstream is(os.str());
  const Cohort back = read_cohort(is);
  std::ostringstream os2;
  write_cohort(os2, back);
  CHECK(os.str() == os2.str());
  REQUIRE(back.patients.size() == 30);
  CHECK(back.patients[7].outcome.terminal_time == g.cohort.patients[7].outcome.terminal_time);

  const std::string text = os.str();
  const std::size_t cut = text.rfind('\n', text.size() - 2);
  std::istringstream trunc(text.substr(0, cut + 1));
  CHECK_THROWS(read_cohort(trunc));

  std::ostringstream ts;
  write_truth(ts, g.truth);
  std::istringstream tis(ts.str());
  const CohortTruth t = read_truth(tis);
  CHECK(t.kappa_star == g.truth.kappa_star);
  CHECK(t.patients.size() == 30);
  CHECK(t.patients[3].lambda_star == g.truth.patients[3].lambda_star);
  CHECK(t.grid == g.truth.grid);
}

TEST_CASE("trained model does not beat the generator's own truth") {
  CohortSpec spec;
  spec.n_patients = 600;
  spec.seed = 77;
  const GeneratedCohort g = generate(spec);
  const FoldPlan plan = make_folds(g.cohort, 0.0, 1);
  TrainConfig cfg;
  cfg.hidden_units = 16;
  cfg.learning_rate = 0.01;
  cfg.epochs = 12;
  cfg.batch_size = 64;
  cfg.overfit_gap = 0.9;
  cfg.threads = 4;
  const TrainResult r = train(g.cohort, plan, 0, cfg);

  std::vector<std::size_t> idx;
  for (const auto& id : plan.folds[0]) idx.push_back(g.cohort.index_of(id));
  const auto traj = predict_cohort(r.model, g.cohort, idx);
  EvalOptions opts;
  opts.times_days = {0.0};
  opts.horizons_years = {1.0};
  const ModelReport model = evaluate("m", g.cohort, idx,
      [&](std::size_t p, std::size_t step) -> std::optional<WeibullParams> {
        const auto pos = std::find(idx.begin(), idx.end(), p) - idx.begin();
        return traj[pos][step];
      }, opts);
  const ModelReport oracle = evaluate("o", g.cohort, idx,
      [&](std::size_t p, std::size_t step) -> std::optional<WeibullParams> { return g.truth.oracle_params(p, step); },
      opts);
  REQUIRE(model.times[0].c_index[0]);
  REQUIRE(oracle.times[0].c_index[0]);
  MESSAGE("oracle ", *oracle.times[0].c_index[0], " trained ", *model.times[0].c_index[0]);
  CHECK(*oracle.times[0].c_index[0] >= *model.times[0].c_index[0] - 0.02);
}
