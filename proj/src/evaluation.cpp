#include "grudw/evaluation.hpp"
#include "grudw/survival_loss.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace grudw {

namespace {

void require_same(std::size_t a, std::size_t b, const char* what) {
  if (a != b) throw std::invalid_argument(std::string(what) + ": length mismatch");
}

}  // namespace

Metric c_index(std::span<const RiskOutcome> data) {
  if (data.empty()) return std::nullopt;
  double score = 0.0;
  std::size_t pairs = 0;
  for (const auto& a : data) {
    if (a.censored) continue;
    for (const auto& b : data) {
      if (!(a.remaining < b.remaining)) continue;
      ++pairs;
      if (a.risk > b.risk) {
        score += 1.0;
      } else if (a.risk == b.risk) {
        score += 0.5;
      }
    }
  }
  if (pairs == 0) return 0.5;
  return score / static_cast<double>(pairs);
}

SummaryStats summarize(std::span<const double> values) {
  SummaryStats s;
  s.n = values.size();
  if (values.empty()) return s;
  Vec sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(s.n);
  s.mean = std::accumulate(sorted.begin(), sorted.end(), 0.0) / n;
  const std::size_t mid = s.n / 2;
  s.median = s.n % 2 == 1 ? sorted[mid] : 0.5 * (sorted[mid - 1] + sorted[mid]);
  double ss = 0.0;
  for (double v : sorted) ss += (v - s.mean) * (v - s.mean);
  s.sd = std::sqrt(ss / n);
  return s;
}

L1Stats l1_loss(std::span<const double> predictions, std::span<const double> targets) {
  require_same(predictions.size(), targets.size(), "l1_loss");
  if (predictions.empty()) throw std::invalid_argument("l1_loss on an empty set");
  L1Stats out;
  Vec abs_err, over, under;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double r = predictions[i] - targets[i];
    out.residuals.push_back(r);
    abs_err.push_back(std::abs(r));
    if (r > 0) over.push_back(r);
    if (r < 0) under.push_back(r);
  }
  out.abs_error = summarize(abs_err);
  out.over = summarize(over);
  out.under = summarize(under);
  return out;
}

double parkes_proportion(std::span<const double> targets, std::span<const double> predictions) {
  require_same(targets.size(), predictions.size(), "parkes_proportion");
  if (targets.empty()) throw std::invalid_argument("parkes_proportion on an empty set");
  std::size_t serious = 0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const double t = targets[i];
    const double p = predictions[i];
    if (!(t > 0.0) || !(p > 0.0)) throw DomainError("parkes_proportion needs positive values");
    if (t > 2.0 * p || t < 0.5 * p) ++serious;
  }
  return static_cast<double>(serious) / static_cast<double>(targets.size());
}

SurvivalAtEvent survival_at_event(std::span<const WeibullParams> params, std::span<const double> remaining) {
  require_same(params.size(), remaining.size(), "survival_at_event");
  if (params.empty()) throw std::invalid_argument("survival_at_event on an empty set");
  SurvivalAtEvent out;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double s = survival(params[i], remaining[i]);
    out.values.push_back(s);
    const int bin = std::min(kHistogramBins - 1, static_cast<int>(s * kHistogramBins));
    ++out.counts[static_cast<std::size_t>(std::max(0, bin))];
  }
  return out;
}

Metric kaplan_meier(std::span<const double> times, const std::vector<bool>& censored, double horizon) {
  require_same(times.size(), censored.size(), "kaplan_meier");
  if (times.empty()) return std::nullopt;
  std::vector<std::size_t> order(times.size());
  std::iota(order.begin(), order.end(), 0);
  // events before censorings at equal times
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (times[a] != times[b]) return times[a] < times[b];
    return !censored[a] && censored[b];
  });
  double s = 1.0;
  std::size_t at_risk = times.size();
  std::size_t i = 0;
  while (i < order.size() && times[order[i]] <= horizon) {
    const double t = times[order[i]];
    std::size_t deaths = 0, leaving = 0;
    while (i < order.size() && times[order[i]] == t) {
      if (!censored[order[i]]) ++deaths;
      ++leaving;
      ++i;
    }
    if (deaths > 0) s *= 1.0 - static_cast<double>(deaths) / static_cast<double>(at_risk);
    at_risk -= leaving;
  }
  if (at_risk == 0 && s > 0.0) return std::nullopt;
  return s;
}

std::vector<CalibrationBin> calibration_bins(std::span<const double> predicted, std::span<const double> remaining,
                                             const std::vector<bool>& censored, double horizon) {
  require_same(predicted.size(), remaining.size(), "calibration_bins");
  require_same(predicted.size(), censored.size(), "calibration_bins");
  const std::size_t n = predicted.size();
  if (n < static_cast<std::size_t>(kCalibrationBins)) {
    throw std::invalid_argument("calibration_bins needs at least 10 patients");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return predicted[a] < predicted[b]; });

  std::vector<CalibrationBin> bins;
  std::size_t start = 0;
  for (int k = 0; k < kCalibrationBins; ++k) {
    const std::size_t end = n * static_cast<std::size_t>(k + 1) / kCalibrationBins;
    Vec t;
    std::vector<bool> c;
    double sum = 0.0;
    for (std::size_t i = start; i < end; ++i) {
      sum += predicted[order[i]];
      t.push_back(remaining[order[i]]);
      c.push_back(censored[order[i]]);
    }
    CalibrationBin b;
    b.n = end - start;
    b.mean_predicted = sum / static_cast<double>(b.n);
    b.observed = kaplan_meier(t, c, horizon);
    bins.push_back(b);
    start = end;
  }
  return bins;
}

double mean_calibration_error(std::span<const CalibrationBin> bins) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& b : bins) {
    if (!b.observed) continue;
    sum += std::abs(b.mean_predicted - *b.observed);
    ++n;
  }
  if (n == 0) throw std::invalid_argument("no calibration bin has a defined observation");
  return sum / static_cast<double>(n);
}

double LinearMap::apply(double s) const { return std::clamp(slope * s + intercept, 0.0, 1.0); }

LinearMap recalibrate_fit(std::span<const CalibrationBin> bins) {
  Vec x, y;
  for (const auto& b : bins) {
    if (!b.observed) continue;
    x.push_back(b.mean_predicted);
    y.push_back(*b.observed);
  }
  LinearMap map;
  const auto distinct = [&] {
    for (double v : x) {
      if (v != x.front()) return true;
    }
    return false;
  };
  if (x.size() < 2 || !distinct()) {
    map.identity_fallback = true;
    map.warning = "fewer than two distinct calibration bin values; using the identity map";
    return map;
  }
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (!(sxx > 0.0)) {
    map.identity_fallback = true;
    map.warning = "zero variance in predicted bin means; using the identity map";
    return map;
  }
  map.slope = sxy / sxx;
  map.intercept = my - map.slope * mx;
  return map;
}

Metric pearson(std::span<const double> x, std::span<const double> y, std::size_t min_n) {
  require_same(x.size(), y.size(), "pearson");
  if (x.size() < std::max<std::size_t>(min_n, 2)) return std::nullopt;
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (!(sxx > 0.0) || !(syy > 0.0)) return std::nullopt;
  return sxy / std::sqrt(sxx * syy);
}

Metric missing_proportion(const PatientSeries& raw, const std::vector<FeatureInfo>& features,
                          FeatureCategory category, std::size_t step, double lookback_days) {
  if (step >= raw.steps()) throw std::out_of_range("missing_proportion: step beyond series");
  require_same(features.size(), raw.features(), "missing_proportion features");
  std::vector<std::size_t> cols;
  for (std::size_t f = 0; f < features.size(); ++f) {
    if (features[f].category == category) cols.push_back(f);
  }
  if (cols.empty()) return std::nullopt;
  const Vec zeros(raw.features(), 0.0);
  const PatientSeries filled = lvcf(raw, std::nullopt, zeros);
  const double t = raw.grid_times[step];
  std::size_t cells = 0, missing = 0;
  for (std::size_t j = 0; j <= step; ++j) {
    if (!(raw.grid_times[j] > t - lookback_days)) continue;
    for (std::size_t f : cols) {
      ++cells;
      if (filled.observations[j].m[f] == 0.0) ++missing;
    }
  }
  if (cells == 0) return std::nullopt;
  return static_cast<double>(missing) / static_cast<double>(cells);
}

MissingnessCorrelation missingness_error_correlation(double time_days, FeatureCategory category,
                                                     std::span<const ErrorSample> samples) {
  MissingnessCorrelation out;
  out.time_days = time_days;
  out.category = category;
  out.n = samples.size();
  Vec miss, e1, e2;
  for (const auto& s : samples) {
    if (!(s.target > 0.0) || !(s.pmst > 0.0)) throw DomainError("missingness correlation needs positive times");
    miss.push_back(s.missing);
    e1.push_back(std::abs(std::log(s.target / s.pmst)));
    e2.push_back(std::abs(std::log((s.target + 0.1) / (s.pmst + 0.1))));
  }
  out.log_ratio = pearson(e1, miss);
  out.offset_ratio = pearson(e2, miss);
  return out;
}

std::vector<TrajectoryRecord> trajectory_export(std::span<const WeibullParams> trajectory,
                                                std::span<const double> grid_times, double reference_days) {
  if (trajectory.size() > grid_times.size()) throw DimensionError("trajectory longer than its grid");
  std::vector<TrajectoryRecord> out;
  if (trajectory.empty()) return out;
  const auto ref = snap_step(grid_times.first(trajectory.size()), reference_days);
  if (!ref) throw DomainError("baseline reference step lies outside the series");
  for (std::size_t t = 0; t < trajectory.size(); ++t) {
    const WeibullParams& p = trajectory[t];
    TrajectoryRecord r;
    r.time_days = grid_times[t];
    r.kappa = p.kappa();
    r.lambda = p.lambda();
    r.pmst = median_time(p);
    r.q25 = quantile_time(p, 0.25);
    for (std::size_t h = 0; h < r.survival.size(); ++h) r.survival[h] = survival(p, static_cast<double>(h + 1));
    r.hazard_1y = hazard(p, 1.0);
    r.cumhaz_1y = cumulative_hazard(p, 1.0);
    out.push_back(r);
  }
  const double base = out[*ref].cumhaz_1y;
  for (auto& r : out) r.adjusted_cumhaz_1y = r.cumhaz_1y - base;
  return out;
}

Vec default_time_points() {
  Vec t;
  for (int y = -3; y <= 4; ++y) t.push_back(365.0 * y);
  return t;
}

std::optional<std::size_t> snap_step(std::span<const double> grid_times, double t) {
  const auto it = std::upper_bound(grid_times.begin(), grid_times.end(), t);
  if (it == grid_times.begin()) return std::nullopt;
  return static_cast<std::size_t>(it - grid_times.begin()) - 1;
}

namespace {

struct AtRisk {
  std::size_t patient;
  std::size_t step;
  double remaining;
  bool censored;
  WeibullParams params;
};

std::vector<AtRisk> at_risk_set(const Cohort& cohort, std::span<const std::size_t> indices, const Predictor& predict,
                                double t) {
  std::vector<AtRisk> out;
  for (std::size_t idx : indices) {
    const PatientSeries& s = cohort.patients.at(idx);
    if (!(s.outcome.terminal_time > t)) continue;
    const auto step = snap_step(s.grid_times, t);
    if (!step || *step >= s.steps()) continue;
    const auto p = predict(idx, *step);
    if (!p) continue;
    out.push_back({idx, *step, remaining_years(s, *step), s.outcome.censored, *p});
  }
  return out;
}

std::vector<FeatureCategory> categories_present(const std::vector<FeatureInfo>& features) {
  std::vector<FeatureCategory> out;
  for (auto c : {FeatureCategory::dynamic, FeatureCategory::comorbidity, FeatureCategory::medication}) {
    for (const auto& f : features) {
      if (f.category == c) {
        out.push_back(c);
        break;
      }
    }
  }
  return out;
}

}  // namespace

ModelReport evaluate(const std::string& name, const Cohort& cohort, std::span<const std::size_t> indices,
                     const Predictor& predict, const EvalOptions& opts) {
  ModelReport rep;
  rep.name = name;
  const auto categories = categories_present(cohort.features);
  for (double t : opts.times_days) {
    TimePointReport tr;
    tr.time_days = t;
    const auto risk = at_risk_set(cohort, indices, predict, t);
    tr.n_at_risk = risk.size();

    for (double h : opts.horizons_years) {
      std::vector<RiskOutcome> ro;
      // ranks by log cumulative hazard, same order as 1 - S(h) without saturating at 1
      for (const auto& a : risk) {
        const double lh = a.params.kappa() * (std::log(std::max(h, kTauEps)) - std::log(a.params.lambda()));
        ro.push_back({lh, a.remaining, a.censored});
      }
      tr.c_index.push_back(c_index(ro));
      if (risk.size() >= static_cast<std::size_t>(kCalibrationBins)) {
        Vec pred, rem;
        std::vector<bool> cens;
        for (const auto& a : risk) {
          pred.push_back(survival(a.params, h));
          rem.push_back(a.remaining);
          cens.push_back(a.censored);
        }
        tr.calibration.push_back(calibration_bins(pred, rem, cens, h));
      } else {
        tr.calibration.emplace_back();
      }
    }

    Vec pmst, target;
    std::vector<WeibullParams> params;
    std::vector<const AtRisk*> events;
    for (const auto& a : risk) {
      if (a.censored) continue;
      events.push_back(&a);
      pmst.push_back(median_time(a.params));
      target.push_back(a.remaining);
      params.push_back(a.params);
    }
    tr.n_uncensored = events.size();
    if (!events.empty()) {
      tr.l1 = l1_loss(pmst, target);
      tr.parkes = parkes_proportion(target, pmst);
      tr.survival_at_event = survival_at_event(params, target);
    }
    for (auto cat : categories) {
      std::vector<ErrorSample> samples;
      for (std::size_t k = 0; k < events.size(); ++k) {
        const AtRisk& a = *events[k];
        const auto miss = missing_proportion(cohort.patients[a.patient], cohort.features, cat, a.step,
                                             opts.lookback_days);
        if (miss) samples.push_back({target[k], pmst[k], *miss});
      }
      tr.missingness.push_back(missingness_error_correlation(t, cat, samples));
    }
    rep.times.push_back(std::move(tr));
  }
  return rep;
}

std::vector<PredictionRow> prediction_rows(const std::string& name, const Cohort& cohort,
                                           std::span<const std::size_t> indices, const Predictor& predict,
                                           const EvalOptions& opts) {
  std::vector<PredictionRow> rows;
  for (double t : opts.times_days) {
    for (const auto& a : at_risk_set(cohort, indices, predict, t)) {
      for (double h : opts.horizons_years) {
        rows.push_back({name, t, cohort.patients[a.patient].patient_id, a.remaining, a.censored, h,
                        survival(a.params, h)});
      }
    }
  }
  return rows;
}

std::optional<ScalarSummary> summarize_models(std::span<const Metric> values) {
  Vec v;
  for (const auto& m : values) {
    if (m) v.push_back(*m);
  }
  if (v.empty()) return std::nullopt;
  ScalarSummary s;
  s.n_models = v.size();
  const double k = static_cast<double>(v.size());
  s.mean = std::accumulate(v.begin(), v.end(), 0.0) / k;
  if (v.size() >= 2) {
    double ss = 0.0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    const double half = 1.96 * std::sqrt(ss / (k - 1.0)) / std::sqrt(k);
    s.ci_low = s.mean - half;
    s.ci_high = s.mean + half;
  }
  return s;
}

// ---- serialization ----

nlohmann::json to_json(const Metric& m) { return m ? nlohmann::json(*m) : nlohmann::json(nullptr); }

namespace {

Metric metric_from_json(const nlohmann::json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

nlohmann::json stats_json(const SummaryStats& s) {
  return {{"n", s.n}, {"mean", s.mean}, {"median", s.median}, {"sd", s.sd}};
}

SummaryStats stats_from_json(const nlohmann::json& j) {
  return {j.at("n").get<std::size_t>(), j.at("mean").get<double>(), j.at("median").get<double>(),
          j.at("sd").get<double>()};
}

nlohmann::json time_json(const TimePointReport& t) {
  nlohmann::json j;
  j["time_days"] = t.time_days;
  j["n_at_risk"] = t.n_at_risk;
  j["n_uncensored"] = t.n_uncensored;
  j["c_index"] = nlohmann::json::array();
  for (const auto& c : t.c_index) j["c_index"].push_back(to_json(c));
  if (t.l1) {
    j["l1"] = {{"abs_error", stats_json(t.l1->abs_error)},
               {"over", stats_json(t.l1->over)},
               {"under", stats_json(t.l1->under)}};
  } else {
    j["l1"] = nullptr;
  }
  j["parkes"] = to_json(t.parkes);
  if (t.survival_at_event) {
    j["survival_at_event"] = {{"counts", t.survival_at_event->counts}, {"values", t.survival_at_event->values}};
  } else {
    j["survival_at_event"] = nullptr;
  }
  j["calibration"] = nlohmann::json::array();
  for (const auto& bins : t.calibration) {
    nlohmann::json jb = nlohmann::json::array();
    for (const auto& b : bins) jb.push_back({{"n", b.n}, {"predicted", b.mean_predicted}, {"observed", to_json(b.observed)}});
    j["calibration"].push_back(jb);
  }
  j["missingness"] = nlohmann::json::array();
  for (const auto& m : t.missingness) {
    j["missingness"].push_back({{"category", to_string(m.category)},
                                {"n", m.n},
                                {"log_ratio", to_json(m.log_ratio)},
                                {"offset_ratio", to_json(m.offset_ratio)}});
  }
  return j;
}

TimePointReport time_from_json(const nlohmann::json& j) {
  TimePointReport t;
  t.time_days = j.at("time_days").get<double>();
  t.n_at_risk = j.at("n_at_risk").get<std::size_t>();
  t.n_uncensored = j.at("n_uncensored").get<std::size_t>();
  for (const auto& c : j.at("c_index")) t.c_index.push_back(metric_from_json(c));
  if (!j.at("l1").is_null()) {
    L1Stats l1;
    l1.abs_error = stats_from_json(j["l1"].at("abs_error"));
    l1.over = stats_from_json(j["l1"].at("over"));
    l1.under = stats_from_json(j["l1"].at("under"));
    t.l1 = l1;
  }
  t.parkes = metric_from_json(j.at("parkes"));
  if (!j.at("survival_at_event").is_null()) {
    SurvivalAtEvent s;
    s.counts = j["survival_at_event"].at("counts").get<std::array<std::size_t, kHistogramBins>>();
    s.values = j["survival_at_event"].at("values").get<Vec>();
    t.survival_at_event = s;
  }
  for (const auto& jb : j.at("calibration")) {
    std::vector<CalibrationBin> bins;
    for (const auto& b : jb) {
      bins.push_back({b.at("n").get<std::size_t>(), b.at("predicted").get<double>(), metric_from_json(b.at("observed"))});
    }
    t.calibration.push_back(bins);
  }
  for (const auto& m : j.at("missingness")) {
    MissingnessCorrelation mc;
    mc.time_days = t.time_days;
    mc.category = feature_category_from_string(m.at("category").get<std::string>());
    mc.n = m.at("n").get<std::size_t>();
    mc.log_ratio = metric_from_json(m.at("log_ratio"));
    mc.offset_ratio = metric_from_json(m.at("offset_ratio"));
    t.missingness.push_back(mc);
  }
  return t;
}

}  // namespace

nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json j;
  j["format"] = "grudw-eval-report";
  j["version"] = 1;
  j["times_days"] = r.options.times_days;
  j["horizons_years"] = r.options.horizons_years;
  j["lookback_days"] = r.options.lookback_days;
  j["models"] = nlohmann::json::array();
  for (const auto& m : r.models) {
    nlohmann::json jm;
    jm["name"] = m.name;
    jm["times"] = nlohmann::json::array();
    for (const auto& t : m.times) jm["times"].push_back(time_json(t));
    j["models"].push_back(jm);
  }
  return j;
}

EvalReport eval_report_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "grudw-eval-report") throw std::runtime_error("expected an evaluation report");
  EvalReport r;
  r.options.times_days = j.at("times_days").get<Vec>();
  r.options.horizons_years = j.at("horizons_years").get<Vec>();
  r.options.lookback_days = j.at("lookback_days").get<double>();
  for (const auto& jm : j.at("models")) {
    ModelReport m;
    m.name = jm.at("name").get<std::string>();
    for (const auto& jt : jm.at("times")) m.times.push_back(time_from_json(jt));
    r.models.push_back(std::move(m));
  }
  return r;
}

std::string format_number(double v) {
  if (std::isnan(v)) return "NA";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string format_metric(const Metric& m) { return m ? format_number(*m) : "NA"; }

std::string eval_report_tsv(const EvalReport& r) {
  if (r.models.empty()) throw std::invalid_argument("report has no models");
  const bool multi = r.models.size() > 1;
  const std::vector<std::string> metrics = {"c_index", "l1_mean", "l1_median", "l1_sd", "parkes", "calibration_error"};
  std::ostringstream os;
  os << "time_days\thorizon_years\tn_at_risk\tn_uncensored";
  for (const auto& m : metrics) {
    if (multi) {
      os << '\t' << m << "_mean\t" << m << "_ci_low\t" << m << "_ci_high";
    } else {
      os << '\t' << m;
    }
  }
  os << '\n';
  const auto& first = r.models.front();
  for (std::size_t ti = 0; ti < first.times.size(); ++ti) {
    for (std::size_t hi = 0; hi < r.options.horizons_years.size(); ++hi) {
      std::vector<std::vector<Metric>> cols(metrics.size());
      for (const auto& m : r.models) {
        if (m.times.size() != first.times.size()) throw DimensionError("models disagree on time points");
        const TimePointReport& t = m.times[ti];
        cols[0].push_back(t.c_index.at(hi));
        cols[1].push_back(t.l1 ? Metric(t.l1->abs_error.mean) : std::nullopt);
        cols[2].push_back(t.l1 ? Metric(t.l1->abs_error.median) : std::nullopt);
        cols[3].push_back(t.l1 ? Metric(t.l1->abs_error.sd) : std::nullopt);
        cols[4].push_back(t.parkes);
        Metric ce;
        const auto& bins = t.calibration.at(hi);
        if (std::any_of(bins.begin(), bins.end(), [](const CalibrationBin& b) { return b.observed.has_value(); })) {
          ce = mean_calibration_error(bins);
        }
        cols[5].push_back(ce);
      }
      const TimePointReport& t0 = first.times[ti];
      os << format_number(t0.time_days) << '\t' << format_number(r.options.horizons_years[hi]) << '\t'
         << t0.n_at_risk << '\t' << t0.n_uncensored;
      for (const auto& c : cols) {
        if (multi) {
          const auto s = summarize_models(c);
          if (s) {
            os << '\t' << format_number(s->mean) << '\t' << format_metric(s->ci_low) << '\t'
               << format_metric(s->ci_high);
          } else {
            os << "\tNA\tNA\tNA";
          }
        } else {
          os << '\t' << format_metric(c.front());
        }
      }
      os << '\n';
    }
  }
  return os.str();
}

}  // namespace grudw
