#include "grudw/cohort.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace grudw {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double logistic(double a) { return 1.0 / (1.0 + std::exp(-a)); }

std::mt19937_64 patient_stream(std::uint64_t seed, std::size_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

struct RawPatient {
  Vec severity;
  Vec lambda_star;
  std::optional<double> event_time;
  double censor_u = 0.0;
  std::vector<TimestepObservation> full;  // every grid step, delta left empty
};

// Cumulative-hazard inversion over the piecewise-constant severity path. Hazard
// starts at the index date (day 0).
std::optional<double> draw_event_time(const Vec& grid, const Vec& lambda_star, double kappa, double end_days,
                                      double exp_draw) {
  double acc = 0.0;
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const double lo = std::max(0.0, grid[k]);
    const double hi = std::max(0.0, k + 1 < grid.size() ? grid[k + 1] : end_days);
    if (hi <= lo) continue;
    const double u1 = lo / kDaysPerYear;
    const double u2 = hi / kDaysPerYear;
    const double scale = std::pow(lambda_star[k], kappa);
    const double d_hazard = (std::pow(u2, kappa) - std::pow(u1, kappa)) / scale;
    if (acc + d_hazard >= exp_draw) {
      const double u = std::pow(std::pow(u1, kappa) + (exp_draw - acc) * scale, 1.0 / kappa);
      return std::min(u * kDaysPerYear, hi);
    }
    acc += d_hazard;
  }
  return std::nullopt;
}

void check_format(const nlohmann::json& header, const char* format) {
  if (header.value("format", "") != format) throw std::runtime_error(std::string("expected a ") + format + " file");
  if (header.value("version", 0) != 1) throw std::runtime_error(std::string("unsupported ") + format + " version");
}

}  // namespace

const char* to_string(FeatureKind k) {
  switch (k) {
    case FeatureKind::numeric: return "numeric";
    case FeatureKind::binary: return "binary";
    case FeatureKind::age: return "age";
  }
  return "?";
}

const char* to_string(FeatureCategory c) {
  switch (c) {
    case FeatureCategory::dynamic: return "dynamic";
    case FeatureCategory::comorbidity: return "comorbidity";
    case FeatureCategory::medication: return "medication";
    case FeatureCategory::other: return "other";
  }
  return "?";
}

FeatureKind feature_kind_from_string(const std::string& s) {
  if (s == "numeric") return FeatureKind::numeric;
  if (s == "binary") return FeatureKind::binary;
  if (s == "age") return FeatureKind::age;
  throw std::runtime_error("unknown feature kind: " + s);
}

FeatureCategory feature_category_from_string(const std::string& s) {
  if (s == "dynamic") return FeatureCategory::dynamic;
  if (s == "comorbidity") return FeatureCategory::comorbidity;
  if (s == "medication") return FeatureCategory::medication;
  if (s == "other") return FeatureCategory::other;
  throw std::runtime_error("unknown feature category: " + s);
}

Vec build_grid(const SamplingGrid& g) {
  if (!(g.dense_step_days > 0.0) || !(g.sparse_step_days > 0.0)) {
    throw std::invalid_argument("grid steps must be positive");
  }
  if (!(g.end_days > g.start_days) || g.dense_half_window_days < 0.0) {
    throw std::invalid_argument("grid window is inconsistent");
  }
  Vec out;
  for (double t = g.start_days; t <= g.end_days;) {
    out.push_back(t);
    t += std::abs(t) < g.dense_half_window_days ? g.dense_step_days : g.sparse_step_days;
  }
  return out;
}

void CohortSpec::validate() const {
  if (n_patients <= 0) throw std::invalid_argument("n_patients must be positive");
  if (n_numeric < 0 || n_binary < 0) throw std::invalid_argument("feature counts must be nonnegative");
  if (!(censoring_rate >= 0.0 && censoring_rate <= 1.0)) throw std::invalid_argument("censoring_rate must lie in [0,1]");
  for (double r : missing_rates) {
    if (!(r >= 0.0 && r <= 1.0)) throw std::invalid_argument("missing rates must lie in [0,1]");
  }
  if (!missing_rates.empty() && missing_rates.size() != static_cast<std::size_t>(n_numeric)) {
    throw std::invalid_argument("missing_rates needs one entry per numeric feature");
  }
  if (link.size() != 2) throw std::invalid_argument("link needs exactly two coefficients");
  if (!(kappa_star > 0.0)) throw std::invalid_argument("kappa_star must be positive");
  if (!(record_start_mean_days >= 0.0)) throw std::invalid_argument("record_start_mean_days must be nonnegative");
  if (!(drift_sd >= 0.0) || !(index_severity_sd >= 0.0) || !(severity_volatility >= 0.0)) {
    throw std::invalid_argument("severity spreads must be nonnegative");
  }
}

nlohmann::json to_json(const CohortSpec& s) {
  return {{"n_patients", s.n_patients},
          {"n_numeric", s.n_numeric},
          {"n_binary", s.n_binary},
          {"missing_rates", s.missing_rates},
          {"censoring_rate", s.censoring_rate},
          {"link", s.link},
          {"kappa_star", s.kappa_star},
          {"mar_strength", s.mar_strength},
          {"severity_drift", s.severity_drift},
          {"drift_sd", s.drift_sd},
          {"index_severity_sd", s.index_severity_sd},
          {"severity_volatility", s.severity_volatility},
          {"measurement_noise", s.measurement_noise},
          {"post_index_observation_boost", s.post_index_observation_boost},
          {"record_start_mean_days", s.record_start_mean_days},
          {"binary_rate", s.binary_rate},
          {"binary_severity_effect", s.binary_severity_effect},
          {"comorbidity_window_days", s.comorbidity_window_days},
          {"medication_window_days", s.medication_window_days},
          {"grid",
           {{"dense_step_days", s.grid.dense_step_days},
            {"sparse_step_days", s.grid.sparse_step_days},
            {"dense_half_window_days", s.grid.dense_half_window_days},
            {"start_days", s.grid.start_days},
            {"end_days", s.grid.end_days}}},
          {"seed", s.seed}};
}

CohortSpec cohort_spec_from_json(const nlohmann::json& j) {
  CohortSpec s;
  static const char* known[] = {"n_patients", "n_numeric", "n_binary", "missing_rates", "censoring_rate",
                                "link", "kappa_star", "mar_strength", "severity_drift", "drift_sd", "index_severity_sd", "severity_volatility",
                                "measurement_noise", "post_index_observation_boost", "record_start_mean_days", "binary_rate", "binary_severity_effect",
                                "comorbidity_window_days", "medication_window_days", "grid", "seed"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find_if(std::begin(known), std::end(known), [&](const char* k) { return it.key() == k; }) ==
        std::end(known)) {
      throw std::invalid_argument("unknown cohort spec field: " + it.key());
    }
  }
  s.n_patients = j.value("n_patients", s.n_patients);
  s.n_numeric = j.value("n_numeric", s.n_numeric);
  s.n_binary = j.value("n_binary", s.n_binary);
  s.missing_rates = j.value("missing_rates", s.missing_rates);
  s.censoring_rate = j.value("censoring_rate", s.censoring_rate);
  s.link = j.value("link", s.link);
  s.kappa_star = j.value("kappa_star", s.kappa_star);
  s.mar_strength = j.value("mar_strength", s.mar_strength);
  s.severity_drift = j.value("severity_drift", s.severity_drift);
  s.drift_sd = j.value("drift_sd", s.drift_sd);
  s.index_severity_sd = j.value("index_severity_sd", s.index_severity_sd);
  s.severity_volatility = j.value("severity_volatility", s.severity_volatility);
  s.measurement_noise = j.value("measurement_noise", s.measurement_noise);
  s.post_index_observation_boost = j.value("post_index_observation_boost", s.post_index_observation_boost);
  s.record_start_mean_days = j.value("record_start_mean_days", s.record_start_mean_days);
  s.binary_rate = j.value("binary_rate", s.binary_rate);
  s.binary_severity_effect = j.value("binary_severity_effect", s.binary_severity_effect);
  s.comorbidity_window_days = j.value("comorbidity_window_days", s.comorbidity_window_days);
  s.medication_window_days = j.value("medication_window_days", s.medication_window_days);
  if (j.contains("grid")) {
    const auto& g = j["grid"];
    s.grid.dense_step_days = g.value("dense_step_days", s.grid.dense_step_days);
    s.grid.sparse_step_days = g.value("sparse_step_days", s.grid.sparse_step_days);
    s.grid.dense_half_window_days = g.value("dense_half_window_days", s.grid.dense_half_window_days);
    s.grid.start_days = g.value("start_days", s.grid.start_days);
    s.grid.end_days = g.value("end_days", s.grid.end_days);
  }
  s.seed = j.value("seed", s.seed);
  s.validate();
  return s;
}

std::size_t Cohort::index_of(const std::string& patient_id) const {
  for (std::size_t i = 0; i < patients.size(); ++i) {
    if (patients[i].patient_id == patient_id) return i;
  }
  throw std::out_of_range("unknown patient id: " + patient_id);
}

WeibullParams CohortTruth::oracle_params(std::size_t patient, std::size_t step) const {
  return {kappa_star, patients.at(patient).lambda_star.at(step)};
}

GeneratedCohort generate(const CohortSpec& spec) {
  spec.validate();
  const Vec grid = build_grid(spec.grid);
  const std::size_t steps = grid.size();
  const std::size_t n_num = static_cast<std::size_t>(spec.n_numeric);
  const std::size_t n_bin = static_cast<std::size_t>(spec.n_binary);
  const std::size_t n_comorb = (n_bin + 1) / 2;

  GeneratedCohort out;
  auto& features = out.cohort.features;
  for (std::size_t d = 0; d < n_num; ++d) {
    features.push_back({"lab_" + std::to_string(d), FeatureKind::numeric, FeatureCategory::dynamic, 0.0});
  }
  for (std::size_t b = 0; b < n_bin; ++b) {
    const bool comorb = b < n_comorb;
    features.push_back({(comorb ? "ccs_" : "med_") + std::to_string(b), FeatureKind::binary,
                        comorb ? FeatureCategory::comorbidity : FeatureCategory::medication,
                        comorb ? spec.comorbidity_window_days : spec.medication_window_days});
  }
  features.push_back({"age", FeatureKind::age, FeatureCategory::other, 0.0});
  const std::size_t f = features.size();

  Vec missing = spec.missing_rates;
  if (missing.empty()) {
    for (std::size_t d = 0; d < n_num; ++d) {
      missing.push_back(n_num == 1 ? 0.30 : 0.30 + 0.65 * static_cast<double>(d) / static_cast<double>(n_num - 1));
    }
  }

  std::size_t index_step = 0;
  while (index_step + 1 < steps && grid[index_step + 1] <= 0.0) ++index_step;

  const std::size_t n = static_cast<std::size_t>(spec.n_patients);
  std::vector<RawPatient> raw(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto rng = patient_stream(spec.seed, i);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::exponential_distribution<double> expo(1.0);
    RawPatient& rp = raw[i];

    // Walk anchored at the index step, where every patient sits near the same
    // severity; a per-patient slope drives the divergence on both sides.
    rp.severity.resize(steps);
    rp.severity[index_step] = spec.index_severity_sd * normal(rng);
    const double slope = spec.severity_drift + spec.drift_sd * normal(rng);
    for (std::size_t k = index_step + 1; k < steps; ++k) {
      const double dt = (grid[k] - grid[k - 1]) / kDaysPerYear;
      rp.severity[k] = rp.severity[k - 1] + slope * dt + spec.severity_volatility * std::sqrt(dt) * normal(rng);
    }
    for (std::size_t k = index_step; k-- > 0;) {
      const double dt = (grid[k + 1] - grid[k]) / kDaysPerYear;
      rp.severity[k] = rp.severity[k + 1] - slope * dt + spec.severity_volatility * std::sqrt(dt) * normal(rng);
    }
    rp.lambda_star.resize(steps);
    for (std::size_t k = 0; k < steps; ++k) {
      rp.lambda_star[k] = std::exp(spec.link[0] - spec.link[1] * rp.severity[k]);
    }
    rp.event_time = draw_event_time(grid, rp.lambda_star, spec.kappa_star, spec.grid.end_days, expo(rng));
    rp.censor_u = unif(rng);
    const double age0 = std::clamp(75.0 + 10.0 * normal(rng), 40.0, 100.0);
    const double record_start =
        spec.record_start_mean_days > 0.0
            ? -std::exponential_distribution<double>(1.0 / spec.record_start_mean_days)(rng)
            : -kInf;

    std::vector<double> active_until(n_bin, -kInf);
    rp.full.resize(steps);
    for (std::size_t k = 0; k < steps; ++k) {
      TimestepObservation& o = rp.full[k];
      o.x.assign(f, 0.0);
      o.m.assign(f, 0.0);
      const double sev = rp.severity[k];
      for (std::size_t d = 0; d < n_num; ++d) {
        const double base = 10.0 * static_cast<double>(d + 1);
        const double scale = 1.0 + 0.5 * static_cast<double>(d);
        const double load = d % 2 == 0 ? 1.0 : -1.0;
        const double value = base + scale * (load * sev + spec.measurement_noise * normal(rng));
        const double miss = std::clamp(missing[d], 1e-9, 1.0 - 1e-9);
        const double p_obs = missing[d] >= 1.0 ? 0.0
                             : missing[d] <= 0.0 ? 1.0
                                                 : logistic(std::log((1.0 - miss) / miss) + spec.mar_strength * sev +
                                                            (grid[k] >= 0.0 ? spec.post_index_observation_boost : 0.0));
        if (unif(rng) < p_obs) {
          o.x[d] = value;
          o.m[d] = 1.0;
        }
      }
      const double dt = k == 0 ? (grid.size() > 1 ? grid[1] - grid[0] : 30.0) / kDaysPerYear
                               : (grid[k] - grid[k - 1]) / kDaysPerYear;
      for (std::size_t b = 0; b < n_bin; ++b) {
        const double rate = spec.binary_rate * std::exp(spec.binary_severity_effect * sev);
        if (unif(rng) < 1.0 - std::exp(-rate * dt)) {
          active_until[b] = grid[k] + features[n_num + b].effect_window_days;
        }
        if (grid[k] < active_until[b]) {
          o.x[n_num + b] = 1.0;
          o.m[n_num + b] = 1.0;
        }
      }
      o.x[f - 1] = (age0 + grid[k] / kDaysPerYear) / 100.0;
      o.m[f - 1] = 1.0;
      if (grid[k] < record_start) {
        // nothing recorded yet; age stays known
        for (std::size_t d = 0; d + 1 < f; ++d) {
          o.x[d] = 0.0;
          o.m[d] = 0.0;
        }
      }
    }
  }

  const double end = spec.grid.end_days;
  auto censored_fraction = [&](double cmax) {
    std::size_t c = 0;
    for (const auto& rp : raw) {
      const double ct = std::min(rp.censor_u * cmax, end);
      if (!rp.event_time || *rp.event_time > ct) ++c;
    }
    return static_cast<double>(c) / static_cast<double>(n);
  };

  // The censored fraction decreases in cmax; bisect in log space.
  double cmax = kInf;
  const double admin_only = censored_fraction(kInf);
  const bool all_censored = spec.censoring_rate >= 1.0;
  if (all_censored) {
    // per-patient cut below
  } else if (spec.censoring_rate <= admin_only) {
    if (admin_only - spec.censoring_rate > 0.02) {
      out.warnings.push_back("censoring rate " + std::to_string(spec.censoring_rate) +
                             " unreachable; administrative censoring alone gives " + std::to_string(admin_only));
    }
  } else {
    double lo = std::log(1e-3);
    double hi = std::log(1e7);
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (censored_fraction(std::exp(mid)) > spec.censoring_rate) lo = mid; else hi = mid;
    }
    cmax = std::exp(hi);
  }

  out.truth.kappa_star = spec.kappa_star;
  out.truth.link = spec.link;
  out.truth.grid = grid;
  std::size_t n_censored = 0;
  const int width = static_cast<int>(std::to_string(n).size());
  for (std::size_t i = 0; i < n; ++i) {
    RawPatient& rp = raw[i];
    std::string id = std::to_string(i);
    id = "P" + std::string(static_cast<std::size_t>(std::max(0, width - static_cast<int>(id.size()))), '0') + id;

    // all-censored cohorts cut each patient at a random fraction of their own event time
    const double censor_time = all_censored ? (rp.event_time ? rp.censor_u * *rp.event_time : end)
                               : std::isinf(cmax) ? kInf : rp.censor_u * cmax;
    const double ct = std::min(censor_time, end);
    // A random censor time can land inside the first grid interval; the terminal
    // time stays strictly positive because censor_u > 0 almost surely.
    PatientSeries s;
    s.patient_id = id;
    s.outcome.censored = !rp.event_time || *rp.event_time > ct;
    s.outcome.terminal_time = s.outcome.censored ? ct : *rp.event_time;
    if (!(s.outcome.terminal_time > 0.0)) s.outcome.terminal_time = 1e-3;
    if (s.outcome.censored) ++n_censored;
    for (std::size_t k = 0; k < steps && grid[k] < s.outcome.terminal_time; ++k) {
      s.grid_times.push_back(grid[k]);
      s.observations.push_back(std::move(rp.full[k]));
    }
    recompute_deltas(s);
    out.cohort.patients.push_back(std::move(s));

    out.truth.patients.push_back({id, std::move(rp.severity), std::move(rp.lambda_star), rp.event_time, censor_time});
  }
  out.achieved_censoring_rate = static_cast<double>(n_censored) / static_cast<double>(n);
  if (std::abs(out.achieved_censoring_rate - spec.censoring_rate) > 0.02 && out.warnings.empty()) {
    out.warnings.push_back("achieved censoring rate " + std::to_string(out.achieved_censoring_rate));
  }
  return out;
}

PatientSeries lvcf(const PatientSeries& series, std::optional<double> max_carry_days, std::span<const double> means) {
  PatientSeries out = series;
  const std::size_t f = series.features();
  require_size(means.size(), f, "lvcf means");
  Vec last_value(f, 0.0);
  Vec last_time(f, -kInf);
  const double carry = max_carry_days.value_or(kInf);
  for (std::size_t t = 0; t < out.steps(); ++t) {
    auto& o = out.observations[t];
    const double now = out.grid_times[t];
    for (std::size_t d = 0; d < f; ++d) {
      if (o.m[d] != 0.0) {
        last_value[d] = o.x[d];
        last_time[d] = now;
      } else if (std::isfinite(last_time[d]) && now - last_time[d] <= carry) {
        o.x[d] = last_value[d];
        o.m[d] = 1.0;
      } else {
        o.x[d] = means[d];
      }
    }
  }
  recompute_deltas(out);
  return out;
}

std::size_t FeatureScaler::kept_features() const {
  return static_cast<std::size_t>(std::count(excluded.begin(), excluded.end(), false));
}

double FeatureScaler::transform(std::size_t d, double raw) const {
  return scaled[d] ? (raw - mean[d]) / sd[d] : raw;
}

double FeatureScaler::inverse(std::size_t d, double z) const { return scaled[d] ? z * sd[d] + mean[d] : z; }

FeatureScaler zscore_fit(const Cohort& cohort, std::span<const std::size_t> train_indices,
                         std::vector<std::string>* warnings) {
  if (train_indices.empty()) throw std::invalid_argument("zscore_fit needs a nonempty training split");
  const std::size_t f = cohort.features.size();
  FeatureScaler s;
  s.mean.assign(f, 0.0);
  s.sd.assign(f, 1.0);
  s.scaled.assign(f, false);
  s.excluded.assign(f, false);
  for (std::size_t d = 0; d < f; ++d) {
    if (cohort.features[d].kind != FeatureKind::numeric) continue;
    double sum = 0.0;
    double sum_sq = 0.0;
    std::size_t count = 0;
    for (std::size_t i : train_indices) {
      for (const auto& o : cohort.patients.at(i).observations) {
        if (o.m[d] == 0.0) continue;
        sum += o.x[d];
        ++count;
      }
    }
    if (count == 0) {
      s.excluded[d] = true;
      if (warnings) warnings->push_back("feature " + cohort.features[d].name + " never observed in training; excluded");
      continue;
    }
    const double mu = sum / static_cast<double>(count);
    for (std::size_t i : train_indices) {
      for (const auto& o : cohort.patients.at(i).observations) {
        if (o.m[d] != 0.0) sum_sq += (o.x[d] - mu) * (o.x[d] - mu);
      }
    }
    s.mean[d] = mu;
    s.sd[d] = std::max(std::sqrt(sum_sq / static_cast<double>(count)), kSdFloor);
    s.scaled[d] = true;
  }
  return s;
}

PatientSeries zscore_apply(const FeatureScaler& scaler, const PatientSeries& series) {
  const std::size_t f = scaler.mean.size();
  PatientSeries out;
  out.patient_id = series.patient_id;
  out.grid_times = series.grid_times;
  out.outcome = series.outcome;
  out.observations.reserve(series.steps());
  for (const auto& o : series.observations) {
    require_size(o.x.size(), f, "scaler feature count");
    TimestepObservation t;
    for (std::size_t d = 0; d < f; ++d) {
      if (scaler.excluded[d]) continue;
      t.x.push_back(o.m[d] != 0.0 ? scaler.transform(d, o.x[d]) : 0.0);
      t.m.push_back(o.m[d]);
      t.delta.push_back(o.delta.empty() ? 0.0 : o.delta[d]);
    }
    out.observations.push_back(std::move(t));
  }
  return out;
}

std::vector<FeatureInfo> kept_features(const FeatureScaler& scaler, const std::vector<FeatureInfo>& features) {
  std::vector<FeatureInfo> out;
  for (std::size_t d = 0; d < features.size(); ++d) {
    if (!scaler.excluded.at(d)) out.push_back(features[d]);
  }
  return out;
}

ScaledSplits zscore_fit_apply(const Cohort& cohort, std::span<const std::size_t> train_indices,
                              std::span<const std::size_t> other_indices, std::vector<std::string>* warnings) {
  ScaledSplits out;
  out.scaler = zscore_fit(cohort, train_indices, warnings);
  for (std::size_t i : train_indices) out.train.push_back(zscore_apply(out.scaler, cohort.patients.at(i)));
  for (std::size_t i : other_indices) out.other.push_back(zscore_apply(out.scaler, cohort.patients.at(i)));
  return out;
}

nlohmann::json to_json(const FeatureScaler& s) {
  return {{"mean", s.mean}, {"sd", s.sd}, {"scaled", s.scaled}, {"excluded", s.excluded}};
}

FeatureScaler feature_scaler_from_json(const nlohmann::json& j) {
  FeatureScaler s;
  s.mean = j.at("mean").get<Vec>();
  s.sd = j.at("sd").get<Vec>();
  s.scaled = j.at("scaled").get<std::vector<bool>>();
  s.excluded = j.at("excluded").get<std::vector<bool>>();
  const std::size_t f = s.mean.size();
  if (s.sd.size() != f || s.scaled.size() != f || s.excluded.size() != f) {
    throw DimensionError("feature scaler arrays disagree in length");
  }
  return s;
}

Vec empirical_means(std::span<const PatientSeries> train, const std::vector<FeatureInfo>& features) {
  const std::size_t f = features.size();
  Vec sum(f, 0.0);
  std::vector<double> count(f, 0.0);
  for (const auto& s : train) {
    for (const auto& o : s.observations) {
      require_size(o.x.size(), f, "empirical_means features");
      for (std::size_t d = 0; d < f; ++d) {
        if (features[d].kind == FeatureKind::binary) {
          sum[d] += o.m[d] != 0.0 ? o.x[d] : 0.0;
          count[d] += 1.0;
        } else if (o.m[d] != 0.0) {
          sum[d] += o.x[d];
          count[d] += 1.0;
        }
      }
    }
  }
  Vec out(f, 0.0);
  for (std::size_t d = 0; d < f; ++d) out[d] = count[d] > 0.0 ? sum[d] / count[d] : 0.0;
  return out;
}

void write_cohort(std::ostream& os, const Cohort& cohort) {
  nlohmann::json header = {{"format", "grudw-cohort"}, {"version", 1}, {"n_patients", cohort.patients.size()}};
  nlohmann::json feats = nlohmann::json::array();
  for (const auto& fi : cohort.features) {
    feats.push_back({{"name", fi.name},
                     {"kind", to_string(fi.kind)},
                     {"category", to_string(fi.category)},
                     {"effect_window_days", fi.effect_window_days}});
  }
  header["features"] = feats;
  os << header.dump() << '\n';
  const std::size_t f = cohort.features.size();
  for (const auto& s : cohort.patients) {
    nlohmann::json rec = {{"id", s.patient_id},
                          {"terminal_time", s.outcome.terminal_time},
                          {"censored", s.outcome.censored},
                          {"grid", s.grid_times}};
    nlohmann::json values = nlohmann::json::array();
    nlohmann::json masks = nlohmann::json::array();
    for (std::size_t d = 0; d < f; ++d) {
      Vec v(s.steps());
      std::vector<int> m(s.steps());
      for (std::size_t t = 0; t < s.steps(); ++t) {
        m[t] = s.observations[t].m[d] != 0.0 ? 1 : 0;
        v[t] = m[t] ? s.observations[t].x[d] : 0.0;
      }
      values.push_back(v);
      masks.push_back(m);
    }
    rec["values"] = values;
    rec["masks"] = masks;
    os << rec.dump() << '\n';
  }
}

Cohort read_cohort(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("empty cohort file");
  const auto header = nlohmann::json::parse(line);
  check_format(header, "grudw-cohort");
  Cohort c;
  for (const auto& fj : header.at("features")) {
    c.features.push_back({fj.at("name").get<std::string>(), feature_kind_from_string(fj.at("kind")),
                          feature_category_from_string(fj.at("category")),
                          fj.value("effect_window_days", 0.0)});
  }
  const std::size_t f = c.features.size();
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto rec = nlohmann::json::parse(line);
    PatientSeries s;
    s.patient_id = rec.at("id").get<std::string>();
    s.outcome.terminal_time = rec.at("terminal_time").get<double>();
    s.outcome.censored = rec.at("censored").get<bool>();
    s.grid_times = rec.at("grid").get<Vec>();
    const auto& values = rec.at("values");
    const auto& masks = rec.at("masks");
    if (values.size() != f || masks.size() != f) throw DimensionError("feature count mismatch in " + s.patient_id);
    const std::size_t steps = s.grid_times.size();
    s.observations.assign(steps, TimestepObservation{Vec(f, 0.0), Vec(f, 0.0), Vec(f, 0.0)});
    for (std::size_t d = 0; d < f; ++d) {
      const auto v = values[d].get<Vec>();
      const auto m = masks[d].get<std::vector<int>>();
      if (v.size() != steps || m.size() != steps) throw DimensionError("step count mismatch in " + s.patient_id);
      for (std::size_t t = 0; t < steps; ++t) {
        s.observations[t].x[d] = v[t];
        s.observations[t].m[d] = m[t] ? 1.0 : 0.0;
      }
    }
    recompute_deltas(s);
    s.validate();
    c.patients.push_back(std::move(s));
  }
  if (header.contains("n_patients") && header["n_patients"].get<std::size_t>() != c.patients.size()) {
    throw std::runtime_error("cohort file truncated: header promises " + header["n_patients"].dump() + " patients");
  }
  return c;
}

void write_truth(std::ostream& os, const CohortTruth& truth) {
  nlohmann::json header = {{"format", "grudw-cohort-truth"}, {"version", 1}, {"kappa_star", truth.kappa_star},
                           {"link", truth.link}, {"grid", truth.grid}};
  os << header.dump() << '\n';
  for (const auto& p : truth.patients) {
    nlohmann::json rec = {{"id", p.patient_id}, {"severity", p.severity}, {"lambda_star", p.lambda_star}};
    rec["event_time"] = p.event_time ? nlohmann::json(*p.event_time) : nlohmann::json(nullptr);
    rec["censor_time"] = std::isinf(p.censor_time) ? nlohmann::json(nullptr) : nlohmann::json(p.censor_time);
    os << rec.dump() << '\n';
  }
}

CohortTruth read_truth(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("empty truth file");
  const auto header = nlohmann::json::parse(line);
  check_format(header, "grudw-cohort-truth");
  CohortTruth t;
  t.kappa_star = header.at("kappa_star").get<double>();
  t.link = header.at("link").get<Vec>();
  t.grid = header.at("grid").get<Vec>();
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto rec = nlohmann::json::parse(line);
    PatientTruth p;
    p.patient_id = rec.at("id").get<std::string>();
    p.severity = rec.at("severity").get<Vec>();
    p.lambda_star = rec.at("lambda_star").get<Vec>();
    if (!rec.at("event_time").is_null()) p.event_time = rec["event_time"].get<double>();
    p.censor_time = rec.at("censor_time").is_null() ? kInf : rec["censor_time"].get<double>();
    t.patients.push_back(std::move(p));
  }
  return t;
}

}  // namespace grudw
