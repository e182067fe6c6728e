#pragma once

#include <array>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "grudw/cohort.hpp"
#include "grudw/weibull.hpp"

namespace grudw {

// Metrics that cannot be computed (empty set, undefined KM, constant input)
// are std::nullopt and serialize as null.
using Metric = std::optional<double>;

struct RiskOutcome {
  double risk = 0.0;
  double remaining = 0.0;  // years
  bool censored = false;
};

/// Harrell's C. Comparable pairs: i uncensored and remaining_i < remaining_j.
/// Tied risks score 0.5; no comparable pairs gives 0.5; an empty set gives nullopt.
Metric c_index(std::span<const RiskOutcome> data);

struct SummaryStats {
  std::size_t n = 0;
  double mean = 0.0;
  double median = 0.0;
  double sd = 0.0;  // population SD
};

SummaryStats summarize(std::span<const double> values);

struct L1Stats {
  SummaryStats abs_error;
  SummaryStats over;   // residuals > 0
  SummaryStats under;  // residuals < 0
  Vec residuals;       // prediction - target, years
};

/// Throws std::invalid_argument on an empty or mismatched set.
L1Stats l1_loss(std::span<const double> predictions, std::span<const double> targets);

/// Fraction with target > 2 * prediction or target < 0.5 * prediction.
double parkes_proportion(std::span<const double> targets, std::span<const double> predictions);

inline constexpr int kHistogramBins = 20;

struct SurvivalAtEvent {
  std::array<std::size_t, kHistogramBins> counts{};
  Vec values;
};

SurvivalAtEvent survival_at_event(std::span<const WeibullParams> params, std::span<const double> remaining);

inline constexpr int kCalibrationBins = 10;

struct CalibrationBin {
  std::size_t n = 0;
  double mean_predicted = 0.0;
  Metric observed;  // Kaplan-Meier survival at the horizon within the bin
};

/// Kaplan-Meier estimate at `horizon`; nullopt once the risk set empties before it.
Metric kaplan_meier(std::span<const double> times, const std::vector<bool>& censored, double horizon);

/// Deciles of ascending predicted survival; bin sizes differ by at most one.
std::vector<CalibrationBin> calibration_bins(std::span<const double> predicted, std::span<const double> remaining,
                                             const std::vector<bool>& censored, double horizon);

double mean_calibration_error(std::span<const CalibrationBin> bins);

struct LinearMap {
  double slope = 1.0;
  double intercept = 0.0;
  bool identity_fallback = false;
  std::string warning;

  double apply(double s) const;
};

/// Least squares of observed on mean predicted over the bins with a defined observation.
LinearMap recalibrate_fit(std::span<const CalibrationBin> bins);

/// Pearson correlation; nullopt below `min_n` pairs or for constant input.
Metric pearson(std::span<const double> x, std::span<const double> y, std::size_t min_n = 30);

inline constexpr double kDefaultLookbackDays = 90.0;

/// Share of (feature, step) cells with mask 0 among features of `category`
/// over grid steps in (t - lookback, t], after unlimited LVCF. nullopt when the
/// category is empty or no step falls in the window.
Metric missing_proportion(const PatientSeries& raw, const std::vector<FeatureInfo>& features,
                          FeatureCategory category, std::size_t step, double lookback_days);

struct MissingnessCorrelation {
  double time_days = 0.0;
  FeatureCategory category = FeatureCategory::dynamic;
  std::size_t n = 0;
  Metric log_ratio;     // |ln(target / PMST)|
  Metric offset_ratio;  // |ln((target + 0.1) / (PMST + 0.1))|
};

struct ErrorSample {
  double target = 0.0;  // remaining years
  double pmst = 0.0;
  double missing = 0.0;
};

MissingnessCorrelation missingness_error_correlation(double time_days, FeatureCategory category,
                                                     std::span<const ErrorSample> samples);

inline constexpr std::array<double, 5> kDefaultHorizons = {1, 2, 3, 4, 5};

struct TrajectoryRecord {
  double time_days = 0.0;
  double kappa = 0.0;
  double lambda = 0.0;
  double pmst = 0.0;
  double q25 = 0.0;
  std::array<double, 5> survival{};  // at 1..5 years
  double hazard_1y = 0.0;
  double cumhaz_1y = 0.0;
  double adjusted_cumhaz_1y = 0.0;  // minus the value at the reference step
};

/// One record per step. The reference is the last step at or before `reference_days`.
std::vector<TrajectoryRecord> trajectory_export(std::span<const WeibullParams> trajectory,
                                                std::span<const double> grid_times, double reference_days);

// ---- full protocol ----

struct EvalOptions {
  Vec times_days;  // evaluation time points
  Vec horizons_years{kDefaultHorizons.begin(), kDefaultHorizons.end()};
  double lookback_days = kDefaultLookbackDays;
};

/// Integer years -3..4, each as y * 365 days.
Vec default_time_points();

/// Index of the last step with grid time <= t, or nullopt.
std::optional<std::size_t> snap_step(std::span<const double> grid_times, double t);

struct TimePointReport {
  double time_days = 0.0;
  std::size_t n_at_risk = 0;
  std::size_t n_uncensored = 0;
  std::vector<Metric> c_index;  // per horizon
  std::optional<L1Stats> l1;
  Metric parkes;
  std::optional<SurvivalAtEvent> survival_at_event;
  std::vector<std::vector<CalibrationBin>> calibration;  // per horizon
  std::vector<MissingnessCorrelation> missingness;       // per category
};

struct ModelReport {
  std::string name;
  std::vector<TimePointReport> times;
};

/// Prediction for cohort patient `patient` at its grid step `step`.
using Predictor = std::function<std::optional<WeibullParams>(std::size_t patient, std::size_t step)>;

ModelReport evaluate(const std::string& name, const Cohort& cohort, std::span<const std::size_t> indices,
                     const Predictor& predict, const EvalOptions& opts);

struct PredictionRow {
  std::string model;
  double time_days = 0.0;
  std::string patient_id;
  double remaining = 0.0;
  bool censored = false;
  double horizon = 0.0;
  double survival = 0.0;
};

/// Horizon survival of every at-risk patient, the input for recalibration.
std::vector<PredictionRow> prediction_rows(const std::string& name, const Cohort& cohort,
                                           std::span<const std::size_t> indices, const Predictor& predict,
                                           const EvalOptions& opts);

struct ScalarSummary {
  double mean = 0.0;
  std::optional<double> ci_low, ci_high;  // present with two or more models
  std::size_t n_models = 0;
};

/// Mean with a normal 95% interval across models; nullopt if no model defines it.
std::optional<ScalarSummary> summarize_models(std::span<const Metric> values);

struct EvalReport {
  EvalOptions options;
  std::vector<ModelReport> models;
};

nlohmann::json to_json(const Metric& m);
nlohmann::json to_json(const EvalReport& r);
EvalReport eval_report_from_json(const nlohmann::json& j);

/// Columnar per-time summary: one row per (time, horizon), with mean/CI columns
/// only when more than one model is present.
std::string eval_report_tsv(const EvalReport& r);

/// Shortest round-trip decimal form, "NA" for nullopt.
std::string format_number(double v);
std::string format_metric(const Metric& m);

}  // namespace grudw
