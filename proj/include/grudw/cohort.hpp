#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "grudw/sequence_model.hpp"

namespace grudw {

enum class FeatureKind { numeric, binary, age };
enum class FeatureCategory { dynamic, comorbidity, medication, other };

const char* to_string(FeatureKind k);
const char* to_string(FeatureCategory c);
FeatureKind feature_kind_from_string(const std::string& s);
FeatureCategory feature_category_from_string(const std::string& s);

struct FeatureInfo {
  std::string name;
  FeatureKind kind = FeatureKind::numeric;
  FeatureCategory category = FeatureCategory::dynamic;
  double effect_window_days = 0.0;  // binary features only
};

/// Step every `dense_step_days` while |t| < dense_half_window_days, otherwise every
/// `sparse_step_days`, walking forward from start_days up to end_days.
struct SamplingGrid {
  double dense_step_days = 15.0;
  double sparse_step_days = 30.0;
  double dense_half_window_days = 182.0;
  double start_days = -1095.0;
  double end_days = 1826.0;
};

Vec build_grid(const SamplingGrid& grid);

struct CohortSpec {
  int n_patients = 2000;
  int n_numeric = 6;
  int n_binary = 4;  // first half comorbidity-like, second half medication-like
  Vec missing_rates;  // per numeric feature; empty spreads 0.30..0.95
  double censoring_rate = 0.49;
  Vec link = {2.0, 1.0};  // ln lambda* = link[0] - link[1] * severity, lambda* in years
  double kappa_star = 1.5;
  double mar_strength = 1.0;     // log-odds of observation per unit severity; 0 disables MAR
  double severity_drift = 0.25;  // mean per-patient slope, per year
  double drift_sd = 0.0;         // spread of per-patient slopes, per year
  double index_severity_sd = 1.0;  // spread of severity at the index date
  double severity_volatility = 1.5;  // per sqrt(year)
  double measurement_noise = 0.3;
  double post_index_observation_boost = 0.0;  // log-odds added to observation from the index date on
  double record_start_mean_days = 0.0;  // first record ~ Exp(mean) days before index; 0 = from grid start
  double binary_rate = 1.0;  // records per year at zero severity
  double binary_severity_effect = 0.8;
  double comorbidity_window_days = 100.0;
  double medication_window_days = 30.0;
  SamplingGrid grid;
  std::uint64_t seed = 2023;

  void validate() const;
};

nlohmann::json to_json(const CohortSpec& spec);
CohortSpec cohort_spec_from_json(const nlohmann::json& j);

struct Cohort {
  std::vector<FeatureInfo> features;
  std::vector<PatientSeries> patients;

  std::size_t index_of(const std::string& patient_id) const;
};

struct PatientTruth {
  std::string patient_id;
  Vec severity;     // on the full grid
  Vec lambda_star;  // on the full grid
  std::optional<double> event_time;  // days; empty when beyond the horizon
  double censor_time = 0.0;          // days; infinite when no random censoring applies
};

struct CohortTruth {
  double kappa_star = 1.0;
  Vec link;
  Vec grid;
  std::vector<PatientTruth> patients;

  /// Generator's own prediction at grid step `step`: Weibull(kappa*, lambda*(severity)).
  WeibullParams oracle_params(std::size_t patient, std::size_t step) const;
};

struct GeneratedCohort {
  Cohort cohort;
  CohortTruth truth;
  double achieved_censoring_rate = 0.0;
  std::vector<std::string> warnings;
};

GeneratedCohort generate(const CohortSpec& spec);

/// Last value carried forward for at most `max_carry_days` (unlimited when empty).
/// Filled entries get mask 1; gaps beyond the carry window take `means` with mask 0.
PatientSeries lvcf(const PatientSeries& series, std::optional<double> max_carry_days,
                   std::span<const double> means);

/// Z-score statistics fitted on a training split. Numeric features only; other kinds pass through.
struct FeatureScaler {
  Vec mean;
  Vec sd;
  std::vector<bool> scaled;
  std::vector<bool> excluded;  // numeric features never observed in training

  std::size_t kept_features() const;
  double transform(std::size_t feature, double raw) const;
  double inverse(std::size_t feature, double z) const;
};

inline constexpr double kSdFloor = 1e-8;

FeatureScaler zscore_fit(const Cohort& cohort, std::span<const std::size_t> train_indices,
                         std::vector<std::string>* warnings = nullptr);
/// Applies the scaler and drops excluded features.
PatientSeries zscore_apply(const FeatureScaler& scaler, const PatientSeries& series);
std::vector<FeatureInfo> kept_features(const FeatureScaler& scaler, const std::vector<FeatureInfo>& features);

struct ScaledSplits {
  FeatureScaler scaler;
  std::vector<PatientSeries> train;
  std::vector<PatientSeries> other;
};
ScaledSplits zscore_fit_apply(const Cohort& cohort, std::span<const std::size_t> train_indices,
                              std::span<const std::size_t> other_indices,
                              std::vector<std::string>* warnings = nullptr);

nlohmann::json to_json(const FeatureScaler& s);
FeatureScaler feature_scaler_from_json(const nlohmann::json& j);

/// Empirical means for imputation: observed-value mean for numeric/age features,
/// prevalence over every cell for binary ones.
Vec empirical_means(std::span<const PatientSeries> train, const std::vector<FeatureInfo>& features);

// Line-delimited cohort format: a header record followed by one record per patient.
void write_cohort(std::ostream& os, const Cohort& cohort);
Cohort read_cohort(std::istream& is);
void write_truth(std::ostream& os, const CohortTruth& truth);
CohortTruth read_truth(std::istream& is);

}  // namespace grudw
