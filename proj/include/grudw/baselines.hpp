#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "grudw/cohort.hpp"
#include "grudw/trainer.hpp"
#include "grudw/weibull.hpp"

namespace grudw {

// Weibull accelerated failure time regression: ln(lambda) = b0 + b . x, one shared shape.
struct AftModel {
  Vec coefficients;                   // intercept first, then one per kept column
  double kappa = 1.0;
  std::vector<std::size_t> columns;  // input columns used, in coefficient order
  std::size_t n_inputs = 0;
  bool fitted = true;  // false when a time point had too few at-risk patients

  WeibullParams predict(std::span<const double> x) const;
};

struct AftFitConfig {
  double learning_rate = 0.01;
  int max_iterations = 5000;
  double tolerance = 1e-6;  // on the gradient norm of the mean log-likelihood
  double clip_norm = 3.0;
};

struct AftFitResult {
  AftModel model;
  double log_likelihood = 0.0;  // mean over patients
  Vec trace;                    // mean log-likelihood after each accepted iteration
  int iterations = 0;
  bool converged = false;
  std::vector<std::string> dropped;  // reasons for pre-dropped columns
  std::vector<std::string> warnings;
};

/// Rows of `x` are patients. `times` are years to the terminal event or censoring.
AftFitResult aft_fit(const std::vector<Vec>& x, std::span<const double> times, const std::vector<bool>& censored,
                     const AftFitConfig& cfg = {});

/// Mean censored Weibull log-likelihood and its gradient in (coefficients, ln kappa).
/// Design rows hold the features only; the intercept is theta[0].
double aft_log_likelihood(const std::vector<Vec>& design, std::span<const double> times,
                          const std::vector<bool>& censored, std::span<const double> theta, Vec* grad = nullptr);

inline constexpr double kAftCarryDays = 365.0;

/// Feature vector at `step` after LVCF limited to one year, remaining gaps mean-filled.
Vec aft_snapshot(const PatientSeries& series, std::size_t step, std::span<const double> means);

/// One AFT fit per evaluation time point, each on its own at-risk training snapshot.
struct AftCheckpoint {
  FeatureScaler scaler;
  std::vector<FeatureInfo> features;
  Vec means;
  Vec times_days;
  std::vector<AftModel> models;  // parallel to times_days
  int fold = 0;
  double max_missing_fraction = 0.995;
};

AftCheckpoint train_aft(const Cohort& cohort, const FoldPlan& plan, int fold, const Vec& times_days,
                        const AftFitConfig& cfg = {}, double max_missing_fraction = 0.995,
                        std::vector<std::string>* warnings = nullptr);

/// Prediction for a raw cohort series at `step`, using the fit for the time point the step snaps to.
std::optional<WeibullParams> aft_predict(const AftCheckpoint& ckpt, const PatientSeries& raw, std::size_t step);

nlohmann::json to_json(const AftModel& m);
AftModel aft_model_from_json(const nlohmann::json& j);
nlohmann::json to_json(const AftCheckpoint& c);
AftCheckpoint aft_checkpoint_from_json(const nlohmann::json& j);

/// The LVCF ablation: decay off, mask pathway off, 80 hidden units, inputs pre-filled by LVCF.
TrainConfig gru_lvcf_variant(TrainConfig base);

}  // namespace grudw
