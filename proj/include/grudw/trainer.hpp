#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "grudw/cohort.hpp"
#include "grudw/optimizer.hpp"
#include "grudw/sequence_model.hpp"

namespace grudw {

enum class Variant { grud, lvcf };
const char* to_string(Variant v);
Variant variant_from_string(const std::string& s);

struct TrainConfig {
  int hidden_units = 40;
  double learning_rate = 0.001;
  int epochs = 50;
  int batch_size = 500;
  double dropout = 0.0;
  double clip_norm = 3.0;
  std::optional<double> clip_value;
  double overfit_gap = 0.04;
  int patience = 2;
  std::uint64_t seed = 0;
  bool amsgrad = true;
  Variant variant = Variant::grud;
  bool hidden_decay = true;
  bool mask_pathway = true;
  int threads = 1;

  void validate() const;
  CellConfig cell_config() const;
};

nlohmann::json to_json(const TrainConfig& c);
/// Fields absent from `j` keep the values already in `base`.
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});

inline constexpr int kFolds = 5;

struct FoldPlan {
  std::vector<std::string> held_out_ids;
  std::vector<std::vector<std::string>> folds;  // kFolds disjoint id lists

  std::vector<std::size_t> indices(const Cohort& cohort, const std::vector<std::string>& ids) const;
  std::vector<std::string> training_ids(int fold_index) const;
};

nlohmann::json to_json(const FoldPlan& p);
FoldPlan fold_plan_from_json(const nlohmann::json& j);

/// Random held-out split, then the remainder dealt into folds so that every fold
/// receives (nearly) the same number of uncensored patients.
FoldPlan make_folds(const Cohort& cohort, double held_out_fraction, std::uint64_t seed);

/// A trained network plus the preprocessing it was trained with.
struct Checkpoint {
  Variant variant = Variant::grud;
  ModelParams params;
  FeatureScaler scaler;
  std::vector<FeatureInfo> features;  // after exclusion
  int fold = 0;
  TrainConfig config;
};

nlohmann::json to_json(const Checkpoint& c);
Checkpoint checkpoint_from_json(const nlohmann::json& j);

/// Raw cohort series -> network input (z-score, then LVCF for the ablation variant).
PatientSeries prepare_series(const Checkpoint& model, const PatientSeries& raw);
std::vector<ParamTrajectory> predict_cohort(const Checkpoint& model, const Cohort& cohort,
                                            std::span<const std::size_t> indices, int threads = 1);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double grad_norm = 0.0;  // mean pre-clip global norm over the epoch's batches
  double wall_time = 0.0;  // seconds since training started
};

struct TrainingLog {
  std::vector<EpochRecord> epochs;
  int returned_epoch = -1;  // epoch whose end-of-epoch params were returned; -1 = initial params
  std::optional<int> gap_opened_epoch;
  bool stopped_early = false;
  bool diverged = false;
  std::string message;
};

struct TrainResult {
  Checkpoint model;
  TrainingLog log;
};

/// Mean per-timestep loss over a prepared dataset (no dropout).
double dataset_loss(const ModelParams& params, std::span<const PatientSeries> data, int threads = 1);

// called after every completed epoch with the current (not the returned) model
using EpochObserver = std::function<void(const EpochRecord&, const Checkpoint&)>;
using ParamsObserver = std::function<void(const EpochRecord&, const ModelParams&)>;

TrainResult train(const Cohort& cohort, const FoldPlan& plan, int fold_index, const TrainConfig& config,
                  const EpochObserver& observe = {});

/// Lower-level entry point on already-prepared series.
TrainResult train_prepared(std::span<const PatientSeries> train_set, std::span<const PatientSeries> val_set,
                           const Vec& means, const TrainConfig& config, const ParamsObserver& observe = {});

}  // namespace grudw
