#pragma once

#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "grudw/grud_cell.hpp"
#include "grudw/weibull.hpp"

namespace grudw {

// Floor added after SoftPlus so shape and scale stay strictly positive.
inline constexpr double kParamEps = 1e-4;
inline constexpr double kDaysPerYear = 365.25;

struct OutcomeLabel {
  double terminal_time = 0.0;  // days, same origin as grid_times
  bool censored = false;
};

/// One patient's irregular grid. Only timesteps strictly before the terminal
/// time are kept, so observations.size() is the number of contributing steps.
struct PatientSeries {
  std::string patient_id;
  Vec grid_times;  // days relative to the index date, strictly increasing
  std::vector<TimestepObservation> observations;
  OutcomeLabel outcome;

  std::size_t steps() const { return observations.size(); }
  std::size_t features() const { return observations.empty() ? 0 : observations.front().x.size(); }
  void validate() const;
};

/// Rebuilds delta (days since last observation) from the masks and grid.
void recompute_deltas(PatientSeries& series);

struct ModelParams {
  CellParams cell;
  Matrix head_w;  // 2 x H; row 0 -> shape, row 1 -> scale
  Vec head_b;     // 2

  std::size_t features() const { return cell.features(); }
  std::size_t hidden() const { return cell.hidden(); }

  static ModelParams zeros_like(const ModelParams& other);

  struct Tensor {
    std::string name;
    std::span<double> values;
  };
  struct ConstTensor {
    std::string name;
    std::span<const double> values;
  };
  /// Trainable tensors in a fixed order. Means are excluded.
  std::vector<Tensor> tensors();
  std::vector<ConstTensor> tensors() const;

  /// Trainable parameters that actually influence the output under the cell config.
  std::size_t active_parameter_count() const;

  void validate() const;
};

ModelParams init_model_params(std::size_t features, std::size_t hidden, std::uint64_t seed,
                              CellConfig config = {});

nlohmann::json to_json(const ModelParams& p);
ModelParams model_params_from_json(const nlohmann::json& j);

using ParamTrajectory = std::vector<WeibullParams>;

struct ForwardOptions {
  double dropout = 0.0;             // applied between cell output and head
  std::mt19937_64* rng = nullptr;   // required when dropout > 0
};

struct Tape {
  std::vector<StepCache> steps;
  std::vector<Vec> head_input;  // hidden state after dropout
  std::vector<Vec> dropout_scale;
  std::vector<double> pre_kappa, pre_lambda;
};

struct ForwardResult {
  ParamTrajectory trajectory;
  Tape tape;
  bool skipped() const { return trajectory.empty(); }
};

ForwardResult forward(const ModelParams& params, const PatientSeries& series,
                      const ForwardOptions& opts = {});

/// Trajectory only; no tape is kept.
ParamTrajectory predict(const ModelParams& params, const PatientSeries& series);

/// Reverse-mode accumulation of per-timestep (dL/dkappa, dL/dlambda) into `grad`.
void accumulate_gradient(const ModelParams& params, const Tape& tape,
                         std::span<const ParamGrad> upstream, ModelParams& grad);

ModelParams gradient(const ModelParams& params, const Tape& tape, std::span<const ParamGrad> upstream);

}  // namespace grudw
