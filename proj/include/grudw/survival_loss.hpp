#pragma once

#include <limits>
#include <span>
#include <vector>

#include "grudw/sequence_model.hpp"
#include "grudw/weibull.hpp"

namespace grudw {

struct LossBreakdown {
  double neglog = 0.0;
  double msle = 0.0;
  double censored_tail = 0.0;
  double weight = 1.0;
  double total = 0.0;
  ParamGrad grad;  // of total, including the weight
};

/// 1 for events; censoring time in years divided by 5 otherwise.
double patient_weight(const OutcomeLabel& outcome);

/// Composite loss for one timestep. `remaining` is years to the terminal time.
/// `tail_upper` bounds the censored tail (default: infinity).
LossBreakdown timestep_loss(const WeibullParams& p, double remaining, bool censored, double weight = 1.0,
                            double tail_upper = std::numeric_limits<double>::infinity());

/// Years from grid step t to the terminal time.
inline double remaining_years(const PatientSeries& s, std::size_t t) {
  return (s.outcome.terminal_time - s.grid_times[t]) / kDaysPerYear;
}

struct BatchMember {
  const PatientSeries* series = nullptr;
  const ParamTrajectory* trajectory = nullptr;
};

struct BatchLoss {
  double mean = 0.0;
  std::size_t timesteps = 0;
  // per member, per timestep gradient of `mean`
  std::vector<std::vector<ParamGrad>> upstream;
};

/// Flat mean of weighted per-timestep losses over every (patient, step) pair.
BatchLoss batch_loss(std::span<const BatchMember> batch,
                     double tail_upper = std::numeric_limits<double>::infinity());

}  // namespace grudw
