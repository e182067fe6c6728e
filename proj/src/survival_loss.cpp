#include "grudw/survival_loss.hpp"

#include <cmath>
#include <stdexcept>

namespace grudw {

double patient_weight(const OutcomeLabel& outcome) {
  if (outcome.terminal_time < 0.0) throw DomainError("terminal time must be nonnegative");
  if (!outcome.censored) return 1.0;
  return outcome.terminal_time / kDaysPerYear / 5.0;
}

LossBreakdown timestep_loss(const WeibullParams& p, double remaining, bool censored, double weight,
                            double tail_upper) {
  if (!(remaining > 0.0)) {
    throw DomainError("timestep loss needs positive remaining time, got " + std::to_string(remaining));
  }
  LossBreakdown out;
  out.weight = weight;
  if (censored) {
    out.censored_tail = censored_neg_log_tail(p, remaining, tail_upper);
    const ParamGrad g = censored_neg_log_tail_grad(p, remaining, tail_upper);
    out.total = weight * out.censored_tail;
    out.grad = {weight * g.d_kappa, weight * g.d_lambda};
    return out;
  }
  out.neglog = -log_pdf(p, remaining);
  const ParamGrad gl = log_pdf_grad(p, remaining);

  const double median = median_time(p);
  const ParamGrad gm = quantile_time_grad(p, 0.5);
  const double diff = std::log1p(remaining) - std::log1p(median);
  out.msle = diff * diff;
  const double d_median = -2.0 * diff / (1.0 + median);

  out.total = weight * (out.neglog + out.msle);
  out.grad = {weight * (-gl.d_kappa + d_median * gm.d_kappa), weight * (-gl.d_lambda + d_median * gm.d_lambda)};
  return out;
}

BatchLoss batch_loss(std::span<const BatchMember> batch, double tail_upper) {
  if (batch.empty()) throw std::invalid_argument("batch_loss on an empty batch");
  BatchLoss out;
  out.upstream.resize(batch.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const PatientSeries& s = *batch[i].series;
    const ParamTrajectory& traj = *batch[i].trajectory;
    require_size(traj.size(), s.steps(), "trajectory vs series");
    const double w = patient_weight(s.outcome);
    auto& up = out.upstream[i];
    up.resize(traj.size());
    for (std::size_t t = 0; t < traj.size(); ++t) {
      const LossBreakdown l = timestep_loss(traj[t], remaining_years(s, t), s.outcome.censored, w, tail_upper);
      sum += l.total;
      up[t] = l.grad;
    }
    out.timesteps += traj.size();
  }
  if (out.timesteps == 0) throw std::invalid_argument("batch_loss: no contributing timesteps");
  out.mean = sum / static_cast<double>(out.timesteps);
  const double scale = 1.0 / static_cast<double>(out.timesteps);
  for (auto& up : out.upstream) {
    for (auto& g : up) {
      g.d_kappa *= scale;
      g.d_lambda *= scale;
    }
  }
  return out;
}

}  // namespace grudw
