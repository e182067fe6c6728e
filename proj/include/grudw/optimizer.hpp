#pragma once

#include <optional>
#include <span>

#include "grudw/linalg.hpp"
#include "grudw/sequence_model.hpp"

namespace grudw {

struct AdamConfig {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  bool amsgrad = true;
};

struct AdamState {
  Vec m;
  Vec v;
  Vec v_max;
  long step = 0;
};

/// One Adam update in place. With amsgrad the running maximum of the second
/// moment is used in the denominator. Throws NumericError on non-finite gradients.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, const AdamConfig& cfg);

/// Rescales to `clip_norm` when the global L2 norm exceeds it. Returns the norm before clipping.
double clip_gradients(std::span<double> grads, double clip_norm);
void clip_values(std::span<double> grads, double clip_value);

Vec flatten(const ModelParams& p);
void unflatten(std::span<const double> flat, ModelParams& p);

}  // namespace grudw
