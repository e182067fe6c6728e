#pragma once

#include <cstdint>
#include <random>
#include <span>

#include "grudw/linalg.hpp"

namespace grudw {

// Elapsed days are divided by this before entering the decay units.
inline constexpr double kDeltaScaleDays = 30.0;

/// One timestep of input: values, observation mask (1 = observed) and days since
/// each feature was last observed.
struct TimestepObservation {
  Vec x;
  Vec m;
  Vec delta;

  std::size_t features() const { return x.size(); }
};

struct CellConfig {
  bool input_decay = true;   // off: gamma_x forced to 1 (carry last value forward)
  bool hidden_decay = true;  // off: gamma_h forced to 1
  bool mask_pathway = true;  // off: mask does not feed the gates
};

struct CellParams {
  // input decay, diagonal: gamma_x = exp(-max(0, w_gx * delta + b_gx))
  Vec w_gx, b_gx;
  // hidden decay over the mean staleness of unobserved features, broadcast to H
  Vec w_gh, b_gh;
  // gates: update (z), reset (r), candidate (c)
  Matrix w_z, w_r, w_c;  // H x F on imputed input
  Matrix u_z, u_r, u_c;  // H x H on decayed hidden state
  Matrix v_z, v_r, v_c;  // H x F on mask
  Vec b_z, b_r, b_c;
  // empirical feature means, fitted on training data and never trained
  Vec means;
  CellConfig config;

  std::size_t features() const { return w_gx.size(); }
  std::size_t hidden() const { return b_z.size(); }

  static CellParams zeros(std::size_t features, std::size_t hidden, CellConfig config = {});
  void validate() const;
};

/// Gate weights uniform in +-sqrt(1/H); decay weights 0.1, decay biases 0.
CellParams init_cell_params(std::size_t features, std::size_t hidden, std::mt19937_64& rng,
                            CellConfig config = {});

/// exp(-max(0, w*delta + b)) elementwise.
Vec decay_gamma(std::span<const double> w, std::span<const double> b, std::span<const double> delta);

Vec impute_input(const TimestepObservation& obs, std::span<const double> last_observed,
                 std::span<const double> means, std::span<const double> gamma_x);

/// Everything the backward pass of one step needs.
struct StepCache {
  Vec delta_scaled;   // F
  Vec pre_gx;         // F, argument of the input-decay max(0, .)
  Vec gamma_x;        // F
  Vec last_observed;  // F, value carried into this step
  Vec x_hat;          // F
  Vec mask;           // F
  double delta_bar = 0.0;
  Vec pre_gh;   // H
  Vec gamma_h;  // H
  Vec h_prev;   // H
  Vec h_dec;    // H
  Vec z, r, c;  // H
  Vec rh;       // H, r * h_dec
};

struct StepResult {
  Vec h;
  Vec last_observed;
  StepCache cache;
};

StepResult cell_step(const CellParams& params, const TimestepObservation& obs,
                     std::span<const double> h, std::span<const double> last_observed);

/// Accumulates parameter gradients of one step into `grad` and returns dL/dh_prev.
Vec cell_step_backward(const CellParams& params, const StepCache& cache,
                       std::span<const double> d_h, CellParams& grad);

}  // namespace grudw
