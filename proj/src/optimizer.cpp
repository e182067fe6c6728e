#include "grudw/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace grudw {

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& st, const AdamConfig& cfg) {
  require_size(grads.size(), params.size(), "adam gradients");
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!std::isfinite(grads[i])) {
      throw NumericError("non-finite gradient at flat index " + std::to_string(i) + " (step " +
                         std::to_string(st.step + 1) + ")");
    }
  }
  if (st.m.size() != params.size()) {
    st.m.assign(params.size(), 0.0);
    st.v.assign(params.size(), 0.0);
    st.v_max.assign(params.size(), 0.0);
    st.step = 0;
  }
  ++st.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.step));
  const double step_size = cfg.learning_rate / bc1;
  const double sqrt_bc2 = std::sqrt(bc2);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    st.m[i] = cfg.beta1 * st.m[i] + (1.0 - cfg.beta1) * g;
    st.v[i] = cfg.beta2 * st.v[i] + (1.0 - cfg.beta2) * g * g;
    double second = st.v[i];
    if (cfg.amsgrad) {
      st.v_max[i] = std::max(st.v_max[i], st.v[i]);
      second = st.v_max[i];
    }
    params[i] -= step_size * st.m[i] / (std::sqrt(second) / sqrt_bc2 + cfg.eps);
  }
}

double clip_gradients(std::span<double> grads, double clip_norm) {
  double sq = 0.0;
  for (double g : grads) sq += g * g;
  const double norm = std::sqrt(sq);
  if (norm > clip_norm && norm > 0.0) {
    const double scale = clip_norm / norm;
    for (double& g : grads) g *= scale;
  }
  return norm;
}

void clip_values(std::span<double> grads, double clip_value) {
  for (double& g : grads) g = std::clamp(g, -clip_value, clip_value);
}

Vec flatten(const ModelParams& p) {
  Vec out;
  for (const auto& t : p.tensors()) out.insert(out.end(), t.values.begin(), t.values.end());
  return out;
}

void unflatten(std::span<const double> flat, ModelParams& p) {
  std::size_t offset = 0;
  for (auto& t : p.tensors()) {
    if (offset + t.values.size() > flat.size()) throw DimensionError("flat parameter vector too short");
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(offset), t.values.size(), t.values.begin());
    offset += t.values.size();
  }
  require_size(flat.size(), offset, "flat parameter vector");
}

}  // namespace grudw
