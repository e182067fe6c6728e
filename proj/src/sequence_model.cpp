#include "grudw/sequence_model.hpp"

#include <cmath>

namespace grudw {

namespace {

double softplus(double a) { return a > 0.0 ? a + std::log1p(std::exp(-a)) : std::log1p(std::exp(a)); }

double sigmoid(double a) {
  if (a >= 0.0) return 1.0 / (1.0 + std::exp(-a));
  const double e = std::exp(a);
  return e / (1.0 + e);
}

template <typename Self, typename Out>
void collect_tensors(Self& p, Out& out) {
  auto add = [&](const char* name, auto& storage) { out.push_back({name, {storage.data(), storage.size()}}); };
  auto& c = p.cell;
  add("w_gx", c.w_gx);
  add("b_gx", c.b_gx);
  add("w_gh", c.w_gh);
  add("b_gh", c.b_gh);
  add("w_z", c.w_z.data);
  add("w_r", c.w_r.data);
  add("w_c", c.w_c.data);
  add("u_z", c.u_z.data);
  add("u_r", c.u_r.data);
  add("u_c", c.u_c.data);
  add("v_z", c.v_z.data);
  add("v_r", c.v_r.data);
  add("v_c", c.v_c.data);
  add("b_z", c.b_z);
  add("b_r", c.b_r);
  add("b_c", c.b_c);
  add("head_w", p.head_w.data);
  add("head_b", p.head_b);
}

}  // namespace

void PatientSeries::validate() const {
  require_size(grid_times.size(), observations.size(), "grid_times vs observations");
  const std::size_t f = features();
  for (std::size_t t = 0; t < observations.size(); ++t) {
    const auto& o = observations[t];
    require_size(o.x.size(), f, "observation values");
    require_size(o.m.size(), f, "observation mask");
    require_size(o.delta.size(), f, "observation delta");
    if (t > 0 && !(grid_times[t] > grid_times[t - 1])) {
      throw DimensionError("grid_times must be strictly increasing in series " + patient_id);
    }
  }
  if (!observations.empty() && !(outcome.terminal_time > grid_times.back())) {
    throw DimensionError("terminal time must follow the last contributing step in series " + patient_id);
  }
}

void recompute_deltas(PatientSeries& s) {
  const std::size_t f = s.features();
  for (std::size_t t = 0; t < s.steps(); ++t) {
    auto& cur = s.observations[t];
    cur.delta.assign(f, 0.0);
    if (t == 0) continue;
    const auto& prev = s.observations[t - 1];
    const double step = s.grid_times[t] - s.grid_times[t - 1];
    for (std::size_t d = 0; d < f; ++d) {
      cur.delta[d] = prev.m[d] != 0.0 ? step : step + prev.delta[d];
    }
  }
}

ModelParams ModelParams::zeros_like(const ModelParams& other) {
  ModelParams g;
  g.cell = CellParams::zeros(other.features(), other.hidden(), other.cell.config);
  g.cell.means = other.cell.means;
  g.head_w = Matrix(2, other.hidden());
  g.head_b.assign(2, 0.0);
  return g;
}

std::vector<ModelParams::Tensor> ModelParams::tensors() {
  std::vector<Tensor> out;
  collect_tensors(*this, out);
  return out;
}

std::vector<ModelParams::ConstTensor> ModelParams::tensors() const {
  std::vector<ConstTensor> out;
  collect_tensors(*this, out);
  return out;
}

std::size_t ModelParams::active_parameter_count() const {
  const std::size_t f = features();
  const std::size_t h = hidden();
  std::size_t n = 3 * (h * f + h * h + h) + 2 * h + 2;
  if (cell.config.mask_pathway) n += 3 * h * f;
  if (cell.config.input_decay) n += 2 * f;
  if (cell.config.hidden_decay) n += 2 * h;
  return n;
}

void ModelParams::validate() const {
  cell.validate();
  if (head_w.rows != 2 || head_w.cols != hidden()) throw DimensionError("head_w must be 2 x H");
  require_size(head_b.size(), 2, "head_b");
  for (const auto& t : tensors()) {
    for (double v : t.values) {
      if (!std::isfinite(v)) throw NumericError("non-finite entry in " + t.name);
    }
  }
}

ModelParams init_model_params(std::size_t features, std::size_t hidden, std::uint64_t seed,
                              CellConfig config) {
  std::mt19937_64 rng(seed);
  ModelParams p;
  p.cell = init_cell_params(features, hidden, rng, config);
  const double bound = std::sqrt(1.0 / static_cast<double>(hidden));
  std::uniform_real_distribution<double> unif(-bound, bound);
  p.head_w = Matrix(2, hidden);
  for (double& v : p.head_w.data) v = unif(rng);
  p.head_b.assign(2, 0.0);
  return p;
}

nlohmann::json to_json(const ModelParams& p) {
  nlohmann::json j;
  j["format"] = "grudw-model-params";
  j["version"] = 1;
  j["features"] = p.features();
  j["hidden"] = p.hidden();
  j["config"] = {{"input_decay", p.cell.config.input_decay},
                 {"hidden_decay", p.cell.config.hidden_decay},
                 {"mask_pathway", p.cell.config.mask_pathway}};
  j["means"] = p.cell.means;
  nlohmann::json tensors = nlohmann::json::object();
  for (const auto& t : p.tensors()) tensors[t.name] = std::vector<double>(t.values.begin(), t.values.end());
  j["tensors"] = tensors;
  return j;
}

ModelParams model_params_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "grudw-model-params" || j.value("version", 0) != 1) {
    throw DimensionError("unrecognized model parameter format");
  }
  CellConfig cfg;
  cfg.input_decay = j.at("config").at("input_decay").get<bool>();
  cfg.hidden_decay = j.at("config").at("hidden_decay").get<bool>();
  cfg.mask_pathway = j.at("config").at("mask_pathway").get<bool>();
  const auto f = j.at("features").get<std::size_t>();
  const auto h = j.at("hidden").get<std::size_t>();
  ModelParams p;
  p.cell = CellParams::zeros(f, h, cfg);
  p.head_w = Matrix(2, h);
  p.head_b.assign(2, 0.0);
  p.cell.means = j.at("means").get<Vec>();
  require_size(p.cell.means.size(), f, "means");
  const auto& tensors = j.at("tensors");
  for (auto& t : p.tensors()) {
    const auto values = tensors.at(t.name).get<Vec>();
    require_size(values.size(), t.values.size(), t.name.c_str());
    std::copy(values.begin(), values.end(), t.values.begin());
  }
  p.validate();
  return p;
}

ForwardResult forward(const ModelParams& params, const PatientSeries& series, const ForwardOptions& opts) {
  ForwardResult res;
  const std::size_t steps = series.steps();
  if (steps == 0) return res;
  const std::size_t hd = params.hidden();
  if (opts.dropout > 0.0 && opts.rng == nullptr) throw DimensionError("dropout requires an rng");

  Tape& tape = res.tape;
  tape.steps.reserve(steps);
  tape.head_input.reserve(steps);
  res.trajectory.reserve(steps);

  Vec h(hd, 0.0);
  Vec last = params.cell.means;
  std::bernoulli_distribution keep(1.0 - opts.dropout);
  for (std::size_t t = 0; t < steps; ++t) {
    StepResult step = cell_step(params.cell, series.observations[t], h, last);
    h = std::move(step.h);
    last = std::move(step.last_observed);
    tape.steps.push_back(std::move(step.cache));

    Vec head_in = h;
    if (opts.dropout > 0.0) {
      Vec scale(hd);
      for (std::size_t j = 0; j < hd; ++j) {
        scale[j] = keep(*opts.rng) ? 1.0 / (1.0 - opts.dropout) : 0.0;
        head_in[j] *= scale[j];
      }
      tape.dropout_scale.push_back(std::move(scale));
    }
    double ak = params.head_b[0];
    double al = params.head_b[1];
    for (std::size_t j = 0; j < hd; ++j) {
      ak += params.head_w(0, j) * head_in[j];
      al += params.head_w(1, j) * head_in[j];
    }
    const double kappa = softplus(ak) + kParamEps;
    const double lambda = softplus(al) + kParamEps;
    if (!std::isfinite(kappa) || !std::isfinite(lambda)) {
      throw NumericError("non-finite Weibull parameters for series " + series.patient_id);
    }
    res.trajectory.emplace_back(kappa, lambda);
    tape.pre_kappa.push_back(ak);
    tape.pre_lambda.push_back(al);
    tape.head_input.push_back(std::move(head_in));
  }
  return res;
}

ParamTrajectory predict(const ModelParams& params, const PatientSeries& series) {
  return forward(params, series).trajectory;
}

void accumulate_gradient(const ModelParams& params, const Tape& tape, std::span<const ParamGrad> upstream,
                         ModelParams& grad) {
  const std::size_t steps = tape.steps.size();
  require_size(upstream.size(), steps, "upstream gradients");
  const std::size_t hd = params.hidden();
  const bool dropout = !tape.dropout_scale.empty();

  Vec d_h(hd, 0.0);
  for (std::size_t t = steps; t-- > 0;) {
    const double dk = upstream[t].d_kappa * sigmoid(tape.pre_kappa[t]);
    const double dl = upstream[t].d_lambda * sigmoid(tape.pre_lambda[t]);
    const Vec& in = tape.head_input[t];
    grad.head_b[0] += dk;
    grad.head_b[1] += dl;
    for (std::size_t j = 0; j < hd; ++j) {
      grad.head_w(0, j) += dk * in[j];
      grad.head_w(1, j) += dl * in[j];
      double d_in = dk * params.head_w(0, j) + dl * params.head_w(1, j);
      if (dropout) d_in *= tape.dropout_scale[t][j];
      d_h[j] += d_in;
    }
    d_h = cell_step_backward(params.cell, tape.steps[t], d_h, grad.cell);
  }
}

ModelParams gradient(const ModelParams& params, const Tape& tape, std::span<const ParamGrad> upstream) {
  ModelParams grad = ModelParams::zeros_like(params);
  accumulate_gradient(params, tape, upstream, grad);
  return grad;
}

}  // namespace grudw
