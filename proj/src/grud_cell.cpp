#include "grudw/grud_cell.hpp"

#include <cmath>

namespace grudw {

namespace {

double sigmoid(double a) {
  if (a >= 0.0) return 1.0 / (1.0 + std::exp(-a));
  const double e = std::exp(a);
  return e / (1.0 + e);
}

void check_matrix(const Matrix& m, std::size_t rows, std::size_t cols, const char* what) {
  if (m.rows != rows || m.cols != cols) {
    throw DimensionError(std::string(what) + ": expected " + std::to_string(rows) + "x" +
                         std::to_string(cols) + ", got " + std::to_string(m.rows) + "x" +
                         std::to_string(m.cols));
  }
}

}  // namespace

CellParams CellParams::zeros(std::size_t features, std::size_t hidden, CellConfig config) {
  CellParams p;
  const std::size_t f = features;
  const std::size_t h = hidden;
  p.w_gx.assign(f, 0.0);
  p.b_gx.assign(f, 0.0);
  p.w_gh.assign(h, 0.0);
  p.b_gh.assign(h, 0.0);
  for (Matrix* m : {&p.w_z, &p.w_r, &p.w_c, &p.v_z, &p.v_r, &p.v_c}) *m = Matrix(h, f);
  for (Matrix* m : {&p.u_z, &p.u_r, &p.u_c}) *m = Matrix(h, h);
  p.b_z.assign(h, 0.0);
  p.b_r.assign(h, 0.0);
  p.b_c.assign(h, 0.0);
  p.means.assign(f, 0.0);
  p.config = config;
  return p;
}

void CellParams::validate() const {
  const std::size_t f = features();
  const std::size_t h = hidden();
  require_size(b_gx.size(), f, "b_gx");
  require_size(w_gh.size(), h, "w_gh");
  require_size(b_gh.size(), h, "b_gh");
  require_size(b_r.size(), h, "b_r");
  require_size(b_c.size(), h, "b_c");
  require_size(means.size(), f, "means");
  check_matrix(w_z, h, f, "w_z");
  check_matrix(w_r, h, f, "w_r");
  check_matrix(w_c, h, f, "w_c");
  check_matrix(v_z, h, f, "v_z");
  check_matrix(v_r, h, f, "v_r");
  check_matrix(v_c, h, f, "v_c");
  check_matrix(u_z, h, h, "u_z");
  check_matrix(u_r, h, h, "u_r");
  check_matrix(u_c, h, h, "u_c");
}

CellParams init_cell_params(std::size_t features, std::size_t hidden, std::mt19937_64& rng,
                            CellConfig config) {
  CellParams p = CellParams::zeros(features, hidden, config);
  const double bound = std::sqrt(1.0 / static_cast<double>(hidden));
  std::uniform_real_distribution<double> unif(-bound, bound);
  for (Matrix* m : {&p.w_z, &p.w_r, &p.w_c, &p.u_z, &p.u_r, &p.u_c, &p.v_z, &p.v_r, &p.v_c}) {
    for (double& v : m->data) v = unif(rng);
  }
  for (Vec* b : {&p.b_z, &p.b_r, &p.b_c}) {
    for (double& v : *b) v = unif(rng);
  }
  p.w_gx.assign(features, 0.1);
  p.w_gh.assign(hidden, 0.1);
  return p;
}

Vec decay_gamma(std::span<const double> w, std::span<const double> b, std::span<const double> delta) {
  require_size(b.size(), w.size(), "decay bias");
  require_size(delta.size(), w.size(), "delta");
  Vec out(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (delta[i] < 0.0) throw DimensionError("delta must be nonnegative");
    out[i] = std::exp(-std::max(0.0, w[i] * delta[i] + b[i]));
  }
  return out;
}

Vec impute_input(const TimestepObservation& obs, std::span<const double> last_observed,
                 std::span<const double> means, std::span<const double> gamma_x) {
  const std::size_t f = obs.x.size();
  require_size(obs.m.size(), f, "mask");
  require_size(last_observed.size(), f, "last_observed");
  require_size(means.size(), f, "means");
  require_size(gamma_x.size(), f, "gamma_x");
  Vec out(f);
  for (std::size_t d = 0; d < f; ++d) {
    const double m = obs.m[d];
    const double g = gamma_x[d];
    out[d] = m * obs.x[d] + (1.0 - m) * (g * last_observed[d] + (1.0 - g) * means[d]);
  }
  return out;
}

StepResult cell_step(const CellParams& params, const TimestepObservation& obs,
                     std::span<const double> h, std::span<const double> last_observed) {
  const std::size_t f = params.features();
  const std::size_t hd = params.hidden();
  require_size(obs.x.size(), f, "observation values");
  require_size(obs.m.size(), f, "observation mask");
  require_size(obs.delta.size(), f, "observation delta");
  require_size(h.size(), hd, "hidden state");
  require_size(last_observed.size(), f, "last_observed");
  const CellConfig& cfg = params.config;

  StepResult res;
  StepCache& c = res.cache;
  c.mask = obs.m;
  c.last_observed.assign(last_observed.begin(), last_observed.end());
  c.h_prev.assign(h.begin(), h.end());

  c.delta_scaled.resize(f);
  c.pre_gx.resize(f);
  c.gamma_x.resize(f);
  double stale_sum = 0.0;
  for (std::size_t d = 0; d < f; ++d) {
    if (obs.delta[d] < 0.0) throw DimensionError("delta must be nonnegative");
    const double ds = obs.delta[d] / kDeltaScaleDays;
    c.delta_scaled[d] = ds;
    c.pre_gx[d] = params.w_gx[d] * ds + params.b_gx[d];
    c.gamma_x[d] = cfg.input_decay ? std::exp(-std::max(0.0, c.pre_gx[d])) : 1.0;
    stale_sum += (1.0 - obs.m[d]) * ds;
  }
  c.x_hat = impute_input(obs, last_observed, params.means, c.gamma_x);

  c.delta_bar = f > 0 ? stale_sum / static_cast<double>(f) : 0.0;
  c.pre_gh.resize(hd);
  c.gamma_h.resize(hd);
  c.h_dec.resize(hd);
  for (std::size_t j = 0; j < hd; ++j) {
    c.pre_gh[j] = params.w_gh[j] * c.delta_bar + params.b_gh[j];
    c.gamma_h[j] = cfg.hidden_decay ? std::exp(-std::max(0.0, c.pre_gh[j])) : 1.0;
    c.h_dec[j] = c.gamma_h[j] * h[j];
  }

  Vec az = params.b_z;
  Vec ar = params.b_r;
  Vec ac = params.b_c;
  gemv_acc(params.w_z, c.x_hat, az);
  gemv_acc(params.w_r, c.x_hat, ar);
  gemv_acc(params.w_c, c.x_hat, ac);
  gemv_acc(params.u_z, c.h_dec, az);
  gemv_acc(params.u_r, c.h_dec, ar);
  if (cfg.mask_pathway) {
    gemv_acc(params.v_z, obs.m, az);
    gemv_acc(params.v_r, obs.m, ar);
    gemv_acc(params.v_c, obs.m, ac);
  }
  c.z.resize(hd);
  c.r.resize(hd);
  c.rh.resize(hd);
  for (std::size_t j = 0; j < hd; ++j) {
    c.z[j] = sigmoid(az[j]);
    c.r[j] = sigmoid(ar[j]);
    c.rh[j] = c.r[j] * c.h_dec[j];
  }
  gemv_acc(params.u_c, c.rh, ac);
  c.c.resize(hd);
  res.h.resize(hd);
  for (std::size_t j = 0; j < hd; ++j) {
    c.c[j] = std::tanh(ac[j]);
    res.h[j] = (1.0 - c.z[j]) * c.h_dec[j] + c.z[j] * c.c[j];
    if (!std::isfinite(res.h[j])) throw NumericError("non-finite hidden activation");
  }

  res.last_observed.assign(last_observed.begin(), last_observed.end());
  for (std::size_t d = 0; d < f; ++d) {
    if (obs.m[d] != 0.0) res.last_observed[d] = obs.x[d];
  }
  return res;
}

Vec cell_step_backward(const CellParams& params, const StepCache& c, std::span<const double> d_h,
                       CellParams& grad) {
  const std::size_t f = params.features();
  const std::size_t hd = params.hidden();
  require_size(d_h.size(), hd, "upstream hidden gradient");
  const CellConfig& cfg = params.config;

  Vec d_zpre(hd), d_cpre(hd), d_hdec(hd);
  for (std::size_t j = 0; j < hd; ++j) {
    const double dz = d_h[j] * (c.c[j] - c.h_dec[j]);
    const double dc = d_h[j] * c.z[j];
    d_hdec[j] = d_h[j] * (1.0 - c.z[j]);
    d_zpre[j] = dz * c.z[j] * (1.0 - c.z[j]);
    d_cpre[j] = dc * (1.0 - c.c[j] * c.c[j]);
  }

  outer_acc(grad.w_c, d_cpre, c.x_hat);
  outer_acc(grad.u_c, d_cpre, c.rh);
  axpy(1.0, d_cpre, grad.b_c);

  Vec d_rh(hd, 0.0);
  gemv_t_acc(params.u_c, d_cpre, d_rh);
  Vec d_rpre(hd);
  for (std::size_t j = 0; j < hd; ++j) {
    d_hdec[j] += d_rh[j] * c.r[j];
    d_rpre[j] = d_rh[j] * c.h_dec[j] * c.r[j] * (1.0 - c.r[j]);
  }

  outer_acc(grad.w_z, d_zpre, c.x_hat);
  outer_acc(grad.u_z, d_zpre, c.h_dec);
  axpy(1.0, d_zpre, grad.b_z);
  outer_acc(grad.w_r, d_rpre, c.x_hat);
  outer_acc(grad.u_r, d_rpre, c.h_dec);
  axpy(1.0, d_rpre, grad.b_r);
  if (cfg.mask_pathway) {
    outer_acc(grad.v_z, d_zpre, c.mask);
    outer_acc(grad.v_r, d_rpre, c.mask);
    outer_acc(grad.v_c, d_cpre, c.mask);
  }

  gemv_t_acc(params.u_z, d_zpre, d_hdec);
  gemv_t_acc(params.u_r, d_rpre, d_hdec);

  Vec d_hprev(hd);
  for (std::size_t j = 0; j < hd; ++j) {
    d_hprev[j] = d_hdec[j] * c.gamma_h[j];
    if (cfg.hidden_decay && c.pre_gh[j] > 0.0) {
      const double d_pre = -d_hdec[j] * c.h_prev[j] * c.gamma_h[j];
      grad.w_gh[j] += d_pre * c.delta_bar;
      grad.b_gh[j] += d_pre;
    }
  }

  if (cfg.input_decay) {
    Vec d_xhat(f, 0.0);
    gemv_t_acc(params.w_z, d_zpre, d_xhat);
    gemv_t_acc(params.w_r, d_rpre, d_xhat);
    gemv_t_acc(params.w_c, d_cpre, d_xhat);
    for (std::size_t d = 0; d < f; ++d) {
      if (c.pre_gx[d] <= 0.0 || c.mask[d] == 1.0) continue;
      const double d_gamma = d_xhat[d] * (1.0 - c.mask[d]) * (c.last_observed[d] - params.means[d]);
      const double d_pre = -d_gamma * c.gamma_x[d];
      grad.w_gx[d] += d_pre * c.delta_scaled[d];
      grad.b_gx[d] += d_pre;
    }
  }
  return d_hprev;
}

}  // namespace grudw
