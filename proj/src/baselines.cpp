#include "grudw/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "grudw/evaluation.hpp"
#include "grudw/optimizer.hpp"
#include "grudw/survival_loss.hpp"

namespace grudw {

WeibullParams AftModel::predict(std::span<const double> x) const {
  require_size(x.size(), n_inputs, "aft features");
  double eta = coefficients.at(0);
  for (std::size_t k = 0; k < columns.size(); ++k) {
    const double v = x[columns[k]];
    if (!std::isfinite(v)) throw NumericError("non-finite AFT feature");
    eta += coefficients[k + 1] * v;
  }
  return WeibullParams(kappa, std::exp(eta));
}

double aft_log_likelihood(const std::vector<Vec>& design, std::span<const double> times,
                          const std::vector<bool>& censored, std::span<const double> theta, Vec* grad) {
  const std::size_t p = theta.size() - 1;
  const double kappa = std::exp(theta[p]);
  if (grad) grad->assign(theta.size(), 0.0);
  double ll = 0.0;
  for (std::size_t i = 0; i < design.size(); ++i) {
    double eta = theta[0];
    for (std::size_t k = 0; k + 1 < p; ++k) eta += theta[k + 1] * design[i][k];
    const double lambda = std::exp(eta);
    if (!std::isfinite(lambda) || !(lambda > 0.0) || !std::isfinite(kappa) || !(kappa > 0.0)) {
      return -std::numeric_limits<double>::infinity();
    }
    const WeibullParams w(kappa, lambda);
    ParamGrad g;
    if (censored[i]) {
      ll -= censored_neg_log_tail(w, times[i]);
      g = censored_neg_log_tail_grad(w, times[i]);
      g.d_kappa = -g.d_kappa;
      g.d_lambda = -g.d_lambda;
    } else {
      ll += log_pdf(w, times[i]);
      g = log_pdf_grad(w, times[i]);
    }
    if (grad) {
      const double d_eta = g.d_lambda * lambda;
      (*grad)[0] += d_eta;
      for (std::size_t k = 0; k + 1 < p; ++k) (*grad)[k + 1] += d_eta * design[i][k];
      (*grad)[p] += g.d_kappa * kappa;
    }
  }
  const double n = static_cast<double>(design.size());
  if (grad) {
    for (double& v : *grad) v /= n;
  }
  return ll / n;
}

AftFitResult aft_fit(const std::vector<Vec>& x, std::span<const double> times, const std::vector<bool>& censored,
                     const AftFitConfig& cfg) {
  const std::size_t n = x.size();
  if (times.size() != n || censored.size() != n) throw DimensionError("aft_fit: inputs disagree in length");
  const std::size_t f = n == 0 ? 0 : x.front().size();
  if (n < 2) throw std::invalid_argument("aft_fit needs at least 2 patients");
  for (const auto& row : x) {
    require_size(row.size(), f, "aft_fit row");
    for (double v : row) {
      if (!std::isfinite(v)) throw NumericError("aft_fit: non-finite feature");
    }
  }
  for (double t : times) {
    if (!(t >= 0.0) || !std::isfinite(t)) throw DomainError("aft_fit: times must be finite and nonnegative");
  }

  AftFitResult res;
  res.model.n_inputs = f;
  // Zero-variance and exact-duplicate columns are dropped before fitting.
  for (std::size_t c = 0; c < f; ++c) {
    bool constant = true;
    for (std::size_t i = 1; i < n && constant; ++i) constant = x[i][c] == x[0][c];
    if (constant) {
      res.dropped.push_back("column " + std::to_string(c) + ": zero variance");
      continue;
    }
    bool duplicate = false;
    for (std::size_t kept : res.model.columns) {
      bool same = true;
      for (std::size_t i = 0; i < n && same; ++i) same = x[i][c] == x[i][kept];
      if (same) {
        res.dropped.push_back("column " + std::to_string(c) + ": duplicate of column " + std::to_string(kept));
        duplicate = true;
        break;
      }
    }
    if (!duplicate) res.model.columns.push_back(c);
  }

  if (n < res.model.columns.size() + 2) throw std::invalid_argument("aft_fit needs at least F + 2 patients");

  std::vector<Vec> design(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c : res.model.columns) design[i].push_back(x[i][c]);
  }
  const std::size_t p = res.model.columns.size() + 1;
  Vec theta(p + 1, 0.0);
  double mean_time = 0.0;
  for (double t : times) mean_time += std::max(t, kTauEps);
  theta[0] = std::log(mean_time / static_cast<double>(n));

  Vec grad;
  double ll = aft_log_likelihood(design, times, censored, theta, &grad);
  if (!std::isfinite(ll)) throw NumericError("aft_fit: non-finite initial log-likelihood");
  res.trace.push_back(ll);
  AdamState state;
  const AdamConfig adam{cfg.learning_rate, 0.9, 0.999, 1e-8, true};
  int it = 0;
  for (; it < cfg.max_iterations; ++it) {
    double norm = 0.0;
    for (double g : grad) norm += g * g;
    if (std::sqrt(norm) < cfg.tolerance) {
      res.converged = true;
      break;
    }
    // Adam minimizes, so feed it the negative gradient.
    Vec step_grad(grad.size());
    for (std::size_t k = 0; k < grad.size(); ++k) step_grad[k] = -grad[k];
    clip_gradients(step_grad, cfg.clip_norm);
    Vec proposal = theta;
    adam_step(proposal, step_grad, state, adam);

    // Keep the likelihood monotone: shrink the step until it no longer decreases.
    Vec direction(theta.size());
    for (std::size_t k = 0; k < theta.size(); ++k) direction[k] = proposal[k] - theta[k];
    bool accepted = false;
    double scale = 1.0;
    for (int attempt = 0; attempt < 30; ++attempt, scale *= 0.5) {
      Vec cand = theta;
      for (std::size_t k = 0; k < theta.size(); ++k) cand[k] += scale * direction[k];
      Vec cand_grad;
      const double cand_ll = aft_log_likelihood(design, times, censored, cand, &cand_grad);
      if (std::isfinite(cand_ll) && cand_ll >= ll) {
        theta = std::move(cand);
        grad = std::move(cand_grad);
        ll = cand_ll;
        res.trace.push_back(ll);
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      res.converged = true;  // no ascent direction left at double precision
      break;
    }
  }
  res.iterations = it;
  if (!res.converged) res.warnings.push_back("aft_fit reached the iteration limit before the gradient tolerance");
  res.model.coefficients.assign(theta.begin(), theta.begin() + static_cast<std::ptrdiff_t>(p));
  res.model.kappa = std::exp(theta[p]);
  res.log_likelihood = ll;
  return res;
}

Vec aft_snapshot(const PatientSeries& series, std::size_t step, std::span<const double> means) {
  if (step >= series.steps()) throw std::out_of_range("aft_snapshot: step beyond series");
  const PatientSeries filled = lvcf(series, kAftCarryDays, means);
  return filled.observations[step].x;
}

namespace {

bool step_matches(std::span<const double> grid, std::size_t step, double t) {
  if (step >= grid.size() || grid[step] > t) return false;
  return step + 1 == grid.size() || grid[step + 1] > t;
}

}  // namespace

AftCheckpoint train_aft(const Cohort& cohort, const FoldPlan& plan, int fold, const Vec& times_days,
                        const AftFitConfig& cfg, double max_missing_fraction, std::vector<std::string>* warnings) {
  const auto train_idx = plan.indices(cohort, plan.training_ids(fold));
  AftCheckpoint ck;
  ck.fold = fold;
  ck.times_days = times_days;
  ck.max_missing_fraction = max_missing_fraction;
  ck.scaler = zscore_fit(cohort, train_idx, warnings);
  ck.features = kept_features(ck.scaler, cohort.features);
  std::vector<PatientSeries> train;
  for (std::size_t i : train_idx) train.push_back(zscore_apply(ck.scaler, cohort.patients[i]));
  ck.means = empirical_means(train, ck.features);

  for (double t : times_days) {
    std::vector<Vec> x;
    Vec times;
    std::vector<bool> cens;
    std::vector<std::size_t> missing(ck.features.size(), 0);
    for (const auto& s : train) {
      if (!(s.outcome.terminal_time > t)) continue;
      const auto step = snap_step(s.grid_times, t);
      if (!step) continue;
      const PatientSeries filled = lvcf(s, kAftCarryDays, ck.means);
      const auto& obs = filled.observations[*step];
      for (std::size_t d = 0; d < obs.m.size(); ++d) {
        if (obs.m[d] == 0.0) ++missing[d];
      }
      x.push_back(obs.x);
      times.push_back(remaining_years(s, *step));
      cens.push_back(s.outcome.censored);
    }
    if (x.size() < 2) {
      if (warnings) warnings->push_back("AFT at t=" + format_number(t) + " days: too few at-risk patients, no fit");
      AftModel empty;
      empty.coefficients = {0.0};
      empty.n_inputs = ck.features.size();
      empty.fitted = false;
      ck.models.push_back(empty);
      continue;
    }
    // Columns above the missingness threshold are blanked to a constant and so pre-dropped.
    for (std::size_t d = 0; d < missing.size(); ++d) {
      if (static_cast<double>(missing[d]) > max_missing_fraction * static_cast<double>(x.size())) {
        for (auto& row : x) row[d] = 0.0;
      }
    }
    if (x.size() < ck.features.size() + 2) {
      if (warnings) warnings->push_back("AFT at t=" + format_number(t) + " days: intercept only, too few patients");
      for (auto& row : x) std::fill(row.begin(), row.end(), 0.0);
    }
    AftFitResult fit = aft_fit(x, times, cens, cfg);
    if (warnings) {
      for (const auto& w : fit.warnings) warnings->push_back("AFT at t=" + format_number(t) + " days: " + w);
      for (const auto& w : fit.dropped) warnings->push_back("AFT at t=" + format_number(t) + " days: dropped " + w);
    }
    ck.models.push_back(std::move(fit.model));
  }
  return ck;
}

std::optional<WeibullParams> aft_predict(const AftCheckpoint& ck, const PatientSeries& raw, std::size_t step) {
  for (std::size_t k = 0; k < ck.times_days.size(); ++k) {
    if (!step_matches(raw.grid_times, step, ck.times_days[k])) continue;
    if (!ck.models[k].fitted) return std::nullopt;
    const PatientSeries z = zscore_apply(ck.scaler, raw);
    return ck.models[k].predict(aft_snapshot(z, step, ck.means));
  }
  return std::nullopt;
}

nlohmann::json to_json(const AftModel& m) {
  return {{"coefficients", m.coefficients}, {"kappa", m.kappa}, {"columns", m.columns}, {"n_inputs", m.n_inputs}, {"fitted", m.fitted}};
}

AftModel aft_model_from_json(const nlohmann::json& j) {
  AftModel m;
  m.coefficients = j.at("coefficients").get<Vec>();
  m.kappa = j.at("kappa").get<double>();
  m.columns = j.at("columns").get<std::vector<std::size_t>>();
  m.n_inputs = j.at("n_inputs").get<std::size_t>();
  m.fitted = j.value("fitted", true);
  if (m.coefficients.size() != m.columns.size() + 1) throw DimensionError("AFT coefficient count mismatch");
  return m;
}

nlohmann::json to_json(const AftCheckpoint& c) {
  nlohmann::json feats = nlohmann::json::array();
  for (const auto& fi : c.features) {
    feats.push_back({{"name", fi.name},
                     {"kind", to_string(fi.kind)},
                     {"category", to_string(fi.category)},
                     {"effect_window_days", fi.effect_window_days}});
  }
  nlohmann::json models = nlohmann::json::array();
  for (const auto& m : c.models) models.push_back(to_json(m));
  return {{"format", "grudw-aft-checkpoint"}, {"version", 1},          {"fold", c.fold},
          {"scaler", to_json(c.scaler)},       {"features", feats},     {"means", c.means},
          {"times_days", c.times_days},        {"models", models},      {"max_missing_fraction", c.max_missing_fraction}};
}

AftCheckpoint aft_checkpoint_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "grudw-aft-checkpoint") throw std::runtime_error("expected an AFT checkpoint");
  AftCheckpoint c;
  c.fold = j.at("fold").get<int>();
  c.scaler = feature_scaler_from_json(j.at("scaler"));
  for (const auto& fj : j.at("features")) {
    c.features.push_back({fj.at("name").get<std::string>(), feature_kind_from_string(fj.at("kind")),
                          feature_category_from_string(fj.at("category")), fj.value("effect_window_days", 0.0)});
  }
  c.means = j.at("means").get<Vec>();
  c.times_days = j.at("times_days").get<Vec>();
  for (const auto& m : j.at("models")) c.models.push_back(aft_model_from_json(m));
  c.max_missing_fraction = j.value("max_missing_fraction", 0.995);
  if (c.models.size() != c.times_days.size()) throw DimensionError("AFT checkpoint: one model per time point");
  return c;
}

TrainConfig gru_lvcf_variant(TrainConfig base) {
  base.variant = Variant::lvcf;
  base.hidden_units = 80;
  base.hidden_decay = false;
  base.mask_pathway = false;
  return base;
}

}  // namespace grudw
