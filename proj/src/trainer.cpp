#include "grudw/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>
#include <unordered_map>

#include "grudw/parallel.hpp"
#include "grudw/survival_loss.hpp"

namespace grudw {

const char* to_string(Variant v) { return v == Variant::grud ? "grud" : "lvcf"; }

Variant variant_from_string(const std::string& s) {
  if (s == "grud") return Variant::grud;
  if (s == "lvcf") return Variant::lvcf;
  throw std::invalid_argument("unknown variant: " + s);
}

void TrainConfig::validate() const {
  if (hidden_units <= 0) throw std::invalid_argument("hidden_units must be positive");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be positive");
  if (epochs <= 0) throw std::invalid_argument("epochs must be positive");
  if (batch_size <= 0) throw std::invalid_argument("batch_size must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("dropout must lie in [0,1)");
  if (!(clip_norm > 0.0)) throw std::invalid_argument("clip_norm must be positive");
  if (clip_value && !(*clip_value > 0.0)) throw std::invalid_argument("clip_value must be positive");
  if (!(overfit_gap >= 0.0 && overfit_gap < 1.0)) throw std::invalid_argument("overfit_gap must lie in [0,1)");
  if (patience <= 0) throw std::invalid_argument("patience must be positive");
  if (threads <= 0) throw std::invalid_argument("threads must be positive");
}

CellConfig TrainConfig::cell_config() const {
  CellConfig c;
  c.mask_pathway = mask_pathway;
  if (variant == Variant::lvcf) {
    c.input_decay = false;
    c.hidden_decay = false;
  } else {
    c.hidden_decay = hidden_decay;
  }
  return c;
}

nlohmann::json to_json(const TrainConfig& c) {
  nlohmann::json j = {{"hidden_units", c.hidden_units}, {"learning_rate", c.learning_rate},
                      {"epochs", c.epochs},             {"batch_size", c.batch_size},
                      {"dropout", c.dropout},           {"clip_norm", c.clip_norm},
                      {"overfit_gap", c.overfit_gap},   {"patience", c.patience},
                      {"seed", c.seed},                 {"amsgrad", c.amsgrad},
                      {"variant", to_string(c.variant)}, {"hidden_decay", c.hidden_decay},
                      {"mask_pathway", c.mask_pathway}};
  j["clip_value"] = c.clip_value ? nlohmann::json(*c.clip_value) : nlohmann::json(nullptr);
  return j;
}

TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c) {
  c.hidden_units = j.value("hidden_units", c.hidden_units);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.dropout = j.value("dropout", c.dropout);
  c.clip_norm = j.value("clip_norm", c.clip_norm);
  if (j.contains("clip_value")) {
    c.clip_value = j["clip_value"].is_null() ? std::nullopt : std::optional<double>(j["clip_value"].get<double>());
  }
  c.overfit_gap = j.value("overfit_gap", c.overfit_gap);
  c.patience = j.value("patience", c.patience);
  c.seed = j.value("seed", c.seed);
  c.amsgrad = j.value("amsgrad", c.amsgrad);
  if (j.contains("variant")) c.variant = variant_from_string(j["variant"].get<std::string>());
  c.hidden_decay = j.value("hidden_decay", c.hidden_decay);
  c.mask_pathway = j.value("mask_pathway", c.mask_pathway);
  c.validate();
  return c;
}

std::vector<std::size_t> FoldPlan::indices(const Cohort& cohort, const std::vector<std::string>& ids) const {
  std::unordered_map<std::string, std::size_t> lookup;
  for (std::size_t i = 0; i < cohort.patients.size(); ++i) lookup.emplace(cohort.patients[i].patient_id, i);
  std::vector<std::size_t> out;
  out.reserve(ids.size());
  for (const auto& id : ids) {
    auto it = lookup.find(id);
    if (it == lookup.end()) throw std::out_of_range("fold plan references unknown patient " + id);
    out.push_back(it->second);
  }
  return out;
}

std::vector<std::string> FoldPlan::training_ids(int fold_index) const {
  std::vector<std::string> out;
  for (int k = 0; k < static_cast<int>(folds.size()); ++k) {
    if (k != fold_index) out.insert(out.end(), folds[k].begin(), folds[k].end());
  }
  return out;
}

nlohmann::json to_json(const FoldPlan& p) {
  return {{"format", "grudw-fold-plan"}, {"version", 1}, {"held_out", p.held_out_ids}, {"folds", p.folds}};
}

FoldPlan fold_plan_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "grudw-fold-plan") throw std::runtime_error("expected a fold plan");
  FoldPlan p;
  p.held_out_ids = j.at("held_out").get<std::vector<std::string>>();
  p.folds = j.at("folds").get<std::vector<std::vector<std::string>>>();
  return p;
}

FoldPlan make_folds(const Cohort& cohort, double held_out_fraction, std::uint64_t seed) {
  if (cohort.patients.empty()) throw std::invalid_argument("make_folds on an empty cohort");
  if (!(held_out_fraction >= 0.0 && held_out_fraction < 1.0)) {
    throw std::invalid_argument("held_out_fraction must lie in [0,1)");
  }
  std::vector<std::size_t> order(cohort.patients.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return cohort.patients[a].patient_id < cohort.patients[b].patient_id;
  });
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  const auto n_held = static_cast<std::size_t>(std::llround(held_out_fraction * static_cast<double>(order.size())));
  if (order.size() - n_held < static_cast<std::size_t>(kFolds)) {
    throw std::invalid_argument("cohort too small for " + std::to_string(kFolds) + " folds");
  }
  FoldPlan plan;
  plan.folds.resize(kFolds);
  for (std::size_t i = 0; i < n_held; ++i) plan.held_out_ids.push_back(cohort.patients[order[i]].patient_id);

  std::size_t slot = 0;
  for (bool censored : {false, true}) {
    for (std::size_t i = n_held; i < order.size(); ++i) {
      const auto& p = cohort.patients[order[i]];
      if (p.outcome.censored != censored) continue;
      plan.folds[slot % kFolds].push_back(p.patient_id);
      ++slot;
    }
  }
  return plan;
}

nlohmann::json to_json(const Checkpoint& c) {
  nlohmann::json feats = nlohmann::json::array();
  for (const auto& fi : c.features) {
    feats.push_back({{"name", fi.name},
                     {"kind", to_string(fi.kind)},
                     {"category", to_string(fi.category)},
                     {"effect_window_days", fi.effect_window_days}});
  }
  return {{"format", "grudw-checkpoint"}, {"version", 1},
          {"variant", to_string(c.variant)}, {"fold", c.fold},
          {"config", to_json(c.config)},    {"scaler", to_json(c.scaler)},
          {"features", feats},              {"params", to_json(c.params)}};
}

Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "grudw-checkpoint" || j.value("version", 0) != 1) {
    throw std::runtime_error("expected a grudw checkpoint");
  }
  Checkpoint c;
  c.variant = variant_from_string(j.at("variant").get<std::string>());
  c.fold = j.at("fold").get<int>();
  c.config = train_config_from_json(j.at("config"));
  c.scaler = feature_scaler_from_json(j.at("scaler"));
  for (const auto& fj : j.at("features")) {
    c.features.push_back({fj.at("name").get<std::string>(), feature_kind_from_string(fj.at("kind")),
                          feature_category_from_string(fj.at("category")), fj.value("effect_window_days", 0.0)});
  }
  c.params = model_params_from_json(j.at("params"));
  if (c.params.features() != c.features.size() || c.scaler.kept_features() != c.features.size()) {
    throw DimensionError("checkpoint feature counts disagree");
  }
  return c;
}

PatientSeries prepare_series(const Checkpoint& model, const PatientSeries& raw) {
  PatientSeries s = zscore_apply(model.scaler, raw);
  if (model.variant == Variant::lvcf) s = lvcf(s, std::nullopt, model.params.cell.means);
  return s;
}

std::vector<ParamTrajectory> predict_cohort(const Checkpoint& model, const Cohort& cohort,
                                            std::span<const std::size_t> indices, int threads) {
  std::vector<ParamTrajectory> out(indices.size());
  parallel_for(indices.size(), threads, [&](std::size_t k) {
    out[k] = predict(model.params, prepare_series(model, cohort.patients.at(indices[k])));
  });
  return out;
}

double dataset_loss(const ModelParams& params, std::span<const PatientSeries> data, int threads) {
  std::vector<double> sums(data.size(), 0.0);
  std::vector<std::size_t> counts(data.size(), 0);
  parallel_for(data.size(), threads, [&](std::size_t i) {
    const PatientSeries& s = data[i];
    const ParamTrajectory traj = predict(params, s);
    const double w = patient_weight(s.outcome);
    double acc = 0.0;
    for (std::size_t t = 0; t < traj.size(); ++t) {
      acc += timestep_loss(traj[t], remaining_years(s, t), s.outcome.censored, w).total;
    }
    sums[i] = acc;
    counts[i] = traj.size();
  });
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    sum += sums[i];
    count += counts[i];
  }
  if (count == 0) throw std::invalid_argument("dataset_loss: no contributing timesteps");
  return sum / static_cast<double>(count);
}

TrainResult train_prepared(std::span<const PatientSeries> train_set, std::span<const PatientSeries> val_set,
                           const Vec& means, const TrainConfig& cfg, const ParamsObserver& observe) {
  cfg.validate();
  if (train_set.empty() || val_set.empty()) throw std::invalid_argument("training and validation sets must be nonempty");
  const std::size_t features = train_set.front().features();
  const auto start = std::chrono::steady_clock::now();

  TrainResult res;
  ModelParams params = init_model_params(features, static_cast<std::size_t>(cfg.hidden_units), cfg.seed,
                                         cfg.cell_config());
  params.cell.means = means;
  require_size(means.size(), features, "imputation means");

  // Canonical order before shuffling so input file order never matters.
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return train_set[a].patient_id < train_set[b].patient_id; });
  std::vector<std::uint64_t> rank(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) rank[order[i]] = i;
  std::mt19937_64 shuffle_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);

  const AdamConfig adam_cfg{cfg.learning_rate, 0.9, 0.999, 1e-8, cfg.amsgrad};
  AdamState adam;
  Vec flat = flatten(params);
  ModelParams last_good = params;
  int consecutive_gap = 0;
  TrainingLog& log = res.log;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double norm_sum = 0.0;
    int batches = 0;
    try {
      for (std::size_t b0 = 0; b0 < order.size(); b0 += static_cast<std::size_t>(cfg.batch_size)) {
        const std::size_t b1 = std::min(order.size(), b0 + static_cast<std::size_t>(cfg.batch_size));
        const std::size_t nb = b1 - b0;
        std::vector<ForwardResult> fwd(nb);
        parallel_for(nb, cfg.threads, [&](std::size_t k) {
          ForwardOptions opts;
          std::mt19937_64 drop_rng(cfg.seed + 7919ULL * static_cast<std::uint64_t>(epoch) +
                                   104729ULL * rank[order[b0 + k]]);
          if (cfg.dropout > 0.0) {
            opts.dropout = cfg.dropout;
            opts.rng = &drop_rng;
          }
          fwd[k] = forward(params, train_set[order[b0 + k]], opts);
        });
        std::vector<BatchMember> members;
        std::vector<std::size_t> member_slot;
        for (std::size_t k = 0; k < nb; ++k) {
          if (fwd[k].skipped()) continue;
          members.push_back({&train_set[order[b0 + k]], &fwd[k].trajectory});
          member_slot.push_back(k);
        }
        if (members.empty()) continue;
        const BatchLoss loss = batch_loss(members);
        if (!std::isfinite(loss.mean)) throw NumericError("non-finite batch loss");

        std::vector<ModelParams> grads(members.size());
        parallel_for(members.size(), cfg.threads, [&](std::size_t k) {
          grads[k] = gradient(params, fwd[member_slot[k]].tape, loss.upstream[k]);
        });
        Vec g(flat.size(), 0.0);
        for (const auto& gp : grads) {
          std::size_t off = 0;
          for (const auto& t : gp.tensors()) {
            for (double v : t.values) g[off++] += v;
          }
        }
        if (cfg.clip_value) clip_values(g, *cfg.clip_value);
        norm_sum += clip_gradients(g, cfg.clip_norm);
        ++batches;
        adam_step(flat, g, adam, adam_cfg);
        unflatten(flat, params);
      }
    } catch (const NumericError& e) {
      log.diverged = true;
      log.message = std::string("diverged in epoch ") + std::to_string(epoch) + ": " + e.what();
      break;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.grad_norm = batches > 0 ? norm_sum / batches : 0.0;
    try {
      rec.train_loss = dataset_loss(params, train_set, cfg.threads);
      rec.val_loss = dataset_loss(params, val_set, cfg.threads);
    } catch (const NumericError& e) {
      log.diverged = true;
      log.message = std::string("diverged in epoch ") + std::to_string(epoch) + ": " + e.what();
      break;
    }
    rec.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    log.epochs.push_back(rec);
    if (!std::isfinite(rec.train_loss) || !std::isfinite(rec.val_loss)) {
      log.diverged = true;
      log.message = "non-finite loss in epoch " + std::to_string(epoch);
      break;
    }
    if (observe) observe(rec, params);

    const double gap = (rec.val_loss - rec.train_loss) / std::abs(rec.train_loss);
    if (gap > cfg.overfit_gap) {
      if (consecutive_gap == 0) log.gap_opened_epoch = epoch;
      ++consecutive_gap;
      if (consecutive_gap >= cfg.patience) {
        log.stopped_early = true;
        log.message = "overfit gap exceeded for " + std::to_string(consecutive_gap) + " epochs";
        break;
      }
    } else {
      consecutive_gap = 0;
      log.gap_opened_epoch.reset();
      last_good = params;
      log.returned_epoch = epoch;
    }
  }

  if (!log.stopped_early && !log.diverged) {
    last_good = params;
    log.returned_epoch = log.epochs.empty() ? -1 : log.epochs.back().epoch;
    log.gap_opened_epoch.reset();
  }
  res.model.params = std::move(last_good);
  res.model.config = cfg;
  res.model.variant = cfg.variant;
  return res;
}

TrainResult train(const Cohort& cohort, const FoldPlan& plan, int fold_index, const TrainConfig& cfg,
                  const EpochObserver& observe) {
  if (fold_index < 0 || fold_index >= static_cast<int>(plan.folds.size())) {
    throw std::invalid_argument("fold index out of range");
  }
  const auto train_idx = plan.indices(cohort, plan.training_ids(fold_index));
  const auto val_idx = plan.indices(cohort, plan.folds[static_cast<std::size_t>(fold_index)]);
  ScaledSplits splits = zscore_fit_apply(cohort, train_idx, val_idx);
  const auto features = kept_features(splits.scaler, cohort.features);
  const Vec means = empirical_means(splits.train, features);
  if (cfg.variant == Variant::lvcf) {
    for (auto& s : splits.train) s = lvcf(s, std::nullopt, means);
    for (auto& s : splits.other) s = lvcf(s, std::nullopt, means);
  }
  ParamsObserver inner;
  if (observe) {
    inner = [&](const EpochRecord& rec, const ModelParams& params) {
      Checkpoint ck;
      ck.params = params;
      ck.config = cfg;
      ck.variant = cfg.variant;
      ck.scaler = splits.scaler;
      ck.features = features;
      ck.fold = fold_index;
      observe(rec, ck);
    };
  }
  TrainResult res = train_prepared(splits.train, splits.other, means, cfg, inner);
  res.model.scaler = std::move(splits.scaler);
  res.model.features = features;
  res.model.fold = fold_index;
  return res;
}

}  // namespace grudw
