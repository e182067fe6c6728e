#include "grudw/commands.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <random>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "grudw/baselines.hpp"
#include "grudw/cohort.hpp"
#include "grudw/evaluation.hpp"
#include "grudw/trainer.hpp"

namespace grudw {

using nlohmann::json;

std::string fnv1a64_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const std::string& path, std::string_view content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw DataError("write failed for " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw DataError("cannot move " + tmp + " to " + path + ": " + ec.message());
  }
}

namespace {

json parse_json(const std::string& text, const std::string& path) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw DataError(path + ": " + e.what());
  }
}

// Inputs and outputs recorded in a manifest, with their digests.
class Manifest {
 public:
  explicit Manifest(std::string command) : command_(std::move(command)) {}

  std::string input(const std::string& path) {
    std::string content = read_file(path);
    inputs_.push_back({{"path", path}, {"fnv1a64", fnv1a64_hex(content)}});
    return content;
  }
  void output(const std::string& path, const std::string& content) {
    pending_.emplace_back(path, content);
    outputs_.push_back({{"path", path}, {"fnv1a64", fnv1a64_hex(content)}});
  }
  json& config() { return config_; }
  json& extra() { return extra_; }

  // Outputs land only after every step succeeded, so failures leave nothing behind.
  void commit(const std::string& manifest_path) {
    for (const auto& [path, content] : pending_) write_file_atomic(path, content);
    json j = {{"tool", "grudw"},   {"version", kToolVersion}, {"command", command_},
              {"config", config_}, {"inputs", inputs_},       {"outputs", outputs_}};
    for (auto it = extra_.begin(); it != extra_.end(); ++it) j[it.key()] = it.value();
    write_file_atomic(manifest_path, j.dump(2) + "\n");
  }

 private:
  std::string command_;
  json config_ = json::object();
  json extra_ = json::object();
  json inputs_ = json::array();
  json outputs_ = json::array();
  std::vector<std::pair<std::string, std::string>> pending_;
};

Cohort load_cohort(Manifest& m, const std::string& path) {
  std::istringstream in(m.input(path));
  try {
    return read_cohort(in);
  } catch (const std::exception& e) {
    throw DataError(path + ": " + e.what());
  }
}

std::string stem(const std::string& path) { return std::filesystem::path(path).stem().string(); }

std::vector<std::size_t> all_indices(const Cohort& c) {
  std::vector<std::size_t> out(c.patients.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = i;
  return out;
}

std::vector<std::size_t> subset_indices(const Cohort& cohort, const std::optional<FoldPlan>& plan,
                                        const std::string& subset) {
  if (subset == "all") return all_indices(cohort);
  if (!plan) throw UsageError("--subset " + subset + " needs --plan");
  if (subset == "held-out") return plan->indices(cohort, plan->held_out_ids);
  if (subset.rfind("fold:", 0) == 0) {
    const int k = std::stoi(subset.substr(5));
    if (k < 0 || k >= static_cast<int>(plan->folds.size())) throw UsageError("fold out of range: " + subset);
    return plan->indices(cohort, plan->folds[static_cast<std::size_t>(k)]);
  }
  throw UsageError("unknown subset: " + subset);
}

std::string json_dump(const json& j) { return j.dump(2) + "\n"; }

// ---- synth ----

struct SynthArgs {
  std::string spec_path, out, truth, manifest;
  int n_patients = 0;
  std::uint64_t seed = 0;
  double censoring_rate = 0.0;
  double mar_strength = 0.0;
  CLI::Option *o_n = nullptr, *o_seed = nullptr, *o_cens = nullptr, *o_mar = nullptr;
};

int cmd_synth(const SynthArgs& a, std::ostream& out) {
  Manifest m("synth");
  json spec_json = to_json(CohortSpec{});
  if (a.o_n->count()) spec_json["n_patients"] = a.n_patients;
  if (a.o_seed->count()) spec_json["seed"] = a.seed;
  if (a.o_cens->count()) spec_json["censoring_rate"] = a.censoring_rate;
  if (a.o_mar->count()) spec_json["mar_strength"] = a.mar_strength;
  if (!a.spec_path.empty()) spec_json.merge_patch(parse_json(m.input(a.spec_path), a.spec_path));
  CohortSpec spec;
  try {
    spec = cohort_spec_from_json(spec_json);
  } catch (const std::exception& e) {
    throw UsageError(std::string("invalid cohort spec: ") + e.what());
  }
  GeneratedCohort g = generate(spec);
  std::ostringstream cohort_os, truth_os;
  write_cohort(cohort_os, g.cohort);
  write_truth(truth_os, g.truth);
  const std::string truth_path = a.truth.empty() ? a.out + ".truth.json" : a.truth;
  m.output(a.out, cohort_os.str());
  m.output(truth_path, truth_os.str());
  m.config() = to_json(spec);
  m.extra()["seeds"] = {{"cohort", spec.seed}};
  m.extra()["achieved_censoring_rate"] = g.achieved_censoring_rate;
  m.extra()["warnings"] = g.warnings;
  m.commit(a.manifest.empty() ? a.out + ".manifest.json" : a.manifest);
  out << "wrote " << g.cohort.patients.size() << " patients to " << a.out << " (censoring "
      << format_number(g.achieved_censoring_rate) << ")\n";
  return kExitOk;
}

// ---- train ----

struct TrainArgs {
  std::string cohort, out, plan, config, manifest, variant = "grud", times_years;
  int fold = 0;
  double held_out_fraction = 0.2;
  std::uint64_t split_seed = 0;
  int threads = 1;
  TrainConfig flags;
  std::vector<std::pair<std::string, CLI::Option*>> set_flags;
};

json training_log_json(const TrainingLog& log) {
  json epochs = json::array();
  for (const auto& e : log.epochs) {
    epochs.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_loss", e.val_loss},
                      {"grad_norm", e.grad_norm}});
  }
  return {{"epochs", epochs},
          {"returned_epoch", log.returned_epoch},
          {"gap_opened_epoch", log.gap_opened_epoch ? json(*log.gap_opened_epoch) : json(nullptr)},
          {"stopped_early", log.stopped_early},
          {"diverged", log.diverged},
          {"message", log.message}};
}

Vec parse_list(const std::string& s) {
  Vec out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw UsageError("not a number: " + item);
    }
  }
  return out;
}

Vec years_to_days(const Vec& years) {
  Vec d;
  for (double y : years) d.push_back(365.0 * y);
  return d;
}

int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  Manifest m("train");
  const Cohort cohort = load_cohort(m, a.cohort);
  FoldPlan plan;
  bool plan_created = false;
  if (!a.plan.empty()) {
    try {
      plan = fold_plan_from_json(parse_json(m.input(a.plan), a.plan));
    } catch (const DataError&) {
      throw;
    } catch (const std::exception& e) {
      throw DataError(a.plan + ": " + e.what());
    }
  } else {
    plan = make_folds(cohort, a.held_out_fraction, a.split_seed);
    plan_created = true;
  }
  if (a.fold < 0 || a.fold >= kFolds) throw UsageError("--fold must lie in [0, " + std::to_string(kFolds) + ")");

  json extra_seeds = {{"split", a.split_seed}};
  if (a.variant == "aft") {
    const Vec times = a.times_years.empty() ? default_time_points() : years_to_days(parse_list(a.times_years));
    std::vector<std::string> warnings;
    const AftCheckpoint ck = train_aft(cohort, plan, a.fold, times, {}, 0.995, &warnings);
    m.output(a.out, json_dump(to_json(ck)));
    if (plan_created) m.output(a.out + ".folds.json", json_dump(to_json(plan)));
    m.config() = {{"variant", "aft"}, {"fold", a.fold}, {"times_days", times}};
    m.extra()["seeds"] = extra_seeds;
    m.extra()["warnings"] = warnings;
    m.commit(a.manifest.empty() ? a.out + ".manifest.json" : a.manifest);
    out << "wrote AFT checkpoint " << a.out << '\n';
    return kExitOk;
  }

  TrainConfig cfg;
  cfg.variant = variant_from_string(a.variant);
  if (cfg.variant == Variant::lvcf) cfg = gru_lvcf_variant(cfg);
  json cj = to_json(cfg);
  const json flag_json = to_json(a.flags);
  for (const auto& [name, opt] : a.set_flags) {
    if (opt->count()) cj[name] = flag_json.at(name);
  }
  if (!a.config.empty()) cj.merge_patch(parse_json(m.input(a.config), a.config));
  try {
    cfg = train_config_from_json(cj);
  } catch (const std::exception& e) {
    throw UsageError(std::string("invalid training config: ") + e.what());
  }
  cfg.threads = a.threads;

  const TrainResult res = train(cohort, plan, a.fold, cfg);
  json timing = json::array();
  for (const auto& e : res.log.epochs) timing.push_back({{"epoch", e.epoch}, {"wall_time", e.wall_time}});
  const std::string log_path = a.out + ".log.json";
  if (res.log.diverged) {
    // Diagnostics only; no checkpoint for a diverged run.
    write_file_atomic(log_path, json_dump(training_log_json(res.log)));
    err << "training diverged: " << res.log.message << '\n';
    return kExitNumeric;
  }
  m.output(a.out, json_dump(to_json(res.model)));
  m.output(log_path, json_dump(training_log_json(res.log)));
  if (plan_created) m.output(a.out + ".folds.json", json_dump(to_json(plan)));
  m.config() = to_json(cfg);
  m.config()["fold"] = a.fold;
  m.extra()["seeds"] = {{"split", a.split_seed}, {"init", cfg.seed}};
  m.extra()["cell_config"] = {{"input_decay", cfg.cell_config().input_decay},
                              {"hidden_decay", cfg.cell_config().hidden_decay},
                              {"mask_pathway", cfg.cell_config().mask_pathway}};
  m.commit(a.manifest.empty() ? a.out + ".manifest.json" : a.manifest);
  // Wall-clock timings differ between runs, so they stay outside the manifest.
  write_file_atomic(a.out + ".timing.json", json_dump(timing));
  out << "trained " << res.log.epochs.size() << " epochs; returned epoch " << res.log.returned_epoch
      << (res.log.stopped_early ? " (early stop)" : "") << '\n';
  return kExitOk;
}

// ---- eval ----

struct LoadedModel {
  std::string name;
  std::optional<Checkpoint> gru;
  std::optional<AftCheckpoint> aft;
};

LoadedModel load_model(Manifest& m, const std::string& path) {
  const json j = parse_json(m.input(path), path);
  LoadedModel lm;
  lm.name = stem(path);
  try {
    const std::string format = j.value("format", "");
    if (format == "grudw-checkpoint") {
      lm.gru = checkpoint_from_json(j);
    } else if (format == "grudw-aft-checkpoint") {
      lm.aft = aft_checkpoint_from_json(j);
    } else {
      throw DataError(path + ": not a model checkpoint");
    }
  } catch (const DataError&) {
    throw;
  } catch (const std::exception& e) {
    throw DataError(path + ": " + e.what());
  }
  return lm;
}

std::size_t model_inputs(const LoadedModel& lm) {
  return lm.gru ? lm.gru->scaler.mean.size() : lm.aft->scaler.mean.size();
}

// Predictions for `indices`, keyed by cohort index.
struct PredictorHolder {
  std::map<std::size_t, ParamTrajectory> trajectories;
  Predictor fn;
};

std::unique_ptr<PredictorHolder> make_predictor(const LoadedModel& lm, const Cohort& cohort,
                                                const std::vector<std::size_t>& indices, int threads) {
  auto holder = std::make_unique<PredictorHolder>();
  if (lm.gru) {
    auto trajs = predict_cohort(*lm.gru, cohort, indices, threads);
    for (std::size_t k = 0; k < indices.size(); ++k) holder->trajectories[indices[k]] = std::move(trajs[k]);
    PredictorHolder* h = holder.get();
    holder->fn = [h](std::size_t patient, std::size_t step) -> std::optional<WeibullParams> {
      const auto& t = h->trajectories.at(patient);
      if (step >= t.size()) return std::nullopt;
      return t[step];
    };
  } else {
    const AftCheckpoint* ck = &*lm.aft;
    holder->fn = [ck, &cohort](std::size_t patient, std::size_t step) {
      return aft_predict(*ck, cohort.patients[patient], step);
    };
  }
  return holder;
}

struct EvalArgs {
  std::vector<std::string> checkpoints;
  std::string cohort, plan, subset, out, predictions, manifest, times_years, horizons;
  bool all_post_index = false;
  double lookback_days = kDefaultLookbackDays;
  int threads = 1;
};

std::string prediction_rows_tsv(const std::vector<PredictionRow>& rows) {
  std::ostringstream os;
  os << "model\ttime_days\tpatient_id\tremaining_years\tcensored\thorizon_years\tsurvival\n";
  for (const auto& r : rows) {
    os << r.model << '\t' << format_number(r.time_days) << '\t' << r.patient_id << '\t' << format_number(r.remaining)
       << '\t' << (r.censored ? 1 : 0) << '\t' << format_number(r.horizon) << '\t' << format_number(r.survival)
       << '\n';
  }
  return os.str();
}

std::vector<PredictionRow> parse_prediction_rows(const std::string& text, const std::string& path) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line.rfind("model\t", 0) != 0) throw DataError(path + ": missing prediction header");
  std::vector<PredictionRow> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, '\t')) f.push_back(cell);
    if (f.size() != 7) throw DataError(path + ":" + std::to_string(lineno) + ": expected 7 columns");
    try {
      rows.push_back({f[0], std::stod(f[1]), f[2], std::stod(f[3]), f[4] == "1", std::stod(f[5]), std::stod(f[6])});
    } catch (const std::exception&) {
      throw DataError(path + ":" + std::to_string(lineno) + ": malformed number");
    }
  }
  return rows;
}

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  Manifest m("eval");
  const Cohort cohort = load_cohort(m, a.cohort);
  std::optional<FoldPlan> plan;
  if (!a.plan.empty()) {
    try {
      plan = fold_plan_from_json(parse_json(m.input(a.plan), a.plan));
    } catch (const DataError&) {
      throw;
    } catch (const std::exception& e) {
      throw DataError(a.plan + ": " + e.what());
    }
  }
  const std::string subset = a.subset.empty() ? (plan ? "held-out" : "all") : a.subset;
  const auto indices = subset_indices(cohort, plan, subset);

  EvalReport report;
  report.options.times_days = a.times_years.empty() ? default_time_points() : years_to_days(parse_list(a.times_years));
  if (a.all_post_index) {
    for (double t : build_grid(SamplingGrid{})) {
      if (t > 0.0 && std::find(report.options.times_days.begin(), report.options.times_days.end(), t) ==
                         report.options.times_days.end()) {
        report.options.times_days.push_back(t);
      }
    }
    std::sort(report.options.times_days.begin(), report.options.times_days.end());
  }
  if (!a.horizons.empty()) report.options.horizons_years = parse_list(a.horizons);
  report.options.lookback_days = a.lookback_days;

  std::vector<PredictionRow> rows;
  for (const auto& path : a.checkpoints) {
    const LoadedModel lm = load_model(m, path);
    if (model_inputs(lm) != cohort.features.size()) {
      throw DimensionError(path + ": checkpoint expects " + std::to_string(model_inputs(lm)) +
                           " raw features, cohort has " + std::to_string(cohort.features.size()));
    }
    const auto pred = make_predictor(lm, cohort, indices, a.threads);
    report.models.push_back(evaluate(lm.name, cohort, indices, pred->fn, report.options));
    if (!a.predictions.empty()) {
      auto r = prediction_rows(lm.name, cohort, indices, pred->fn, report.options);
      rows.insert(rows.end(), r.begin(), r.end());
    }
  }
  m.output(a.out, json_dump(to_json(report)));
  m.output(a.out + ".tsv", eval_report_tsv(report));
  if (!a.predictions.empty()) m.output(a.predictions, prediction_rows_tsv(rows));
  m.config() = {{"subset", subset},
                {"times_days", report.options.times_days},
                {"horizons_years", report.options.horizons_years},
                {"lookback_days", report.options.lookback_days}};
  m.commit(a.manifest.empty() ? a.out + ".manifest.json" : a.manifest);
  out << "evaluated " << report.models.size() << " model(s) on " << indices.size() << " patients\n";
  return kExitOk;
}

// ---- recalibrate ----

struct RecalArgs {
  std::string cv_report, predictions, out, manifest;
  bool per_horizon = false;
};

std::vector<CalibrationBin> bins_for(const std::vector<PredictionRow>& rows, double horizon, bool after,
                                     const LinearMap& map) {
  Vec pred, rem;
  std::vector<bool> cens;
  for (const auto& r : rows) {
    if (r.horizon != horizon) continue;
    pred.push_back(after ? map.apply(r.survival) : r.survival);
    rem.push_back(r.remaining);
    cens.push_back(r.censored);
  }
  if (pred.size() < static_cast<std::size_t>(kCalibrationBins)) return {};
  return calibration_bins(pred, rem, cens, horizon);
}

int cmd_recalibrate(const RecalArgs& a, std::ostream& out, std::ostream& err) {
  Manifest m("recalibrate");
  EvalReport cv;
  try {
    cv = eval_report_from_json(parse_json(m.input(a.cv_report), a.cv_report));
  } catch (const DataError&) {
    throw;
  } catch (const std::exception& e) {
    throw DataError(a.cv_report + ": " + e.what());
  }
  auto rows = parse_prediction_rows(m.input(a.predictions), a.predictions);

  const Vec& horizons = cv.options.horizons_years;
  auto pooled = [&](std::optional<std::size_t> only) {
    std::vector<CalibrationBin> bins;
    for (const auto& model : cv.models) {
      for (const auto& t : model.times) {
        for (std::size_t h = 0; h < t.calibration.size(); ++h) {
          if (only && h != *only) continue;
          bins.insert(bins.end(), t.calibration[h].begin(), t.calibration[h].end());
        }
      }
    }
    return recalibrate_fit(bins);
  };
  std::map<double, LinearMap> maps;
  json map_json = json::array();
  const LinearMap single = pooled(std::nullopt);
  for (std::size_t h = 0; h < horizons.size(); ++h) {
    maps[horizons[h]] = a.per_horizon ? pooled(h) : single;
  }
  for (const auto& [h, map] : maps) {
    if (map.identity_fallback) err << "horizon " << format_number(h) << ": " << map.warning << '\n';
    map_json.push_back({{"horizon_years", h}, {"slope", map.slope}, {"intercept", map.intercept},
                        {"identity_fallback", map.identity_fallback}});
  }

  std::vector<PredictionRow> recal = rows;
  std::set<double> row_horizons;
  for (auto& r : recal) {
    const auto it = maps.find(r.horizon);
    const LinearMap& map = it != maps.end() ? it->second : single;
    r.survival = map.apply(r.survival);
    row_horizons.insert(r.horizon);
  }

  std::ostringstream table;
  table << "horizon_years\tbin\tn\tpredicted_before\tobserved_before\tpredicted_after\tobserved_after\n";
  for (double h : row_horizons) {
    const auto it = maps.find(h);
    const LinearMap& map = it != maps.end() ? it->second : single;
    const auto before = bins_for(rows, h, false, map);
    const auto after = bins_for(rows, h, true, map);
    for (std::size_t b = 0; b < before.size(); ++b) {
      table << format_number(h) << '\t' << b << '\t' << before[b].n << '\t' << format_number(before[b].mean_predicted)
            << '\t' << format_metric(before[b].observed) << '\t' << format_number(after[b].mean_predicted) << '\t'
            << format_metric(after[b].observed) << '\n';
    }
  }
  m.output(a.out, prediction_rows_tsv(recal));
  m.output(a.out + ".calibration.tsv", table.str());
  m.config() = {{"per_horizon", a.per_horizon}};
  m.extra()["maps"] = map_json;
  m.commit(a.manifest.empty() ? a.out + ".manifest.json" : a.manifest);
  out << "recalibrated " << recal.size() << " predictions";
  if (!a.per_horizon) out << " (slope " << format_number(single.slope) << ", intercept " << format_number(single.intercept) << ")";
  out << '\n';
  return kExitOk;
}

// ---- export-trajectory ----

struct ExportArgs {
  std::string checkpoint, cohort, plan, ids, out, manifest;
  CLI::Option* o_ids = nullptr;
  int n = 50;
  std::uint64_t seed = 0;
  double reference_years = -3.0;
  int threads = 1;
};

int cmd_export(const ExportArgs& a, std::ostream& out) {
  Manifest m("export-trajectory");
  const Cohort cohort = load_cohort(m, a.cohort);
  const LoadedModel lm = load_model(m, a.checkpoint);
  if (!lm.gru) throw UsageError("export-trajectory needs a recurrent model checkpoint");
  if (model_inputs(lm) != cohort.features.size()) throw DimensionError("checkpoint and cohort feature counts differ");

  std::vector<std::size_t> selected;
  if (a.o_ids->count()) {
    std::stringstream ss(a.ids);
    std::string id;
    while (std::getline(ss, id, ',')) {
      if (id.empty()) continue;
      try {
        selected.push_back(cohort.index_of(id));
      } catch (const std::exception&) {
        throw DataError("unknown patient id: " + id);
      }
    }
  } else {
    std::vector<std::size_t> pool;
    if (!a.plan.empty()) {
      const FoldPlan plan = fold_plan_from_json(parse_json(m.input(a.plan), a.plan));
      pool = plan.indices(cohort, plan.held_out_ids);
    } else {
      pool = all_indices(cohort);
    }
    std::erase_if(pool, [&](std::size_t i) { return cohort.patients[i].outcome.censored; });
    std::sort(pool.begin(), pool.end(),
              [&](std::size_t x, std::size_t y) { return cohort.patients[x].patient_id < cohort.patients[y].patient_id; });
    std::mt19937_64 rng(a.seed);
    std::shuffle(pool.begin(), pool.end(), rng);
    pool.resize(std::min<std::size_t>(pool.size(), static_cast<std::size_t>(std::max(0, a.n))));
    selected = pool;
  }

  const double ref_days = 365.0 * a.reference_years;
  const auto trajs = predict_cohort(*lm.gru, cohort, selected, a.threads);
  std::ostringstream os;
  os << "patient_id\ttime_days\tkappa\tlambda\tpmst\tq25\ts1\ts2\ts3\ts4\ts5\thazard_1y\tcumhaz_1y\tadjusted_cumhaz_1y\n";
  for (std::size_t k = 0; k < selected.size(); ++k) {
    const PatientSeries& s = cohort.patients[selected[k]];
    std::vector<TrajectoryRecord> recs;
    try {
      recs = trajectory_export(trajs[k], s.grid_times, ref_days);
    } catch (const DomainError& e) {
      throw DataError(s.patient_id + ": " + e.what());
    }
    for (const auto& r : recs) {
      os << s.patient_id << '\t' << format_number(r.time_days) << '\t' << format_number(r.kappa) << '\t'
         << format_number(r.lambda) << '\t' << format_number(r.pmst) << '\t' << format_number(r.q25);
      for (double v : r.survival) os << '\t' << format_number(v);
      os << '\t' << format_number(r.hazard_1y) << '\t' << format_number(r.cumhaz_1y) << '\t'
         << format_number(r.adjusted_cumhaz_1y) << '\n';
    }
  }
  m.output(a.out, os.str());
  m.config() = {{"reference_days", ref_days}, {"n", a.n}, {"selection_seed", a.seed}};
  m.commit(a.manifest.empty() ? a.out + ".manifest.json" : a.manifest);
  out << "exported " << selected.size() << " trajectories to " << a.out << '\n';
  return kExitOk;
}

// ---- report ----

struct ReportArgs {
  std::string report, out;
};

int cmd_report(const ReportArgs& a, std::ostream& out) {
  Manifest m("report");
  EvalReport r;
  try {
    r = eval_report_from_json(parse_json(m.input(a.report), a.report));
  } catch (const DataError&) {
    throw;
  } catch (const std::exception& e) {
    throw DataError(a.report + ": " + e.what());
  }
  std::ostringstream os;
  os << "# summary\n" << eval_report_tsv(r);
  os << "\n# survival_at_event\nmodel\ttime_days";
  for (int b = 0; b < kHistogramBins; ++b) os << "\tbin" << b;
  os << '\n';
  for (const auto& mr : r.models) {
    for (const auto& t : mr.times) {
      if (!t.survival_at_event) continue;
      os << mr.name << '\t' << format_number(t.time_days);
      for (auto c : t.survival_at_event->counts) os << '\t' << c;
      os << '\n';
    }
  }
  os << "\n# calibration\nmodel\ttime_days\thorizon_years\tbin\tn\tpredicted\tobserved\n";
  for (const auto& mr : r.models) {
    for (const auto& t : mr.times) {
      for (std::size_t h = 0; h < t.calibration.size(); ++h) {
        for (std::size_t b = 0; b < t.calibration[h].size(); ++b) {
          const auto& bin = t.calibration[h][b];
          os << mr.name << '\t' << format_number(t.time_days) << '\t' << format_number(r.options.horizons_years[h])
             << '\t' << b << '\t' << bin.n << '\t' << format_number(bin.mean_predicted) << '\t'
             << format_metric(bin.observed) << '\n';
        }
      }
    }
  }
  os << "\n# missingness_error_correlation\nmodel\ttime_days\tcategory\tn\tlog_ratio\toffset_ratio\n";
  for (const auto& mr : r.models) {
    for (const auto& t : mr.times) {
      for (const auto& mc : t.missingness) {
        os << mr.name << '\t' << format_number(t.time_days) << '\t' << to_string(mc.category) << '\t' << mc.n << '\t'
           << format_metric(mc.log_ratio) << '\t' << format_metric(mc.offset_ratio) << '\n';
      }
    }
  }
  m.output(a.out, os.str());
  m.commit(a.out + ".manifest.json");
  out << "wrote " << a.out << '\n';
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"GRU-D-Weibull time-to-event engine", "grudw"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "generate a synthetic cohort and its ground-truth sidecar");
  synth->add_option("--spec", sa.spec_path, "cohort spec JSON; its fields override flags");
  synth->add_option("--out", sa.out, "cohort file (JSON lines)")->required();
  synth->add_option("--truth", sa.truth, "truth sidecar (default <out>.truth.json)");
  synth->add_option("--manifest", sa.manifest, "manifest path (default <out>.manifest.json)");
  sa.o_n = synth->add_option("--n_patients", sa.n_patients);
  sa.o_seed = synth->add_option("--seed", sa.seed);
  sa.o_cens = synth->add_option("--censoring_rate", sa.censoring_rate);
  sa.o_mar = synth->add_option("--mar_strength", sa.mar_strength);

  TrainArgs ta;
  auto* trn = app.add_subcommand("train", "train one fold");
  trn->add_option("--cohort", ta.cohort)->required();
  trn->add_option("--out", ta.out, "checkpoint path")->required();
  trn->add_option("--fold", ta.fold, "validation fold (0-4)");
  trn->add_option("--plan", ta.plan, "fold plan JSON; created and written to <out>.folds.json when absent");
  trn->add_option("--held_out_fraction", ta.held_out_fraction);
  trn->add_option("--split_seed", ta.split_seed);
  trn->add_option("--config", ta.config, "training config JSON; its fields override flags");
  trn->add_option("--variant", ta.variant, "grud | lvcf | aft")->check(CLI::IsMember({"grud", "lvcf", "aft"}));
  trn->add_option("--times", ta.times_years, "AFT fit time points, comma-separated years");
  trn->add_option("--manifest", ta.manifest);
  trn->add_option("--threads", ta.threads)->check(CLI::PositiveNumber);
  ta.set_flags = {
      {"hidden_units", trn->add_option("--hidden_units", ta.flags.hidden_units)},
      {"learning_rate", trn->add_option("--learning_rate", ta.flags.learning_rate)},
      {"epochs", trn->add_option("--epochs", ta.flags.epochs)},
      {"batch_size", trn->add_option("--batch_size", ta.flags.batch_size)},
      {"dropout", trn->add_option("--dropout", ta.flags.dropout)},
      {"clip_norm", trn->add_option("--clip_norm", ta.flags.clip_norm)},
      {"clip_value", trn->add_option("--clip_value", ta.flags.clip_value)},
      {"overfit_gap", trn->add_option("--overfit_gap", ta.flags.overfit_gap)},
      {"patience", trn->add_option("--patience", ta.flags.patience)},
      {"seed", trn->add_option("--seed", ta.flags.seed)},
      {"amsgrad", trn->add_option("--amsgrad", ta.flags.amsgrad)},
      {"hidden_decay", trn->add_option("--hidden_decay", ta.flags.hidden_decay)},
      {"mask_pathway", trn->add_option("--mask_pathway", ta.flags.mask_pathway)},
  };

  EvalArgs ea;
  auto* ev = app.add_subcommand("eval", "evaluate checkpoints at follow-up time points");
  ev->add_option("--checkpoint", ea.checkpoints, "repeatable")->required();
  ev->add_option("--cohort", ea.cohort)->required();
  ev->add_option("--plan", ea.plan);
  ev->add_option("--subset", ea.subset, "held-out | all | fold:K");
  ev->add_option("--times", ea.times_years, "comma-separated years (default -3..4)");
  ev->add_flag("--all_post_index", ea.all_post_index, "add every post-index grid step");
  ev->add_option("--horizons", ea.horizons, "comma-separated years (default 1..5)");
  ev->add_option("--lookback_days", ea.lookback_days);
  ev->add_option("--out", ea.out, "report JSON; a TSV summary goes to <out>.tsv")->required();
  ev->add_option("--predictions", ea.predictions, "per-patient horizon survival TSV");
  ev->add_option("--manifest", ea.manifest);
  ev->add_option("--threads", ea.threads)->check(CLI::PositiveNumber);

  RecalArgs ra;
  auto* rc = app.add_subcommand("recalibrate", "fit a linear recalibration on a CV report and apply it");
  rc->add_option("--cv_report", ra.cv_report)->required();
  rc->add_option("--predictions", ra.predictions, "held-out predictions TSV from eval")->required();
  rc->add_option("--out", ra.out)->required();
  rc->add_flag("--per_horizon", ra.per_horizon);
  rc->add_option("--manifest", ra.manifest);

  ExportArgs xa;
  auto* ex = app.add_subcommand("export-trajectory", "per-step Weibull trajectories for selected patients");
  ex->add_option("--checkpoint", xa.checkpoint)->required();
  ex->add_option("--cohort", xa.cohort)->required();
  ex->add_option("--plan", xa.plan, "draw from held-out patients");
  xa.o_ids = ex->add_option("--ids", xa.ids, "comma-separated patient ids");
  ex->add_option("--n", xa.n, "random uncensored patients when --ids is absent");
  ex->add_option("--seed", xa.seed);
  ex->add_option("--reference_years", xa.reference_years, "baseline step for the adjusted cumulative hazard");
  ex->add_option("--out", xa.out)->required();
  ex->add_option("--manifest", xa.manifest);
  ex->add_option("--threads", xa.threads)->check(CLI::PositiveNumber);

  ReportArgs pa;
  auto* rp = app.add_subcommand("report", "render an evaluation report as plain tables");
  rp->add_option("--report", pa.report)->required();
  rp->add_option("--out", pa.out)->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << kToolVersion << '\n';
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (*synth) return cmd_synth(sa, out);
    if (*trn) return cmd_train(ta, out, err);
    if (*ev) return cmd_eval(ea, out);
    if (*rc) return cmd_recalibrate(ra, out, err);
    if (*ex) return cmd_export(xa, out);
    if (*rp) return cmd_report(pa, out);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const DimensionError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const json::exception& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace grudw
