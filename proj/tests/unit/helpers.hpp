#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>
#include <string>

#include "grudw/cohort.hpp"
#include "grudw/sequence_model.hpp"

namespace testing {

inline double rel_err(double a, double b, double floor = 1e-12) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// Random irregular series: F features, T steps, per-cell missing probability.
inline grudw::PatientSeries random_series(std::mt19937_64& rng, std::size_t f, std::size_t t, double missing,
                                          bool censored, const std::string& id = "S") {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  grudw::PatientSeries s;
  s.patient_id = id;
  double now = -100.0;
  for (std::size_t k = 0; k < t; ++k) {
    s.grid_times.push_back(now);
    grudw::TimestepObservation o;
    for (std::size_t d = 0; d < f; ++d) {
      const bool seen = unif(rng) >= missing;
      o.x.push_back(seen ? normal(rng) : 0.0);
      o.m.push_back(seen ? 1.0 : 0.0);
      o.delta.push_back(0.0);
    }
    s.observations.push_back(o);
    now += unif(rng) < 0.5 ? 15.0 : 30.0;
  }
  s.outcome.terminal_time = now + 10.0 + 400.0 * unif(rng);
  s.outcome.censored = censored;
  grudw::recompute_deltas(s);
  return s;
}

// Random values in every trainable tensor; decay weights are pushed positive so
// the max(0, .) kinks are away from the evaluation point.
inline void randomize(grudw::ModelParams& p, std::mt19937_64& rng, double scale = 0.5) {
  std::uniform_real_distribution<double> u(-scale, scale);
  for (auto& t : p.tensors()) {
    for (double& v : t.values) v = u(rng);
  }
  std::uniform_real_distribution<double> pos(0.2, 1.0);
  for (double& v : p.cell.w_gx) v = pos(rng);
  for (double& v : p.cell.b_gx) v = pos(rng) * 0.1 + 0.05;
  for (double& v : p.cell.w_gh) v = pos(rng);
  for (double& v : p.cell.b_gh) v = pos(rng) * 0.1 + 0.05;
  for (double& v : p.cell.means) v = u(rng);
}

class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("grudw_test_" + std::to_string(rd()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  std::string file(const std::string& name) const { return (path_ / name).string(); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace testing
