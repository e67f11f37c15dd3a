#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "flatgrad/config_json.hpp"
#include "flatgrad/experiment.hpp"

// Sweeps one config axis over a value list, one run per (value, seed), and
// summarizes the mean and std of the final-5-epoch test accuracy per value.
// Runs are independent, so a small worker pool executes them in parallel;
// FLATGRAD_THREADS caps the pool size.

namespace flatgrad {

enum class AblationAxis { flip_ratio, kappa, schedule_mode };

inline const char* to_string(AblationAxis a) {
  switch (a) {
    case AblationAxis::flip_ratio: return "flip_ratio";
    case AblationAxis::kappa: return "kappa";
    case AblationAxis::schedule_mode: return "schedule_mode";
  }
  throw std::logic_error("to_string: bad AblationAxis");
}

inline AblationAxis ablation_axis_from_string(const std::string& s) {
  if (s == "flip_ratio") return AblationAxis::flip_ratio;
  if (s == "kappa") return AblationAxis::kappa;
  if (s == "schedule_mode") return AblationAxis::schedule_mode;
  throw ConfigError("unknown ablation axis: " + s);
}

inline ExperimentConfig apply_axis_value(ExperimentConfig cfg, AblationAxis axis,
                                         const std::string& value) {
  try {
    switch (axis) {
      case AblationAxis::flip_ratio:
        cfg.opt.flip_ratio = std::stod(value);
        break;
      case AblationAxis::kappa:
        cfg.opt.kappa = std::stod(value);
        break;
      case AblationAxis::schedule_mode:
        cfg.schedule_mode = schedule_mode_from_string(value);
        break;
    }
  } catch (const std::invalid_argument&) {
    throw ConfigError(std::string("ablation: bad value '") + value + "' for axis " +
                      to_string(axis));
  }
  cfg.output_dir = (std::filesystem::path(cfg.output_dir) /
                    (std::string(to_string(axis)) + "_" + value))
                       .string();
  validate_config(cfg);
  return cfg;
}

// Mean test accuracy over the last five epochs (fewer if the run is shorter).
inline double final_five_mean(const std::vector<EpochMetrics>& metrics) {
  if (metrics.empty()) throw std::invalid_argument("final_five_mean: no epochs");
  const std::size_t take = std::min<std::size_t>(5, metrics.size());
  double sum = 0.0;
  for (std::size_t i = metrics.size() - take; i < metrics.size(); ++i)
    sum += metrics[i].test_acc;
  return sum / static_cast<double>(take);
}

struct AblationRow {
  std::string axis_value;
  double mean = 0.0;
  double std_dev = 0.0;  // sample std over seeds, 0 for a single seed
  std::size_t n_seeds = 0;
};

inline std::size_t grid_thread_count(std::size_t jobs) {
  std::size_t threads = std::thread::hardware_concurrency();
  if (threads == 0) threads = 1;
  if (const char* env = std::getenv("FLATGRAD_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || v < 1)
      throw ConfigError(std::string("FLATGRAD_THREADS: bad value '") + env + "'");
    threads = static_cast<std::size_t>(v);
  }
  return std::max<std::size_t>(1, std::min(threads, jobs));
}

inline std::vector<AblationRow> run_ablation_grid(const ExperimentConfig& base_cfg,
                                                  AblationAxis axis,
                                                  const std::vector<std::string>& values) {
  if (values.empty()) throw ConfigError("ablation: empty value list");
  validate_config(base_cfg);

  struct Job {
    std::size_t value_index;
    std::size_t seed_index;
    ExperimentConfig cfg;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (std::size_t vi = 0; vi < values.size(); ++vi) {
    const ExperimentConfig cfg = apply_axis_value(base_cfg, axis, values[vi]);
    for (std::size_t si = 0; si < base_cfg.seeds.size(); ++si)
      jobs.push_back({vi, si, cfg, base_cfg.seeds[si]});
  }

  std::vector<std::vector<double>> final5(values.size(),
                                          std::vector<double>(base_cfg.seeds.size()));
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;

  const auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= jobs.size()) return;
      try {
        const RunResult r = run_single(jobs[i].cfg, jobs[i].seed);
        final5[jobs[i].value_index][jobs[i].seed_index] = final_five_mean(r.metrics);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        return;
      }
    }
  };

  const std::size_t thread_count = grid_thread_count(jobs.size());
  if (thread_count == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(thread_count);
    for (std::size_t t = 0; t < thread_count; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);

  std::vector<AblationRow> rows;
  rows.reserve(values.size());
  for (std::size_t vi = 0; vi < values.size(); ++vi) {
    AblationRow row;
    row.axis_value = values[vi];
    row.n_seeds = base_cfg.seeds.size();
    double sum = 0.0;
    for (double v : final5[vi]) sum += v;
    row.mean = sum / static_cast<double>(row.n_seeds);
    if (row.n_seeds >= 2) {
      double ss = 0.0;
      for (double v : final5[vi]) ss += (v - row.mean) * (v - row.mean);
      row.std_dev = std::sqrt(ss / static_cast<double>(row.n_seeds - 1));
    }
    rows.push_back(std::move(row));
  }

  std::filesystem::create_directories(base_cfg.output_dir);
  const auto path = std::filesystem::path(base_cfg.output_dir) /
                    (std::string("ablation_") + to_string(axis) + ".csv");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "axis_value,mean,std,n_seeds\n";
  for (const auto& row : rows)
    out << row.axis_value << ',' << detail::csv_double(row.mean) << ','
        << detail::csv_double(row.std_dev) << ',' << row.n_seeds << '\n';
  return rows;
}

}  // namespace flatgrad
