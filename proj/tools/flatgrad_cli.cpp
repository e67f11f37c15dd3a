#include <cstdint>
#include <exception>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "flatgrad/flatgrad.hpp"

// Command line front end: train runs one config (optionally narrowed to a
// single seed), ablate sweeps one axis, plot renders charts from finished
// runs. Exit codes: 0 ok, 2 config problem, 1 anything else.

namespace {

constexpr const char* kVersion = "flatgrad 0.1.0";

int cmd_train(const std::string& config_path, std::int64_t seed_override,
              const std::string& out_override, const std::string& optimizer_override,
              bool log_flips) {
  flatgrad::ExperimentConfig cfg = flatgrad::load_config(config_path);
  if (seed_override >= 0) cfg.seeds = {static_cast<std::uint64_t>(seed_override)};
  if (!out_override.empty()) cfg.output_dir = out_override;
  if (!optimizer_override.empty())
    cfg.optimizer = flatgrad::optimizer_kind_from_string(optimizer_override);
  if (log_flips) cfg.log_flips = true;
  flatgrad::validate_config(cfg);

  const auto results = flatgrad::run_experiment(cfg);
  for (const auto& r : results) {
    const auto& last = r.metrics.back();
    std::cout << r.run_dir.string() << "  final test_acc "
              << flatgrad::detail::csv_double(last.test_acc) << "\n";
  }
  return 0;
}

int cmd_ablate(const std::string& config_path, const std::string& axis_name,
               const std::string& values_csv) {
  flatgrad::ExperimentConfig cfg = flatgrad::load_config(config_path);
  const auto axis = flatgrad::ablation_axis_from_string(axis_name);

  std::vector<std::string> values;
  std::string cell;
  std::stringstream ss(values_csv);
  while (std::getline(ss, cell, ','))
    if (!cell.empty()) values.push_back(cell);
  if (values.empty()) throw flatgrad::ConfigError("ablate: --values is empty");

  const auto rows = flatgrad::run_ablation_grid(cfg, axis, values);
  std::cout << "axis_value,mean,std,n_seeds\n";
  for (const auto& row : rows)
    std::cout << row.axis_value << ',' << flatgrad::detail::csv_double(row.mean) << ','
              << flatgrad::detail::csv_double(row.std_dev) << ',' << row.n_seeds << "\n";
  return 0;
}

int cmd_plot(const std::vector<std::string>& run_dirs) {
  std::vector<std::filesystem::path> dirs(run_dirs.begin(), run_dirs.end());
  const auto written = flatgrad::emit_plots(dirs, dirs.front());
  for (const auto& p : written) std::cout << p.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Noise-compensated sharpness-aware training toolkit"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(0, 1);

  std::string config_path, out_override, optimizer_override, axis_name, values_csv;
  std::int64_t seed_override = -1;
  bool log_flips = false;
  std::vector<std::string> run_dirs;

  auto* train = app.add_subcommand("train", "Run training for every configured seed");
  train->add_option("--config", config_path, "JSON experiment config")->required();
  train->add_option("--seed", seed_override, "Run only this seed");
  train->add_option("--out", out_override, "Override output directory");
  train->add_option("--optimizer", optimizer_override, "Override optimizer")
      ->check(CLI::IsMember({"sgd", "sam", "ncsam"}));
  train->add_flag("--log-flips", log_flips, "Write per-iteration flips.csv");

  auto* ablate = app.add_subcommand("ablate", "Sweep one config axis");
  ablate->add_option("--config", config_path, "JSON experiment config")->required();
  ablate->add_option("--axis", axis_name, "Axis to sweep")
      ->required()
      ->check(CLI::IsMember({"flip_ratio", "kappa", "schedule_mode"}));
  ablate->add_option("--values", values_csv, "Comma-separated axis values")->required();

  auto* plot = app.add_subcommand("plot", "Render SVG charts from run directories");
  plot->add_option("--run", run_dirs, "Run directory (repeatable)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (train->parsed())
      return cmd_train(config_path, seed_override, out_override, optimizer_override,
                       log_flips);
    if (ablate->parsed()) return cmd_ablate(config_path, axis_name, values_csv);
    if (plot->parsed()) return cmd_plot(run_dirs);
    std::cout << app.help();
    return 0;
  } catch (const flatgrad::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
