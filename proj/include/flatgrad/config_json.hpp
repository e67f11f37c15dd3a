#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "flatgrad/dataset_io.hpp"
#include "flatgrad/noise.hpp"
#include "flatgrad/optimizer.hpp"

// Experiment configuration: JSON in, validated struct out, and back again for
// the config echo a run writes. Unknown keys are rejected at every level so a
// typo cannot silently fall back to a default.

namespace flatgrad {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class DatasetKind { two_moons, gaussian_blobs, idx_files };
enum class ScheduleMode { progressive, constant_scale };
enum class LrScheduleKind { constant, step_decay };

inline const char* to_string(DatasetKind k) {
  switch (k) {
    case DatasetKind::two_moons: return "two_moons";
    case DatasetKind::gaussian_blobs: return "gaussian_blobs";
    case DatasetKind::idx_files: return "idx_files";
  }
  throw std::logic_error("to_string: bad DatasetKind");
}

inline DatasetKind dataset_kind_from_string(const std::string& s) {
  if (s == "two_moons") return DatasetKind::two_moons;
  if (s == "gaussian_blobs") return DatasetKind::gaussian_blobs;
  if (s == "idx_files") return DatasetKind::idx_files;
  throw ConfigError("unknown dataset kind: " + s);
}

inline const char* to_string(ScheduleMode m) {
  return m == ScheduleMode::progressive ? "progressive" : "constant_scale";
}

inline ScheduleMode schedule_mode_from_string(const std::string& s) {
  if (s == "progressive") return ScheduleMode::progressive;
  if (s == "constant_scale") return ScheduleMode::constant_scale;
  throw ConfigError("unknown schedule_mode: " + s);
}

struct DatasetConfig {
  DatasetKind kind = DatasetKind::gaussian_blobs;
  std::size_t samples = 1000;
  std::size_t dim = 2;
  std::size_t classes = 2;
  double separation = 3.0;    // gaussian_blobs center distance
  double cluster_std = 1.0;   // gaussian_blobs spread
  double noise_std = 0.1;     // two_moons jitter
  double train_fraction = 0.8;
  std::string images, labels; // idx_files: train pair
  std::string test_images, test_labels;
};

struct LrSchedule {
  LrScheduleKind kind = LrScheduleKind::step_decay;
  std::vector<int> milestones;  // empty: 50% and 75% of epochs
  double factor = 0.1;
};

struct ExperimentConfig {
  DatasetConfig dataset;
  NoiseSpec noise;            // noise.seed derived from run seed unless pinned
  bool noise_seed_pinned = false;
  std::vector<std::size_t> hidden{64, 64};
  std::uint64_t model_init_seed = 0;
  bool model_seed_pinned = false;
  OptimizerKind optimizer = OptimizerKind::ncsam;
  OptimizerConfig opt;        // warmup/ramp epochs < 0 mean derive from epochs
  int epochs = 60;
  std::size_t batch_size = 128;
  LrSchedule lr_schedule;
  ScheduleMode schedule_mode = ScheduleMode::progressive;
  std::vector<std::uint64_t> seeds{1};
  std::string output_dir = "runs";
  bool log_flips = false;
};

// Warm-up defaults to the first quarter of training, the ramp to the rest.
inline int resolved_warmup_epochs(const ExperimentConfig& cfg) {
  return cfg.opt.warmup_epochs >= 0 ? cfg.opt.warmup_epochs : cfg.epochs / 4;
}

inline int resolved_ramp_epochs(const ExperimentConfig& cfg) {
  if (cfg.opt.ramp_epochs >= 1) return cfg.opt.ramp_epochs;
  return std::max(1, cfg.epochs - resolved_warmup_epochs(cfg));
}

inline std::vector<int> resolved_milestones(const ExperimentConfig& cfg) {
  if (cfg.lr_schedule.kind == LrScheduleKind::constant) return {};
  if (!cfg.lr_schedule.milestones.empty()) return cfg.lr_schedule.milestones;
  return {cfg.epochs / 2, cfg.epochs * 3 / 4};
}

inline double lr_at_epoch(const ExperimentConfig& cfg, int epoch) {
  double lr = cfg.opt.learning_rate;
  for (int m : resolved_milestones(cfg))
    if (epoch >= m) lr *= cfg.lr_schedule.factor;
  return lr;
}

namespace detail {

inline void require_keys(const nlohmann::json& j, const char* ctx,
                         std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(std::string(ctx) + ": expected a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* k : allowed)
      if (it.key() == k) {
        known = true;
        break;
      }
    if (!known)
      throw ConfigError(std::string(ctx) + ": unknown key '" + it.key() + "'");
  }
}

}  // namespace detail

inline DatasetConfig parse_dataset_config(const nlohmann::json& j) {
  detail::require_keys(j, "dataset",
                       {"kind", "samples", "dim", "classes", "separation", "cluster_std",
                        "noise_std", "train_fraction", "images", "labels", "test_images",
                        "test_labels"});
  DatasetConfig d;
  d.kind = dataset_kind_from_string(j.at("kind").get<std::string>());
  d.samples = j.value("samples", d.samples);
  d.dim = j.value("dim", d.dim);
  d.classes = j.value("classes", d.classes);
  d.separation = j.value("separation", d.separation);
  d.cluster_std = j.value("cluster_std", d.cluster_std);
  d.noise_std = j.value("noise_std", d.noise_std);
  d.train_fraction = j.value("train_fraction", d.train_fraction);
  d.images = j.value("images", d.images);
  d.labels = j.value("labels", d.labels);
  d.test_images = j.value("test_images", d.test_images);
  d.test_labels = j.value("test_labels", d.test_labels);
  if (d.kind == DatasetKind::two_moons) {
    d.classes = 2;
    d.dim = 2;
  }
  return d;
}

inline NoiseSpec parse_noise_spec(const nlohmann::json& j, bool& seed_pinned) {
  detail::require_keys(j, "noise",
                       {"kind", "rate", "beta", "gamma", "pair_map", "seed",
                        "include_self_flip"});
  NoiseSpec n;
  n.kind = noise_kind_from_string(j.value("kind", std::string("symmetric")));
  n.rate = j.value("rate", 0.0);
  n.beta = j.value("beta", 1.0);
  n.gamma = j.value("gamma", 1.0);
  n.include_self_flip = j.value("include_self_flip", false);
  if (j.contains("pair_map")) n.pair_map = j.at("pair_map").get<std::vector<int>>();
  seed_pinned = j.contains("seed");
  if (seed_pinned) n.seed = j.at("seed").get<std::uint64_t>();
  return n;
}

inline ExperimentConfig parse_config_json(const nlohmann::json& j) {
  detail::require_keys(j, "config",
                       {"dataset", "noise", "model", "optimizer", "epochs", "batch_size",
                        "lr_schedule", "schedule_mode", "seeds", "output_dir",
                        "log_flips"});
  ExperimentConfig cfg;
  if (!j.contains("dataset")) throw ConfigError("config: missing 'dataset'");
  cfg.dataset = parse_dataset_config(j.at("dataset"));
  if (j.contains("noise")) cfg.noise = parse_noise_spec(j.at("noise"), cfg.noise_seed_pinned);

  if (j.contains("model")) {
    const auto& m = j.at("model");
    detail::require_keys(m, "model", {"hidden", "activation", "init_seed"});
    if (m.contains("hidden")) cfg.hidden = m.at("hidden").get<std::vector<std::size_t>>();
    if (m.contains("activation") && m.at("activation").get<std::string>() != "relu")
      throw ConfigError("model: only 'relu' activation is supported");
    cfg.model_seed_pinned = m.contains("init_seed");
    if (cfg.model_seed_pinned) cfg.model_init_seed = m.at("init_seed").get<std::uint64_t>();
  }

  if (j.contains("optimizer")) {
    const auto& o = j.at("optimizer");
    detail::require_keys(o, "optimizer",
                         {"kind", "learning_rate", "momentum", "weight_decay",
                          "sam_radius", "kappa", "warmup_epochs", "ramp_epochs",
                          "flip_ratio", "warmup_optimizer", "normalize_noise_grad",
                          "correction_sign"});
    cfg.optimizer = optimizer_kind_from_string(o.value("kind", std::string("ncsam")));
    auto& c = cfg.opt;
    c.learning_rate = o.value("learning_rate", c.learning_rate);
    c.momentum = o.value("momentum", c.momentum);
    c.weight_decay = o.value("weight_decay", c.weight_decay);
    c.sam_radius = o.value("sam_radius", c.sam_radius);
    c.kappa = o.value("kappa", c.kappa);
    c.warmup_epochs = o.value("warmup_epochs", -1);
    c.ramp_epochs = o.value("ramp_epochs", -1);
    c.flip_ratio = o.value("flip_ratio", c.flip_ratio);
    c.warmup_optimizer =
        warmup_optimizer_from_string(o.value("warmup_optimizer", std::string("sgd")));
    c.normalize_noise_grad = o.value("normalize_noise_grad", c.normalize_noise_grad);
    c.correction_sign = o.value("correction_sign", c.correction_sign);
  } else {
    cfg.opt.warmup_epochs = -1;
    cfg.opt.ramp_epochs = -1;
  }

  cfg.epochs = j.value("epochs", cfg.epochs);
  cfg.batch_size = j.value("batch_size", cfg.batch_size);

  if (j.contains("lr_schedule")) {
    const auto& l = j.at("lr_schedule");
    detail::require_keys(l, "lr_schedule", {"kind", "milestones", "factor"});
    const auto kind = l.value("kind", std::string("step_decay"));
    if (kind == "constant")
      cfg.lr_schedule.kind = LrScheduleKind::constant;
    else if (kind == "step_decay")
      cfg.lr_schedule.kind = LrScheduleKind::step_decay;
    else
      throw ConfigError("lr_schedule: unknown kind " + kind);
    if (l.contains("milestones"))
      cfg.lr_schedule.milestones = l.at("milestones").get<std::vector<int>>();
    cfg.lr_schedule.factor = l.value("factor", cfg.lr_schedule.factor);
  }

  if (j.contains("schedule_mode"))
    cfg.schedule_mode = schedule_mode_from_string(j.at("schedule_mode").get<std::string>());
  if (j.contains("seeds")) cfg.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  cfg.output_dir = j.value("output_dir", cfg.output_dir);
  cfg.log_flips = j.value("log_flips", cfg.log_flips);
  return cfg;
}

inline void validate_config(const ExperimentConfig& cfg) {
  const auto& d = cfg.dataset;
  if (d.classes < 2) throw ConfigError("dataset: classes must be >= 2");
  if (d.kind != DatasetKind::idx_files) {
    if (d.samples < d.classes) throw ConfigError("dataset: samples < classes");
    if (d.dim == 0) throw ConfigError("dataset: dim must be >= 1");
  } else {
    for (const auto& p : {d.images, d.labels}) {
      if (p.empty()) throw ConfigError("dataset: idx_files needs 'images' and 'labels'");
      if (!std::filesystem::exists(p)) throw ConfigError("dataset: missing file " + p);
    }
    for (const auto& p : {d.test_images, d.test_labels})
      if (!p.empty() && !std::filesystem::exists(p))
        throw ConfigError("dataset: missing file " + p);
  }
  if (d.train_fraction <= 0.0 || d.train_fraction >= 1.0)
    throw ConfigError("dataset: train_fraction must be in (0, 1)");
  if (d.kind == DatasetKind::gaussian_blobs && (d.separation < 0.0 || d.cluster_std < 0.0))
    throw ConfigError("dataset: negative separation or cluster_std");
  if (d.kind == DatasetKind::two_moons && d.noise_std < 0.0)
    throw ConfigError("dataset: negative noise_std");

  if (cfg.noise.rate < 0.0 || cfg.noise.rate > 1.0)
    throw ConfigError("noise: rate must be in [0, 1]");
  if (cfg.noise.kind == NoiseKind::beta_mixture &&
      (cfg.noise.beta <= 0.0 || cfg.noise.gamma <= 0.0))
    throw ConfigError("noise: beta and gamma must be positive");

  if (cfg.hidden.empty()) throw ConfigError("model: hidden layer list is empty");
  for (std::size_t w : cfg.hidden)
    if (w == 0) throw ConfigError("model: zero-width hidden layer");

  const auto& o = cfg.opt;
  if (o.learning_rate <= 0.0) throw ConfigError("optimizer: learning_rate must be > 0");
  if (o.momentum < 0.0 || o.momentum >= 1.0)
    throw ConfigError("optimizer: momentum must be in [0, 1)");
  if (o.weight_decay < 0.0) throw ConfigError("optimizer: negative weight_decay");
  if (o.sam_radius < 0.0) throw ConfigError("optimizer: negative sam_radius");
  if (o.kappa < 0.0) throw ConfigError("optimizer: negative kappa");
  if (o.flip_ratio <= 0.0 || o.flip_ratio > 1.0)
    throw ConfigError("optimizer: flip_ratio must be in (0, 1]");
  if (o.correction_sign != 1 && o.correction_sign != -1)
    throw ConfigError("optimizer: correction_sign must be +1 or -1");

  if (cfg.epochs < 1) throw ConfigError("epochs must be >= 1");
  if (cfg.batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (resolved_warmup_epochs(cfg) > cfg.epochs)
    throw ConfigError("optimizer: warmup_epochs exceeds epochs");
  if (cfg.lr_schedule.factor <= 0.0) throw ConfigError("lr_schedule: factor must be > 0");
  for (int m : cfg.lr_schedule.milestones)
    if (m < 0) throw ConfigError("lr_schedule: negative milestone");
  if (cfg.seeds.empty()) throw ConfigError("seeds list is empty");
  if (cfg.output_dir.empty()) throw ConfigError("output_dir is empty");
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config parse error in " + path.string() + ": " + e.what());
  }
  try {
    ExperimentConfig cfg = parse_config_json(j);
    validate_config(cfg);
    return cfg;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config error in " + path.string() + ": " + e.what());
  }
}

inline nlohmann::json config_to_json(const ExperimentConfig& cfg) {
  nlohmann::json d{{"kind", to_string(cfg.dataset.kind)},
                   {"train_fraction", cfg.dataset.train_fraction}};
  switch (cfg.dataset.kind) {
    case DatasetKind::two_moons:
      d["samples"] = cfg.dataset.samples;
      d["noise_std"] = cfg.dataset.noise_std;
      break;
    case DatasetKind::gaussian_blobs:
      d["samples"] = cfg.dataset.samples;
      d["dim"] = cfg.dataset.dim;
      d["classes"] = cfg.dataset.classes;
      d["separation"] = cfg.dataset.separation;
      d["cluster_std"] = cfg.dataset.cluster_std;
      break;
    case DatasetKind::idx_files:
      d["images"] = cfg.dataset.images;
      d["labels"] = cfg.dataset.labels;
      if (!cfg.dataset.test_images.empty()) {
        d["test_images"] = cfg.dataset.test_images;
        d["test_labels"] = cfg.dataset.test_labels;
      }
      break;
  }

  nlohmann::json n = noise_spec_to_json(cfg.noise);
  if (!cfg.noise_seed_pinned) n.erase("seed");

  nlohmann::json m{{"hidden", cfg.hidden}, {"activation", "relu"}};
  if (cfg.model_seed_pinned) m["init_seed"] = cfg.model_init_seed;

  nlohmann::json o{{"kind", to_string(cfg.optimizer)},
                   {"learning_rate", cfg.opt.learning_rate},
                   {"momentum", cfg.opt.momentum},
                   {"weight_decay", cfg.opt.weight_decay},
                   {"sam_radius", cfg.opt.sam_radius},
                   {"kappa", cfg.opt.kappa},
                   {"warmup_epochs", cfg.opt.warmup_epochs},
                   {"ramp_epochs", cfg.opt.ramp_epochs},
                   {"flip_ratio", cfg.opt.flip_ratio},
                   {"warmup_optimizer", to_string(cfg.opt.warmup_optimizer)},
                   {"normalize_noise_grad", cfg.opt.normalize_noise_grad},
                   {"correction_sign", cfg.opt.correction_sign}};

  nlohmann::json l{{"kind", cfg.lr_schedule.kind == LrScheduleKind::constant
                                ? "constant"
                                : "step_decay"}};
  if (cfg.lr_schedule.kind == LrScheduleKind::step_decay) {
    l["milestones"] = cfg.lr_schedule.milestones;
    l["factor"] = cfg.lr_schedule.factor;
  }

  return nlohmann::json{{"dataset", d},
                        {"noise", n},
                        {"model", m},
                        {"optimizer", o},
                        {"epochs", cfg.epochs},
                        {"batch_size", cfg.batch_size},
                        {"lr_schedule", l},
                        {"schedule_mode", to_string(cfg.schedule_mode)},
                        {"seeds", cfg.seeds},
                        {"output_dir", cfg.output_dir},
                        {"log_flips", cfg.log_flips}};
}

}  // namespace flatgrad
