#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "flatgrad/config_json.hpp"
#include "flatgrad/dataset_io.hpp"
#include "flatgrad/datasets.hpp"
#include "flatgrad/diagnostics.hpp"
#include "flatgrad/flip.hpp"
#include "flatgrad/mlp.hpp"
#include "flatgrad/noise.hpp"
#include "flatgrad/optimizer.hpp"
#include "flatgrad/rng.hpp"

// Single-run training harness. A run is a pure function of (config, seed):
// every random choice draws from a stream derived from the run seed, and
// metrics.csv is written with full precision so reruns are byte-identical.
// Wall-clock times go to a separate timings.csv since they never reproduce.

namespace flatgrad {

struct EpochMetrics {
  int epoch = 0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double test_acc = 0.0;
  double clean_subset_acc = 0.0;
  double noisy_subset_acc = 0.0;  // true-label accuracy on corrupted samples
  double schedule_scale = 0.0;
  double mean_eps_norm = 0.0;
  double mean_corr_norm = 0.0;
  double mean_cos_theta = 0.0;
  double kl_diag = 0.0;
  double pac_penalty = 0.0;
  double wall_seconds = 0.0;  // measured; excluded from metrics.csv
};

namespace seed_stream {
constexpr std::uint64_t dataset = 0xD5;
constexpr std::uint64_t noise = 0x17;
constexpr std::uint64_t model_init = 0x33;
constexpr std::uint64_t shuffle = 0x51;
constexpr std::uint64_t flip = 0xF1;
constexpr std::uint64_t probe = 0x77;
constexpr std::uint64_t split = 0x90;
}  // namespace seed_stream

struct PreparedData {
  NoisyDataset train;
  LabeledData test;
};

namespace detail {

// Deterministic float text: shortest round-trip decimal via %.17g, NaN always
// spelled "nan".
inline std::string csv_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline MlpSpec build_mlp_spec(const ExperimentConfig& cfg, std::size_t input_dim,
                              std::size_t classes, std::uint64_t run_seed) {
  MlpSpec spec;
  spec.layer_widths.push_back(input_dim);
  for (std::size_t w : cfg.hidden) spec.layer_widths.push_back(w);
  spec.layer_widths.push_back(classes);
  spec.init_seed = cfg.model_seed_pinned ? cfg.model_init_seed
                                         : derive_seed(run_seed, seed_stream::model_init);
  return spec;
}

// Probe for instance-dependent noise: same architecture, short plain-SGD fit
// on the clean labels.
inline ParameterSet fit_probe_model(const ExperimentConfig& cfg, const LabeledData& train,
                                    std::uint64_t run_seed) {
  MlpSpec spec = build_mlp_spec(cfg, train.features.cols(), train.class_count, run_seed);
  const std::uint64_t probe_master = derive_seed(run_seed, seed_stream::probe);
  spec.init_seed = probe_master;
  ParameterSet params = init_params(spec);
  OptimizerConfig probe_cfg;
  probe_cfg.learning_rate = 0.05;
  probe_cfg.momentum = 0.9;
  probe_cfg.weight_decay = 0.0;
  OptimizerState state = make_optimizer_state(params);

  const std::size_t n = train.features.rows();
  const std::size_t bs = std::min<std::size_t>(cfg.batch_size, n);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < 10; ++epoch) {
    Rng rng(derive_seed(probe_master, seed_stream::shuffle,
                        static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = n; i > 1; --i)
      std::swap(order[i - 1], order[uniform_index(rng, i)]);
    for (std::size_t start = 0; start < n; start += bs) {
      const std::size_t stop = std::min(n, start + bs);
      Batch batch;
      batch.features = Tensor({stop - start, train.features.cols()});
      batch.labels.resize(stop - start);
      for (std::size_t r = start; r < stop; ++r) {
        const std::size_t src = order[r];
        batch.labels[r - start] = train.labels[src];
        for (std::size_t c = 0; c < train.features.cols(); ++c)
          batch.features(r - start, c) = train.features(src, c);
      }
      params = sgd_step(params, loss_and_grad(params, batch).grad, state, probe_cfg);
    }
  }
  return params;
}

}  // namespace detail

// Builds the corrupted train split and the clean test split for a run.
inline PreparedData prepare_data(const ExperimentConfig& cfg, std::uint64_t run_seed) {
  LabeledData full;
  LabeledData test;
  bool presplit = false;
  const std::uint64_t data_seed = derive_seed(run_seed, seed_stream::dataset);
  switch (cfg.dataset.kind) {
    case DatasetKind::two_moons:
      full = generate_two_moons(cfg.dataset.samples, cfg.dataset.noise_std, data_seed);
      break;
    case DatasetKind::gaussian_blobs:
      full = generate_gaussian_blobs(cfg.dataset.samples, cfg.dataset.classes,
                                     cfg.dataset.dim, cfg.dataset.separation,
                                     cfg.dataset.cluster_std, data_seed);
      break;
    case DatasetKind::idx_files:
      full = load_idx(cfg.dataset.images, cfg.dataset.labels);
      if (!cfg.dataset.test_images.empty()) {
        test = load_idx(cfg.dataset.test_images, cfg.dataset.test_labels);
        presplit = true;
      }
      break;
  }

  LabeledData train;
  if (presplit) {
    train = std::move(full);
  } else {
    const auto split = stratified_split(full.labels, full.class_count,
                                        cfg.dataset.train_fraction,
                                        derive_seed(run_seed, seed_stream::split));
    train = select_rows(full, split.train);
    test = select_rows(full, split.test);
  }
  if (cfg.batch_size > train.features.rows())
    throw ConfigError("batch_size exceeds train set size");

  NoiseSpec noise = cfg.noise;
  if (!cfg.noise_seed_pinned) noise.seed = derive_seed(run_seed, seed_stream::noise);

  PreparedData out;
  if (noise.kind == NoiseKind::instance_dependent) {
    const ParameterSet probe = detail::fit_probe_model(cfg, train, run_seed);
    out.train = make_noisy_dataset(std::move(train.features), std::move(train.labels),
                                   train.class_count, noise, &probe);
  } else {
    out.train = make_noisy_dataset(std::move(train.features), std::move(train.labels),
                                   train.class_count, noise);
  }
  out.test = std::move(test);
  return out;
}

namespace detail {

struct TrainEval {
  double train_acc = 0.0;
  double clean_acc = 0.0;
  double noisy_acc = 0.0;
};

inline TrainEval evaluate_train(const ParameterSet& params, const NoisyDataset& ds) {
  const std::vector<int> pred = predict_classes(params, ds.features);
  std::size_t obs_hits = 0, clean_hits = 0, clean_total = 0, noisy_hits = 0,
              noisy_total = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] == ds.observed_labels[i]) ++obs_hits;
    if (ds.corrupted[i]) {
      ++noisy_total;
      if (pred[i] == ds.true_labels[i]) ++noisy_hits;
    } else {
      ++clean_total;
      if (pred[i] == ds.true_labels[i]) ++clean_hits;
    }
  }
  TrainEval ev;
  const auto frac = [](std::size_t h, std::size_t t) {
    return t == 0 ? std::nan("") : static_cast<double>(h) / static_cast<double>(t);
  };
  ev.train_acc = frac(obs_hits, pred.size());
  ev.clean_acc = frac(clean_hits, clean_total);
  ev.noisy_acc = frac(noisy_hits, noisy_total);
  return ev;
}

inline Batch gather_rows(const NoisyDataset& ds, const std::vector<std::size_t>& order,
                         std::size_t start, std::size_t stop) {
  Batch batch;
  const std::size_t d = ds.features.cols();
  batch.features = Tensor({stop - start, d});
  batch.labels.resize(stop - start);
  batch.sample_indices.resize(stop - start);
  for (std::size_t r = start; r < stop; ++r) {
    const std::size_t src = order[r];
    batch.sample_indices[r - start] = src;
    batch.labels[r - start] = ds.observed_labels[src];
    for (std::size_t c = 0; c < d; ++c)
      batch.features(r - start, c) = ds.features(src, c);
  }
  return batch;
}

inline Tensor gather_soft_rows(const NoisyDataset& ds, const Batch& batch) {
  const std::size_t b = batch.sample_indices.size();
  const std::size_t c = ds.class_count;
  Tensor soft({b, c});
  for (std::size_t r = 0; r < b; ++r)
    for (std::size_t j = 0; j < c; ++j)
      soft(r, j) = ds.soft_labels(batch.sample_indices[r], j);
  return soft;
}

}  // namespace detail

struct RunResult {
  std::filesystem::path run_dir;
  std::vector<EpochMetrics> metrics;
};

inline void write_metrics_csv(const std::vector<EpochMetrics>& metrics,
                              const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "epoch,train_loss,train_acc,test_acc,clean_subset_acc,noisy_subset_acc,"
         "schedule_scale,mean_eps_norm,mean_corr_norm,mean_cos_theta,kl_diag,"
         "pac_penalty\n";
  for (const auto& m : metrics) {
    out << m.epoch;
    for (double v : {m.train_loss, m.train_acc, m.test_acc, m.clean_subset_acc,
                     m.noisy_subset_acc, m.schedule_scale, m.mean_eps_norm,
                     m.mean_corr_norm, m.mean_cos_theta, m.kl_diag, m.pac_penalty})
      out << ',' << detail::csv_double(v);
    out << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

inline std::string run_dir_name(OptimizerKind kind, std::uint64_t seed) {
  return std::string(to_string(kind)) + "_seed" + std::to_string(seed);
}

// One full training run. Writes metrics.csv, timings.csv, config.json echo,
// final parameter snapshot, and optionally flips.csv into its own directory.
inline RunResult run_single(const ExperimentConfig& cfg, std::uint64_t run_seed) {
  validate_config(cfg);
  PreparedData data = prepare_data(cfg, run_seed);
  const NoisyDataset& train = data.train;
  const std::size_t n = train.features.rows();
  const std::size_t classes = train.class_count;
  const bool soft_targets = !train.soft_labels.data().empty();

  const MlpSpec mlp_spec =
      detail::build_mlp_spec(cfg, train.features.cols(), classes, run_seed);
  ParameterSet params = init_params(mlp_spec);
  OptimizerState state = make_optimizer_state(params);
  OptimizerConfig opt = cfg.opt;
  opt.warmup_epochs = resolved_warmup_epochs(cfg);
  opt.ramp_epochs = resolved_ramp_epochs(cfg);

  const std::filesystem::path run_dir =
      std::filesystem::path(cfg.output_dir) / run_dir_name(cfg.optimizer, run_seed);
  std::filesystem::create_directories(run_dir);

  std::ofstream flips;
  if (cfg.log_flips) {
    flips.open(run_dir / "flips.csv", std::ios::binary);
    if (!flips) throw std::runtime_error("cannot write flips.csv");
    flips << "epoch,batch,sample_index,gap,flipped_label\n";
  }

  GaussianPacConfig pac;
  pac.perturbation_std = opt.sam_radius;
  pac.sample_count = std::max<std::size_t>(n, 2);
  pac.param_dim = param_count(mlp_spec);

  std::vector<std::size_t> order(n);
  std::vector<EpochMetrics> metrics;
  std::vector<double> wall;
  metrics.reserve(static_cast<std::size_t>(cfg.epochs));

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    opt.learning_rate = lr_at_epoch(cfg, epoch);

    double s = 0.0;
    const bool past_warmup = epoch >= opt.warmup_epochs;
    if (cfg.optimizer == OptimizerKind::ncsam && past_warmup) {
      s = cfg.schedule_mode == ScheduleMode::constant_scale
              ? opt.kappa
              : schedule_scale(epoch, opt.warmup_epochs, opt.ramp_epochs, opt.kappa);
    }
    state.schedule = {epoch, s};

    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(derive_seed(run_seed, seed_stream::shuffle,
                                static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = n; i > 1; --i)
      std::swap(order[i - 1], order[uniform_index(shuffle_rng, i)]);
    Rng flip_rng(derive_seed(run_seed, seed_stream::flip,
                             static_cast<std::uint64_t>(epoch)));

    double loss_sum = 0.0, eps_sum = 0.0, corr_sum = 0.0, cos_sum = 0.0;
    std::size_t batches = 0, cos_batches = 0, batch_index = 0;

    for (std::size_t start = 0; start < n; start += cfg.batch_size, ++batch_index) {
      const std::size_t stop = std::min(n, start + cfg.batch_size);
      const Batch batch = detail::gather_rows(train, order, start, stop);
      Tensor soft;
      if (soft_targets) soft = detail::gather_soft_rows(train, batch);

      const GradFn grad_fn = [&](const ParameterSet& p) {
        return soft_targets ? loss_and_grad_soft(p, batch.features, soft)
                            : loss_and_grad(p, batch);
      };

      // Distortion diagnostics need the pre-step parameters.
      std::vector<std::uint8_t> mask(batch.sample_indices.size());
      for (std::size_t i = 0; i < mask.size(); ++i)
        mask[i] = train.corrupted[batch.sample_indices[i]];
      {
        const GradientSplit split = empirical_gradient_split(params, batch, mask);
        if (l2_norm(split.clean) > kDegenerateNormTol) {
          const GradientSet total = axpy(split.clean, 1.0, split.noise);
          if (l2_norm(total) > kDegenerateNormTol) {
            cos_sum += distortion_report(split.clean, split.noise).cos_theta;
            ++cos_batches;
          }
        }
      }

      const bool use_sam_family =
          cfg.optimizer == OptimizerKind::sam ||
          (cfg.optimizer == OptimizerKind::ncsam &&
           (past_warmup || opt.warmup_optimizer == WarmupOptimizer::sam));

      if (cfg.optimizer == OptimizerKind::ncsam && past_warmup) {
        FlipPlan plan;
        if (s > 0.0) {
          plan = build_flip_plan(params, batch, opt.flip_ratio, flip_rng);
          if (cfg.log_flips)
            for (std::size_t i = 0; i < plan.selected.size(); ++i)
              flips << epoch << ',' << batch_index << ','
                    << batch.sample_indices[plan.selected[i]] << ','
                    << detail::csv_double(plan.gaps[i]) << ',' << plan.flipped_labels[i]
                    << '\n';
        }
        NoiseGradFn noise_fn;
        if (!plan.selected.empty())
          noise_fn = [&](const ParameterSet& p) {
            return simulated_noise_gradient(p, batch, plan);
          };
        params = ncsam_step(grad_fn, noise_fn, params, state, opt);
        eps_sum += l2_norm(state.last_perturbation);
        corr_sum += l2_norm(state.last_correction);
      } else if (use_sam_family) {
        params = sam_step(grad_fn, params, state, opt);
        eps_sum += l2_norm(state.last_perturbation);
      } else {
        const LossGrad lg = grad_fn(params);
        state.last_loss = lg.loss;
        params = sgd_step(params, lg.grad, state, opt);
      }
      loss_sum += state.last_loss;
      ++batches;
    }

    EpochMetrics m;
    m.epoch = epoch;
    m.train_loss = loss_sum / static_cast<double>(batches);
    const detail::TrainEval ev = detail::evaluate_train(params, train);
    m.train_acc = ev.train_acc;
    m.clean_subset_acc = ev.clean_acc;
    m.noisy_subset_acc = ev.noisy_acc;
    m.test_acc = data.test.features.rows() == 0
                     ? std::nan("")
                     : accuracy(params, data.test.features, data.test.labels);
    m.schedule_scale = s;
    m.mean_eps_norm = eps_sum / static_cast<double>(batches);
    m.mean_corr_norm = corr_sum / static_cast<double>(batches);
    m.mean_cos_theta =
        cos_batches == 0 ? std::nan("") : cos_sum / static_cast<double>(cos_batches);
    const double wsq = [&] {
      const double norm = l2_norm(params);
      return norm * norm;
    }();
    m.kl_diag = gaussian_kl(wsq, pac);
    m.pac_penalty = pac_penalty(wsq, pac);
    m.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    metrics.push_back(m);
    wall.push_back(m.wall_seconds);
  }

  write_metrics_csv(metrics, run_dir / "metrics.csv");
  {
    std::ofstream t(run_dir / "timings.csv", std::ios::binary);
    t << "epoch,wall_seconds\n";
    for (std::size_t i = 0; i < wall.size(); ++i)
      t << i << ',' << detail::csv_double(wall[i]) << '\n';
  }
  {
    ExperimentConfig echo = cfg;
    echo.seeds = {run_seed};
    std::ofstream c(run_dir / "config.json", std::ios::binary);
    c << config_to_json(echo).dump(2) << "\n";
  }
  save_params(params, run_dir / "final_params");

  RunResult result;
  result.run_dir = run_dir;
  result.metrics = std::move(metrics);
  return result;
}

// Runs every seed in the config sequentially.
inline std::vector<RunResult> run_experiment(const ExperimentConfig& cfg) {
  std::vector<RunResult> results;
  results.reserve(cfg.seeds.size());
  for (std::uint64_t seed : cfg.seeds) results.push_back(run_single(cfg, seed));
  return results;
}

}  // namespace flatgrad
