#include <cstdio>

#include "flatgrad/flatgrad.hpp"

// Minimal tour: corrupt two-moons labels, train SGD and NCSAM briefly with a
// shared seed, print the accuracy trajectory of each.

int main() {
  using namespace flatgrad;

  ExperimentConfig cfg;
  cfg.dataset.kind = DatasetKind::two_moons;
  cfg.dataset.samples = 600;
  cfg.dataset.noise_std = 0.15;
  cfg.noise.kind = NoiseKind::symmetric;
  cfg.noise.rate = 0.3;
  cfg.hidden = {16, 16};
  cfg.epochs = 24;
  cfg.batch_size = 64;
  cfg.opt.warmup_epochs = 6;
  cfg.opt.ramp_epochs = -1;
  cfg.seeds = {7};
  cfg.output_dir = "demo_runs";

  for (OptimizerKind kind : {OptimizerKind::sgd, OptimizerKind::ncsam}) {
    cfg.optimizer = kind;
    const RunResult result = run_single(cfg, cfg.seeds[0]);
    std::printf("%-6s", to_string(kind));
    for (std::size_t i = 0; i < result.metrics.size(); i += 6)
      std::printf("  epoch %2d: test_acc %.3f", result.metrics[i].epoch,
                  result.metrics[i].test_acc);
    std::printf("  final: %.3f\n", result.metrics.back().test_acc);
    emit_plots(result.run_dir);
  }
  std::puts("plots written under demo_runs/");
  return 0;
}
