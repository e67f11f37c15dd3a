#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <vector>

#include "flatgrad/mlp.hpp"
#include "flatgrad/parameter_set.hpp"
#include "flatgrad/rng.hpp"

// Training diagnostics: a diagonal-Gaussian PAC-Bayes KL and penalty,
// clean/noisy gradient decomposition with the distortion angle, and a
// random-probe sharpness estimate.

namespace flatgrad {

struct GaussianPacConfig {
  double prior_std = 1.0;        // sigma_p
  double posterior_std = 1.0;    // sigma_q
  double perturbation_std = 0.0; // beta, worst-case per-coordinate shift
  std::size_t sample_count = 2;  // n
  std::size_t param_dim = 1;     // k
};

inline void validate_pac_config(const GaussianPacConfig& cfg) {
  if (cfg.prior_std <= 0.0 || cfg.posterior_std <= 0.0)
    throw std::invalid_argument("pac config: stds must be positive");
  if (cfg.perturbation_std < 0.0)
    throw std::invalid_argument("pac config: negative perturbation std");
  if (cfg.sample_count < 2) throw std::invalid_argument("pac config: sample_count < 2");
  if (cfg.param_dim < 1) throw std::invalid_argument("pac config: param_dim < 1");
}

// KL(N(w + dw, sigma_q^2 I) || N(w, sigma_p^2 I))
//   = 0.5 * (||dw||^2 / sigma_p^2 + k*(r - 1 - ln r)),  r = sigma_q^2 / sigma_p^2.
inline double gaussian_kl(double mean_sq_norm, const GaussianPacConfig& cfg) {
  validate_pac_config(cfg);
  if (mean_sq_norm < 0.0) throw std::invalid_argument("gaussian_kl: negative squared norm");
  const double ratio =
      (cfg.posterior_std * cfg.posterior_std) / (cfg.prior_std * cfg.prior_std);
  return 0.5 * (mean_sq_norm / (cfg.prior_std * cfg.prior_std) +
                static_cast<double>(cfg.param_dim) * (ratio - 1.0 - std::log(ratio)));
}

// sqrt((||dw||^2 + k*beta^2) / n). A trend indicator, not a certified bound.
inline double pac_penalty(double mean_sq_norm, const GaussianPacConfig& cfg) {
  validate_pac_config(cfg);
  if (mean_sq_norm < 0.0) throw std::invalid_argument("pac_penalty: negative squared norm");
  const double beta = cfg.perturbation_std;
  return std::sqrt((mean_sq_norm +
                    static_cast<double>(cfg.param_dim) * beta * beta) /
                   static_cast<double>(cfg.sample_count));
}

enum class Regime { over_perturbation, under_perturbation, neutral };

struct DistortionReport {
  double cos_theta = 1.0;     // angle between g_clean and g_clean + g_noise
  double clean_norm = 0.0;    // ||g_clean||
  double noise_norm = 0.0;    // ||g_noise||
  double biased_norm = 0.0;   // ||g_clean + g_noise||
  double inner_product = 0.0; // <g_clean, g_noise>
  Regime regime = Regime::neutral;
};

constexpr double kDegenerateNormTol = 1e-12;
constexpr double kRegimeNormTol = 1e-12;

// The noise term rotates the batch gradient by theta and rescales it; the
// regime records whether the biased norm grew or shrank.
inline DistortionReport distortion_report(const GradientSet& g_clean,
                                          const GradientSet& g_noise) {
  require_congruent(g_clean, g_noise);
  DistortionReport rep;
  rep.clean_norm = l2_norm(g_clean);
  rep.noise_norm = l2_norm(g_noise);
  rep.inner_product = dot(g_clean, g_noise);
  rep.biased_norm = l2_norm(axpy(g_clean, 1.0, g_noise));
  if (rep.clean_norm <= kDegenerateNormTol || rep.biased_norm <= kDegenerateNormTol)
    throw std::invalid_argument("distortion_report: degenerate zero-norm input");
  rep.cos_theta = std::clamp(
      (rep.clean_norm * rep.clean_norm + rep.inner_product) /
          (rep.clean_norm * rep.biased_norm),
      -1.0, 1.0);
  if (rep.biased_norm > rep.clean_norm + kRegimeNormTol)
    rep.regime = Regime::over_perturbation;
  else if (rep.biased_norm < rep.clean_norm - kRegimeNormTol)
    rep.regime = Regime::under_perturbation;
  return rep;
}

struct GradientSplit {
  GradientSet clean;  // contribution of uncorrupted samples to the batch mean
  GradientSet noise;  // contribution of corrupted samples
  std::size_t clean_count = 0;
  std::size_t noise_count = 0;
};

// Splits the batch-mean gradient by corruption mask. Each part carries its
// sample-share weight, so clean + noise reproduces the full batch gradient.
inline GradientSplit empirical_gradient_split(const ParameterSet& params,
                                              const Batch& batch,
                                              const std::vector<std::uint8_t>& corrupted) {
  const std::size_t b = batch_size(batch);
  if (corrupted.size() != b)
    throw std::invalid_argument("empirical_gradient_split: mask size mismatch");

  std::vector<std::size_t> clean_pos, noisy_pos;
  for (std::size_t i = 0; i < b; ++i)
    (corrupted[i] ? noisy_pos : clean_pos).push_back(i);

  GradientSplit split;
  split.clean_count = clean_pos.size();
  split.noise_count = noisy_pos.size();

  const auto part = [&](const std::vector<std::size_t>& pos) {
    if (pos.empty()) return zeros_like(params);
    GradientSet g = loss_and_grad(params, gather_batch(batch, pos)).grad;
    scale_inplace(g, static_cast<double>(pos.size()) / static_cast<double>(b));
    return g;
  };
  split.clean = part(clean_pos);
  split.noise = part(noisy_pos);
  return split;
}

using LossFn = std::function<double(const ParameterSet&)>;
using DirGradFn = std::function<GradientSet(const ParameterSet&)>;

// max of L(w + e) - L(w) over the first-order ascent direction rho*g/||g||
// plus (trials - 1) random directions of norm rho. A degenerate gradient is
// replaced by one more random probe so the probe count stays fixed.
inline double sharpness_estimate(const LossFn& loss_fn, const DirGradFn& grad_fn,
                                 const ParameterSet& params, double rho,
                                 std::size_t trials, std::uint64_t seed) {
  if (trials == 0) throw std::invalid_argument("sharpness_estimate: zero trials");
  if (rho < 0.0) throw std::invalid_argument("sharpness_estimate: negative radius");
  const double base = loss_fn(params);
  Rng rng(seed);

  const auto probe = [&](const GradientSet& dir) {
    return loss_fn(axpy(params, 1.0, dir)) - base;
  };
  const auto random_dir = [&]() {
    GradientSet dir = zeros_like(params);
    double norm = 0.0;
    do {
      for (std::size_t i = 0; i < dir.entry_count(); ++i)
        for (double& v : dir.entry(i).tensor.data()) v = normal(rng);
      norm = l2_norm(dir);
    } while (norm <= kDegenerateNormTol);
    scale_inplace(dir, rho / norm);
    return dir;
  };

  std::size_t remaining = trials;
  double worst = -std::numeric_limits<double>::infinity();
  if (grad_fn) {
    const GradientSet g = grad_fn(params);
    const double gn = l2_norm(g);
    if (gn > kDegenerateNormTol) {
      worst = std::max(worst, probe(scaled(g, rho / gn)));
      --remaining;
    }
  }
  for (std::size_t t = 0; t < remaining; ++t) worst = std::max(worst, probe(random_dir()));
  return worst;
}

inline double sharpness_estimate(const ParameterSet& params, const Batch& batch,
                                 double rho, std::size_t trials, std::uint64_t seed) {
  return sharpness_estimate(
      [&batch](const ParameterSet& p) { return loss_only(p, batch); },
      [&batch](const ParameterSet& p) { return loss_and_grad(p, batch).grad; }, params,
      rho, trials, seed);
}

}  // namespace flatgrad
