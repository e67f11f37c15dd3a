#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>

#include "flatgrad/flip.hpp"
#include "flatgrad/mlp.hpp"
#include "flatgrad/parameter_set.hpp"

// SGD with momentum and weight decay, two-step SAM, and noise-compensated
// SAM. The SAM/NCSAM cores are generic over a gradient source so closed-form
// test problems can drive them; MLP-batch overloads sit on top.

namespace flatgrad {

enum class WarmupOptimizer { sgd, sam };
enum class OptimizerKind { sgd, sam, ncsam };

inline const char* to_string(OptimizerKind k) {
  switch (k) {
    case OptimizerKind::sgd: return "sgd";
    case OptimizerKind::sam: return "sam";
    case OptimizerKind::ncsam: return "ncsam";
  }
  throw std::logic_error("to_string: bad OptimizerKind");
}

inline OptimizerKind optimizer_kind_from_string(const std::string& s) {
  if (s == "sgd") return OptimizerKind::sgd;
  if (s == "sam") return OptimizerKind::sam;
  if (s == "ncsam") return OptimizerKind::ncsam;
  throw std::invalid_argument("unknown optimizer: " + s);
}

inline const char* to_string(WarmupOptimizer w) {
  return w == WarmupOptimizer::sgd ? "sgd" : "sam";
}

inline WarmupOptimizer warmup_optimizer_from_string(const std::string& s) {
  if (s == "sgd") return WarmupOptimizer::sgd;
  if (s == "sam") return WarmupOptimizer::sam;
  throw std::invalid_argument("unknown warmup optimizer: " + s);
}

struct OptimizerConfig {
  double learning_rate = 0.05;
  double momentum = 0.9;
  double weight_decay = 0.0;
  double sam_radius = 0.05;       // rho
  double kappa = 0.1;             // upper bound of the compensation schedule
  int warmup_epochs = 0;          // T_w
  int ramp_epochs = 1;            // T_r
  double flip_ratio = 0.4;        // gamma
  WarmupOptimizer warmup_optimizer = WarmupOptimizer::sgd;
  bool normalize_noise_grad = false;
  int correction_sign = +1;       // debug knob; -1 inverts the correction direction
};

struct ScheduleState {
  int epoch = 0;
  double scale = 0.0;  // s(t), in [0, kappa]
};

struct OptimizerState {
  GradientSet momentum_buffers;
  ScheduleState schedule;
  GradientSet last_perturbation;   // epsilon-tilde, diagnostic
  GradientSet last_correction;     // delta W_c, diagnostic
  double last_loss = 0.0;          // loss at the unperturbed parameters
  std::size_t skipped_corrections = 0;  // empty plan while s(t) > 0
};

inline OptimizerState make_optimizer_state(const ParameterSet& params) {
  OptimizerState st;
  st.momentum_buffers = zeros_like(params);
  st.last_perturbation = zeros_like(params);
  st.last_correction = zeros_like(params);
  return st;
}

constexpr double kZeroGradTol = 1e-12;

// Smoothstep 2*t^2*(3-2t) on normalized time, clipped at 1.
inline double smoothstep_raw(double t_hat) {
  const double t = std::clamp(t_hat, 0.0, 1.0);
  return std::min(2.0 * t * t * (3.0 - 2.0 * t), 1.0);
}

// s(t): zero through the warm-up, rises over ramp_epochs, capped at kappa
// from the ramp midpoint onward.
inline double schedule_scale(int epoch, int warmup_epochs, int ramp_epochs, double kappa) {
  if (ramp_epochs < 1) throw std::invalid_argument("schedule_scale: ramp_epochs must be >= 1");
  const double t_hat =
      static_cast<double>(epoch - warmup_epochs) / static_cast<double>(ramp_epochs);
  return kappa * smoothstep_raw(t_hat);
}

// buffer <- momentum*buffer + (grad + weight_decay*params);
// params' = params - lr*buffer.
inline ParameterSet sgd_step(const ParameterSet& params, const GradientSet& grad,
                             OptimizerState& state, const OptimizerConfig& cfg) {
  require_congruent(params, grad);
  require_congruent(params, state.momentum_buffers);
  for (std::size_t i = 0; i < params.entry_count(); ++i) {
    auto& buf = state.momentum_buffers.entry(i).tensor.data();
    const auto& g = grad.entry(i).tensor.data();
    const auto& p = params.entry(i).tensor.data();
    for (std::size_t j = 0; j < buf.size(); ++j)
      buf[j] = cfg.momentum * buf[j] + (g[j] + cfg.weight_decay * p[j]);
  }
  return axpy(params, -cfg.learning_rate, state.momentum_buffers);
}

// epsilon-tilde = rho * g / ||g||, or zero when the gradient is degenerate.
inline GradientSet sam_perturbation(const GradientSet& grad, double rho) {
  const double norm = l2_norm(grad);
  if (rho == 0.0 || norm <= kZeroGradTol) return zeros_like(grad);
  return scaled(grad, rho / norm);
}

// delta W_c = -s * g (unit-normalized when requested); zero when s == 0 or
// the simulated gradient is degenerate.
inline GradientSet compensation_term(const GradientSet& noise_grad, double scale,
                                     bool normalize) {
  if (scale < 0.0) throw std::invalid_argument("compensation_term: negative scale");
  const double norm = l2_norm(noise_grad);
  if (scale == 0.0 || norm <= kZeroGradTol) return zeros_like(noise_grad);
  return scaled(noise_grad, normalize ? -scale / norm : -scale);
}

using GradFn = std::function<LossGrad(const ParameterSet&)>;
using NoiseGradFn = std::function<GradientSet(const ParameterSet&)>;

// Two-step SAM: ascent to params + rho*g1/||g1||, descend with the gradient
// found there.
inline ParameterSet sam_step(const GradFn& grad_fn, const ParameterSet& params,
                             OptimizerState& state, const OptimizerConfig& cfg) {
  const LossGrad first = grad_fn(params);
  state.last_loss = first.loss;
  state.last_perturbation = sam_perturbation(first.grad, cfg.sam_radius);
  state.last_correction = zeros_like(params);
  const GradientSet g2 = grad_fn(axpy(params, 1.0, state.last_perturbation)).grad;
  return sgd_step(params, g2, state, cfg);
}

// NCSAM: the SAM ascent point is shifted by the compensation term built from
// the simulated noise gradient, epsilon' = epsilon-tilde - delta W_c. The
// schedule scale must already be set in state for the current epoch. An
// absent noise gradient while s(t) > 0 skips the correction and counts it.
inline ParameterSet ncsam_step(const GradFn& grad_fn, const NoiseGradFn& noise_grad_fn,
                               const ParameterSet& params, OptimizerState& state,
                               const OptimizerConfig& cfg) {
  const LossGrad first = grad_fn(params);
  state.last_loss = first.loss;
  state.last_perturbation = sam_perturbation(first.grad, cfg.sam_radius);

  const double s = state.schedule.scale;
  if (!noise_grad_fn) {
    state.last_correction = zeros_like(params);
    if (s > 0.0) ++state.skipped_corrections;
  } else {
    state.last_correction =
        compensation_term(noise_grad_fn(params), s, cfg.normalize_noise_grad);
  }

  GradientSet adjusted = state.last_perturbation;  // epsilon'
  axpy_inplace(adjusted, -static_cast<double>(cfg.correction_sign), state.last_correction);
  const GradientSet g2 = grad_fn(axpy(params, 1.0, adjusted)).grad;
  return sgd_step(params, g2, state, cfg);
}

inline GradFn mlp_grad_fn(const Batch& batch) {
  return [&batch](const ParameterSet& p) { return loss_and_grad(p, batch); };
}

inline ParameterSet sam_step(const ParameterSet& params, const Batch& batch,
                             OptimizerState& state, const OptimizerConfig& cfg) {
  return sam_step(mlp_grad_fn(batch), params, state, cfg);
}

inline ParameterSet ncsam_step(const ParameterSet& params, const Batch& batch,
                               const FlipPlan& plan, OptimizerState& state,
                               const OptimizerConfig& cfg) {
  NoiseGradFn noise_fn;
  if (!plan.selected.empty())
    noise_fn = [&batch, &plan](const ParameterSet& p) {
      return simulated_noise_gradient(p, batch, plan);
    };
  return ncsam_step(mlp_grad_fn(batch), noise_fn, params, state, cfg);
}

}  // namespace flatgrad
