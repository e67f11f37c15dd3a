#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "flatgrad/mlp.hpp"
#include "flatgrad/rng.hpp"
#include "flatgrad/tensor.hpp"

// Label corruption with known ground truth. All variants are pure functions
// of (inputs, seed); masks record exactly which labels changed.

namespace flatgrad {

enum class NoiseKind { symmetric, asymmetric_pair, instance_dependent, beta_mixture };

inline const char* to_string(NoiseKind k) {
  switch (k) {
    case NoiseKind::symmetric: return "symmetric";
    case NoiseKind::asymmetric_pair: return "asymmetric_pair";
    case NoiseKind::instance_dependent: return "instance_dependent";
    case NoiseKind::beta_mixture: return "beta_mixture";
  }
  throw std::logic_error("to_string: bad NoiseKind");
}

inline NoiseKind noise_kind_from_string(const std::string& s) {
  if (s == "symmetric") return NoiseKind::symmetric;
  if (s == "asymmetric_pair") return NoiseKind::asymmetric_pair;
  if (s == "instance_dependent") return NoiseKind::instance_dependent;
  if (s == "beta_mixture") return NoiseKind::beta_mixture;
  throw std::invalid_argument("unknown noise kind: " + s);
}

struct NoiseSpec {
  NoiseKind kind = NoiseKind::symmetric;
  double rate = 0.0;                   // alpha in [0,1]
  double beta = 1.0;                   // Beta(beta, gamma), beta_mixture only
  double gamma = 1.0;
  std::vector<int> pair_map;           // fixed-point-free class map, asymmetric only
  std::uint64_t seed = 0;
  bool include_self_flip = false;      // symmetric: draw targets from all C classes
};

struct LabelCorruption {
  std::vector<int> observed;
  std::vector<std::uint8_t> corrupted;  // corrupted[i] == (observed[i] != true[i])
};

struct InstanceCorruption {
  std::vector<int> observed;
  std::vector<std::uint8_t> corrupted;
  double effective_rate = 0.0;   // expected flip fraction actually realizable
  bool degenerate = false;       // probe left no uncertainty mass to spend
};

// features + true labels + observed labels (or soft rows) + corruption mask
struct NoisyDataset {
  Tensor features;                       // [N x d]
  std::vector<int> true_labels;          // length N
  std::vector<int> observed_labels;      // hard variants; argmax rows for soft
  Tensor soft_labels;                    // [N x C], beta_mixture only (else empty)
  std::vector<std::uint8_t> corrupted;   // length N
  std::size_t class_count = 0;
  NoiseSpec spec;                        // how the corruption was produced
};

inline Tensor one_hot(const std::vector<int>& labels, std::size_t C) {
  Tensor out({labels.size(), C});
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= C)
      throw std::invalid_argument("one_hot: label out of range");
    out(i, static_cast<std::size_t>(labels[i])) = 1.0;
  }
  return out;
}

// Flip each label with probability alpha to a uniform draw over the other
// C-1 classes (or all C when include_self_flip, in which case the realized
// rate drops below alpha by alpha/C on average).
inline LabelCorruption corrupt_symmetric(const std::vector<int>& labels, std::size_t C,
                                         double alpha, std::uint64_t seed,
                                         bool include_self_flip = false) {
  if (C < 2) throw std::invalid_argument("corrupt_symmetric: need C >= 2");
  if (alpha < 0.0 || alpha > 1.0)
    throw std::invalid_argument("corrupt_symmetric: rate outside [0,1]");
  Rng rng = make_rng(seed);
  LabelCorruption out;
  out.observed = labels;
  out.corrupted.assign(labels.size(), 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (uniform_double(rng) >= alpha) continue;
    int target;
    if (include_self_flip) {
      target = static_cast<int>(uniform_index(rng, C));
    } else {
      target = static_cast<int>(uniform_index(rng, C - 1));
      if (target >= labels[i]) ++target;
    }
    out.observed[i] = target;
    out.corrupted[i] = target != labels[i];
  }
  return out;
}

// y -> pair_map[y] with probability alpha.
inline LabelCorruption corrupt_asymmetric(const std::vector<int>& labels,
                                          const std::vector<int>& pair_map, double alpha,
                                          std::uint64_t seed) {
  for (std::size_t c = 0; c < pair_map.size(); ++c) {
    if (pair_map[c] < 0 || static_cast<std::size_t>(pair_map[c]) >= pair_map.size())
      throw std::invalid_argument("corrupt_asymmetric: pair_map target out of range");
    if (pair_map[c] == static_cast<int>(c))
      throw std::invalid_argument("corrupt_asymmetric: pair_map has a fixed point at class " +
                                  std::to_string(c));
  }
  Rng rng = make_rng(seed);
  LabelCorruption out;
  out.observed = labels;
  out.corrupted.assign(labels.size(), 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= pair_map.size())
      throw std::invalid_argument("corrupt_asymmetric: label outside pair_map domain");
    if (uniform_double(rng) < alpha) {
      out.observed[i] = pair_map[static_cast<std::size_t>(labels[i])];
      out.corrupted[i] = 1;
    }
  }
  return out;
}

namespace detail {

// Largest-logit class excluding `exclude`; ties break to the lowest index.
inline int top_class_excluding(const double* logits, std::size_t C, int exclude) {
  int best = -1;
  for (std::size_t c = 0; c < C; ++c) {
    if (static_cast<int>(c) == exclude) continue;
    if (best < 0 || logits[c] > logits[static_cast<std::size_t>(best)])
      best = static_cast<int>(c);
  }
  return best;
}

// Find lambda with sum(min(1, lambda*u)) == target by bisection.
inline double clamp_scale(const std::vector<double>& u, double target) {
  double lo = 0.0, hi = 1.0;
  auto total = [&](double lambda) {
    double s = 0.0;
    for (double x : u) s += std::min(1.0, lambda * x);
    return s;
  };
  while (total(hi) < target && hi < 1e18) hi *= 2.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (total(mid) < target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace detail

// Flip probability proportional to probe-model uncertainty (1 - max softmax
// prob), scaled so the expected flip fraction is alpha; targets follow the
// probe's top non-label class. When the uncertainty mass cannot support
// alpha even with per-sample probabilities clamped at 1, the achievable rate
// is reported in effective_rate.
inline InstanceCorruption corrupt_instance_dependent(const Tensor& features,
                                                     const std::vector<int>& labels,
                                                     const ParameterSet& probe, double alpha,
                                                     std::uint64_t seed) {
  if (alpha < 0.0 || alpha > 1.0)
    throw std::invalid_argument("corrupt_instance_dependent: rate outside [0,1]");
  const std::size_t N = features.rows();
  const Tensor logits = forward(probe, features);
  const std::size_t C = logits.cols();
  if (C < 2) throw std::invalid_argument("corrupt_instance_dependent: need C >= 2");

  Tensor probs;
  std::vector<double> lse;
  detail::softmax_rows(logits, probs, lse);

  std::vector<double> uncertainty(N);
  double mass = 0.0;
  for (std::size_t i = 0; i < N; ++i) {
    double pmax = 0.0;
    for (std::size_t c = 0; c < C; ++c) pmax = std::max(pmax, probs(i, c));
    uncertainty[i] = 1.0 - pmax;
    mass += uncertainty[i];
  }

  InstanceCorruption out;
  out.observed = labels;
  out.corrupted.assign(N, 0);
  if (alpha == 0.0) return out;
  if (mass <= 0.0) {
    out.degenerate = true;
    return out;
  }

  const double target = alpha * static_cast<double>(N);
  const double lambda = detail::clamp_scale(uncertainty, target);
  double expected = 0.0;
  std::vector<double> flip_prob(N);
  for (std::size_t i = 0; i < N; ++i) {
    flip_prob[i] = std::min(1.0, lambda * uncertainty[i]);
    expected += flip_prob[i];
  }
  out.effective_rate = expected / static_cast<double>(N);

  Rng rng = make_rng(seed);
  for (std::size_t i = 0; i < N; ++i) {
    if (uniform_double(rng) >= flip_prob[i]) continue;
    const int target_class =
        detail::top_class_excluding(&logits.data()[i * C], C, labels[i]);
    out.observed[i] = target_class;
    out.corrupted[i] = 1;
  }
  return out;
}

// Row-wise Eq-style mixing: with probability alpha replace the one-hot row by
// (1-alpha)*y + alpha*u, u a normalized vector of C Beta(beta,gamma) draws.
inline Tensor corrupt_beta_mixture(const Tensor& onehot, double alpha, double beta, double gamma,
                                   std::uint64_t seed) {
  if (beta <= 0.0 || gamma <= 0.0)
    throw std::invalid_argument("corrupt_beta_mixture: beta and gamma must be positive");
  if (alpha < 0.0 || alpha > 1.0)
    throw std::invalid_argument("corrupt_beta_mixture: rate outside [0,1]");
  const std::size_t N = onehot.rows(), C = onehot.cols();
  Rng rng = make_rng(seed);
  Tensor out = onehot;
  std::vector<double> u(C);
  for (std::size_t i = 0; i < N; ++i) {
    if (uniform_double(rng) >= alpha) continue;
    double sum = 0.0;
    for (std::size_t c = 0; c < C; ++c) {
      u[c] = beta_sample(rng, beta, gamma);
      sum += u[c];
    }
    if (sum <= 0.0) sum = 1.0;
    for (std::size_t c = 0; c < C; ++c)
      out(i, c) = (1.0 - alpha) * onehot(i, c) + alpha * u[c] / sum;
  }
  return out;
}

// Dispatch a NoiseSpec over clean labels. instance_dependent requires a probe
// model fitted on the clean labels.
inline NoisyDataset make_noisy_dataset(Tensor features, std::vector<int> true_labels,
                                       std::size_t C, const NoiseSpec& spec,
                                       const ParameterSet* probe = nullptr) {
  NoisyDataset ds;
  ds.class_count = C;
  ds.spec = spec;
  switch (spec.kind) {
    case NoiseKind::symmetric: {
      auto c = corrupt_symmetric(true_labels, C, spec.rate, spec.seed, spec.include_self_flip);
      ds.observed_labels = std::move(c.observed);
      ds.corrupted = std::move(c.corrupted);
      break;
    }
    case NoiseKind::asymmetric_pair: {
      std::vector<int> map = spec.pair_map;
      if (map.empty()) {  // default: cyclic shift
        map.resize(C);
        for (std::size_t c = 0; c < C; ++c) map[c] = static_cast<int>((c + 1) % C);
      }
      auto c = corrupt_asymmetric(true_labels, map, spec.rate, spec.seed);
      ds.observed_labels = std::move(c.observed);
      ds.corrupted = std::move(c.corrupted);
      break;
    }
    case NoiseKind::instance_dependent: {
      if (probe == nullptr)
        throw std::invalid_argument("make_noisy_dataset: instance_dependent needs a probe model");
      auto c = corrupt_instance_dependent(features, true_labels, *probe, spec.rate, spec.seed);
      ds.observed_labels = std::move(c.observed);
      ds.corrupted = std::move(c.corrupted);
      break;
    }
    case NoiseKind::beta_mixture: {
      ds.soft_labels = corrupt_beta_mixture(one_hot(true_labels, C), spec.rate, spec.beta,
                                            spec.gamma, spec.seed);
      ds.observed_labels.resize(true_labels.size());
      ds.corrupted.assign(true_labels.size(), 0);
      for (std::size_t i = 0; i < true_labels.size(); ++i) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < C; ++c)
          if (ds.soft_labels(i, c) > ds.soft_labels(i, best)) best = c;
        ds.observed_labels[i] = static_cast<int>(best);
        // a row counts as corrupted once it stops being one-hot on the truth
        ds.corrupted[i] = ds.soft_labels(i, static_cast<std::size_t>(true_labels[i])) < 1.0;
      }
      break;
    }
  }
  ds.features = std::move(features);
  ds.true_labels = std::move(true_labels);
  return ds;
}

}  // namespace flatgrad
