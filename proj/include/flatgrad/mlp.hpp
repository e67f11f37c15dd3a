#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "flatgrad/parameter_set.hpp"
#include "flatgrad/rng.hpp"
#include "flatgrad/tensor.hpp"

// Feedforward ReLU classifier with softmax cross-entropy loss and exact
// reverse-mode gradients. Weights are [out x in]; biases [out]. Parameter
// entry order is layer order, weight before bias.

namespace flatgrad {

enum class Activation { relu };

struct MlpSpec {
  std::vector<std::size_t> layer_widths;  // input dim, hidden..., class count
  Activation activation = Activation::relu;
  std::uint64_t init_seed = 0;
};

inline void validate_spec(const MlpSpec& spec) {
  if (spec.layer_widths.size() < 2)
    throw std::invalid_argument("MlpSpec: need at least input and output widths");
  for (std::size_t w : spec.layer_widths)
    if (w == 0) throw std::invalid_argument("MlpSpec: zero layer width");
  if (spec.layer_widths.back() < 2)
    throw std::invalid_argument("MlpSpec: class count must be >= 2");
}

struct Batch {
  Tensor features;                         // [B x d]
  std::vector<int> labels;                 // length B
  std::vector<std::size_t> sample_indices; // dataset row ids, length B
};

inline std::size_t batch_size(const Batch& b) { return b.features.rows(); }

inline std::size_t param_count(const MlpSpec& spec) {
  std::size_t k = 0;
  for (std::size_t l = 0; l + 1 < spec.layer_widths.size(); ++l)
    k += spec.layer_widths[l] * spec.layer_widths[l + 1] + spec.layer_widths[l + 1];
  return k;
}

// Glorot-uniform weights, zero biases, fully determined by init_seed.
inline ParameterSet init_params(const MlpSpec& spec) {
  validate_spec(spec);
  Rng rng = make_rng(spec.init_seed);
  ParameterSet params;
  for (std::size_t l = 0; l + 1 < spec.layer_widths.size(); ++l) {
    const std::size_t in = spec.layer_widths[l];
    const std::size_t out = spec.layer_widths[l + 1];
    const double a = std::sqrt(6.0 / static_cast<double>(in + out));
    Tensor w({out, in});
    for (double& x : w.data()) x = uniform_range(rng, -a, a);
    params.add("layer" + std::to_string(l) + ".weight", std::move(w));
    params.add("layer" + std::to_string(l) + ".bias", Tensor({out}));
  }
  return params;
}

namespace detail {

inline std::size_t layer_count(const ParameterSet& params) {
  if (params.entry_count() == 0 || params.entry_count() % 2 != 0)
    throw std::invalid_argument("mlp: parameter set is not weight/bias pairs");
  return params.entry_count() / 2;
}

// x [B x in] * W^T [in x out] + b -> out [B x out]
inline Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b) {
  const std::size_t B = x.rows(), in = x.cols(), out = w.rows();
  if (w.cols() != in)
    throw std::invalid_argument("mlp: feature dim " + std::to_string(in) +
                                " does not match layer input " + std::to_string(w.cols()));
  Tensor y({B, out});
  for (std::size_t r = 0; r < B; ++r) {
    const double* xr = &x.data()[r * in];
    double* yr = &y.data()[r * out];
    for (std::size_t o = 0; o < out; ++o) {
      const double* wr = &w.data()[o * in];
      double acc = b[o];
      for (std::size_t i = 0; i < in; ++i) acc += wr[i] * xr[i];
      yr[o] = acc;
    }
  }
  return y;
}

inline void relu_inplace(Tensor& t) {
  for (double& v : t.data()) v = v > 0.0 ? v : 0.0;
}

// Forward pass keeping every layer input; acts[0] is the feature matrix,
// acts[L] the logits.
inline std::vector<Tensor> forward_cached(const ParameterSet& params, const Tensor& features) {
  const std::size_t L = layer_count(params);
  std::vector<Tensor> acts;
  acts.reserve(L + 1);
  acts.push_back(features);
  for (std::size_t l = 0; l < L; ++l) {
    Tensor y = affine(acts.back(), params.entry(2 * l).tensor, params.entry(2 * l + 1).tensor);
    if (l + 1 < L) relu_inplace(y);
    acts.push_back(std::move(y));
  }
  return acts;
}

// Row-wise softmax probabilities and log-sum-exp values.
inline void softmax_rows(const Tensor& logits, Tensor& probs, std::vector<double>& lse) {
  const std::size_t B = logits.rows(), C = logits.cols();
  probs = Tensor({B, C});
  lse.assign(B, 0.0);
  for (std::size_t r = 0; r < B; ++r) {
    const double* zr = &logits.data()[r * C];
    double m = zr[0];
    for (std::size_t c = 1; c < C; ++c) m = std::max(m, zr[c]);
    double sum = 0.0;
    for (std::size_t c = 0; c < C; ++c) sum += std::exp(zr[c] - m);
    lse[r] = m + std::log(sum);
    double* pr = &probs.data()[r * C];
    for (std::size_t c = 0; c < C; ++c) pr[c] = std::exp(zr[c] - lse[r]);
  }
}

// Backpropagate dlogits through the cached activations.
inline GradientSet backward(const ParameterSet& params, const std::vector<Tensor>& acts,
                            Tensor dlogits) {
  const std::size_t L = layer_count(params);
  GradientSet grad = zeros_like(params);
  Tensor dy = std::move(dlogits);
  for (std::size_t l = L; l-- > 0;) {
    const Tensor& x = acts[l];
    const Tensor& w = params.entry(2 * l).tensor;
    Tensor& dw = grad.entry(2 * l).tensor;
    Tensor& db = grad.entry(2 * l + 1).tensor;
    const std::size_t B = x.rows(), in = x.cols(), out = w.rows();
    for (std::size_t r = 0; r < B; ++r) {
      const double* xr = &x.data()[r * in];
      const double* dyr = &dy.data()[r * out];
      for (std::size_t o = 0; o < out; ++o) {
        const double g = dyr[o];
        if (g == 0.0) continue;
        double* dwr = &dw.data()[o * in];
        for (std::size_t i = 0; i < in; ++i) dwr[i] += g * xr[i];
        db[o] += g;
      }
    }
    if (l == 0) break;
    Tensor dx({B, in});
    for (std::size_t r = 0; r < B; ++r) {
      const double* xr = &x.data()[r * in];
      const double* dyr = &dy.data()[r * out];
      double* dxr = &dx.data()[r * in];
      for (std::size_t o = 0; o < out; ++o) {
        const double g = dyr[o];
        if (g == 0.0) continue;
        const double* wr = &w.data()[o * in];
        for (std::size_t i = 0; i < in; ++i) dxr[i] += g * wr[i];
      }
      // ReLU mask; subgradient at 0 taken as 0.
      for (std::size_t i = 0; i < in; ++i)
        if (xr[i] <= 0.0) dxr[i] = 0.0;
    }
    dy = std::move(dx);
  }
  return grad;
}

}  // namespace detail

// Logits [B x C]; deterministic affine/ReLU chain.
inline Tensor forward(const ParameterSet& params, const Tensor& features) {
  return detail::forward_cached(params, features).back();
}

struct LossGrad {
  double loss = 0.0;
  GradientSet grad;
};

inline void check_labels(const std::vector<int>& labels, std::size_t B, std::size_t C) {
  if (labels.size() != B) throw std::invalid_argument("mlp: label count != batch size");
  for (int y : labels)
    if (y < 0 || static_cast<std::size_t>(y) >= C)
      throw std::invalid_argument("mlp: label out of range");
}

// Mean softmax cross-entropy and its exact gradient.
inline LossGrad loss_and_grad(const ParameterSet& params, const Batch& batch) {
  const auto acts = detail::forward_cached(params, batch.features);
  const Tensor& logits = acts.back();
  const std::size_t B = logits.rows(), C = logits.cols();
  check_labels(batch.labels, B, C);

  Tensor probs;
  std::vector<double> lse;
  detail::softmax_rows(logits, probs, lse);

  double loss = 0.0;
  for (std::size_t r = 0; r < B; ++r)
    loss += lse[r] - logits(r, static_cast<std::size_t>(batch.labels[r]));
  loss /= static_cast<double>(B);

  Tensor dlogits = probs;
  const double inv_b = 1.0 / static_cast<double>(B);
  for (std::size_t r = 0; r < B; ++r) {
    dlogits(r, static_cast<std::size_t>(batch.labels[r])) -= 1.0;
    for (std::size_t c = 0; c < C; ++c) dlogits(r, c) *= inv_b;
  }
  return LossGrad{loss, detail::backward(params, acts, std::move(dlogits))};
}

// Cross-entropy against row-stochastic target distributions [B x C].
inline LossGrad loss_and_grad_soft(const ParameterSet& params, const Tensor& features,
                                   const Tensor& targets) {
  const auto acts = detail::forward_cached(params, features);
  const Tensor& logits = acts.back();
  const std::size_t B = logits.rows(), C = logits.cols();
  if (targets.rows() != B || targets.cols() != C)
    throw std::invalid_argument("mlp: target distribution shape mismatch");

  Tensor probs;
  std::vector<double> lse;
  detail::softmax_rows(logits, probs, lse);

  double loss = 0.0;
  for (std::size_t r = 0; r < B; ++r) {
    double dotzt = 0.0;
    for (std::size_t c = 0; c < C; ++c) dotzt += targets(r, c) * logits(r, c);
    loss += lse[r] - dotzt;
  }
  loss /= static_cast<double>(B);

  Tensor dlogits = probs;
  const double inv_b = 1.0 / static_cast<double>(B);
  for (std::size_t r = 0; r < B; ++r)
    for (std::size_t c = 0; c < C; ++c)
      dlogits(r, c) = (dlogits(r, c) - targets(r, c)) * inv_b;
  return LossGrad{loss, detail::backward(params, acts, std::move(dlogits))};
}

inline double loss_only(const ParameterSet& params, const Batch& batch) {
  const Tensor logits = forward(params, batch.features);
  const std::size_t B = logits.rows(), C = logits.cols();
  check_labels(batch.labels, B, C);
  Tensor probs;
  std::vector<double> lse;
  detail::softmax_rows(logits, probs, lse);
  double loss = 0.0;
  for (std::size_t r = 0; r < B; ++r)
    loss += lse[r] - logits(r, static_cast<std::size_t>(batch.labels[r]));
  return loss / static_cast<double>(B);
}

inline std::vector<int> predict_classes(const ParameterSet& params, const Tensor& features) {
  const Tensor logits = forward(params, features);
  const std::size_t B = logits.rows(), C = logits.cols();
  std::vector<int> out(B);
  for (std::size_t r = 0; r < B; ++r) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < C; ++c)
      if (logits(r, c) > logits(r, best)) best = c;
    out[r] = static_cast<int>(best);
  }
  return out;
}

inline double accuracy(const ParameterSet& params, const Tensor& features,
                       const std::vector<int>& labels) {
  const auto pred = predict_classes(params, features);
  if (pred.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    if (pred[i] == labels[i]) ++hits;
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

// Sub-batch of the given row positions (not dataset ids).
inline Batch gather_batch(const Batch& batch, const std::vector<std::size_t>& positions) {
  const std::size_t d = batch.features.cols();
  Batch out;
  out.features = Tensor({positions.size(), d});
  out.labels.reserve(positions.size());
  const bool has_ids = !batch.sample_indices.empty();
  if (has_ids) out.sample_indices.reserve(positions.size());
  std::size_t r = 0;
  for (std::size_t pos : positions) {
    if (pos >= batch.features.rows())
      throw std::out_of_range("gather_batch: position beyond batch");
    for (std::size_t c = 0; c < d; ++c) out.features(r, c) = batch.features(pos, c);
    out.labels.push_back(batch.labels[pos]);
    if (has_ids) out.sample_indices.push_back(batch.sample_indices[pos]);
    ++r;
  }
  return out;
}

}  // namespace flatgrad
