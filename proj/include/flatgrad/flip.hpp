#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <utility>
#include <vector>

#include "flatgrad/mlp.hpp"
#include "flatgrad/rng.hpp"

// Progressive label-flip simulation: score samples by their top-2 logit gap,
// sample flip candidates with weights 1/(1+gap), flip each to its best
// non-observed class, and expose the mean gradient of the flipped subset.

namespace flatgrad {

struct LogitRecord {
  std::size_t sample_index = 0;
  std::vector<double> logits;
};

// One per mini-batch iteration. `selected` holds batch row positions;
// `probs` is the full selection distribution over the batch.
struct FlipPlan {
  std::vector<std::size_t> selected;
  std::vector<int> flipped_labels;   // parallel to selected, never the observed label
  std::vector<double> gaps;          // parallel to selected
  std::vector<double> probs;         // length B, sums to 1, all positive
};

// gap = largest logit minus second largest, always >= 0.
inline double logit_gap(const std::vector<double>& logits) {
  if (logits.size() < 2) throw std::invalid_argument("logit_gap: need C >= 2");
  double top = -std::numeric_limits<double>::infinity();
  double second = top;
  for (double z : logits) {
    if (z > top) {
      second = top;
      top = z;
    } else if (z > second) {
      second = z;
    }
  }
  return top - second;
}

// p_i proportional to 1/(1+gap_i).
inline std::vector<double> selection_probs(const std::vector<double>& gaps) {
  if (gaps.empty()) throw std::invalid_argument("selection_probs: empty gap list");
  std::vector<double> p(gaps.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < gaps.size(); ++i) {
    if (gaps[i] < 0.0) throw std::invalid_argument("selection_probs: negative gap");
    p[i] = 1.0 / (1.0 + gaps[i]);
    sum += p[i];
  }
  for (double& x : p) x /= sum;
  return p;
}

// Weighted sampling without replacement via Gumbel-top-k: perturb log p with
// Gumbel noise, keep the `count` largest keys. Exactly categorical for k=1.
inline std::vector<std::size_t> sample_candidates(const std::vector<double>& probs,
                                                  std::size_t count, Rng& rng) {
  if (count < 1 || count > probs.size())
    throw std::invalid_argument("sample_candidates: count out of range");
  std::vector<std::pair<double, std::size_t>> keys;
  keys.reserve(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i)
    keys.emplace_back(std::log(probs[i]) + gumbel(rng), i);
  std::partial_sort(keys.begin(), keys.begin() + static_cast<std::ptrdiff_t>(count), keys.end(),
                    [](const auto& a, const auto& b) { return a.first > b.first; });
  std::vector<std::size_t> out(count);
  for (std::size_t i = 0; i < count; ++i) out[i] = keys[i].second;
  return out;
}

// Highest-logit class excluding the current label; ties break low.
inline int flip_top2(const std::vector<double>& logits, int current_label) {
  if (logits.size() < 2) throw std::invalid_argument("flip_top2: need C >= 2");
  int best = -1;
  for (std::size_t c = 0; c < logits.size(); ++c) {
    if (static_cast<int>(c) == current_label) continue;
    if (best < 0 || logits[c] > logits[static_cast<std::size_t>(best)])
      best = static_cast<int>(c);
  }
  return best;
}

// Score the batch on the current (unperturbed) parameters and pick
// round(flip_ratio * B) samples, at least one. Flip targets are computed
// against the observed labels.
inline FlipPlan build_flip_plan(const ParameterSet& params, const Batch& batch,
                                double flip_ratio, Rng& rng) {
  const std::size_t B = batch_size(batch);
  if (B == 0) throw std::invalid_argument("build_flip_plan: empty batch");
  if (flip_ratio <= 0.0 || flip_ratio > 1.0)
    throw std::invalid_argument("build_flip_plan: flip_ratio outside (0,1]");

  const Tensor logits = forward(params, batch.features);
  const std::size_t C = logits.cols();

  std::vector<double> gaps(B);
  for (std::size_t r = 0; r < B; ++r) {
    std::vector<double> row(&logits.data()[r * C], &logits.data()[(r + 1) * C]);
    gaps[r] = logit_gap(row);
  }

  FlipPlan plan;
  plan.probs = selection_probs(gaps);
  std::size_t count = static_cast<std::size_t>(
      std::llround(flip_ratio * static_cast<double>(B)));
  count = std::clamp<std::size_t>(count, 1, B);
  plan.selected = sample_candidates(plan.probs, count, rng);

  plan.flipped_labels.reserve(count);
  plan.gaps.reserve(count);
  for (std::size_t pos : plan.selected) {
    std::vector<double> row(&logits.data()[pos * C], &logits.data()[(pos + 1) * C]);
    plan.flipped_labels.push_back(flip_top2(row, batch.labels[pos]));
    plan.gaps.push_back(gaps[pos]);
  }
  return plan;
}

// Mean cross-entropy gradient over only the selected samples evaluated with
// their flipped labels.
inline GradientSet simulated_noise_gradient(const ParameterSet& params, const Batch& batch,
                                            const FlipPlan& plan) {
  if (plan.selected.empty())
    throw std::invalid_argument("simulated_noise_gradient: empty flip plan");
  Batch sub = gather_batch(batch, plan.selected);
  sub.labels = plan.flipped_labels;
  return loss_and_grad(params, sub).grad;
}

}  // namespace flatgrad
