#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "flatgrad/tensor.hpp"

namespace flatgrad {

// Named, ordered collection of tensors. Entry order is fixed at construction
// (layer order, weight before bias) so that flattened norms and dot products
// are reproducible. Gradients, perturbations and momentum buffers share the
// structure, hence the alias below.
class ParameterSet {
 public:
  struct Entry {
    std::string name;
    Tensor tensor;
  };

  ParameterSet() = default;

  void add(std::string name, Tensor tensor) {
    for (const Entry& e : entries_)
      if (e.name == name) throw std::invalid_argument("ParameterSet: duplicate name " + name);
    entries_.push_back(Entry{std::move(name), std::move(tensor)});
  }

  std::size_t entry_count() const { return entries_.size(); }
  const Entry& entry(std::size_t i) const { return entries_.at(i); }
  Entry& entry(std::size_t i) { return entries_.at(i); }

  const std::vector<Entry>& entries() const { return entries_; }

  std::size_t total_size() const {
    std::size_t n = 0;
    for (const Entry& e : entries_) n += e.tensor.size();
    return n;
  }

  bool congruent(const ParameterSet& other) const {
    if (entries_.size() != other.entries_.size()) return false;
    for (std::size_t i = 0; i < entries_.size(); ++i)
      if (!entries_[i].tensor.same_shape(other.entries_[i].tensor)) return false;
    return true;
  }

  bool all_finite() const {
    for (const Entry& e : entries_)
      if (!e.tensor.all_finite()) return false;
    return true;
  }

 private:
  std::vector<Entry> entries_;
};

using GradientSet = ParameterSet;

inline void require_congruent(const ParameterSet& a, const ParameterSet& b) {
  if (!a.congruent(b))
    throw std::invalid_argument("ParameterSet: shape mismatch between operand sets");
}

inline ParameterSet zeros_like(const ParameterSet& p) {
  ParameterSet out;
  for (const auto& e : p.entries()) out.add(e.name, Tensor::zeros(e.tensor.shape()));
  return out;
}

// out = p + a * v, value semantics.
inline ParameterSet axpy(const ParameterSet& p, double a, const ParameterSet& v) {
  require_congruent(p, v);
  ParameterSet out = p;
  for (std::size_t i = 0; i < out.entry_count(); ++i) {
    auto& dst = out.entry(i).tensor.data();
    const auto& src = v.entry(i).tensor.data();
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += a * src[j];
  }
  return out;
}

inline void axpy_inplace(ParameterSet& p, double a, const ParameterSet& v) {
  require_congruent(p, v);
  for (std::size_t i = 0; i < p.entry_count(); ++i) {
    auto& dst = p.entry(i).tensor.data();
    const auto& src = v.entry(i).tensor.data();
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += a * src[j];
  }
}

inline void scale_inplace(ParameterSet& p, double a) {
  for (std::size_t i = 0; i < p.entry_count(); ++i)
    for (double& x : p.entry(i).tensor.data()) x *= a;
}

inline ParameterSet scaled(const ParameterSet& p, double a) {
  ParameterSet out = p;
  scale_inplace(out, a);
  return out;
}

// Inner product over the flattened concatenation in entry order.
inline double dot(const GradientSet& a, const GradientSet& b) {
  require_congruent(a, b);
  double acc = 0.0;
  for (std::size_t i = 0; i < a.entry_count(); ++i) {
    const auto& x = a.entry(i).tensor.data();
    const auto& y = b.entry(i).tensor.data();
    for (std::size_t j = 0; j < x.size(); ++j) acc += x[j] * y[j];
  }
  return acc;
}

inline double l2_norm(const GradientSet& g) { return std::sqrt(dot(g, g)); }

inline std::vector<double> flatten(const ParameterSet& p) {
  std::vector<double> out;
  out.reserve(p.total_size());
  for (const auto& e : p.entries())
    out.insert(out.end(), e.tensor.data().begin(), e.tensor.data().end());
  return out;
}

inline double max_abs_diff(const ParameterSet& a, const ParameterSet& b) {
  require_congruent(a, b);
  double m = 0.0;
  for (std::size_t i = 0; i < a.entry_count(); ++i) {
    const auto& x = a.entry(i).tensor.data();
    const auto& y = b.entry(i).tensor.data();
    for (std::size_t j = 0; j < x.size(); ++j) m = std::max(m, std::abs(x[j] - y[j]));
  }
  return m;
}

}  // namespace flatgrad
