#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "flatgrad/rng.hpp"
#include "flatgrad/tensor.hpp"

// Synthetic dataset generators, a stratified train/test split, and a loader
// for the big-endian IDX image/label container.

namespace flatgrad {

struct LabeledData {
  Tensor features;          // [n x d]
  std::vector<int> labels;  // n entries in [0, class_count)
  std::size_t class_count = 0;
};

// Two interleaved half circles with isotropic Gaussian jitter. Class 0 is the
// upper arc, class 1 the lower, shifted to interlock.
inline LabeledData generate_two_moons(std::size_t samples, double noise_std,
                                      std::uint64_t seed) {
  if (samples < 2) throw std::invalid_argument("generate_two_moons: need >= 2 samples");
  if (noise_std < 0.0) throw std::invalid_argument("generate_two_moons: negative noise");
  const std::size_t n_outer = samples / 2 + samples % 2;
  const std::size_t n_inner = samples / 2;

  LabeledData data;
  data.features = Tensor({samples, 2});
  data.labels.resize(samples);
  data.class_count = 2;

  Rng rng(seed);
  for (std::size_t i = 0; i < n_outer; ++i) {
    const double t = std::numbers::pi * static_cast<double>(i) /
                     static_cast<double>(n_outer > 1 ? n_outer - 1 : 1);
    data.features(i, 0) = std::cos(t);
    data.features(i, 1) = std::sin(t);
    data.labels[i] = 0;
  }
  for (std::size_t i = 0; i < n_inner; ++i) {
    const double t = std::numbers::pi * static_cast<double>(i) /
                     static_cast<double>(n_inner > 1 ? n_inner - 1 : 1);
    const std::size_t r = n_outer + i;
    data.features(r, 0) = 1.0 - std::cos(t);
    data.features(r, 1) = 1.0 - std::sin(t) - 0.5;
    data.labels[r] = 1;
  }
  if (noise_std > 0.0)
    for (double& v : data.features.data()) v += noise_std * normal(rng);
  return data;
}

// Isotropic Gaussian clusters. The first min(classes, dim) centers sit on
// scaled coordinate axes; any further centers take random unit directions.
// Sample i belongs to cluster i % classes, then rows are shuffled.
inline LabeledData generate_gaussian_blobs(std::size_t samples, std::size_t classes,
                                           std::size_t dim, double separation,
                                           double cluster_std, std::uint64_t seed) {
  if (samples < classes) throw std::invalid_argument("generate_gaussian_blobs: too few samples");
  if (classes < 2) throw std::invalid_argument("generate_gaussian_blobs: need >= 2 classes");
  if (dim == 0) throw std::invalid_argument("generate_gaussian_blobs: zero dim");
  if (cluster_std < 0.0 || separation < 0.0)
    throw std::invalid_argument("generate_gaussian_blobs: negative spread");

  Rng rng(seed);
  std::vector<std::vector<double>> centers(classes, std::vector<double>(dim, 0.0));
  for (std::size_t c = 0; c < classes; ++c) {
    if (c < dim) {
      centers[c][c] = separation;
    } else {
      double norm = 0.0;
      do {
        norm = 0.0;
        for (double& v : centers[c]) {
          v = normal(rng);
          norm += v * v;
        }
        norm = std::sqrt(norm);
      } while (norm <= 1e-12);
      for (double& v : centers[c]) v *= separation / norm;
    }
  }

  LabeledData data;
  data.features = Tensor({samples, dim});
  data.labels.resize(samples);
  data.class_count = classes;
  for (std::size_t i = 0; i < samples; ++i) {
    const std::size_t c = i % classes;
    data.labels[i] = static_cast<int>(c);
    for (std::size_t j = 0; j < dim; ++j)
      data.features(i, j) = centers[c][j] + cluster_std * normal(rng);
  }

  // Fisher-Yates over rows so class blocks do not survive into batches.
  for (std::size_t i = samples - 1; i > 0; --i) {
    const std::size_t j = uniform_index(rng, i + 1);
    if (j == i) continue;
    std::swap(data.labels[i], data.labels[j]);
    for (std::size_t k = 0; k < dim; ++k)
      std::swap(data.features(i, k), data.features(j, k));
  }
  return data;
}

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

// Per-class shuffle, then the first ceil(train_fraction * count) of each class
// go to train. Keeps class ratios close on both sides.
inline SplitIndices stratified_split(const std::vector<int>& labels,
                                     std::size_t class_count, double train_fraction,
                                     std::uint64_t seed) {
  if (train_fraction <= 0.0 || train_fraction >= 1.0)
    throw std::invalid_argument("stratified_split: fraction must be in (0, 1)");
  std::vector<std::vector<std::size_t>> by_class(class_count);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= class_count)
      throw std::invalid_argument("stratified_split: label out of range");
    by_class[static_cast<std::size_t>(labels[i])].push_back(i);
  }
  Rng rng(seed);
  SplitIndices split;
  for (auto& bucket : by_class) {
    for (std::size_t i = bucket.size(); i > 1; --i)
      std::swap(bucket[i - 1], bucket[uniform_index(rng, i)]);
    const auto take = static_cast<std::size_t>(
        std::ceil(train_fraction * static_cast<double>(bucket.size())));
    for (std::size_t i = 0; i < bucket.size(); ++i)
      (i < take ? split.train : split.test).push_back(bucket[i]);
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

inline LabeledData select_rows(const LabeledData& data, const std::vector<std::size_t>& rows) {
  LabeledData out;
  const std::size_t d = data.features.cols();
  out.features = Tensor({rows.size(), d});
  out.labels.resize(rows.size());
  out.class_count = data.class_count;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= data.features.rows())
      throw std::out_of_range("select_rows: row index out of range");
    out.labels[i] = data.labels[rows[i]];
    for (std::size_t j = 0; j < d; ++j) out.features(i, j) = data.features(rows[i], j);
  }
  return out;
}

class IdxError : public std::runtime_error {
 public:
  IdxError(const std::string& what, std::size_t offset)
      : std::runtime_error(what + " (byte offset " + std::to_string(offset) + ")"),
        byte_offset(offset) {}
  std::size_t byte_offset;
};

namespace detail {

inline std::uint32_t read_be_u32(std::istream& in, std::size_t& offset) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw IdxError("truncated IDX header", offset);
  offset += 4;
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
         (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

}  // namespace detail

// Reads an IDX image file (magic 0x00000803) and its label file (0x00000801).
// Pixels are scaled to [0, 1]; labels must be digits 0..9.
inline LabeledData load_idx(const std::string& image_path, const std::string& label_path) {
  std::ifstream img(image_path, std::ios::binary);
  if (!img) throw IdxError("cannot open image file: " + image_path, 0);
  std::size_t off = 0;
  const std::uint32_t img_magic = detail::read_be_u32(img, off);
  if (img_magic != 0x00000803u)
    throw IdxError("bad image magic " + std::to_string(img_magic), off - 4);
  const std::uint32_t count = detail::read_be_u32(img, off);
  const std::uint32_t rows = detail::read_be_u32(img, off);
  const std::uint32_t cols = detail::read_be_u32(img, off);
  if (count == 0 || rows == 0 || cols == 0)
    throw IdxError("empty image dimensions", off - 12);

  const std::size_t dim = std::size_t(rows) * cols;
  LabeledData data;
  data.features = Tensor({count, dim});
  std::vector<unsigned char> buf(dim);
  for (std::uint32_t i = 0; i < count; ++i) {
    img.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(dim));
    if (!img) throw IdxError("truncated image data", off);
    off += dim;
    for (std::size_t j = 0; j < dim; ++j)
      data.features(i, j) = static_cast<double>(buf[j]) / 255.0;
  }

  std::ifstream lab(label_path, std::ios::binary);
  if (!lab) throw IdxError("cannot open label file: " + label_path, 0);
  std::size_t loff = 0;
  const std::uint32_t lab_magic = detail::read_be_u32(lab, loff);
  if (lab_magic != 0x00000801u)
    throw IdxError("bad label magic " + std::to_string(lab_magic), loff - 4);
  const std::uint32_t lab_count = detail::read_be_u32(lab, loff);
  if (lab_count != count)
    throw IdxError("label count " + std::to_string(lab_count) + " != image count " +
                       std::to_string(count),
                   loff - 4);
  data.labels.resize(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    char c = 0;
    lab.read(&c, 1);
    if (!lab) throw IdxError("truncated label data", loff);
    const auto v = static_cast<unsigned char>(c);
    if (v > 9) throw IdxError("label value " + std::to_string(v) + " out of range", loff);
    ++loff;
    data.labels[i] = static_cast<int>(v);
  }
  data.class_count = 10;
  return data;
}

}  // namespace flatgrad
