#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "flatgrad/noise.hpp"
#include "flatgrad/parameter_set.hpp"
#include "flatgrad/tensor.hpp"

// On-disk forms. A NoisyDataset saves as a directory:
//   features.f64     row-major float64, little-endian
//   soft_labels.f64  same encoding, only when soft labels exist
//   dataset.json     shapes, class count, noise spec with seed
//   labels.csv       index,true_label,observed_label,corrupted (LF, UTF-8)
// Parameter snapshots save as <stem>.f64 (entries concatenated, little-endian
// float64) plus <stem>.json naming each entry and its shape.

namespace flatgrad {

namespace detail {

inline void write_f64_le(std::ostream& out, const std::vector<double>& values) {
  for (double v : values) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 8);
  }
  if (!out) throw std::runtime_error("write_f64_le: write failed");
}

inline std::vector<double> read_f64_le(std::istream& in, std::size_t count) {
  std::vector<double> values(count);
  for (std::size_t k = 0; k < count; ++k) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    if (!in) throw std::runtime_error("read_f64_le: truncated stream");
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= std::uint64_t(b[i]) << (8 * i);
    std::memcpy(&values[k], &bits, 8);
  }
  return values;
}

inline std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + p.string());
  return out;
}

inline std::ifstream open_in(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for reading: " + p.string());
  return in;
}

}  // namespace detail

inline nlohmann::json noise_spec_to_json(const NoiseSpec& spec) {
  nlohmann::json j{{"kind", to_string(spec.kind)},
                   {"rate", spec.rate},
                   {"seed", spec.seed},
                   {"include_self_flip", spec.include_self_flip}};
  if (spec.kind == NoiseKind::beta_mixture) {
    j["beta"] = spec.beta;
    j["gamma"] = spec.gamma;
  }
  if (!spec.pair_map.empty()) j["pair_map"] = spec.pair_map;
  return j;
}

inline NoiseSpec noise_spec_from_json(const nlohmann::json& j) {
  NoiseSpec spec;
  spec.kind = noise_kind_from_string(j.at("kind").get<std::string>());
  spec.rate = j.at("rate").get<double>();
  spec.seed = j.at("seed").get<std::uint64_t>();
  spec.include_self_flip = j.value("include_self_flip", false);
  spec.beta = j.value("beta", 1.0);
  spec.gamma = j.value("gamma", 1.0);
  if (j.contains("pair_map")) spec.pair_map = j.at("pair_map").get<std::vector<int>>();
  return spec;
}

inline void save_noisy_dataset(const NoisyDataset& ds, const std::filesystem::path& dir) {
  const std::size_t n = ds.features.rows();
  if (ds.true_labels.size() != n || ds.observed_labels.size() != n ||
      ds.corrupted.size() != n)
    throw std::invalid_argument("save_noisy_dataset: inconsistent lengths");
  std::filesystem::create_directories(dir);

  {
    auto out = detail::open_out(dir / "features.f64");
    detail::write_f64_le(out, ds.features.data());
  }
  const bool has_soft = !ds.soft_labels.data().empty();
  if (has_soft) {
    auto out = detail::open_out(dir / "soft_labels.f64");
    detail::write_f64_le(out, ds.soft_labels.data());
  }

  nlohmann::json meta{{"feature_shape", ds.features.shape()},
                      {"class_count", ds.class_count},
                      {"noise", noise_spec_to_json(ds.spec)}};
  if (has_soft) meta["soft_label_shape"] = ds.soft_labels.shape();
  {
    auto out = detail::open_out(dir / "dataset.json");
    out << meta.dump(2) << "\n";
  }

  auto csv = detail::open_out(dir / "labels.csv");
  csv << "index,true_label,observed_label,corrupted\n";
  for (std::size_t i = 0; i < n; ++i)
    csv << i << ',' << ds.true_labels[i] << ',' << ds.observed_labels[i] << ','
        << int(ds.corrupted[i]) << '\n';
  if (!csv) throw std::runtime_error("save_noisy_dataset: labels.csv write failed");
}

inline NoisyDataset load_noisy_dataset(const std::filesystem::path& dir) {
  nlohmann::json meta;
  {
    auto in = detail::open_in(dir / "dataset.json");
    in >> meta;
  }
  NoisyDataset ds;
  ds.class_count = meta.at("class_count").get<std::size_t>();
  ds.spec = noise_spec_from_json(meta.at("noise"));

  const auto fshape = meta.at("feature_shape").get<std::vector<std::size_t>>();
  if (fshape.size() != 2) throw std::runtime_error("load_noisy_dataset: bad feature shape");
  {
    auto in = detail::open_in(dir / "features.f64");
    ds.features = Tensor(fshape, detail::read_f64_le(in, fshape[0] * fshape[1]));
  }
  if (meta.contains("soft_label_shape")) {
    const auto sshape = meta.at("soft_label_shape").get<std::vector<std::size_t>>();
    if (sshape.size() != 2) throw std::runtime_error("load_noisy_dataset: bad soft shape");
    auto in = detail::open_in(dir / "soft_labels.f64");
    ds.soft_labels = Tensor(sshape, detail::read_f64_le(in, sshape[0] * sshape[1]));
  }

  auto csv = detail::open_in(dir / "labels.csv");
  std::string line;
  if (!std::getline(csv, line) || line != "index,true_label,observed_label,corrupted")
    throw std::runtime_error("load_noisy_dataset: bad labels.csv header");
  const std::size_t n = fshape[0];
  ds.true_labels.reserve(n);
  ds.observed_labels.reserve(n);
  ds.corrupted.reserve(n);
  while (std::getline(csv, line)) {
    if (line.empty()) continue;
    std::size_t idx = 0;
    int t = 0, o = 0, c = 0;
    if (std::sscanf(line.c_str(), "%zu,%d,%d,%d", &idx, &t, &o, &c) != 4)
      throw std::runtime_error("load_noisy_dataset: bad labels.csv row: " + line);
    if (idx != ds.true_labels.size())
      throw std::runtime_error("load_noisy_dataset: labels.csv rows out of order");
    ds.true_labels.push_back(t);
    ds.observed_labels.push_back(o);
    ds.corrupted.push_back(static_cast<std::uint8_t>(c != 0));
  }
  if (ds.true_labels.size() != n)
    throw std::runtime_error("load_noisy_dataset: labels.csv row count mismatch");
  return ds;
}

inline void save_params(const ParameterSet& params, const std::filesystem::path& stem) {
  nlohmann::json meta = nlohmann::json::array();
  {
    auto out = detail::open_out(stem.string() + ".f64");
    for (std::size_t i = 0; i < params.entry_count(); ++i) {
      const auto& e = params.entry(i);
      detail::write_f64_le(out, e.tensor.data());
      meta.push_back({{"name", e.name}, {"shape", e.tensor.shape()}});
    }
  }
  auto out = detail::open_out(stem.string() + ".json");
  out << meta.dump(2) << "\n";
}

inline ParameterSet load_params(const std::filesystem::path& stem) {
  nlohmann::json meta;
  {
    auto in = detail::open_in(stem.string() + ".json");
    in >> meta;
  }
  ParameterSet params;
  auto in = detail::open_in(stem.string() + ".f64");
  for (const auto& entry : meta) {
    const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
    std::size_t count = 1;
    for (std::size_t s : shape) count *= s;
    params.add(entry.at("name").get<std::string>(),
               Tensor(shape, detail::read_f64_le(in, count)));
  }
  return params;
}

}  // namespace flatgrad
