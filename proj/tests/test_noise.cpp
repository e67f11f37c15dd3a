#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "flatgrad/noise.hpp"
#include "flatgrad/rng.hpp"

using namespace flatgrad;

namespace {

std::vector<int> cycled_labels(std::size_t n, int classes) {
  std::vector<int> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = int(i % classes);
  return y;
}

std::size_t count_flips(const std::vector<std::uint8_t>& mask) {
  std::size_t k = 0;
  for (auto b : mask) k += b;
  return k;
}

void check_mask(const std::vector<int>& truth, const std::vector<int>& observed,
                const std::vector<std::uint8_t>& mask, int classes) {
  REQUIRE(observed.size() == truth.size());
  REQUIRE(mask.size() == truth.size());
  for (std::size_t i = 0; i < truth.size(); ++i) {
    REQUIRE(observed[i] >= 0);
    REQUIRE(observed[i] < classes);
    REQUIRE(bool(mask[i]) == (observed[i] != truth[i]));
  }
}

ParameterSet flat_probe(std::size_t d, std::size_t C) {
  ParameterSet p;
  p.add("layer0.weight", Tensor({C, d}));
  p.add("layer0.bias", Tensor({C}));
  return p;
}

}  // namespace

TEST_CASE("symmetric flip rate is binomial", "[noise]") {
  const std::size_t N = 10000;
  const int C = 5;
  const auto labels = cycled_labels(N, C);
  for (double alpha : {0.2, 0.4, 0.6, 0.8}) {
    const auto c = corrupt_symmetric(labels, C, alpha, 42 + std::uint64_t(alpha * 10));
    check_mask(labels, c.observed, c.corrupted, C);
    const double realized = double(count_flips(c.corrupted)) / N;
    const double sigma = std::sqrt(alpha * (1.0 - alpha) / N);
    REQUIRE(std::abs(realized - alpha) < 3.0 * sigma);
  }
}

TEST_CASE("symmetric targets are uniform over the other classes", "[noise]") {
  const std::size_t N = 100000;
  const int C = 5;
  const auto labels = cycled_labels(N, C);
  const auto c = corrupt_symmetric(labels, C, 0.5, 7);

  // offset (observed - true) mod C is uniform on {1..C-1} for uniform targets
  std::vector<double> counts(C, 0.0);
  double flips = 0.0;
  for (std::size_t i = 0; i < N; ++i) {
    if (!c.corrupted[i]) continue;
    ++counts[std::size_t((c.observed[i] - labels[i] + C) % C)];
    ++flips;
  }
  REQUIRE(counts[0] == 0.0);
  const double expected = flips / (C - 1);
  double chi2 = 0.0;
  for (int k = 1; k < C; ++k)
    chi2 += (counts[k] - expected) * (counts[k] - expected) / expected;
  // df = 3, p > 0.01
  REQUIRE(chi2 < 11.345);
}

TEST_CASE("symmetric self flips lower the realized rate", "[noise]") {
  const std::size_t N = 20000;
  const int C = 4;
  const auto labels = cycled_labels(N, C);
  const auto c = corrupt_symmetric(labels, C, 0.4, 11, true);
  check_mask(labels, c.observed, c.corrupted, C);
  const double realized = double(count_flips(c.corrupted)) / N;
  const double expect = 0.4 * (C - 1) / double(C);  // 0.3
  REQUIRE(std::abs(realized - expect) < 3.0 * std::sqrt(expect * (1 - expect) / N));
}

TEST_CASE("symmetric corruption is seed-deterministic and validated", "[noise]") {
  const auto labels = cycled_labels(500, 3);
  const auto a = corrupt_symmetric(labels, 3, 0.5, 99);
  const auto b = corrupt_symmetric(labels, 3, 0.5, 99);
  REQUIRE(a.observed == b.observed);
  REQUIRE(a.corrupted == b.corrupted);
  const auto c = corrupt_symmetric(labels, 3, 0.5, 100);
  REQUIRE(a.observed != c.observed);

  REQUIRE(count_flips(corrupt_symmetric(labels, 3, 0.0, 1).corrupted) == 0);
  REQUIRE(count_flips(corrupt_symmetric(labels, 3, 1.0, 1).corrupted) == labels.size());

  REQUIRE_THROWS_AS(corrupt_symmetric(labels, 1, 0.5, 1), std::invalid_argument);
  REQUIRE_THROWS_AS(corrupt_symmetric(labels, 3, 1.5, 1), std::invalid_argument);
  REQUIRE_THROWS_AS(corrupt_symmetric(labels, 3, -0.1, 1), std::invalid_argument);
}

TEST_CASE("asymmetric flips follow the pair map", "[noise]") {
  const std::vector<int> labels{0, 1, 2, 0, 1, 2};
  const std::vector<int> map{1, 2, 0};
  const auto all = corrupt_asymmetric(labels, map, 1.0, 5);
  REQUIRE(all.observed == std::vector<int>{1, 2, 0, 1, 2, 0});
  REQUIRE(count_flips(all.corrupted) == labels.size());

  const std::size_t N = 10000;
  const auto big = cycled_labels(N, 3);
  const auto c = corrupt_asymmetric(big, map, 0.3, 6);
  check_mask(big, c.observed, c.corrupted, 3);
  const double realized = double(count_flips(c.corrupted)) / N;
  REQUIRE(std::abs(realized - 0.3) < 3.0 * std::sqrt(0.3 * 0.7 / N));
  // flipped samples land exactly on the mapped class
  for (std::size_t i = 0; i < N; ++i)
    if (c.corrupted[i]) REQUIRE(c.observed[i] == map[std::size_t(big[i])]);

  REQUIRE_THROWS_WITH(corrupt_asymmetric(labels, {1, 1, 0}, 0.5, 1),
                      Catch::Matchers::ContainsSubstring("fixed point at class 1"));
  REQUIRE_THROWS_AS(corrupt_asymmetric(labels, {1, 2, 3}, 0.5, 1), std::invalid_argument);
  REQUIRE_THROWS_AS(corrupt_asymmetric({0, 5}, map, 0.5, 1), std::invalid_argument);
}

TEST_CASE("instance noise with a flat probe reduces to uniform flipping", "[noise]") {
  const std::size_t N = 10000, d = 3, C = 4;
  Tensor x({N, d});
  Rng rng = make_rng(13);
  for (double& v : x.data()) v = normal(rng);
  const auto labels = cycled_labels(N, C);
  const ParameterSet probe = flat_probe(d, C);

  const double alpha = 0.2;
  const auto c = corrupt_instance_dependent(x, labels, probe, alpha, 17);
  check_mask(labels, c.observed, c.corrupted, C);
  REQUIRE_FALSE(c.degenerate);
  REQUIRE(c.effective_rate == Catch::Approx(alpha).margin(1e-9));
  const double realized = double(count_flips(c.corrupted)) / N;
  REQUIRE(std::abs(realized - alpha) < 0.02);

  // equal probe logits: the flip target is the lowest class other than the label
  for (std::size_t i = 0; i < N; ++i)
    if (c.corrupted[i]) REQUIRE(c.observed[i] == (labels[i] == 0 ? 1 : 0));
}

TEST_CASE("instance noise targets track the probe's runner-up class", "[noise]") {
  const std::size_t N = 200, d = 2, C = 3;
  Tensor x({N, d});
  Rng rng = make_rng(23);
  for (double& v : x.data()) v = normal(rng);
  const auto labels = cycled_labels(N, C);

  ParameterSet probe;
  probe.add("layer0.weight", Tensor({C, d}, {1.0, 0.2, -0.4, 0.9, 0.3, -0.6}));
  probe.add("layer0.bias", Tensor({C}, {0.05, -0.02, 0.01}));

  const auto c = corrupt_instance_dependent(x, labels, probe, 0.5, 29);
  const Tensor logits = forward(probe, x);
  for (std::size_t i = 0; i < N; ++i) {
    if (!c.corrupted[i]) continue;
    int best = -1;
    for (int k = 0; k < int(C); ++k) {
      if (k == labels[i]) continue;
      if (best < 0 || logits(i, std::size_t(k)) > logits(i, std::size_t(best))) best = k;
    }
    REQUIRE(c.observed[i] == best);
  }
}

TEST_CASE("certain probe leaves no uncertainty mass", "[noise]") {
  const std::size_t N = 50, d = 2, C = 3;
  Tensor x({N, d});
  for (std::size_t i = 0; i < N; ++i) {
    x(i, 0) = 2.0 + 0.1 * double(i);  // one logit dominates by >= 200 everywhere
    x(i, 1) = 1.0;
  }
  const auto labels = cycled_labels(N, C);

  ParameterSet sharp;
  sharp.add("layer0.weight", Tensor({C, d}, {100.0, 0.0, 0.0, 0.0, 0.0, 0.0}));
  sharp.add("layer0.bias", Tensor({C}));
  const auto c = corrupt_instance_dependent(x, labels, sharp, 0.3, 37);
  REQUIRE(c.degenerate);
  REQUIRE(c.effective_rate == 0.0);
  REQUIRE(count_flips(c.corrupted) == 0);
  REQUIRE(c.observed == labels);
}

TEST_CASE("instance noise saturates at the achievable rate", "[noise]") {
  // half the rows are probe-certain, so alpha = 0.8 cannot be met
  const std::size_t N = 100, d = 1, C = 2;
  Tensor x({N, d});
  for (std::size_t i = 0; i < N; ++i) x(i, 0) = i < N / 2 ? 1000.0 : 0.0;
  const auto labels = cycled_labels(N, C);

  ParameterSet probe;
  probe.add("layer0.weight", Tensor({C, d}, {1.0, -1.0}));
  probe.add("layer0.bias", Tensor({C}));

  const auto c = corrupt_instance_dependent(x, labels, probe, 0.8, 41);
  REQUIRE_FALSE(c.degenerate);
  REQUIRE(c.effective_rate == Catch::Approx(0.5).margin(1e-9));
  for (std::size_t i = 0; i < N; ++i)
    REQUIRE(bool(c.corrupted[i]) == (i >= N / 2));  // saturated rows always flip

  const auto none = corrupt_instance_dependent(x, labels, probe, 0.0, 41);
  REQUIRE(count_flips(none.corrupted) == 0);
  REQUIRE(none.effective_rate == 0.0);
  REQUIRE_FALSE(none.degenerate);
}

TEST_CASE("beta mixture rows stay stochastic", "[noise]") {
  const std::size_t N = 2000, C = 5;
  const auto labels = cycled_labels(N, C);
  const Tensor onehot = one_hot(labels, C);
  const Tensor soft = corrupt_beta_mixture(onehot, 0.5, 2.0, 3.0, 53);
  for (std::size_t i = 0; i < N; ++i) {
    double row = 0.0;
    for (std::size_t c = 0; c < C; ++c) {
      REQUIRE(soft(i, c) >= 0.0);
      row += soft(i, c);
    }
    REQUIRE(row == Catch::Approx(1.0).margin(1e-9));
  }

  const Tensor untouched = corrupt_beta_mixture(onehot, 0.0, 2.0, 3.0, 53);
  for (std::size_t i = 0; i < N * C; ++i) REQUIRE(untouched[i] == onehot[i]);

  REQUIRE_THROWS_AS(corrupt_beta_mixture(onehot, 0.5, 0.0, 1.0, 1), std::invalid_argument);
  REQUIRE_THROWS_AS(corrupt_beta_mixture(onehot, 1.5, 1.0, 1.0, 1), std::invalid_argument);
}

TEST_CASE("beta mixture true-class mass matches its expectation", "[noise]") {
  // alpha = 1, symmetric Beta(1,1): every row becomes u/sum(u), and the mass
  // on the true class averages 1/C by symmetry
  const std::size_t N = 100000, C = 5;
  const auto labels = cycled_labels(N, C);
  const Tensor soft = corrupt_beta_mixture(one_hot(labels, C), 1.0, 1.0, 1.0, 59);
  double mean = 0.0;
  for (std::size_t i = 0; i < N; ++i) mean += soft(i, std::size_t(labels[i]));
  mean /= N;
  REQUIRE(mean == Catch::Approx(0.2).margin(0.002));
}

TEST_CASE("noisy dataset dispatch fills every field", "[noise]") {
  const std::size_t N = 300, d = 2;
  Tensor x({N, d});
  Rng rng = make_rng(61);
  for (double& v : x.data()) v = normal(rng);
  const auto labels = cycled_labels(N, 3);

  NoiseSpec sym;
  sym.kind = NoiseKind::symmetric;
  sym.rate = 0.4;
  sym.seed = 71;
  const NoisyDataset ds = make_noisy_dataset(x, labels, 3, sym);
  REQUIRE(ds.class_count == 3);
  REQUIRE(ds.true_labels == labels);
  REQUIRE(ds.spec.kind == NoiseKind::symmetric);
  REQUIRE(ds.spec.rate == 0.4);
  REQUIRE(ds.soft_labels.size() == 0);
  check_mask(ds.true_labels, ds.observed_labels, ds.corrupted, 3);
  REQUIRE(count_flips(ds.corrupted) > 0);

  // default asymmetric map is the cyclic shift
  NoiseSpec asym;
  asym.kind = NoiseKind::asymmetric_pair;
  asym.rate = 1.0;
  asym.seed = 73;
  const NoisyDataset da = make_noisy_dataset(x, labels, 3, asym);
  for (std::size_t i = 0; i < N; ++i) REQUIRE(da.observed_labels[i] == (labels[i] + 1) % 3);

  NoiseSpec inst;
  inst.kind = NoiseKind::instance_dependent;
  inst.rate = 0.2;
  REQUIRE_THROWS_AS(make_noisy_dataset(x, labels, 3, inst), std::invalid_argument);
  const ParameterSet probe = flat_probe(d, 3);
  REQUIRE_NOTHROW(make_noisy_dataset(x, labels, 3, inst, &probe));

  NoiseSpec mix;
  mix.kind = NoiseKind::beta_mixture;
  mix.rate = 0.6;
  mix.beta = 2.0;
  mix.gamma = 2.0;
  mix.seed = 79;
  const NoisyDataset dm = make_noisy_dataset(x, labels, 3, mix);
  REQUIRE(dm.soft_labels.rows() == N);
  REQUIRE(dm.soft_labels.cols() == 3);
  std::size_t flipped = 0;
  for (std::size_t i = 0; i < N; ++i) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < 3; ++c)
      if (dm.soft_labels(i, c) > dm.soft_labels(i, best)) best = c;
    REQUIRE(dm.observed_labels[i] == int(best));
    REQUIRE(bool(dm.corrupted[i]) ==
            (dm.soft_labels(i, std::size_t(labels[i])) < 1.0));
    flipped += dm.corrupted[i];
  }
  REQUIRE(flipped > 0);
  REQUIRE(flipped < N);
}

TEST_CASE("one hot encoding validates labels", "[noise]") {
  const Tensor t = one_hot({2, 0}, 3);
  REQUIRE(t(0, 2) == 1.0);
  REQUIRE(t(0, 0) == 0.0);
  REQUIRE(t(1, 0) == 1.0);
  REQUIRE_THROWS_AS(one_hot({3}, 3), std::invalid_argument);
  REQUIRE_THROWS_AS(one_hot({-1}, 3), std::invalid_argument);
}

TEST_CASE("noise kind names round-trip", "[noise]") {
  for (NoiseKind k : {NoiseKind::symmetric, NoiseKind::asymmetric_pair,
                      NoiseKind::instance_dependent, NoiseKind::beta_mixture})
    REQUIRE(noise_kind_from_string(to_string(k)) == k);
  REQUIRE_THROWS_AS(noise_kind_from_string("bogus"), std::invalid_argument);
}
