#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "flatgrad/diagnostics.hpp"
#include "flatgrad/rng.hpp"

using namespace flatgrad;

namespace {

GradientSet vec2(double a, double b) {
  GradientSet g;
  g.add("g", Tensor({2}, {a, b}));
  return g;
}

GradientSet random_vec(std::size_t n, std::uint64_t seed) {
  GradientSet g;
  Tensor t({n});
  Rng rng = make_rng(seed);
  for (double& v : t.data()) v = normal(rng);
  g.add("g", std::move(t));
  return g;
}

}  // namespace

TEST_CASE("gaussian kl closed form", "[diagnostics]") {
  GaussianPacConfig unit;
  unit.param_dim = 7;
  REQUIRE(gaussian_kl(2.0, unit) == 1.0);  // equal stds: only the mean term
  REQUIRE(gaussian_kl(0.0, unit) == 0.0);

  GaussianPacConfig wide;
  wide.prior_std = 1.0;
  wide.posterior_std = 2.0;
  wide.param_dim = 3;
  // 0.5 * 3 * (4 - 1 - ln 4)
  REQUIRE(gaussian_kl(0.0, wide) == Catch::Approx(2.4205584583201641).epsilon(1e-14));

  // nonnegative for arbitrary settings, monotone in the mean shift
  Rng rng = make_rng(2);
  for (int t = 0; t < 50; ++t) {
    GaussianPacConfig cfg;
    cfg.prior_std = uniform_range(rng, 0.3, 3.0);
    cfg.posterior_std = uniform_range(rng, 0.3, 3.0);
    cfg.param_dim = 1 + uniform_index(rng, 20);
    const double m = uniform_range(rng, 0.0, 5.0);
    REQUIRE(gaussian_kl(m, cfg) >= 0.0);
    REQUIRE(gaussian_kl(m + 1.0, cfg) > gaussian_kl(m, cfg));
  }

  GaussianPacConfig bad;
  bad.prior_std = 0.0;
  REQUIRE_THROWS_AS(gaussian_kl(1.0, bad), std::invalid_argument);
  REQUIRE_THROWS_AS(gaussian_kl(-1.0, unit), std::invalid_argument);
  GaussianPacConfig few;
  few.sample_count = 1;
  REQUIRE_THROWS_AS(gaussian_kl(1.0, few), std::invalid_argument);
}

TEST_CASE("gaussian kl agrees with monte carlo", "[diagnostics]") {
  // KL(Q||P) estimated as the mean of log q - log p under Q
  GaussianPacConfig cfg;
  cfg.prior_std = 0.9;
  cfg.posterior_std = 1.3;
  cfg.param_dim = 3;
  const double msn = 2.5;
  const double mu0 = std::sqrt(msn);  // shift along the first axis

  Rng rng = make_rng(33);
  const int n = 100000;
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    double xsq = 0.0, dsq = 0.0;
    for (std::size_t c = 0; c < cfg.param_dim; ++c) {
      const double z = normal(rng);
      const double x = (c == 0 ? mu0 : 0.0) + cfg.posterior_std * z;
      xsq += x * x;
      const double d = x - (c == 0 ? mu0 : 0.0);
      dsq += d * d;
    }
    acc += double(cfg.param_dim) * std::log(cfg.prior_std / cfg.posterior_std) -
           dsq / (2.0 * cfg.posterior_std * cfg.posterior_std) +
           xsq / (2.0 * cfg.prior_std * cfg.prior_std);
  }
  const double estimate = acc / n;
  const double exact = gaussian_kl(msn, cfg);
  REQUIRE(std::abs(estimate - exact) / exact < 0.05);
}

TEST_CASE("pac penalty shape", "[diagnostics]") {
  GaussianPacConfig cfg;
  cfg.sample_count = 4;
  REQUIRE(pac_penalty(4.0, cfg) == 1.0);  // beta = 0

  GaussianPacConfig with_beta;
  with_beta.perturbation_std = 2.0;
  with_beta.param_dim = 3;
  with_beta.sample_count = 12;
  REQUIRE(pac_penalty(0.0, with_beta) == 1.0);  // sqrt(3*4/12)

  // grows with the shift, the radius and the dimension; shrinks with samples
  GaussianPacConfig base;
  base.perturbation_std = 0.5;
  base.param_dim = 10;
  base.sample_count = 100;
  const double ref = pac_penalty(1.0, base);
  REQUIRE(pac_penalty(2.0, base) > ref);
  GaussianPacConfig more = base;
  more.perturbation_std = 1.0;
  REQUIRE(pac_penalty(1.0, more) > ref);
  more = base;
  more.param_dim = 20;
  REQUIRE(pac_penalty(1.0, more) > ref);
  more = base;
  more.sample_count = 400;
  REQUIRE(pac_penalty(1.0, more) == Catch::Approx(ref / 2.0).epsilon(1e-14));

  REQUIRE_THROWS_AS(pac_penalty(-0.5, base), std::invalid_argument);
}

TEST_CASE("distortion report on hand vectors", "[diagnostics]") {
  // orthogonal noise of equal size: 45 degrees, longer biased gradient
  const DistortionReport a = distortion_report(vec2(1.0, 0.0), vec2(0.0, 1.0));
  REQUIRE(a.clean_norm == 1.0);
  REQUIRE(a.noise_norm == 1.0);
  REQUIRE(a.inner_product == 0.0);
  REQUIRE(a.biased_norm == Catch::Approx(std::sqrt(2.0)).epsilon(1e-14));
  REQUIRE(a.cos_theta == Catch::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));
  REQUIRE(a.regime == Regime::over_perturbation);

  // noise cancelling half the gradient: aligned but shorter
  const DistortionReport b = distortion_report(vec2(2.0, 0.0), vec2(-1.0, 0.0));
  REQUIRE(b.cos_theta == Catch::Approx(1.0).epsilon(1e-12));
  REQUIRE(b.biased_norm == 1.0);
  REQUIRE(b.inner_product == -2.0);
  REQUIRE(b.regime == Regime::under_perturbation);

  // full reversal at the same norm: neutral regime, angle pi
  const DistortionReport c = distortion_report(vec2(1.0, 0.0), vec2(-2.0, 0.0));
  REQUIRE(c.biased_norm == 1.0);
  REQUIRE(c.cos_theta == Catch::Approx(-1.0).epsilon(1e-12));
  REQUIRE(c.regime == Regime::neutral);

  REQUIRE_THROWS_AS(distortion_report(vec2(0.0, 0.0), vec2(1.0, 0.0)),
                    std::invalid_argument);
  REQUIRE_THROWS_AS(distortion_report(vec2(1.0, 0.0), vec2(-1.0, 0.0)),
                    std::invalid_argument);
}

TEST_CASE("distortion identity holds on random pairs", "[diagnostics]") {
  for (int t = 0; t < 100; ++t) {
    const GradientSet clean = random_vec(8, 1000 + std::uint64_t(t));
    const GradientSet noise = random_vec(8, 2000 + std::uint64_t(t));
    const DistortionReport rep = distortion_report(clean, noise);
    const double lhs = rep.biased_norm * rep.biased_norm;
    const double rhs = rep.clean_norm * rep.clean_norm + 2.0 * rep.inner_product +
                       rep.noise_norm * rep.noise_norm;
    REQUIRE(lhs == Catch::Approx(rhs).margin(1e-9));
    REQUIRE(rep.cos_theta >= -1.0);
    REQUIRE(rep.cos_theta <= 1.0);
    // cos against the direct definition on the summed vector
    const GradientSet biased = axpy(clean, 1.0, noise);
    const double direct = dot(clean, biased) / (l2_norm(clean) * l2_norm(biased));
    REQUIRE(rep.cos_theta == Catch::Approx(direct).margin(1e-12));
  }
}

namespace {

Batch random_batch(std::size_t B, std::size_t d, int classes, std::uint64_t seed) {
  Batch b;
  b.features = Tensor({B, d});
  Rng rng = make_rng(seed);
  for (double& v : b.features.data()) v = normal(rng);
  b.labels.resize(B);
  for (auto& y : b.labels) y = int(uniform_index(rng, classes));
  return b;
}

}  // namespace

TEST_CASE("gradient split reassembles the batch gradient", "[diagnostics]") {
  MlpSpec spec;
  spec.layer_widths = {3, 5, 4};
  spec.init_seed = 5;
  const ParameterSet params = init_params(spec);
  const Batch batch = random_batch(12, 3, 4, 7);

  std::vector<std::uint8_t> mask(12, 0);
  for (std::size_t i : {1ul, 4ul, 5ul, 9ul}) mask[i] = 1;

  const GradientSplit split = empirical_gradient_split(params, batch, mask);
  REQUIRE(split.clean_count == 8);
  REQUIRE(split.noise_count == 4);

  const GradientSet full = loss_and_grad(params, batch).grad;
  REQUIRE(max_abs_diff(axpy(split.clean, 1.0, split.noise), full) < 1e-12);

  // each part is the sub-batch mean weighted by its share of the batch
  Batch noisy_only = gather_batch(batch, {1, 4, 5, 9});
  GradientSet expect = loss_and_grad(params, noisy_only).grad;
  scale_inplace(expect, 4.0 / 12.0);
  REQUIRE(max_abs_diff(split.noise, expect) < 1e-15);
}

TEST_CASE("gradient split edge masks", "[diagnostics]") {
  MlpSpec spec;
  spec.layer_widths = {2, 3};
  spec.init_seed = 9;
  const ParameterSet params = init_params(spec);
  const Batch batch = random_batch(6, 2, 3, 11);

  const GradientSplit all_clean =
      empirical_gradient_split(params, batch, std::vector<std::uint8_t>(6, 0));
  REQUIRE(all_clean.noise_count == 0);
  REQUIRE(l2_norm(all_clean.noise) == 0.0);
  REQUIRE(max_abs_diff(all_clean.clean, loss_and_grad(params, batch).grad) == 0.0);

  const GradientSplit all_noise =
      empirical_gradient_split(params, batch, std::vector<std::uint8_t>(6, 1));
  REQUIRE(all_noise.clean_count == 0);
  REQUIRE(l2_norm(all_noise.clean) == 0.0);

  REQUIRE_THROWS_AS(
      empirical_gradient_split(params, batch, std::vector<std::uint8_t>(5, 0)),
      std::invalid_argument);
}

TEST_CASE("sharpness probes a quadratic exactly", "[diagnostics]") {
  const LossFn loss = [](const ParameterSet& p) {
    const double w = p.entry(0).tensor[0];
    return 0.5 * w * w;
  };
  const DirGradFn grad = [](const ParameterSet& p) {
    GradientSet g = zeros_like(p);
    g.entry(0).tensor[0] = p.entry(0).tensor[0];
    return g;
  };

  ParameterSet origin;
  origin.add("w", Tensor({1}));
  // at the minimum every unit probe of radius 0.1 gains rho^2/2
  REQUIRE(sharpness_estimate(loss, grad, origin, 0.1, 3, 17) ==
          Catch::Approx(0.005).margin(1e-12));
  REQUIRE(sharpness_estimate(loss, grad, origin, 0.0, 3, 17) == 0.0);

  ParameterSet at_one;
  at_one.add("w", Tensor({1}, {1.0}));
  // first-order direction climbs to w = 1.1
  REQUIRE(sharpness_estimate(loss, grad, at_one, 0.1, 4, 19) ==
          Catch::Approx(0.105).margin(1e-12));

  REQUIRE_THROWS_AS(sharpness_estimate(loss, grad, origin, 0.1, 0, 1),
                    std::invalid_argument);
  REQUIRE_THROWS_AS(sharpness_estimate(loss, grad, origin, -0.1, 3, 1),
                    std::invalid_argument);
}

TEST_CASE("sharpness always covers the ascent direction", "[diagnostics]") {
  // linear loss: the gradient direction is the unique maximizer, so the
  // estimate equals rho no matter how unlucky the random probes are
  const LossFn loss = [](const ParameterSet& p) { return p.entry(0).tensor[0]; };
  const DirGradFn grad = [](const ParameterSet& p) {
    GradientSet g = zeros_like(p);
    g.entry(0).tensor[0] = 1.0;
    return g;
  };
  ParameterSet w;
  w.add("w", Tensor({4}));
  for (std::uint64_t seed = 0; seed < 10; ++seed)
    REQUIRE(sharpness_estimate(loss, grad, w, 0.25, 2, seed) ==
            Catch::Approx(0.25).margin(1e-12));
}

TEST_CASE("sharpness grows with the probe budget", "[diagnostics]") {
  MlpSpec spec;
  spec.layer_widths = {2, 4, 3};
  spec.init_seed = 23;
  const ParameterSet params = init_params(spec);
  const Batch batch = random_batch(10, 2, 3, 29);

  const double one = sharpness_estimate(params, batch, 0.05, 1, 31);
  const double three = sharpness_estimate(params, batch, 0.05, 3, 31);
  const double eight = sharpness_estimate(params, batch, 0.05, 8, 31);
  REQUIRE(one <= three);
  REQUIRE(three <= eight);
  REQUIRE(std::isfinite(eight));
  REQUIRE(sharpness_estimate(params, batch, 0.05, 3, 31) == three);
}
