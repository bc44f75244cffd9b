#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "dehaze/objective.hpp"
#include "dehaze/rng.hpp"

using namespace dehaze;

TEST_CASE("mse of identical tensors is zero and symmetric") {
  Tensor<float> a({2, 3, 4, 4}), b({2, 3, 4, 4});
  auto eng = rng::engine(1);
  for (std::int64_t i = 0; i < a.numel(); ++i) {
    a[i] = static_cast<float>(rng::uniform(eng));
    b[i] = static_cast<float>(rng::uniform(eng));
  }
  CHECK(mse_loss(a, a) == 0.0);
  CHECK(mse_loss(a, b) == doctest::Approx(mse_loss(b, a)).epsilon(1e-12));
}

TEST_CASE("uniform offset of 0.1 gives mse 0.01") {
  Tensor<float> a({1, 3, 8, 8}), b({1, 3, 8, 8});
  for (std::int64_t i = 0; i < a.numel(); ++i) {
    a[i] = 0.5f;
    b[i] = 0.6f;
  }
  CHECK(mse_loss(a, b) == doctest::Approx(0.01).epsilon(1e-5));
}

TEST_CASE("mse rejects mismatched shapes") {
  Tensor<float> a({1, 3, 4, 4}), b({1, 3, 4, 5});
  CHECK_THROWS_AS(mse_loss(a, b), ShapeError);
}

TEST_CASE("softmax of uniform logits is uniform") {
  Tensor<double> logits({1, 4});
  logits.fill(0.7);
  auto p = softmax(logits);
  for (std::int64_t i = 0; i < 4; ++i) CHECK(p[i] == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("softmax of [1,0] matches e/(e+1)") {
  Tensor<double> logits({1, 2});
  logits[0] = 1.0;
  logits[1] = 0.0;
  auto p = softmax(logits);
  CHECK(p[0] == doctest::Approx(0.73106).epsilon(1e-4));
  CHECK(p[1] == doctest::Approx(0.26894).epsilon(1e-4));
}

TEST_CASE("softmax is shift invariant and sums to one under large logits") {
  auto eng = rng::engine(2);
  Tensor<double> logits({8, 16});
  for (std::int64_t i = 0; i < logits.numel(); ++i) logits[i] = rng::uniform(eng, -1e3, 1e3);
  auto p = softmax(logits);
  Tensor<double> shifted = logits;
  for (std::int64_t i = 0; i < shifted.numel(); ++i) shifted[i] += 123.456;
  auto q = softmax(shifted);
  for (std::int64_t n = 0; n < 8; ++n) {
    double sum = 0;
    for (std::int64_t c = 0; c < 16; ++c) {
      sum += p[n * 16 + c];
      CHECK(p[n * 16 + c] == doctest::Approx(q[n * 16 + c]).epsilon(1e-9));
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
    std::int64_t arg_p = 0, arg_l = 0;
    for (std::int64_t c = 0; c < 16; ++c) {
      if (p[n * 16 + c] > p[n * 16 + arg_p]) arg_p = c;
      if (logits[n * 16 + c] > logits[n * 16 + arg_l]) arg_l = c;
    }
    CHECK(arg_p == arg_l);
  }
}

TEST_CASE("cross entropy hits the tabulated values") {
  Tensor<double> certain({4});
  certain[0] = 1.0;
  CHECK(ce_loss(certain, 0) == doctest::Approx(0.0).epsilon(1e-6));

  Tensor<double> uniform10({10});
  uniform10.fill(0.1);
  CHECK(ce_loss(uniform10, 3) == doctest::Approx(2.302585).epsilon(1e-6));

  Tensor<double> half({2});
  half.fill(0.5);
  CHECK(ce_loss(half, 1) == doctest::Approx(0.693147).epsilon(1e-6));

  CHECK_THROWS_AS(ce_loss(half, 2), InvalidParameterError);
  CHECK_THROWS_AS(ce_loss(half, -1), InvalidParameterError);
}

TEST_CASE("cross entropy is invariant to logit shifts") {
  auto eng = rng::engine(3);
  Tensor<double> logits({1, 6});
  for (std::int64_t i = 0; i < 6; ++i) logits[i] = rng::normal(eng, 0, 3);
  Tensor<double> shifted = logits;
  for (std::int64_t i = 0; i < 6; ++i) shifted[i] += 42.0;
  CHECK(ce_loss_batch(softmax(logits), {2}) ==
        doctest::Approx(ce_loss_batch(softmax(shifted), {2})).epsilon(1e-6));
}

TEST_CASE("adversarial terms at one half match the tabulated logs") {
  Tensor<double> p({2, 1});
  p.fill(0.5);
  CHECK(generator_gan_loss(p, false) == doctest::Approx(-0.6931).epsilon(1e-3));
  CHECK(discriminator_objective(p, p) == doctest::Approx(-1.3863).epsilon(1e-3));
}

TEST_CASE("a saturated-correct discriminator sits at its maximum") {
  Tensor<double> real({2, 1}), fake({2, 1});
  real.fill(1.0 - kProbEps);
  fake.fill(kProbEps);
  CHECK(discriminator_objective(real, fake) == doctest::Approx(0.0).epsilon(1e-5));
}

TEST_CASE("probabilities at exactly zero or one are clamped, not infinite") {
  Tensor<double> zero({1, 1}), one({1, 1});
  zero.fill(0.0);
  one.fill(1.0);
  CHECK(std::isfinite(generator_gan_loss(one, false)));
  CHECK(std::isfinite(generator_gan_loss(zero, true)));
  CHECK(std::isfinite(discriminator_objective(zero, one)));
}

TEST_CASE("both adversarial generator forms push the same direction") {
  Tensor<double> p({1, 1});
  p.fill(0.3);
  auto g_lit = generator_gan_grad(p, false);
  auto g_ns = generator_gan_grad(p, true);
  CHECK(g_lit[0] < 0.0);  // raising D(fake) lowers either loss
  CHECK(g_ns[0] < 0.0);
}

TEST_CASE("weighted total follows the arithmetic and the preset weights") {
  LossWeights w;  // a=500, b=1, c=1
  w.validate();
  CHECK(w.a == 500.0);
  CHECK(w.b == 1.0);
  CHECK(w.c == 1.0);
  LossBreakdown lb;
  lb.mse = 0.01;
  lb.gan = 0.2;
  lb.ce = 1.3;
  CHECK(combine_losses(lb, w) == doctest::Approx(6.5).epsilon(1e-9));

  LossBreakdown zero;
  CHECK(combine_losses(zero, w) == 0.0);

  // doubling the mse weight doubles exactly the mse contribution
  LossWeights w2 = w;
  w2.a = 1000.0;
  LossBreakdown lb2 = lb;
  combine_losses(lb2, w2);
  CHECK(lb2.total - lb.total == doctest::Approx(500.0 * lb.mse).epsilon(1e-9));

  LossWeights bad;
  bad.a = -1;
  CHECK_THROWS_AS(bad.validate(), InvalidParameterError);
}

TEST_CASE("total invariant holds to 1e-9 relative") {
  auto eng = rng::engine(4);
  for (int it = 0; it < 50; ++it) {
    LossWeights w{rng::uniform(eng, 0, 1000), rng::uniform(eng, 0, 10), rng::uniform(eng, 0, 10)};
    LossBreakdown lb;
    lb.mse = rng::uniform(eng, 0, 1);
    lb.gan = rng::uniform(eng, -20, 0);
    lb.ce = rng::uniform(eng, 0, 5);
    combine_losses(lb, w);
    const double expect = w.a * lb.mse + w.b * lb.gan + w.c * lb.ce;
    CHECK(std::abs(lb.total - expect) <= 1e-9 * std::max(1.0, std::abs(expect)));
  }
}
