#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>

#include "dehaze/nn/adam.hpp"
#include "dehaze/nn/init.hpp"
#include "dehaze/nn/layers.hpp"
#include "dehaze/rng.hpp"

using namespace dehaze;
using nn::ParamRef;

namespace {

Tensor<double> random_tensor(std::vector<std::int64_t> shape, std::uint64_t seed,
                             double scale = 1.0) {
  Tensor<double> t(std::move(shape));
  auto eng = rng::engine(seed);
  for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = rng::normal(eng, 0.0, scale);
  return t;
}

// Scalar probe: loss = sum(y * coef) with fixed random coefficients, so every
// layer output element participates in the gradient.
struct Probe {
  Tensor<double> coef;
  double value(const Tensor<double>& y) const {
    double acc = 0;
    for (std::int64_t i = 0; i < y.numel(); ++i) acc += y[i] * coef[i];
    return acc;
  }
  Tensor<double> grad() const { return coef; }
};

// Central finite difference against the analytic gradient for every parameter
// of `layer` and for the input gradient, on a random subset of indices.
void check_layer_gradients(nn::Layer<double>& layer, Tensor<double> x, std::uint64_t seed,
                           double tol = 1e-5) {
  std::vector<ParamRef<double>> params;
  layer.params("p", params);

  Probe probe{random_tensor(layer.forward(x).shape(), seed + 1, 1.0)};

  auto loss = [&]() { return probe.value(layer.forward(x)); };

  nn::zero_grads(params);
  layer.forward(x);
  Tensor<double> dx = layer.backward(probe.grad());

  auto eng = rng::engine(seed + 2);
  auto check_value = [&](double analytic, double* slot) {
    const double h = 1e-6 * std::max(1.0, std::abs(*slot));
    const double saved = *slot;
    *slot = saved + h;
    const double up = loss();
    *slot = saved - h;
    const double dn = loss();
    *slot = saved;
    const double fd = (up - dn) / (2 * h);
    const double err = std::abs(analytic - fd) / std::max({std::abs(analytic), std::abs(fd), 1.0});
    CHECK(err < tol);
  };

  for (auto& p : params) {
    const std::int64_t n = p.value->numel();
    const std::int64_t probes = std::min<std::int64_t>(n, 6);
    for (std::int64_t k = 0; k < probes; ++k) {
      const std::int64_t idx = static_cast<std::int64_t>(rng::uniform_index(eng, static_cast<std::uint64_t>(n)));
      check_value((*p.grad)[idx], &(*p.value)[idx]);
    }
  }
  for (std::int64_t k = 0; k < 8; ++k) {
    const std::int64_t idx =
        static_cast<std::int64_t>(rng::uniform_index(eng, static_cast<std::uint64_t>(x.numel())));
    check_value(dx[idx], &x[idx]);
  }
}

// Direct convolution, the oracle the GEMM path must match.
Tensor<double> naive_conv(const Tensor<double>& x, const Tensor<double>& w,
                          const Tensor<double>& b, int s, int p) {
  const std::int64_t N = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::int64_t Cout = w.dim(0), k = w.dim(2);
  const std::int64_t Ho = (H + 2 * p - k) / s + 1, Wo = (W + 2 * p - k) / s + 1;
  Tensor<double> y({N, Cout, Ho, Wo});
  for (std::int64_t n = 0; n < N; ++n)
    for (std::int64_t co = 0; co < Cout; ++co)
      for (std::int64_t oy = 0; oy < Ho; ++oy)
        for (std::int64_t ox = 0; ox < Wo; ++ox) {
          double acc = b.numel() ? b[co] : 0.0;
          for (std::int64_t ci = 0; ci < Cin; ++ci)
            for (std::int64_t ki = 0; ki < k; ++ki)
              for (std::int64_t kj = 0; kj < k; ++kj) {
                const std::int64_t yy = oy * s - p + ki, xx = ox * s - p + kj;
                if (yy < 0 || yy >= H || xx < 0 || xx >= W) continue;
                acc += x.at(n, ci, yy, xx) * w.at(co, ci, ki, kj);
              }
          y.at(n, co, oy, ox) = acc;
        }
  return y;
}

// Direct transposed convolution: scatter each input tap through the kernel.
Tensor<double> naive_deconv(const Tensor<double>& x, const Tensor<double>& w,
                            const Tensor<double>& b, int s, int p) {
  const std::int64_t N = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::int64_t Cout = w.dim(1), k = w.dim(2);
  const std::int64_t Ho = (H - 1) * s - 2 * p + k, Wo = (W - 1) * s - 2 * p + k;
  Tensor<double> y({N, Cout, Ho, Wo});
  for (std::int64_t n = 0; n < N; ++n) {
    for (std::int64_t co = 0; co < Cout; ++co)
      for (std::int64_t i = 0; i < Ho * Wo; ++i)
        y.data()[(n * Cout + co) * Ho * Wo + i] = b.numel() ? b[co] : 0.0;
    for (std::int64_t ci = 0; ci < Cin; ++ci)
      for (std::int64_t iy = 0; iy < H; ++iy)
        for (std::int64_t ix = 0; ix < W; ++ix)
          for (std::int64_t co = 0; co < Cout; ++co)
            for (std::int64_t ki = 0; ki < k; ++ki)
              for (std::int64_t kj = 0; kj < k; ++kj) {
                const std::int64_t oy = iy * s - p + ki, ox = ix * s - p + kj;
                if (oy < 0 || oy >= Ho || ox < 0 || ox >= Wo) continue;
                y.at(n, co, oy, ox) += x.at(n, ci, iy, ix) * w.at(ci, co, ki, kj);
              }
  }
  return y;
}

}  // namespace

TEST_CASE("conv forward matches the direct oracle") {
  nn::Conv2d<double> conv(3, 5, 4, 2, 1);
  std::vector<ParamRef<double>> ps;
  conv.params("c", ps);
  nn::init_parameters(ps, 7, 0.5);
  Tensor<double> x = random_tensor({2, 3, 8, 8}, 1);
  Tensor<double> y = conv.forward(x);
  // bias starts at zero; set it to something nontrivial and rerun
  for (std::int64_t i = 0; i < ps[1].value->numel(); ++i) (*ps[1].value)[i] = 0.1 * (i + 1);
  y = conv.forward(x);
  Tensor<double> ref = naive_conv(x, *ps[0].value, *ps[1].value, 2, 1);
  REQUIRE(y.shape() == ref.shape());
  for (std::int64_t i = 0; i < y.numel(); ++i) CHECK(y[i] == doctest::Approx(ref[i]).epsilon(1e-10));
}

TEST_CASE("conv with 3x3 stride 1 matches the direct oracle") {
  nn::Conv2d<double> conv(2, 4, 3, 1, 1);
  std::vector<ParamRef<double>> ps;
  conv.params("c", ps);
  nn::init_parameters(ps, 8, 0.5);
  Tensor<double> x = random_tensor({2, 2, 7, 9}, 2);
  Tensor<double> ref = naive_conv(x, *ps[0].value, *ps[1].value, 1, 1);
  Tensor<double> y = conv.forward(x);
  REQUIRE(y.shape() == ref.shape());
  for (std::int64_t i = 0; i < y.numel(); ++i) CHECK(y[i] == doctest::Approx(ref[i]).epsilon(1e-10));
}

TEST_CASE("conv gradients match finite differences") {
  nn::Conv2d<double> conv(2, 3, 4, 2, 1);
  std::vector<ParamRef<double>> ps;
  conv.params("c", ps);
  nn::init_parameters(ps, 9, 0.5);
  check_layer_gradients(conv, random_tensor({2, 2, 8, 8}, 3), 11);
}

TEST_CASE("deconv forward matches the direct oracle") {
  nn::ConvTranspose2d<double> deconv(3, 4, 4, 2, 1);
  std::vector<ParamRef<double>> ps;
  deconv.params("d", ps);
  nn::init_parameters(ps, 12, 0.5);
  for (std::int64_t i = 0; i < ps[1].value->numel(); ++i) (*ps[1].value)[i] = 0.05 * (i + 1);
  Tensor<double> x = random_tensor({2, 3, 5, 6}, 4);
  Tensor<double> y = deconv.forward(x);
  Tensor<double> ref = naive_deconv(x, *ps[0].value, *ps[1].value, 2, 1);
  REQUIRE(y.shape() == ref.shape());
  CHECK(y.dim(2) == 10);
  CHECK(y.dim(3) == 12);
  for (std::int64_t i = 0; i < y.numel(); ++i) CHECK(y[i] == doctest::Approx(ref[i]).epsilon(1e-10));
}

TEST_CASE("deconv gradients match finite differences") {
  nn::ConvTranspose2d<double> deconv(3, 2, 4, 2, 1);
  std::vector<ParamRef<double>> ps;
  deconv.params("d", ps);
  nn::init_parameters(ps, 13, 0.5);
  check_layer_gradients(deconv, random_tensor({2, 3, 4, 4}, 5), 17);
}

TEST_CASE("batchnorm normalizes to zero mean unit variance in training mode") {
  nn::BatchNorm2d<double> bn(3);
  Tensor<double> x = random_tensor({4, 3, 5, 5}, 6, 2.0);
  for (std::int64_t i = 0; i < x.numel(); ++i) x[i] += 1.5;
  Tensor<double> y = bn.forward(x);
  const std::int64_t HW = 25, N = 4, C = 3;
  for (std::int64_t c = 0; c < C; ++c) {
    double sum = 0, sq = 0;
    for (std::int64_t n = 0; n < N; ++n)
      for (std::int64_t i = 0; i < HW; ++i) {
        const double v = y.data()[(n * C + c) * HW + i];
        sum += v;
        sq += v * v;
      }
    const double mean = sum / (N * HW);
    CHECK(std::abs(mean) < 1e-9);
    CHECK(sq / (N * HW) - mean * mean == doctest::Approx(1.0).epsilon(1e-3));
  }
}

TEST_CASE("batchnorm gradients match finite differences") {
  nn::BatchNorm2d<double> bn(2);
  std::vector<ParamRef<double>> ps;
  bn.params("bn", ps);
  // non-trivial affine terms
  (*ps[0].value)[0] = 1.3;
  (*ps[0].value)[1] = 0.7;
  (*ps[1].value)[0] = -0.2;
  (*ps[1].value)[1] = 0.4;
  check_layer_gradients(bn, random_tensor({3, 2, 4, 4}, 7), 19, 1e-4);
}

TEST_CASE("batchnorm eval mode uses running statistics and is sample-independent") {
  nn::BatchNorm2d<double> bn(2);
  for (int it = 0; it < 50; ++it) bn.forward(random_tensor({4, 2, 3, 3}, 100 + it, 2.0));
  bn.set_training(false);
  Tensor<double> x = random_tensor({2, 2, 3, 3}, 999, 2.0);
  Tensor<double> y2 = bn.forward(x);
  // same rows evaluated alone give identical outputs
  Tensor<double> x0({1, 2, 3, 3});
  for (std::int64_t i = 0; i < x0.numel(); ++i) x0[i] = x[i];
  Tensor<double> y0 = bn.forward(x0);
  for (std::int64_t i = 0; i < y0.numel(); ++i) CHECK(y0[i] == y2[i]);
}

TEST_CASE("batchnorm stays defined at 1x1 spatial extent with batch two") {
  nn::BatchNorm2d<double> bn(4);
  Tensor<double> x = random_tensor({2, 4, 1, 1}, 8);
  Tensor<double> y = bn.forward(x);
  for (std::int64_t i = 0; i < y.numel(); ++i) CHECK(std::isfinite(y[i]));
}

TEST_CASE("activation gradients match finite differences") {
  {
    nn::LeakyReLU<double> act(0.2);
    check_layer_gradients(act, random_tensor({2, 3, 4, 4}, 9), 23);
  }
  {
    nn::ReLU<double> act;
    check_layer_gradients(act, random_tensor({2, 3, 4, 4}, 10), 29);
  }
  {
    nn::Sigmoid<double> act;
    check_layer_gradients(act, random_tensor({2, 3, 4, 4}, 11), 31);
  }
  {
    nn::UnitTanh<double> act;
    check_layer_gradients(act, random_tensor({2, 3, 4, 4}, 12), 37);
  }
}

TEST_CASE("unit tanh lands in [0,1]") {
  nn::UnitTanh<double> act;
  Tensor<double> y = act.forward(random_tensor({1, 1, 8, 8}, 13, 5.0));
  for (std::int64_t i = 0; i < y.numel(); ++i) {
    CHECK(y[i] >= 0.0);
    CHECK(y[i] <= 1.0);
  }
}

TEST_CASE("maxpool forward picks window maxima and routes gradients") {
  nn::MaxPool2d<double> pool(2, 2);
  Tensor<double> x({1, 1, 4, 4});
  for (std::int64_t i = 0; i < 16; ++i) x[i] = static_cast<double>(i);
  Tensor<double> y = pool.forward(x);
  REQUIRE(y.shape() == std::vector<std::int64_t>{1, 1, 2, 2});
  CHECK(y[0] == 5);
  CHECK(y[1] == 7);
  CHECK(y[2] == 13);
  CHECK(y[3] == 15);
  Tensor<double> dy({1, 1, 2, 2});
  dy.fill(1.0);
  Tensor<double> dx = pool.backward(dy);
  CHECK(dx[5] == 1.0);
  CHECK(dx[15] == 1.0);
  CHECK(dx[0] == 0.0);
}

TEST_CASE("maxpool gradients match finite differences") {
  nn::MaxPool2d<double> pool(2, 2);
  check_layer_gradients(pool, random_tensor({2, 2, 6, 6}, 14), 41);
  nn::MaxPool2d<double> padded(3, 2, 1);
  check_layer_gradients(padded, random_tensor({2, 2, 7, 7}, 15), 43);
}

TEST_CASE("linear gradients match finite differences") {
  nn::Linear<double> fc(12, 5);
  std::vector<ParamRef<double>> ps;
  fc.params("fc", ps);
  nn::init_parameters(ps, 16, 0.5);
  check_layer_gradients(fc, random_tensor({3, 12}, 17), 47);
}

TEST_CASE("global average pool gradients match finite differences") {
  nn::GlobalAvgPool<double> gap;
  check_layer_gradients(gap, random_tensor({2, 3, 4, 4}, 18), 53);
}

TEST_CASE("channel concat and split are inverse") {
  Tensor<double> a = random_tensor({2, 3, 4, 4}, 19);
  Tensor<double> b = random_tensor({2, 2, 4, 4}, 20);
  Tensor<double> y = nn::concat_channels(a, b);
  REQUIRE(y.dim(1) == 5);
  auto [a2, b2] = nn::split_channels(y, 3);
  for (std::int64_t i = 0; i < a.numel(); ++i) CHECK(a2[i] == a[i]);
  for (std::int64_t i = 0; i < b.numel(); ++i) CHECK(b2[i] == b[i]);
}

TEST_CASE("adam moves parameters against the gradient and is stateful") {
  Tensor<double> w({4});
  Tensor<double> g({4});
  w.fill(1.0);
  nn::Adam<double> opt(0.1, 0.9, 0.999);
  opt.attach({{"w", &w, &g}});
  for (int it = 0; it < 10; ++it) {
    for (int i = 0; i < 4; ++i) g[i] = 2.0 * w[i];  // d/dw of w^2
    opt.step();
  }
  for (int i = 0; i < 4; ++i) CHECK(w[i] < 1.0);
  CHECK(opt.step_count() == 10);
}

TEST_CASE("initialization is deterministic under a fixed seed") {
  nn::Conv2d<float> a(3, 4, 3, 1, 1), b(3, 4, 3, 1, 1);
  std::vector<ParamRef<float>> pa, pb;
  a.params("x", pa);
  b.params("x", pb);
  nn::init_parameters(pa, 21);
  nn::init_parameters(pb, 21);
  CHECK(nn::param_checksum(pa) == nn::param_checksum(pb));
  nn::init_parameters(pb, 22);
  CHECK(nn::param_checksum(pa) != nn::param_checksum(pb));
}
