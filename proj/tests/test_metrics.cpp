#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "dehaze/metrics.hpp"
#include "dehaze/rng.hpp"

using namespace dehaze;

namespace {

Image random_image(int h, int w, std::uint64_t seed) {
  Image img(h, w, 3);
  auto eng = rng::engine(seed);
  for (float& v : img.data) v = static_cast<float>(rng::uniform(eng));
  return img;
}

}  // namespace

TEST_CASE("identical images hit the psnr cap") {
  Image x = random_image(16, 16, 1);
  CHECK(psnr(x, x) == 100.0);
}

TEST_CASE("mse of 0.01 maps to 20 dB") {
  Image x(16, 16, 3), y(16, 16, 3);
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    x.data[i] = 0.4f;
    y.data[i] = 0.5f;
  }
  CHECK(psnr(x, y) == doctest::Approx(20.0).epsilon(1e-6));
}

TEST_CASE("psnr is symmetric and decreases with noise amplitude") {
  Image x = random_image(32, 32, 2);
  auto eng = rng::engine(3);
  std::vector<float> noise(x.data.size());
  for (float& v : noise) v = static_cast<float>(rng::uniform(eng, -1, 1));
  double prev = 1e9;
  for (double amp : {0.01, 0.02, 0.05, 0.1, 0.2}) {
    Image y = x;
    for (std::size_t i = 0; i < y.data.size(); ++i)
      y.data[i] = std::min(1.f, std::max(0.f, y.data[i] + static_cast<float>(amp) * noise[i]));
    const double p = psnr(x, y);
    CHECK(p == doctest::Approx(psnr(y, x)).epsilon(1e-12));
    CHECK(p < prev);
    prev = p;
  }
}

TEST_CASE("psnr rejects shape mismatches") {
  Image x(8, 8, 3), y(8, 9, 3);
  CHECK_THROWS_AS(psnr(x, y), ShapeError);
}

TEST_CASE("self ssim is one for any image") {
  for (std::uint64_t s = 0; s < 5; ++s) {
    Image x = random_image(24, 31, 10 + s);
    CHECK(ssim(x, x) == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("constant zero versus constant one matches the closed form") {
  Image x(32, 32, 3), y(32, 32, 3);
  for (float& v : y.data) v = 1.f;
  constexpr double c1 = 0.01 * 0.01;
  const double expected = c1 / (1.0 + c1);  // (C1*C2)/((1+C1)*C2)
  CHECK(ssim(x, y) == doctest::Approx(expected).epsilon(1e-2));
  CHECK(std::abs(ssim(x, y) - expected) < 1e-6);
  CHECK(expected == doctest::Approx(1e-4).epsilon(1e-2));
}

TEST_CASE("ssim is symmetric and penalizes noise") {
  Image x = random_image(32, 32, 20);
  Image y = x;
  auto eng = rng::engine(21);
  for (std::size_t i = 0; i < y.data.size(); ++i)
    y.data[i] = std::min(1.f, std::max(0.f, y.data[i] + static_cast<float>(rng::uniform(eng, -0.2, 0.2))));
  const double s = ssim(x, y);
  CHECK(s == doctest::Approx(ssim(y, x)).epsilon(1e-12));
  CHECK(s < 1.0);
  CHECK(s >= -1.0);
}

TEST_CASE("ssim window shrinks for small images") {
  Image x = random_image(7, 5, 22);
  CHECK(ssim(x, x) == doctest::Approx(1.0).epsilon(1e-12));
  Image y = x;
  y.data[3] = std::min(1.f, y.data[3] + 0.5f);
  CHECK(ssim(x, y) < 1.0);
}

TEST_CASE("accuracy counts exact fractions") {
  CHECK(top1_accuracy({1, 2, 3}, {1, 2, 3}) == 100.0);
  CHECK(top1_accuracy({1, 2, 3, 4}, {1, 2, 3, 0}) == 75.0);
  CHECK_THROWS_AS(top1_accuracy({1}, {1, 2}), ShapeError);
  CHECK_THROWS_AS(top1_accuracy({}, {}), ShapeError);
}
