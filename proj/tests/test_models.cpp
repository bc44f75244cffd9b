#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "dehaze/models/ccgan.hpp"
#include "dehaze/models/cnet.hpp"
#include "dehaze/models/dnet.hpp"
#include "dehaze/objective.hpp"
#include "dehaze/rng.hpp"

using namespace dehaze;

namespace {

template <typename T>
Tensor<T> random_image_batch(std::int64_t n, std::int64_t hw, std::uint64_t seed) {
  Tensor<T> t({n, 3, hw, hw});
  auto eng = rng::engine(seed);
  for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(rng::uniform(eng));
  return t;
}

}  // namespace

TEST_CASE("generator spatial trace halves to 1x1 and mirrors back at desk width") {
  GeneratorConfig cfg;
  cfg.width_scale = 1.0 / 8.0;
  Generator<float> g(cfg, 1);
  auto x = random_image_batch<float>(2, 256, 2);
  auto y = g.forward(x);
  REQUIRE(y.shape() == std::vector<std::int64_t>{2, 3, 256, 256});
  const auto& enc = g.encoder_trace();
  REQUIRE(enc.size() == 8);
  int extent = 256;
  for (int i = 0; i < 8; ++i) {
    extent /= 2;
    CHECK(enc[static_cast<std::size_t>(i)][1] == extent);
    CHECK(enc[static_cast<std::size_t>(i)][2] == extent);
  }
  CHECK(enc[7][1] == 1);
  const auto& dec = g.decoder_trace();
  REQUIRE(dec.size() == 8);
  extent = 1;
  for (int j = 0; j < 8; ++j) {
    extent *= 2;
    CHECK(dec[static_cast<std::size_t>(j)][1] == extent);
  }
  CHECK(dec[7][0] == 3);
}

TEST_CASE("generator channel plan matches the preset at unit width") {
  GeneratorConfig cfg;  // width_scale 1
  cfg.validate();
  const std::vector<int> enc_expect{64, 128, 256, 512, 512, 512, 512, 512};
  const std::vector<int> dec_expect{512, 512, 512, 512, 256, 128, 64, 3};
  for (int i = 0; i < 8; ++i) {
    CHECK(cfg.scaled(cfg.encoder_channels[static_cast<std::size_t>(i)]) ==
          enc_expect[static_cast<std::size_t>(i)]);
    CHECK(cfg.decoder_channels[static_cast<std::size_t>(i)] ==
          dec_expect[static_cast<std::size_t>(i)]);
  }
}

TEST_CASE("generator output lies in [0,1] and is finite") {
  GeneratorConfig cfg;
  cfg.width_scale = 1.0 / 16.0;
  Generator<float> g(cfg, 3);
  auto y = g.forward(random_image_batch<float>(2, 256, 4));
  for (std::int64_t i = 0; i < y.numel(); ++i) {
    CHECK(std::isfinite(y[i]));
    CHECK(y[i] >= 0.f);
    CHECK(y[i] <= 1.f);
  }
}

TEST_CASE("generator rejects wrong input sizes and wrong configs") {
  GeneratorConfig cfg;
  cfg.width_scale = 1.0 / 16.0;
  Generator<float> g(cfg, 5);
  CHECK_THROWS_AS(g.forward(random_image_batch<float>(1, 128, 6)), ShapeError);
  GeneratorConfig bad;
  bad.encoder_channels.pop_back();
  CHECK_THROWS_AS(Generator<float>(bad, 1), ConfigError);
  GeneratorConfig bad3;
  bad3.decoder_channels.back() = 4;
  CHECK_THROWS_AS(Generator<float>(bad3, 1), ConfigError);
}

TEST_CASE("same seed gives bit-identical generators, different seeds differ") {
  GeneratorConfig cfg;
  cfg.width_scale = 1.0 / 16.0;
  Generator<float> a(cfg, 7), b(cfg, 7), c(cfg, 8);
  CHECK(nn::param_checksum(a.parameters()) == nn::param_checksum(b.parameters()));
  CHECK(nn::param_checksum(a.parameters()) != nn::param_checksum(c.parameters()));
}

TEST_CASE("zeroing one skip changes the output") {
  GeneratorConfig cfg;
  cfg.width_scale = 1.0 / 16.0;
  Generator<float> g(cfg, 9);
  auto x = random_image_batch<float>(2, 256, 10);
  auto base = g.forward(x);
  for (int skip : {0, 3, 6}) {
    auto ablated = g.forward(x, skip);
    double delta = 0;
    for (std::int64_t i = 0; i < base.numel(); ++i)
      delta += std::abs(static_cast<double>(base[i]) - ablated[i]);
    CHECK(delta > 0.0);
  }
}

TEST_CASE("additive skip mode works when the channel plan is symmetric") {
  GeneratorConfig cfg;
  cfg.skip_mode = SkipMode::Add;
  cfg.width_scale = 1.0 / 16.0;
  Generator<float> g(cfg, 11);
  auto y = g.forward(random_image_batch<float>(2, 256, 12));
  CHECK(y.shape() == std::vector<std::int64_t>{2, 3, 256, 256});
}

TEST_CASE("extractor maps 256 to 8x8 and 224 to 7x7") {
  FeatureExtractorConfig cfg;
  cfg.width_scale = 1.0 / 8.0;
  FeatureExtractor<float> ext(cfg, 13);
  auto f256 = ext.forward(random_image_batch<float>(1, 256, 14));
  CHECK(f256.dim(2) == 8);
  CHECK(f256.dim(3) == 8);
  auto f224 = ext.forward(random_image_batch<float>(1, 224, 15));
  CHECK(f224.dim(2) == 7);
  CHECK(f224.dim(3) == 7);
  CHECK_THROWS_AS(ext.forward(random_image_batch<float>(1, 100, 16)), ShapeError);
}

TEST_CASE("extractor downsampling trace is five halvings") {
  FeatureExtractorConfig cfg;
  CHECK(cfg.downsamplings() == 5);
  CHECK(256 / (1 << cfg.downsamplings()) == 8);
}

TEST_CASE("extractor is deterministic in evaluation mode") {
  FeatureExtractorConfig cfg;
  cfg.width_scale = 1.0 / 8.0;
  FeatureExtractor<float> ext(cfg, 17);
  ext.set_training(false);
  auto x = random_image_batch<float>(1, 256, 18);
  auto a = ext.forward(x);
  auto b = ext.forward(x);
  for (std::int64_t i = 0; i < a.numel(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("discriminator emits probabilities strictly inside (0,1)") {
  DiscriminatorConfig dc;
  dc.feature_channels = 16;
  dc.feature_extent = 8;
  dc.hidden_width = 32;
  Discriminator<float> d(dc, 19);
  Tensor<float> f({4, 16, 8, 8});
  auto eng = rng::engine(20);
  for (std::int64_t i = 0; i < f.numel(); ++i) f[i] = static_cast<float>(rng::normal(eng, 0, 1));
  auto p = d.forward(f);
  REQUIRE(p.shape() == std::vector<std::int64_t>{4, 1});
  for (std::int64_t i = 0; i < p.numel(); ++i) {
    CHECK(p[i] > 0.f);
    CHECK(p[i] < 1.f);
  }
}

TEST_CASE("zeroed discriminator answers one half") {
  DiscriminatorConfig dc;
  dc.feature_channels = 4;
  dc.feature_extent = 8;
  dc.hidden_width = 8;
  Discriminator<float> d(dc, 21);
  for (auto& p : d.parameters()) p.value->fill(0.f);
  Tensor<float> f({2, 4, 8, 8});
  auto eng = rng::engine(22);
  for (std::int64_t i = 0; i < f.numel(); ++i) f[i] = static_cast<float>(rng::normal(eng, 0, 1));
  auto p = d.forward(f);
  for (std::int64_t i = 0; i < p.numel(); ++i) CHECK(p[i] == doctest::Approx(0.5f));
}

TEST_CASE("untrained discriminator real/fake gap is finite and reported") {
  FeatureExtractorConfig ec;
  ec.width_scale = 1.0 / 8.0;
  FeatureExtractor<float> ext(ec, 23);
  DiscriminatorConfig dc;
  dc.feature_channels = ec.feature_channels();
  dc.hidden_width = 32;
  Discriminator<float> d(dc, 24);
  auto real = ext.forward(random_image_batch<float>(2, 256, 25));
  auto fake = ext.forward(random_image_batch<float>(2, 256, 26));
  auto pr = d.forward(real), pf = d.forward(fake);
  double gap = 0;
  for (std::int64_t i = 0; i < pr.numel(); ++i) gap += pr[i] - pf[i];
  gap /= static_cast<double>(pr.numel());
  CHECK(std::isfinite(gap));
  MESSAGE("untrained real/fake score gap: ", gap);
}

TEST_CASE("classifier emits one logit per class and is deterministic in eval") {
  CNetConfig cfg;
  cfg.num_classes = 10;
  cfg.width_scale = 1.0 / 8.0;
  Classifier<float> cnet(cfg, 27);
  cnet.set_training(false);
  auto x = random_image_batch<float>(2, 256, 28);
  auto a = cnet.forward(x);
  REQUIRE(a.shape() == std::vector<std::int64_t>{2, 10});
  auto b = cnet.forward(x);
  for (std::int64_t i = 0; i < a.numel(); ++i) {
    CHECK(std::isfinite(a[i]));
    CHECK(a[i] == b[i]);
  }
}

TEST_CASE("classifier cross-entropy gradient reaches the input image") {
  CNetConfig cfg;
  cfg.num_classes = 4;
  cfg.width_scale = 1.0 / 16.0;
  Classifier<double> cnet(cfg, 29);
  auto x = random_image_batch<double>(2, 64, 30);
  auto logits = cnet.forward(x);
  auto probs = softmax(logits);
  auto dlogits = ce_grad_logits(probs, {1, 2});
  auto dx = cnet.backward(dlogits);
  double norm = 0;
  for (std::int64_t i = 0; i < dx.numel(); ++i) norm += dx[i] * dx[i];
  CHECK(norm > 0.0);
}

TEST_CASE("residual-50 backbone builds and classifies at reduced width") {
  CNetConfig cfg;
  cfg.num_classes = 5;
  cfg.backbone = CNetBackbone::Residual50;
  cfg.width_scale = 1.0 / 16.0;
  Classifier<float> cnet(cfg, 31);
  cnet.set_training(false);
  auto y = cnet.forward(random_image_batch<float>(1, 256, 32));
  REQUIRE(y.shape() == std::vector<std::int64_t>{1, 5});
  for (std::int64_t i = 0; i < y.numel(); ++i) CHECK(std::isfinite(y[i]));
}
